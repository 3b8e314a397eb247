#pragma once

#include <complex>

#include "l2s/common.hpp"

namespace l2s::signal {

// Iterative radix-2 Cooley-Tukey FFT. Sizes must be powers of two.
// A plan precomputes bit-reversal and twiddles once and is reused across
// frames; const methods are safe to call concurrently.
class FftPlan {
public:
  explicit FftPlan(int n) : n_(n) {
    require(n >= 2 && (n & (n - 1)) == 0, "FFT size must be a power of two, got ", n);
    bitrev_.resize(n);
    int log2n = 0;
    while ((1 << log2n) < n) ++log2n;
    for (int i = 0; i < n; ++i) {
      int r = 0;
      for (int b = 0; b < log2n; ++b)
        if (i & (1 << b)) r |= 1 << (log2n - 1 - b);
      bitrev_[i] = r;
    }
    twiddle_.resize(n / 2);
    for (int k = 0; k < n / 2; ++k)
      twiddle_[k] = std::polar(1.0, -2.0 * M_PI * k / n);
  }

  int size() const { return n_; }

  void forward(std::vector<std::complex<double>>& a) const { run(a, false); }
  void inverse(std::vector<std::complex<double>>& a) const {
    run(a, true);
    for (auto& v : a) v /= double(n_);
  }

  // Real-input forward transform: returns bins 0..n/2 inclusive.
  std::vector<std::complex<double>> rfft(const std::vector<double>& x) const {
    require(int(x.size()) == n_, "rfft input length ", x.size(), " != plan size ", n_);
    std::vector<std::complex<double>> a(n_);
    for (int i = 0; i < n_; ++i) a[i] = x[i];
    forward(a);
    a.resize(n_ / 2 + 1);
    return a;
  }

  // Inverse of rfft: spectrum has n/2+1 bins, output is the real signal.
  std::vector<double> irfft(const std::vector<std::complex<double>>& spec) const {
    require(int(spec.size()) == n_ / 2 + 1, "irfft spectrum has wrong size");
    std::vector<std::complex<double>> a(n_);
    for (int i = 0; i <= n_ / 2; ++i) a[i] = spec[i];
    for (int i = 1; i < n_ / 2; ++i) a[n_ - i] = std::conj(spec[i]);
    inverse(a);
    std::vector<double> out(n_);
    for (int i = 0; i < n_; ++i) out[i] = a[i].real();
    return out;
  }

private:
  void run(std::vector<std::complex<double>>& a, bool inv) const {
    require(int(a.size()) == n_, "FFT buffer length mismatch");
    for (int i = 0; i < n_; ++i) {
      int j = bitrev_[i];
      if (i < j) std::swap(a[i], a[j]);
    }
    for (int len = 2; len <= n_; len <<= 1) {
      int step = n_ / len;
      for (int start = 0; start < n_; start += len) {
        for (int k = 0; k < len / 2; ++k) {
          std::complex<double> w = twiddle_[size_t(k) * step];
          if (inv) w = std::conj(w);
          auto u = a[start + k];
          auto v = a[start + k + len / 2] * w;
          a[start + k] = u + v;
          a[start + k + len / 2] = u - v;
        }
      }
    }
  }

  int n_;
  std::vector<int> bitrev_;
  std::vector<std::complex<double>> twiddle_;
};

// Periodic Hann window.
inline std::vector<double> hann_window(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / n);
  return w;
}

// Reflective (bouncing) index into a signal of length n, repeating the
// reflection as many times as needed near short-signal edges.
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  int period = 2 * (n - 1);
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}

}  // namespace l2s::signal
