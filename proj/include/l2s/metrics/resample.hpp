#pragma once

#include <numeric>

#include "l2s/wav.hpp"

namespace l2s::metrics {

// Zeroth-order modified Bessel function of the first kind (power series).
inline double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  double half = x / 2.0;
  for (int k = 1; k < 64; ++k) {
    term *= (half / k) * (half / k);
    sum += term;
    if (term < 1e-14 * sum) break;
  }
  return sum;
}

// Polyphase rational resampler, fixed design so independent implementations
// can agree bit-for-bit on the recipe:
//   - upsample by L (zero insertion), lowpass, decimate by M
//   - FIR: Kaiser window beta = 5.0, half-width N = 10 * max(L, M),
//     2N+1 taps, cutoff fc = min(0.5/L, 0.5/M) cycles/sample at the
//     upsampled rate, passband gain L, zero phase (symmetric, no delay)
//   - output length floor((n-1)*L/M) + 1 with y[m] = v[m*M]
inline std::vector<double> resample_poly(const std::vector<double>& x, int up, int down) {
  require(up >= 1 && down >= 1, "resample factors must be positive");
  if (up == down) return x;
  int n = int(x.size());
  require(n > 0, "cannot resample an empty signal");

  int half = 10 * std::max(up, down);
  double fc = std::min(0.5 / up, 0.5 / down);
  double beta = 5.0;
  std::vector<double> h(2 * half + 1);
  double i0b = bessel_i0(beta);
  for (int t = -half; t <= half; ++t) {
    double sinc = t == 0 ? 2.0 * fc : std::sin(2.0 * M_PI * fc * t) / (M_PI * t);
    double w = bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - double(t) * t / (double(half) * half)))) / i0b;
    h[t + half] = up * sinc * w;
  }

  int64_t out_len = int64_t(n - 1) * up / down + 1;
  std::vector<double> y(size_t(out_len), 0.0);
  for (int64_t m = 0; m < out_len; ++m) {
    int64_t j0 = m * down;  // position in the upsampled stream
    // nonzero input samples i with |j0 - i*up| <= half
    int64_t i_lo = (j0 - half + up - 1) / up;
    if (j0 - half < 0) i_lo = 0;
    int64_t i_hi = (j0 + half) / up;
    if (i_hi >= n) i_hi = n - 1;
    double acc = 0.0;
    for (int64_t i = i_lo; i <= i_hi; ++i) {
      int64_t t = j0 - i * up;
      if (t >= -half && t <= half) acc += h[size_t(t + half)] * x[size_t(i)];
    }
    y[size_t(m)] = acc;
  }
  return y;
}

inline Waveform resample_to(const Waveform& w, int target_rate) {
  if (w.sample_rate_hz == target_rate) return w;
  int g = std::gcd(w.sample_rate_hz, target_rate);
  Waveform out;
  out.sample_rate_hz = target_rate;
  out.samples = resample_poly(w.samples, target_rate / g, w.sample_rate_hz / g);
  return out;
}

}  // namespace l2s::metrics
