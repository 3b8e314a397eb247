#pragma once

#include "l2s/signal/mel.hpp"

namespace l2s::signal {

namespace detail {

// Pseudo-invert the mel filterbank: recover a non-negative linear magnitude
// spectrogram X (T x bins) with FB * X ~= E. Transpose-normalized estimate
// refined by multiplicative non-negative least-squares updates.
inline Mat mel_to_linear(const Mat& mel_energy, const Mat& fb, int nnls_iters = 30) {
  int t_frames = mel_energy.rows;
  int n_bins = fb.cols;
  int n_mels = fb.rows;
  require(mel_energy.cols == n_mels, "mel width does not match filterbank");

  std::vector<double> colsum(n_bins, 0.0);
  for (int m = 0; m < n_mels; ++m)
    for (int k = 0; k < n_bins; ++k) colsum[k] += fb.at(m, k);

  Mat x(t_frames, n_bins);
  for (int t = 0; t < t_frames; ++t)
    for (int k = 0; k < n_bins; ++k) {
      double num = 0.0;
      for (int m = 0; m < n_mels; ++m) num += fb.at(m, k) * mel_energy.at(t, m);
      x.at(t, k) = colsum[k] > 1e-12 ? num / colsum[k] : 0.0;
    }

  const double eps = 1e-12;
  std::vector<double> fbx(n_mels), num(n_bins), den(n_bins);
  for (int it = 0; it < nnls_iters; ++it) {
    for (int t = 0; t < t_frames; ++t) {
      for (int m = 0; m < n_mels; ++m) {
        double acc = 0.0;
        const double* f = fb.row(m);
        const double* xr = x.row(t);
        for (int k = 0; k < n_bins; ++k) acc += f[k] * xr[k];
        fbx[m] = acc;
      }
      for (int k = 0; k < n_bins; ++k) {
        double nu = 0.0, de = 0.0;
        for (int m = 0; m < n_mels; ++m) {
          nu += fb.at(m, k) * mel_energy.at(t, m);
          de += fb.at(m, k) * fbx[m];
        }
        num[k] = nu;
        den[k] = de;
      }
      for (int k = 0; k < n_bins; ++k) x.at(t, k) *= num[k] / (den[k] + eps);
    }
  }
  return x;
}

// Inverse STFT matching the stft_magnitude framing: windowed overlap-add with
// squared-window normalization, then the reflect padding is trimmed so the
// output has exactly T*hop samples.
inline std::vector<double> istft(const Mat& real_part, const Mat& imag_part,
                                 const AudioConfig& cfg) {
  int t_frames = real_part.rows;
  int hop = cfg.hop_samples();
  int win = cfg.win_samples();
  int pad = (win - hop) / 2;
  FftPlan plan(cfg.n_fft);
  auto window = hann_window(win);

  int buf_len = (t_frames - 1) * hop + win;
  std::vector<double> buf(buf_len, 0.0), wsum(buf_len, 0.0);
  std::vector<std::complex<double>> spec(cfg.n_fft / 2 + 1);
  for (int t = 0; t < t_frames; ++t) {
    for (int k = 0; k <= cfg.n_fft / 2; ++k)
      spec[k] = {real_part.at(t, k), imag_part.at(t, k)};
    auto frame = plan.irfft(spec);
    int start = t * hop;
    for (int i = 0; i < win; ++i) {
      buf[start + i] += frame[i] * window[i];
      wsum[start + i] += window[i] * window[i];
    }
  }
  std::vector<double> out(size_t(t_frames) * hop, 0.0);
  for (size_t i = 0; i < out.size(); ++i) {
    size_t j = i + pad;
    if (j < buf.size()) out[i] = buf[j] / std::max(wsum[j], 1e-10);
  }
  return out;
}

}  // namespace detail

// Invert a log-mel spectrogram to a waveform: mel pseudo-inverse to a linear
// magnitude spectrogram, then Griffin-Lim phase iterations starting from zero
// phase. iterations = 0 returns the zero-phase reconstruction.
inline Waveform griffin_lim(const MelSpectrogram& mel, const AudioConfig& cfg, int iterations) {
  cfg.validate();
  require(iterations >= 0, "iterations must be >= 0");
  require(mel.frames.cols == cfg.n_mels, "mel has ", mel.frames.cols,
          " bands but config expects ", cfg.n_mels);

  Mat energy = mel.frames;
  for (double& v : energy.data) v = std::exp(v);

  Mat fb = mel_filterbank(cfg);
  Mat target_mag = detail::mel_to_linear(energy, fb);

  int t_frames = target_mag.rows;
  int n_bins = cfg.n_fft / 2 + 1;
  Mat re = target_mag, im(t_frames, n_bins);

  FftPlan plan(cfg.n_fft);
  auto window = hann_window(cfg.win_samples());
  int hop = cfg.hop_samples();
  int win = cfg.win_samples();
  int pad = (win - hop) / 2;

  Waveform w;
  w.sample_rate_hz = cfg.sample_rate_hz;
  std::vector<double> frame(cfg.n_fft, 0.0);
  for (int it = 0; it < iterations; ++it) {
    // resynthesize, re-analyze, keep target magnitude, adopt the new phase
    w.samples = detail::istft(re, im, cfg);
    int n = int(w.samples.size());
    for (int t = 0; t < t_frames; ++t) {
      int start = t * hop - pad;
      for (int i = 0; i < win; ++i)
        frame[i] = w.samples[reflect_index(start + i, n)] * window[i];
      for (int i = win; i < cfg.n_fft; ++i) frame[i] = 0.0;
      auto spec = plan.rfft(frame);
      for (int k = 0; k < n_bins; ++k) {
        double a = std::abs(spec[k]);
        double tm = target_mag.at(t, k);
        if (a > 1e-12) {
          re.at(t, k) = tm * spec[k].real() / a;
          im.at(t, k) = tm * spec[k].imag() / a;
        } else {
          re.at(t, k) = tm;
          im.at(t, k) = 0.0;
        }
      }
    }
  }
  w.samples = detail::istft(re, im, cfg);
  double p = peak(w);
  if (p > 1.0)
    for (double& s : w.samples) s *= 0.999 / p;
  return w;
}

}  // namespace l2s::signal
