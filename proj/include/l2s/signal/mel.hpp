#pragma once

#include <filesystem>

#include "l2s/signal/fft.hpp"
#include "l2s/wav.hpp"

namespace l2s::signal {

struct AudioConfig {
  int sample_rate_hz = 16000;
  double win_ms = 40.0;
  double hop_ms = 10.0;
  int n_fft = 1024;
  int n_mels = 80;
  double fmin_hz = 0.0;
  double fmax_hz = 8000.0;
  double log_floor = 1e-5;

  int win_samples() const { return int(std::lround(win_ms * sample_rate_hz / 1000.0)); }
  int hop_samples() const { return int(std::lround(hop_ms * sample_rate_hz / 1000.0)); }
  double frame_rate_hz() const { return 1000.0 / hop_ms; }

  void validate() const {
    require(sample_rate_hz > 0, "sample_rate_hz must be positive");
    require(hop_samples() > 0, "hop must be positive");
    require(win_samples() >= hop_samples(), "window must be at least one hop");
    require(win_samples() % hop_samples() == 0, "hop must divide window evenly");
    require(n_fft >= win_samples(), "n_fft (", n_fft, ") must cover the window (",
            win_samples(), " samples)");
    require((n_fft & (n_fft - 1)) == 0, "n_fft must be a power of two");
    require(fmax_hz <= sample_rate_hz / 2.0, "fmax above Nyquist");
    require(fmin_hz >= 0.0 && fmin_hz < fmax_hz, "need 0 <= fmin < fmax");
    require(log_floor > 0.0, "log_floor must be positive");
    require(n_mels > 0, "n_mels must be positive");
  }
};

struct MelSpectrogram {
  Mat frames;  // T x n_mels, natural-log mel magnitudes
  double frame_rate_hz = 100.0;

  int num_frames() const { return frames.rows; }
  int num_mels() const { return frames.cols; }
};

struct StackedMel {
  Mat frames;  // T_s x (factor * n_mels)
  double frame_rate_hz = 50.0;
  int factor = 2;
};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular HTK-scale filterbank, each filter normalized to unit area.
// Returns an n_mels x (n_fft/2+1) matrix.
inline Mat mel_filterbank(const AudioConfig& cfg) {
  cfg.validate();
  int n_bins = cfg.n_fft / 2 + 1;
  double mel_lo = hz_to_mel(cfg.fmin_hz);
  double mel_hi = hz_to_mel(cfg.fmax_hz);
  std::vector<double> edges(cfg.n_mels + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / double(cfg.n_mels + 1));

  Mat fb(cfg.n_mels, n_bins);
  double df = double(cfg.sample_rate_hz) / cfg.n_fft;
  for (int m = 0; m < cfg.n_mels; ++m) {
    double fl = edges[m], fc = edges[m + 1], fr = edges[m + 2];
    double area_norm = 2.0 / (fr - fl);
    for (int k = 0; k < n_bins; ++k) {
      double f = k * df;
      double w = 0.0;
      if (f > fl && f < fc)
        w = (f - fl) / (fc - fl);
      else if (f >= fc && f < fr)
        w = (fr - f) / (fr - fc);
      fb.at(m, k) = w * area_norm;
    }
  }
  return fb;
}

// Center frequencies (Hz) of the triangular filters.
inline std::vector<double> mel_filter_centers(const AudioConfig& cfg) {
  double mel_lo = hz_to_mel(cfg.fmin_hz);
  double mel_hi = hz_to_mel(cfg.fmax_hz);
  std::vector<double> c(cfg.n_mels);
  for (int m = 0; m < cfg.n_mels; ++m)
    c[m] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * (m + 1) / double(cfg.n_mels + 1));
  return c;
}

// Magnitude STFT with reflect padding of (win-hop)/2 samples per edge so
// that T = floor(N / hop) for any N >= hop. T x (n_fft/2+1).
inline Mat stft_magnitude(const Waveform& w, const AudioConfig& cfg) {
  cfg.validate();
  require(!w.empty(), "empty waveform");
  require(w.sample_rate_hz == cfg.sample_rate_hz, "waveform sample rate ", w.sample_rate_hz,
          " does not match config ", cfg.sample_rate_hz);
  int n = int(w.samples.size());
  int hop = cfg.hop_samples();
  int win = cfg.win_samples();
  require(n >= hop, "waveform shorter than one hop (", n, " < ", hop, ")");

  int pad = (win - hop) / 2;
  int t_frames = n / hop;
  FftPlan plan(cfg.n_fft);
  auto window = hann_window(win);
  Mat mag(t_frames, cfg.n_fft / 2 + 1);
  std::vector<double> frame(cfg.n_fft, 0.0);
  for (int t = 0; t < t_frames; ++t) {
    int start = t * hop - pad;
    for (int i = 0; i < win; ++i)
      frame[i] = w.samples[reflect_index(start + i, n)] * window[i];
    for (int i = win; i < cfg.n_fft; ++i) frame[i] = 0.0;
    auto spec = plan.rfft(frame);
    for (int k = 0; k <= cfg.n_fft / 2; ++k) mag.at(t, k) = std::abs(spec[k]);
  }
  return mag;
}

// Pre-log mel magnitudes (no floor applied). T x n_mels.
inline Mat mel_power(const Waveform& w, const AudioConfig& cfg) {
  Mat mag = stft_magnitude(w, cfg);
  Mat fb = mel_filterbank(cfg);
  Mat out(mag.rows, cfg.n_mels);
  for (int t = 0; t < mag.rows; ++t) {
    const double* m = mag.row(t);
    for (int j = 0; j < cfg.n_mels; ++j) {
      const double* f = fb.row(j);
      double acc = 0.0;
      for (int k = 0; k < mag.cols; ++k) acc += f[k] * m[k];
      out.at(t, j) = acc;
    }
  }
  return out;
}

inline MelSpectrogram log_mel(const Waveform& w, const AudioConfig& cfg) {
  Mat e = mel_power(w, cfg);
  for (double& v : e.data) v = std::log(std::max(v, cfg.log_floor));
  return MelSpectrogram{std::move(e), cfg.frame_rate_hz()};
}

// Concatenate consecutive groups of `factor` frames feature-wise. A trailing
// remainder that does not fill a group is dropped.
inline StackedMel stack_mel(const MelSpectrogram& mel, int factor) {
  require(factor >= 1, "stack factor must be >= 1, got ", factor);
  int t_out = mel.frames.rows / factor;
  Mat out(t_out, mel.frames.cols * factor);
  for (int t = 0; t < t_out; ++t)
    for (int g = 0; g < factor; ++g)
      std::copy(mel.frames.row(t * factor + g), mel.frames.row(t * factor + g) + mel.frames.cols,
                out.row(t) + size_t(g) * mel.frames.cols);
  return StackedMel{std::move(out), mel.frame_rate_hz / factor, factor};
}

inline MelSpectrogram unstack_mel(const StackedMel& stacked) {
  require(stacked.factor >= 1, "stack factor must be >= 1");
  require(stacked.frames.cols % stacked.factor == 0, "stacked width not divisible by factor");
  int n_mels = stacked.frames.cols / stacked.factor;
  Mat out(stacked.frames.rows * stacked.factor, n_mels);
  for (int t = 0; t < stacked.frames.rows; ++t)
    for (int g = 0; g < stacked.factor; ++g)
      std::copy(stacked.frames.row(t) + size_t(g) * n_mels,
                stacked.frames.row(t) + size_t(g + 1) * n_mels, out.row(t * stacked.factor + g));
  return MelSpectrogram{std::move(out), stacked.frame_rate_hz * stacked.factor};
}

// ---- MELF binary container ----
// "MELF", u32 version, u32 T, u32 n_mels, f32 frame_rate, T*n_mels f32 row-major.

inline constexpr uint32_t kMelfVersion = 1;

inline void mel_save(const MelSpectrogram& mel, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "cannot open for writing: ", path.string());
  write_magic(os, "MELF");
  write_u32(os, kMelfVersion);
  write_u32(os, uint32_t(mel.frames.rows));
  write_u32(os, uint32_t(mel.frames.cols));
  write_f32(os, float(mel.frame_rate_hz));
  for (double v : mel.frames.data) write_f32(os, float(v));
  require(os.good(), "write failed: ", path.string());
}

inline MelSpectrogram mel_load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "cannot open: ", path.string());
  expect_magic(is, "MELF", path.string());
  uint32_t version = read_u32(is);
  require(version == kMelfVersion, "unsupported MELF version ", version);
  uint32_t t = read_u32(is);
  uint32_t n_mels = read_u32(is);
  MelSpectrogram mel;
  mel.frame_rate_hz = read_f32(is);
  mel.frames = Mat(int(t), int(n_mels));
  for (double& v : mel.frames.data) v = read_f32(is);
  require(bool(is), "truncated MELF file: ", path.string());
  return mel;
}

}  // namespace l2s::signal
