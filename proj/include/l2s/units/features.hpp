#pragma once

#include <functional>
#include <map>

#include "l2s/signal/mel.hpp"

namespace l2s::units {

struct FeatureConfig {
  int sample_rate_hz = 16000;
  double hop_ms = 20.0;   // 50 Hz
  double win_ms = 40.0;
  int n_fft = 1024;
  int n_filters = 26;
  int n_ceps = 13;

  int hop_samples() const { return int(std::lround(hop_ms * sample_rate_hz / 1000.0)); }
  int win_samples() const { return int(std::lround(win_ms * sample_rate_hz / 1000.0)); }
  double frame_rate_hz() const { return 1000.0 / hop_ms; }
};

struct FeatureSequence {
  Mat frames;  // T_u x D
  double frame_rate_hz = 50.0;
  std::string extractor_id;

  int num_frames() const { return frames.rows; }
  int dim() const { return frames.cols; }
};

inline constexpr const char* kProxyExtractorId = "cepstral-proxy-v1";

// Deterministic 50 Hz stand-in for a pretrained SSL front end. Per hop:
// 13 cepstral coefficients (DCT of log mel filterbank energies, mean
// normalized per utterance so codes transfer across speakers), their
// temporal deltas, and log energy; the current and previous frame are
// concatenated, giving D = 2 * (13 + 13 + 1) = 54.
inline FeatureSequence proxy_ssl_features(const Waveform& w, const FeatureConfig& cfg = {}) {
  require(!w.empty(), "empty waveform");
  require(w.sample_rate_hz == cfg.sample_rate_hz, "waveform sample rate ", w.sample_rate_hz,
          " does not match feature config ", cfg.sample_rate_hz);
  int n = int(w.samples.size());
  require(n >= cfg.win_samples(), "audio shorter than one analysis window (", n, " < ",
          cfg.win_samples(), " samples)");

  signal::AudioConfig acfg;
  acfg.sample_rate_hz = cfg.sample_rate_hz;
  acfg.win_ms = cfg.win_ms;
  acfg.hop_ms = cfg.hop_ms;
  acfg.n_fft = cfg.n_fft;
  acfg.n_mels = cfg.n_filters;
  acfg.log_floor = 1e-10;
  Mat fbank = signal::mel_power(w, acfg);  // T x n_filters
  int t_frames = fbank.rows;

  // log filterbank -> DCT-II cepstra
  Mat ceps(t_frames, cfg.n_ceps);
  for (int t = 0; t < t_frames; ++t) {
    for (int c = 0; c < cfg.n_ceps; ++c) {
      double acc = 0.0;
      for (int j = 0; j < cfg.n_filters; ++j)
        acc += std::log(std::max(fbank.at(t, j), acfg.log_floor)) *
               std::cos(M_PI * c * (j + 0.5) / cfg.n_filters);
      double scale = std::sqrt(2.0 / cfg.n_filters) * (c == 0 ? std::sqrt(0.5) : 1.0);
      ceps.at(t, c) = acc * scale;
    }
  }

  // per-utterance cepstral mean normalization
  for (int c = 0; c < cfg.n_ceps; ++c) {
    double mean = 0.0;
    for (int t = 0; t < t_frames; ++t) mean += ceps.at(t, c);
    mean /= t_frames;
    for (int t = 0; t < t_frames; ++t) ceps.at(t, c) -= mean;
  }

  int hop = cfg.hop_samples();
  std::vector<double> log_energy(t_frames);
  double energy_mean = 0.0;
  for (int t = 0; t < t_frames; ++t) {
    double e = 0.0;
    for (int i = t * hop; i < std::min(n, (t + 1) * hop); ++i) e += w.samples[i] * w.samples[i];
    log_energy[t] = std::log(e + 1e-10);
    energy_mean += log_energy[t] / t_frames;
  }
  for (double& e : log_energy) e -= energy_mean;

  auto clamp_t = [&](int t) { return std::clamp(t, 0, t_frames - 1); };
  int base_dim = cfg.n_ceps * 2 + 1;
  FeatureSequence out;
  out.frame_rate_hz = cfg.frame_rate_hz();
  out.extractor_id = kProxyExtractorId;
  out.frames = Mat(t_frames, base_dim * 2);
  for (int t = 0; t < t_frames; ++t) {
    for (int ctx = 0; ctx < 2; ++ctx) {
      int src = clamp_t(t - 1 + ctx);
      double* dst = out.frames.row(t) + size_t(ctx) * base_dim;
      for (int c = 0; c < cfg.n_ceps; ++c) dst[c] = ceps.at(src, c);
      for (int c = 0; c < cfg.n_ceps; ++c)
        dst[cfg.n_ceps + c] =
            0.5 * (ceps.at(clamp_t(src + 1), c) - ceps.at(clamp_t(src - 1), c));
      dst[2 * cfg.n_ceps] = log_energy[src];
    }
  }
  return out;
}

// Registry so a real pretrained SSL model can be wired in behind the same
// 50 Hz interface.
class ExtractorRegistry {
public:
  using Fn = std::function<FeatureSequence(const Waveform&)>;

  static ExtractorRegistry& instance() {
    static ExtractorRegistry reg;
    return reg;
  }

  void register_extractor(const std::string& id, Fn fn) { fns_[id] = std::move(fn); }

  FeatureSequence extract(const std::string& id, const Waveform& w) const {
    auto it = fns_.find(id);
    require(it != fns_.end(), "unknown feature extractor: ", id);
    return it->second(w);
  }

  bool has(const std::string& id) const { return fns_.count(id) > 0; }

private:
  ExtractorRegistry() {
    fns_[kProxyExtractorId] = [](const Waveform& w) { return proxy_ssl_features(w); };
  }
  std::map<std::string, Fn> fns_;
};

}  // namespace l2s::units
