#pragma once

#include "l2s/data/corpus.hpp"
#include "l2s/nn/checkpoint.hpp"
#include "l2s/nn/optim.hpp"
#include "l2s/signal/mel.hpp"

namespace l2s::vocoder {

struct MelAugmentConfig {
  int blur_kernel = 9;
  double blur_sigma_lo = 0.1;
  double blur_sigma_hi = 1.0;
  double noise_sigma_min = 0.0;  // training draws sigma from [min, max]
  double noise_sigma_max = 1.0;
  double apply_prob = 1.0;

  void validate() const {
    require(blur_kernel >= 1 && blur_kernel % 2 == 1, "blur kernel must be odd");
    require(blur_sigma_lo > 0.0 && blur_sigma_hi >= blur_sigma_lo, "bad blur sigma range");
    require(noise_sigma_min >= 0.0 && noise_sigma_max >= noise_sigma_min,
            "bad noise sigma range");
    require(apply_prob >= 0.0 && apply_prob <= 1.0, "apply_prob in [0,1]");
  }
};

struct VocoderConfig {
  int n_mels = 80;
  int unit_vocab = 64;
  int unit_embed_dim = 128;
  int spk_embed_dim = 256;
  int spk_proj_dim = 128;
  std::vector<int> upsample_factors = {5, 4, 4, 2};  // product must equal hop_samples
  int hop_samples = 160;
  int base_channels = 64;
  bool multi_input = true;   // false: mel-only conditioning (ablation baseline)
  bool adversarial = false;  // optional lightweight GAN mode
  uint64_t seed = 0;
  // training
  double learning_rate = 2e-3;
  int segment_mel_frames = 32;  // random training crop, must be even
  bool augment_enabled = false;
  MelAugmentConfig augment;
  double lambda_mel = 10.0;  // weight of the mel reconstruction term

  int stages() const { return int(upsample_factors.size()); }
  int cond_dim() const {
    return multi_input ? n_mels + unit_embed_dim + spk_proj_dim : n_mels;
  }

  void validate() const {
    require(n_mels >= 1 && unit_vocab >= 2, "bad feature dims");
    int prod = 1;
    for (int f : upsample_factors) {
      require(f >= 1, "upsample factors must be positive");
      prod *= f;
    }
    require(prod == hop_samples, "product of upsample_factors (", prod,
            ") must equal hop_samples (", hop_samples, ")");
    require(base_channels >= 4 && (base_channels >> (stages() - 1)) >= 2,
            "base_channels too small for the stage count");
    require(segment_mel_frames >= 2 && segment_mel_frames % 2 == 0,
            "segment_mel_frames must be even");
    augment.validate();
  }

  nlohmann::json to_json() const {
    return {{"n_mels", n_mels},
            {"unit_vocab", unit_vocab},
            {"unit_embed_dim", unit_embed_dim},
            {"spk_embed_dim", spk_embed_dim},
            {"spk_proj_dim", spk_proj_dim},
            {"upsample_factors", upsample_factors},
            {"hop_samples", hop_samples},
            {"base_channels", base_channels},
            {"multi_input", multi_input},
            {"adversarial", adversarial},
            {"seed", seed},
            {"learning_rate", learning_rate},
            {"segment_mel_frames", segment_mel_frames},
            {"augment_enabled", augment_enabled},
            {"lambda_mel", lambda_mel}};
  }

  static VocoderConfig from_json(const nlohmann::json& j) {
    VocoderConfig c;
    c.n_mels = j.at("n_mels").get<int>();
    c.unit_vocab = j.at("unit_vocab").get<int>();
    c.unit_embed_dim = j.at("unit_embed_dim").get<int>();
    c.spk_embed_dim = j.at("spk_embed_dim").get<int>();
    c.spk_proj_dim = j.at("spk_proj_dim").get<int>();
    c.upsample_factors = j.at("upsample_factors").get<std::vector<int>>();
    c.hop_samples = j.at("hop_samples").get<int>();
    c.base_channels = j.at("base_channels").get<int>();
    c.multi_input = j.at("multi_input").get<bool>();
    c.adversarial = j.at("adversarial").get<bool>();
    c.seed = j.at("seed").get<uint64_t>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.segment_mel_frames = j.at("segment_mel_frames").get<int>();
    c.augment_enabled = j.at("augment_enabled").get<bool>();
    c.lambda_mel = j.at("lambda_mel").get<double>();
    return c;
  }
};

// 2D Gaussian kernel normalized to unit sum.
inline Mat gaussian_kernel2d(int size, double sigma) {
  require(size >= 1 && size % 2 == 1, "kernel size must be odd");
  require(sigma > 0.0, "sigma must be positive");
  Mat k(size, size);
  int half = size / 2;
  double total = 0.0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double dy = y - half, dx = x - half;
      k.at(y, x) = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      total += k.at(y, x);
    }
  for (double& v : k.data) v /= total;
  return k;
}

// Blur + noise augmentation of a log-mel "image". Sampling order is fixed:
// apply gate, blur sigma, then noise sigma.
inline signal::MelSpectrogram augment_mel(const signal::MelSpectrogram& mel, Rng& rng,
                                          const MelAugmentConfig& cfg) {
  cfg.validate();
  if (!rng.bernoulli(cfg.apply_prob)) return mel;
  double blur_sigma = rng.uniform(cfg.blur_sigma_lo, cfg.blur_sigma_hi);
  double noise_sigma = rng.uniform(cfg.noise_sigma_min, cfg.noise_sigma_max);

  Mat kernel = gaussian_kernel2d(cfg.blur_kernel, blur_sigma);
  int half = cfg.blur_kernel / 2;
  int t_frames = mel.frames.rows, n_mels = mel.frames.cols;

  signal::MelSpectrogram out;
  out.frame_rate_hz = mel.frame_rate_hz;
  out.frames = Mat(t_frames, n_mels);
  for (int t = 0; t < t_frames; ++t)
    for (int j = 0; j < n_mels; ++j) {
      double acc = 0.0;
      for (int dy = -half; dy <= half; ++dy)
        for (int dx = -half; dx <= half; ++dx) {
          int ty = signal::reflect_index(t + dy, t_frames);
          int tx = signal::reflect_index(j + dx, n_mels);
          acc += kernel.at(dy + half, dx + half) * mel.frames.at(ty, tx);
        }
      out.frames.at(t, j) = acc;
    }
  if (noise_sigma > 0.0)
    for (double& v : out.frames.data) v += noise_sigma * rng.normal();
  return out;
}

// Multi-input waveform generator: conditioning at 100 Hz is upsampled through
// transposed-conv stages with residual dilated conv blocks, tanh output.
class VocoderModel {
public:
  explicit VocoderModel(const VocoderConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(cfg_.seed ^ 0x0c0deULL);
    unit_table_ = nn::EmbeddingLayer(params_, "cond.unit_table", cfg_.unit_vocab,
                                     cfg_.unit_embed_dim, rng);
    spk_proj_ = nn::Linear(params_, "cond.spk_proj", cfg_.spk_embed_dim, cfg_.spk_proj_dim, rng);
    pre_ = nn::Conv1dLayer(params_, "gen.pre", 7, cfg_.cond_dim(), cfg_.base_channels, rng, 3);
    int ch = cfg_.base_channels;
    for (int s = 0; s < cfg_.stages(); ++s) {
      int f = cfg_.upsample_factors[s];
      int k = f % 2 == 0 ? 2 * f : 3 * f;
      int pad = f % 2 == 0 ? f / 2 : f;
      int ch_out = std::max(2, ch / 2);
      std::string base = "gen.stage" + std::to_string(s);
      ups_.emplace_back(params_, base + ".up", k, ch, ch_out, rng, f, pad);
      res_a_.emplace_back(params_, base + ".res_a", 3, ch_out, ch_out, rng, 1, 1);
      res_b_.emplace_back(params_, base + ".res_b", 3, ch_out, ch_out, rng, 3, 3);
      ch = ch_out;
    }
    post_ = nn::Conv1dLayer(params_, "gen.post", 7, ch, 1, rng, 3);
  }

  const VocoderConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  // mel: T x n_mels log-mel at 100 Hz; units at 50 Hz with 2*len == T;
  // spk: unit-norm embedding. Returns [1, T, cond_dim].
  nn::TensorPtr condition_inputs(const Mat& mel, const std::vector<int>& unit_codes,
                                 const std::vector<double>& spk) const {
    require(mel.cols == cfg_.n_mels, "conditioning mel has ", mel.cols, " bands, expected ",
            cfg_.n_mels);
    int t_mel = mel.rows;
    auto mel_t = nn::make_tensor({1, t_mel, cfg_.n_mels}, false);
    std::copy(mel.data.begin(), mel.data.end(), mel_t->value.begin());
    if (!cfg_.multi_input) return mel_t;

    require(t_mel == 2 * int(unit_codes.size()), "rate mismatch: T_mel=", t_mel,
            " but 2*len(units)=", 2 * unit_codes.size());
    require(int(spk.size()) == cfg_.spk_embed_dim, "speaker embedding dim mismatch");

    auto unit_emb = unit_table_(unit_codes, {1, int(unit_codes.size())});
    auto unit_time = nn::repeat_time(unit_emb, 2);  // 50 Hz -> 100 Hz

    auto spk_t = nn::make_tensor({1, cfg_.spk_embed_dim}, false);
    std::copy(spk.begin(), spk.end(), spk_t->value.begin());
    auto spk_time =
        nn::repeat_time(nn::reshape(spk_proj_(spk_t), {1, 1, cfg_.spk_proj_dim}), t_mel);

    return nn::concat_lastdim(nn::concat_lastdim(mel_t, unit_time), spk_time);
  }

  // cond: [1, T, cond_dim] -> [1, T * hop] in (-1, 1)
  nn::TensorPtr generate(const nn::TensorPtr& cond) const {
    require(cond->ndim() == 3 && cond->shape[2] == cfg_.cond_dim(),
            "conditioning width ", cond->ndim() == 3 ? cond->shape[2] : -1, " != ",
            cfg_.cond_dim());
    auto x = nn::leaky_relu(pre_(cond));
    for (int s = 0; s < cfg_.stages(); ++s) {
      x = ups_[s](x);
      auto r = res_b_[s](nn::leaky_relu(res_a_[s](nn::leaky_relu(x))));
      x = nn::add(x, r);
    }
    auto wav = nn::tanh_op(post_(x));  // [1, T*hop, 1]
    return nn::reshape(wav, {1, wav->shape[1]});
  }

  Waveform generate_waveform(const Mat& mel, const std::vector<int>& units,
                             const std::vector<double>& spk, int sample_rate = 16000) const {
    auto cond = condition_inputs(mel, units, spk);
    auto wav = generate(cond);
    Waveform out;
    out.sample_rate_hz = sample_rate;
    out.samples = wav->value;
    return out;
  }

private:
  VocoderConfig cfg_;
  nn::ParamStore params_;
  nn::EmbeddingLayer unit_table_;
  nn::Linear spk_proj_;
  nn::Conv1dLayer pre_, post_;
  std::vector<nn::ConvT1dLayer> ups_;
  std::vector<nn::Conv1dLayer> res_a_, res_b_;
};

// Lightweight two-scale waveform discriminator for the optional adversarial
// mode (least-squares GAN with feature matching).
class WaveDiscriminator {
public:
  explicit WaveDiscriminator(uint64_t seed) {
    Rng rng(seed ^ 0xd15cULL);
    for (int s = 0; s < 2; ++s) {
      std::string base = "disc.scale" + std::to_string(s);
      c1_.emplace_back(params_, base + ".c1", 15, 1, 16, rng, 7);
      c2_.emplace_back(params_, base + ".c2", 15, 16, 32, rng, 7);
      c3_.emplace_back(params_, base + ".c3", 3, 32, 1, rng, 1);
    }
  }

  nn::ParamStore& params() { return params_; }

  struct Output {
    std::vector<nn::TensorPtr> scores;    // one per scale
    std::vector<nn::TensorPtr> features;  // intermediate maps for matching
  };

  Output operator()(const nn::TensorPtr& wav) const {
    Output out;
    auto x0 = wav;
    for (int s = 0; s < 2; ++s) {
      auto x = s == 0 ? x0 : nn::avg_pool1d(x0, 2);
      auto h = nn::reshape(x, {x->shape[0], x->shape[1], 1});
      auto f1 = nn::leaky_relu(c1_[s](h));
      auto f2 = nn::leaky_relu(c2_[s](f1));
      out.features.push_back(f1);
      out.features.push_back(f2);
      out.scores.push_back(c3_[s](f2));
    }
    return out;
  }

private:
  nn::ParamStore params_;
  std::vector<nn::Conv1dLayer> c1_, c2_, c3_;
};

// Multi-resolution STFT magnitude loss (linear + log magnitude L1 terms).
inline nn::TensorPtr multi_res_stft_loss(const nn::TensorPtr& pred, const nn::TensorPtr& target) {
  struct Res {
    int fft, hop, win;
  };
  static const Res resolutions[3] = {{256, 64, 128}, {512, 128, 256}, {1024, 256, 512}};
  nn::TensorPtr total;
  for (const auto& r : resolutions) {
    if (pred->shape[1] < r.win) continue;  // short segments skip coarse scales
    auto mp = nn::stft_mag(pred, r.fft, r.hop, r.win);
    auto mt = nn::stft_mag(target, r.fft, r.hop, r.win);
    auto lin = nn::mean_all(nn::abs_op(nn::sub(mp, mt)));
    auto lg = nn::mean_all(
        nn::abs_op(nn::sub(nn::log_clamped(mp, 1e-5), nn::log_clamped(mt, 1e-5))));
    auto term = nn::add(lin, lg);
    total = total ? nn::add(total, term) : term;
  }
  require(total != nullptr, "segment too short for every STFT resolution");
  return total;
}

// Differentiable log-mel of a waveform tensor (unpadded frames); used for the
// mel reconstruction term so gradients reach the generator.
inline nn::TensorPtr waveform_log_mel(const nn::TensorPtr& wav,
                                      const std::shared_ptr<Mat>& fb_t, int n_fft, int hop,
                                      int win, double log_floor) {
  auto mag = nn::stft_mag(wav, n_fft, hop, win);
  auto melE = nn::matmul_const(mag, fb_t);
  return nn::log_clamped(melE, log_floor);
}

}  // namespace l2s::vocoder
