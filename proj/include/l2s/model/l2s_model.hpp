#pragma once

#include "l2s/data/corpus.hpp"
#include "l2s/model/augment.hpp"
#include "l2s/nn/checkpoint.hpp"
#include "l2s/nn/optim.hpp"
#include "l2s/signal/mel.hpp"

namespace l2s::model {

struct L2SConfig {
  int conformer_layers = 4;   // paper-scale: 12
  int attention_heads = 4;    // paper-scale: 8
  int conv_kernel = 31;
  int latent_dim = 144;       // paper-scale: 512
  int interleave_ratio = 2;   // units rate / video rate
  int unit_vocab = 64;        // codebook K
  int mel_stack_dim = 160;    // stack factor * n_mels
  double dropout = 0.1;
  uint64_t seed = 0;
  int spk_embed_dim = 256;
  int spk_proj_dim = 128;
  VideoAugmentConfig augment;
  // training
  int batch_size = 2;
  double learning_rate = 1e-3;
  double lambda_mel = 10.0;
  double lambda_unit = 1.0;

  void validate() const {
    require(conformer_layers >= 1, "need at least one conformer layer");
    require(latent_dim % attention_heads == 0, "latent_dim must be divisible by heads");
    require(interleave_ratio >= 1, "interleave_ratio must be >= 1");
    require(unit_vocab >= 2, "unit vocabulary must have at least 2 entries");
    require(mel_stack_dim >= 1, "mel_stack_dim must be positive");
    require(conv_kernel % 2 == 1, "conv kernel must be odd");
    require(dropout >= 0.0 && dropout < 1.0, "dropout in [0,1)");
    require(lambda_mel >= 0.0 && lambda_unit >= 0.0, "loss weights must be non-negative");
  }

  nlohmann::json to_json() const {
    return {{"conformer_layers", conformer_layers},
            {"attention_heads", attention_heads},
            {"conv_kernel", conv_kernel},
            {"latent_dim", latent_dim},
            {"interleave_ratio", interleave_ratio},
            {"unit_vocab", unit_vocab},
            {"mel_stack_dim", mel_stack_dim},
            {"dropout", dropout},
            {"seed", seed},
            {"spk_embed_dim", spk_embed_dim},
            {"spk_proj_dim", spk_proj_dim},
            {"crop_size", augment.crop_size},
            {"batch_size", batch_size},
            {"learning_rate", learning_rate},
            {"lambda_mel", lambda_mel},
            {"lambda_unit", lambda_unit}};
  }

  static L2SConfig from_json(const nlohmann::json& j) {
    L2SConfig c;
    c.conformer_layers = j.at("conformer_layers").get<int>();
    c.attention_heads = j.at("attention_heads").get<int>();
    c.conv_kernel = j.at("conv_kernel").get<int>();
    c.latent_dim = j.at("latent_dim").get<int>();
    c.interleave_ratio = j.at("interleave_ratio").get<int>();
    c.unit_vocab = j.at("unit_vocab").get<int>();
    c.mel_stack_dim = j.at("mel_stack_dim").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.seed = j.at("seed").get<uint64_t>();
    c.spk_embed_dim = j.at("spk_embed_dim").get<int>();
    c.spk_proj_dim = j.at("spk_proj_dim").get<int>();
    c.augment.crop_size = j.at("crop_size").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.lambda_mel = j.at("lambda_mel").get<double>();
    c.lambda_unit = j.at("lambda_unit").get<double>();
    return c;
  }
};

struct L2SOutput {
  nn::TensorPtr mel_stacked_pred;  // [B, T_u, mel_stack_dim]
  nn::TensorPtr unit_logits;       // [B, T_u, K]
};

// ---- losses (Eq. 2 / Eq. 3 analogues, mean reduction) ----

inline nn::TensorPtr loss_mel(const nn::TensorPtr& pred, const nn::TensorPtr& target,
                              const std::vector<double>& row_mask = {}) {
  require(pred->shape == target->shape, "loss_mel: shape mismatch");
  auto diff = abs_op(nn::sub(pred, target));
  if (row_mask.empty()) return nn::mean_all(diff);
  return nn::masked_mean(diff, row_mask);
}

inline nn::TensorPtr loss_unit(const nn::TensorPtr& logits, const std::vector<int>& units) {
  return nn::cross_entropy(logits, units);
}

inline nn::TensorPtr loss_total(const nn::TensorPtr& l_mel, const nn::TensorPtr& l_unit,
                                double lambda_mel, double lambda_unit) {
  require(lambda_mel >= 0.0 && lambda_unit >= 0.0, "loss weights must be non-negative");
  return nn::add(nn::scale(l_mel, lambda_mel), nn::scale(l_unit, lambda_unit));
}

// Multi-target lip-to-speech model: per-frame conv frontend, temporal
// interleaving to the unit rate, Conformer encoder, speaker-specific mel
// head (1D convs over [z_v | projected z_spk]) and speaker-agnostic unit MLP.
class L2SModel {
public:
  explicit L2SModel(const L2SConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(cfg_.seed ^ 0x12511ULL);
    int d = cfg_.latent_dim;
    fe_conv1_ = nn::Conv2dLayer(params_, "frontend.conv1", 3, 1, 16, rng, 2, 1);
    fe_conv2_ = nn::Conv2dLayer(params_, "frontend.conv2", 3, 16, 32, rng, 2, 1);
    fe_conv3_ = nn::Conv2dLayer(params_, "frontend.conv3", 3, 32, 64, rng, 2, 1);
    fe_fc_ = nn::Linear(params_, "frontend.fc", 64, d, rng);
    blocks_.reserve(cfg_.conformer_layers);
    for (int i = 0; i < cfg_.conformer_layers; ++i)
      blocks_.emplace_back(params_, "encoder.block" + std::to_string(i), d,
                           cfg_.attention_heads, cfg_.conv_kernel, rng, cfg_.dropout);
    spk_proj_ = nn::Linear(params_, "mel_head.spk_proj", cfg_.spk_embed_dim, cfg_.spk_proj_dim,
                           rng);
    mel_conv1_ = nn::Conv1dLayer(params_, "mel_head.conv1", 5, d + cfg_.spk_proj_dim, d, rng, 2);
    mel_conv2_ = nn::Conv1dLayer(params_, "mel_head.conv2", 5, d, cfg_.mel_stack_dim, rng, 2);
    unit_fc1_ = nn::Linear(params_, "unit_head.fc1", d, d, rng);
    unit_fc2_ = nn::Linear(params_, "unit_head.fc2", d, cfg_.unit_vocab, rng);
  }

  const L2SConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  // frames: [B, T_v, H, W] in [0,1] -> [B, T_v, latent]
  nn::TensorPtr visual_frontend(const nn::TensorPtr& frames) const {
    require(frames->ndim() == 4, "visual_frontend expects [B, T, H, W]");
    int b = frames->shape[0], t = frames->shape[1];
    int h = frames->shape[2], w = frames->shape[3];
    require(h >= 8 && w >= 8, "visual_frontend: spatial size ", h, "x", w, " too small");
    auto x = nn::reshape(frames, {b * t, 1, h, w});
    x = nn::silu(fe_conv1_(x));
    x = nn::silu(fe_conv2_(x));
    x = nn::silu(fe_conv3_(x));
    x = nn::global_avg_pool2d(x);
    x = fe_fc_(x);
    return nn::reshape(x, {b, t, cfg_.latent_dim});
  }

  // [B, T_v, D] -> [B, T_v * ratio, D]
  nn::TensorPtr interleave(const nn::TensorPtr& x, int ratio) const {
    require(ratio >= 1, "interleave ratio must be >= 1");
    return ratio == 1 ? x : nn::repeat_time(x, ratio);
  }

  // time_mask[b*T + t] = 1 for valid positions, 0 for padding
  nn::TensorPtr conformer_encode(const nn::TensorPtr& x, Rng& rng, bool train,
                                 const std::vector<double>& time_mask = {}) const {
    auto key_mask = std::make_shared<std::vector<double>>();
    if (!time_mask.empty()) {
      key_mask->resize(time_mask.size());
      for (size_t i = 0; i < time_mask.size(); ++i)
        (*key_mask)[i] = time_mask[i] > 0.5 ? 0.0 : -1e30;
    } else {
      key_mask->assign(size_t(x->shape[0]) * x->shape[1], 0.0);
    }
    auto h = nn::add_positional_encoding(x);
    h = nn::dropout(h, cfg_.dropout, rng, train);
    for (const auto& block : blocks_)
      h = block(h, rng, train, key_mask, time_mask);
    return h;
  }

  // z_v: [B, T, D], spk: [B, spk_embed_dim]
  L2SOutput predict_targets(const nn::TensorPtr& z_v, const nn::TensorPtr& spk) const {
    require(z_v->ndim() == 3, "predict_targets expects [B, T, D]");
    require(spk->ndim() == 2 && spk->shape[0] == z_v->shape[0] &&
                spk->shape[1] == cfg_.spk_embed_dim,
            "speaker embedding must be [B, ", cfg_.spk_embed_dim, "]");
    int b = z_v->shape[0], t = z_v->shape[1];

    // speaker-specific mel path: project, broadcast along time, concatenate
    auto proj = spk_proj_(spk);  // [B, P]
    auto proj_time = nn::repeat_time(nn::reshape(proj, {b, 1, cfg_.spk_proj_dim}), t);
    auto mel_in = nn::concat_lastdim(z_v, proj_time);
    auto mel = mel_conv2_(nn::silu(mel_conv1_(mel_in)));

    // speaker-agnostic unit path: z_v only, by construction
    auto logits = unit_fc2_(nn::silu(unit_fc1_(z_v)));
    return {mel, logits};
  }

  L2SOutput forward(const nn::TensorPtr& frames, const nn::TensorPtr& spk, Rng& rng, bool train,
                    const std::vector<double>& video_mask = {}) const {
    auto feats = visual_frontend(frames);
    auto x = interleave(feats, cfg_.interleave_ratio);
    std::vector<double> time_mask;
    if (!video_mask.empty()) {
      time_mask.resize(video_mask.size() * cfg_.interleave_ratio);
      int b = frames->shape[0], tv = frames->shape[1];
      for (int i = 0; i < b; ++i)
        for (int j = 0; j < tv; ++j)
          for (int r = 0; r < cfg_.interleave_ratio; ++r)
            time_mask[(size_t(i) * tv + j) * cfg_.interleave_ratio + r] =
                video_mask[size_t(i) * tv + j];
    }
    auto z_v = conformer_encode(x, rng, train, time_mask);
    return predict_targets(z_v, spk);
  }

  // Single-utterance inference: deterministic center crop, eval mode, mel
  // unstacked back to 100 Hz, units by per-frame argmax.
  std::pair<signal::MelSpectrogram, units::UnitSequence> infer(
      const data::VisualSequence& video, const data::SpeakerEmbedding& spk) const {
    Rng rng(0);
    auto cropped = augment_video(video, rng, cfg_.augment, /*train=*/false);
    auto frames = frames_to_tensor({&cropped});
    auto spk_t = spk_to_tensor({&spk});
    auto out = forward(frames, spk_t, rng, /*train=*/false);

    int t_u = out.mel_stacked_pred->shape[1];
    int factor = cfg_.interleave_ratio;
    int n_mels = cfg_.mel_stack_dim / factor;
    signal::StackedMel stacked;
    stacked.factor = factor;
    stacked.frame_rate_hz = 50.0;
    stacked.frames = Mat(t_u, cfg_.mel_stack_dim);
    std::copy(out.mel_stacked_pred->value.begin(), out.mel_stacked_pred->value.end(),
              stacked.frames.data.begin());
    auto mel = signal::unstack_mel(stacked);
    require(mel.num_mels() == n_mels, "unexpected mel width after unstacking");

    units::UnitSequence seq;
    seq.frame_rate_hz = 50.0;
    seq.codes.resize(t_u);
    for (int t = 0; t < t_u; ++t) {
      const double* row = out.unit_logits->value.data() + size_t(t) * cfg_.unit_vocab;
      seq.codes[t] =
          int(std::max_element(row, row + cfg_.unit_vocab) - row);
    }
    return {std::move(mel), std::move(seq)};
  }

  // batch helpers (zero-padded to the longest sequence)
  static nn::TensorPtr frames_to_tensor(const std::vector<const data::VisualSequence*>& vs) {
    require(!vs.empty(), "empty batch");
    int b = int(vs.size());
    int t_max = 0, h = vs[0]->height, w = vs[0]->width;
    for (auto* v : vs) {
      require(v->height == h && v->width == w, "inconsistent frame sizes in batch");
      t_max = std::max(t_max, v->frames);
    }
    auto out = nn::make_tensor({b, t_max, h, w});
    for (int i = 0; i < b; ++i)
      for (int t = 0; t < vs[i]->frames; ++t)
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x)
            out->value[((size_t(i) * t_max + t) * h + y) * w + x] = vs[i]->at(t, y, x);
    return out;
  }

  static nn::TensorPtr spk_to_tensor(const std::vector<const data::SpeakerEmbedding*>& spks) {
    int b = int(spks.size());
    int d = int(spks[0]->vector.size());
    auto out = nn::make_tensor({b, d});
    for (int i = 0; i < b; ++i)
      std::copy(spks[i]->vector.begin(), spks[i]->vector.end(), out->value.begin() + size_t(i) * d);
    return out;
  }

private:
  L2SConfig cfg_;
  nn::ParamStore params_;
  nn::Conv2dLayer fe_conv1_, fe_conv2_, fe_conv3_;
  nn::Linear fe_fc_;
  std::vector<nn::ConformerBlock> blocks_;
  nn::Linear spk_proj_;
  nn::Conv1dLayer mel_conv1_, mel_conv2_;
  nn::Linear unit_fc1_, unit_fc2_;
};

// ---- training ----

struct TrainItem {
  const data::UtteranceRecord* record = nullptr;
  data::VisualSequence video;            // uncropped
  Mat mel_stacked;                       // T_u x mel_stack_dim
  std::vector<int> units;                // length T_u
  data::SpeakerEmbedding spk;
};

struct L2STrainResult {
  std::filesystem::path checkpoint_path;
  std::vector<double> mel_loss_history;
  std::vector<double> unit_loss_history;
  std::vector<double> total_loss_history;
  double final_unit_accuracy = 0.0;
};

inline std::vector<TrainItem> load_train_items(const data::Manifest& manifest,
                                               const std::string& split,
                                               const signal::AudioConfig& acfg, int stack_factor,
                                               int workers = 1) {
  auto records = manifest.split_records(split);
  require(!records.empty(), "no records in split '", split, "'");
  auto unit_map = data::load_unit_map(manifest);
  std::vector<TrainItem> items(records.size());
  parallel_for(int(records.size()), workers, [&](int i) {
    const auto* r = records[i];
    TrainItem item;
    item.record = r;
    item.video = data::frames_load(manifest.frames_file(*r));
    auto wav = wav_read(manifest.wav_file(*r));
    auto stacked = signal::stack_mel(signal::log_mel(wav, acfg), stack_factor);
    item.mel_stacked = std::move(stacked.frames);
    item.units = unit_map.at(r->utt_id).codes;
    require(int(item.units.size()) == item.mel_stacked.rows,
            "unit/mel rate mismatch for ", r->utt_id);
    require(item.mel_stacked.rows == item.video.frames * 2,
            "video/mel rate mismatch for ", r->utt_id);
    item.spk = data::speaker_embedding(manifest.speaker(r->speaker_id));
    items[i] = std::move(item);
  });
  return items;
}

// One optimization step on a batch of items; returns (l_mel, l_unit, l_tot).
inline std::array<double, 3> l2s_train_step(L2SModel& model, nn::Adam& opt,
                                            const std::vector<const TrainItem*>& batch,
                                            Rng& rng, double lr) {
  const auto& cfg = model.config();
  int b = int(batch.size());
  int tv_max = 0;
  for (auto* it : batch) tv_max = std::max(tv_max, it->video.frames);
  int tu_max = tv_max * cfg.interleave_ratio;

  // augment + pack
  std::vector<data::VisualSequence> augmented(b);
  std::vector<const data::VisualSequence*> vptrs(b);
  std::vector<const data::SpeakerEmbedding*> sptrs(b);
  std::vector<double> video_mask(size_t(b) * tv_max, 0.0);
  std::vector<double> mel_mask(size_t(b) * tu_max, 0.0);
  std::vector<int> unit_targets(size_t(b) * tu_max, -1);
  auto mel_target = nn::make_tensor({b, tu_max, cfg.mel_stack_dim});

  for (int i = 0; i < b; ++i) {
    augmented[i] = augment_video(batch[i]->video, rng, cfg.augment, /*train=*/true);
    vptrs[i] = &augmented[i];
    sptrs[i] = &batch[i]->spk;
    for (int t = 0; t < augmented[i].frames; ++t) video_mask[size_t(i) * tv_max + t] = 1.0;
    int tu = batch[i]->mel_stacked.rows;
    for (int t = 0; t < tu; ++t) {
      mel_mask[size_t(i) * tu_max + t] = 1.0;
      unit_targets[size_t(i) * tu_max + t] = batch[i]->units[t];
      std::copy(batch[i]->mel_stacked.row(t), batch[i]->mel_stacked.row(t) + cfg.mel_stack_dim,
                mel_target->value.begin() + (size_t(i) * tu_max + t) * cfg.mel_stack_dim);
    }
  }

  // pad frames to tv_max
  auto frames = L2SModel::frames_to_tensor(vptrs);
  if (frames->shape[1] != tv_max) {
    auto padded = nn::make_tensor({b, tv_max, frames->shape[2], frames->shape[3]});
    size_t fs = size_t(frames->shape[2]) * frames->shape[3];
    for (int i = 0; i < b; ++i)
      std::copy(frames->value.begin() + size_t(i) * frames->shape[1] * fs,
                frames->value.begin() + size_t(i) * frames->shape[1] * fs +
                    size_t(std::min(frames->shape[1], tv_max)) * fs,
                padded->value.begin() + size_t(i) * tv_max * fs);
    frames = padded;
  }
  auto spk = L2SModel::spk_to_tensor(sptrs);

  model.params().zero_grad();
  auto out = model.forward(frames, spk, rng, /*train=*/true, video_mask);
  auto l_mel = loss_mel(out.mel_stacked_pred, mel_target, mel_mask);
  auto l_unit = loss_unit(out.unit_logits, unit_targets);
  auto l_tot = loss_total(l_mel, l_unit, cfg.lambda_mel, cfg.lambda_unit);
  nn::backward(l_tot);
  opt.step(lr);
  return {l_mel->value[0], l_unit->value[0], l_tot->value[0]};
}

// Trains on the manifest's train split and writes a single-file checkpoint
// plus a JSON-lines training log next to it.
inline L2STrainResult train_l2s(const data::Manifest& manifest, const L2SConfig& cfg, int steps,
                                const std::filesystem::path& checkpoint_path, int workers = 1,
                                const std::string& split = "train") {
  cfg.validate();
  require(steps >= 1, "need at least one training step");
  signal::AudioConfig acfg;
  auto codebook = units::codebook_load(manifest.codebook_file());
  require(codebook.k == cfg.unit_vocab, "config unit_vocab ", cfg.unit_vocab,
          " does not match codebook K ", codebook.k);

  auto items = load_train_items(manifest, split, acfg, cfg.interleave_ratio, workers);
  L2SModel model(cfg);
  nn::Adam opt(model.params(), cfg.learning_rate);
  Rng rng(cfg.seed ^ 0x7121a11ULL);

  std::ofstream log(checkpoint_path.string() + ".log.jsonl");
  require(log.good(), "cannot open training log next to ", checkpoint_path.string());

  L2STrainResult result;
  size_t cursor = 0;
  std::vector<int> order(items.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);

  for (int step = 0; step < steps; ++step) {
    if (cursor + cfg.batch_size > order.size()) cursor = 0;
    if (cursor == 0)  // reshuffle each epoch
      for (int i = int(order.size()) - 1; i > 0; --i)
        std::swap(order[i], order[rng.uniform_int(uint64_t(i + 1))]);

    std::vector<const TrainItem*> batch;
    for (int i = 0; i < cfg.batch_size && cursor < order.size(); ++i, ++cursor)
      batch.push_back(&items[order[cursor]]);

    double lr = nn::cosine_lr(cfg.learning_rate, step, steps);
    auto [lm, lu, lt] = l2s_train_step(model, opt, batch, rng, lr);
    result.mel_loss_history.push_back(lm);
    result.unit_loss_history.push_back(lu);
    result.total_loss_history.push_back(lt);
    log << nlohmann::json{{"step", step}, {"l_mel", lm}, {"l_unit", lu}, {"l_total", lt}}.dump()
        << '\n';
  }

  // training-set unit accuracy in eval mode
  size_t correct = 0, total = 0;
  for (const auto& item : items) {
    auto [mel, seq] = model.infer(item.video, item.spk);
    for (size_t t = 0; t < item.units.size() && t < seq.codes.size(); ++t) {
      correct += seq.codes[t] == item.units[t];
      ++total;
    }
  }
  result.final_unit_accuracy = total ? double(correct) / double(total) : 0.0;

  nlohmann::json meta = {{"kind", "l2s"},
                         {"config", cfg.to_json()},
                         {"codebook_hash", units::codebook_hash(codebook)},
                         {"steps", steps},
                         {"final_unit_accuracy", result.final_unit_accuracy}};
  checkpoint_save(checkpoint_path, model.params(), meta);
  result.checkpoint_path = checkpoint_path;
  return result;
}

struct LoadedL2S {
  std::unique_ptr<L2SModel> model;
  nlohmann::json metadata;
};

inline LoadedL2S load_l2s(const std::filesystem::path& checkpoint_path) {
  auto ck = nn::checkpoint_load(checkpoint_path);
  require(ck.metadata.value("kind", "") == "l2s", checkpoint_path.string(),
          " is not an L2S checkpoint");
  auto cfg = L2SConfig::from_json(ck.metadata.at("config"));
  LoadedL2S out;
  out.model = std::make_unique<L2SModel>(cfg);
  nn::restore_params(out.model->params(), ck);
  out.metadata = std::move(ck.metadata);
  return out;
}

inline std::pair<signal::MelSpectrogram, units::UnitSequence> infer_l2s(
    const std::filesystem::path& checkpoint_path, const data::VisualSequence& video,
    const data::SpeakerEmbedding& spk) {
  auto loaded = load_l2s(checkpoint_path);
  return loaded.model->infer(video, spk);
}

}  // namespace l2s::model
