#pragma once

#include "l2s/vocoder/vocoder.hpp"

namespace l2s::vocoder {

struct VocoderTrainItem {
  const data::UtteranceRecord* record = nullptr;
  Mat mel;  // full-utterance log-mel at 100 Hz
  std::vector<int> units;
  std::vector<double> spk;
  std::vector<double> wave;
};

struct VocoderTrainResult {
  std::filesystem::path checkpoint_path;
  std::vector<double> loss_history;
};

inline std::vector<VocoderTrainItem> load_vocoder_items(const data::Manifest& manifest,
                                                        const std::string& split,
                                                        const signal::AudioConfig& acfg,
                                                        int workers = 1) {
  auto records = manifest.split_records(split);
  require(!records.empty(), "no records in split '", split, "'");
  auto unit_map = data::load_unit_map(manifest);
  for (const auto* r : records)
    require(unit_map.count(r->utt_id), "manifest is missing units for ", r->utt_id);

  std::vector<VocoderTrainItem> items(records.size());
  parallel_for(int(records.size()), workers, [&](int i) {
    const auto* r = records[i];
    VocoderTrainItem item;
    item.record = r;
    auto wav = wav_read(manifest.wav_file(*r));
    item.wave = wav.samples;
    item.mel = signal::log_mel(wav, acfg).frames;
    item.units = unit_map.at(r->utt_id).codes;
    require(item.mel.rows == 2 * int(item.units.size()), "rate mismatch for ", r->utt_id);
    item.spk = data::speaker_embedding(manifest.speaker(r->speaker_id)).vector;
    items[i] = std::move(item);
  });
  return items;
}

// Ground-truth features in, waveform out. Reconstruction objective =
// multi-resolution STFT loss + weighted mel reconstruction; optional
// adversarial mode adds a two-scale least-squares GAN with feature matching.
inline VocoderTrainResult train_vocoder(const data::Manifest& manifest, const VocoderConfig& cfg,
                                        int steps,
                                        const std::filesystem::path& checkpoint_path,
                                        int workers = 1, const std::string& split = "train") {
  cfg.validate();
  require(steps >= 1, "need at least one training step");
  signal::AudioConfig acfg;
  require(acfg.hop_samples() == cfg.hop_samples, "audio hop ", acfg.hop_samples(),
          " != vocoder hop ", cfg.hop_samples);
  auto codebook = units::codebook_load(manifest.codebook_file());
  require(codebook.k == cfg.unit_vocab, "config unit_vocab ", cfg.unit_vocab,
          " does not match codebook K ", codebook.k);

  auto items = load_vocoder_items(manifest, split, acfg, workers);
  VocoderModel model(cfg);
  nn::Adam opt(model.params(), cfg.learning_rate);
  Rng rng(cfg.seed ^ 0x70cadeULL);

  std::unique_ptr<WaveDiscriminator> disc;
  std::unique_ptr<nn::Adam> disc_opt;
  if (cfg.adversarial) {
    disc = std::make_unique<WaveDiscriminator>(cfg.seed);
    disc_opt = std::make_unique<nn::Adam>(disc->params(), cfg.learning_rate * 0.5);
  }

  auto fb = signal::mel_filterbank(acfg);
  auto fb_t = std::make_shared<Mat>(fb.cols, fb.rows);
  for (int r = 0; r < fb.rows; ++r)
    for (int c = 0; c < fb.cols; ++c) fb_t->at(c, r) = fb.at(r, c);

  std::ofstream log(checkpoint_path.string() + ".log.jsonl");
  require(log.good(), "cannot open training log next to ", checkpoint_path.string());

  VocoderTrainResult result;
  int hop = cfg.hop_samples;
  for (int step = 0; step < steps; ++step) {
    const auto& item = items[rng.uniform_int(items.size())];
    int t_mel = item.mel.rows;
    int seg = std::min(cfg.segment_mel_frames, t_mel - (t_mel % 2));
    int max_start = t_mel - seg;
    int start = max_start > 0 ? 2 * int(rng.uniform_int(uint64_t(max_start / 2 + 1))) : 0;

    Mat mel_seg(seg, item.mel.cols);
    for (int t = 0; t < seg; ++t)
      std::copy(item.mel.row(start + t), item.mel.row(start + t) + item.mel.cols,
                mel_seg.row(t));
    signal::MelSpectrogram cond_mel{std::move(mel_seg), 100.0};
    if (cfg.augment_enabled) cond_mel = augment_mel(cond_mel, rng, cfg.augment);

    std::vector<int> unit_seg(item.units.begin() + start / 2,
                              item.units.begin() + (start + seg) / 2);
    auto target = nn::make_tensor({1, seg * hop}, false);
    std::copy(item.wave.begin() + size_t(start) * hop,
              item.wave.begin() + size_t(start + seg) * hop, target->value.begin());

    model.params().zero_grad();
    auto cond = model.condition_inputs(cond_mel.frames, unit_seg, item.spk);
    auto pred = model.generate(cond);

    auto stft_loss = multi_res_stft_loss(pred, target);
    auto mel_pred = waveform_log_mel(pred, fb_t, acfg.n_fft, hop, acfg.win_samples(), 1e-5);
    auto mel_tgt = waveform_log_mel(target, fb_t, acfg.n_fft, hop, acfg.win_samples(), 1e-5);
    auto mel_loss = nn::mean_all(nn::abs_op(nn::sub(mel_pred, mel_tgt)));
    auto g_loss = nn::add(stft_loss, nn::scale(mel_loss, cfg.lambda_mel));

    if (cfg.adversarial) {
      // discriminator step on the current segment
      disc->params().zero_grad();
      auto real_out = (*disc)(target);
      auto fake_detached = nn::make_tensor({1, pred->shape[1]}, false);
      fake_detached->value = pred->value;
      auto fake_out = (*disc)(fake_detached);
      nn::TensorPtr d_loss;
      for (size_t s = 0; s < real_out.scores.size(); ++s) {
        auto ones = nn::make_tensor(real_out.scores[s]->shape, false);
        std::fill(ones->value.begin(), ones->value.end(), 1.0);
        auto real_term = nn::mean_all(nn::square(nn::sub(real_out.scores[s], ones)));
        auto fake_term = nn::mean_all(nn::square(fake_out.scores[s]));
        auto term = nn::add(real_term, fake_term);
        d_loss = d_loss ? nn::add(d_loss, term) : term;
      }
      nn::backward(d_loss);
      disc_opt->step(nn::cosine_lr(cfg.learning_rate * 0.5, step, steps));

      // adversarial + feature-matching terms for the generator
      auto fake_for_g = (*disc)(pred);
      auto real_ref = (*disc)(target);
      nn::TensorPtr adv;
      for (size_t s = 0; s < fake_for_g.scores.size(); ++s) {
        auto ones = nn::make_tensor(fake_for_g.scores[s]->shape, false);
        std::fill(ones->value.begin(), ones->value.end(), 1.0);
        auto term = nn::mean_all(nn::square(nn::sub(fake_for_g.scores[s], ones)));
        adv = adv ? nn::add(adv, term) : term;
      }
      nn::TensorPtr fm;
      for (size_t f = 0; f < fake_for_g.features.size(); ++f) {
        auto real_const = nn::make_tensor(real_ref.features[f]->shape, false);
        real_const->value = real_ref.features[f]->value;
        auto term = nn::mean_all(nn::abs_op(nn::sub(fake_for_g.features[f], real_const)));
        fm = fm ? nn::add(fm, term) : term;
      }
      g_loss = nn::add(g_loss, nn::add(adv, nn::scale(fm, 2.0)));
      model.params().zero_grad();  // drop grads the discriminator pass left behind
    }

    nn::backward(g_loss);
    opt.step(nn::cosine_lr(cfg.learning_rate, step, steps));
    result.loss_history.push_back(g_loss->value[0]);
    log << nlohmann::json{{"step", step}, {"loss", g_loss->value[0]}}.dump() << '\n';
  }

  nlohmann::json meta = {{"kind", "vocoder"},
                         {"config", cfg.to_json()},
                         {"codebook_hash", units::codebook_hash(codebook)},
                         {"steps", steps}};
  checkpoint_save(checkpoint_path, model.params(), meta);
  result.checkpoint_path = checkpoint_path;
  return result;
}

struct LoadedVocoder {
  std::unique_ptr<VocoderModel> model;
  nlohmann::json metadata;
};

inline LoadedVocoder load_vocoder(const std::filesystem::path& checkpoint_path) {
  auto ck = nn::checkpoint_load(checkpoint_path);
  require(ck.metadata.value("kind", "") == "vocoder", checkpoint_path.string(),
          " is not a vocoder checkpoint");
  auto cfg = VocoderConfig::from_json(ck.metadata.at("config"));
  LoadedVocoder out;
  out.model = std::make_unique<VocoderModel>(cfg);
  nn::restore_params(out.model->params(), ck);
  out.metadata = std::move(ck.metadata);
  return out;
}

}  // namespace l2s::vocoder
