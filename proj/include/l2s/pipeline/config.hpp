#pragma once

#include <json.hpp>

#include "l2s/data/corpus.hpp"
#include "l2s/model/l2s_model.hpp"
#include "l2s/vocoder/vocoder.hpp"

namespace l2s::pipeline {

// Paper-aligned defaults; every user key must exist here with the same type.
inline nlohmann::json default_config() {
  return nlohmann::json{
      {"seed", 0},
      {"output_dir", "out"},
      {"workers", 1},
      {"audio",
       {{"sample_rate_hz", 16000},
        {"win_ms", 40.0},
        {"hop_ms", 10.0},
        {"n_fft", 1024},
        {"n_mels", 80},
        {"fmin_hz", 0.0},
        {"fmax_hz", 8000.0},
        {"log_floor", 1e-5}}},
      {"units",
       {{"k", 64},
        {"kmeans_iters", 60},
        {"kmeans_tol", 1e-5},
        {"extractor", "cepstral-proxy-v1"}}},
      {"data",
       {{"num_speakers", 8},
        {"utterances_per_speaker", 50},
        {"train_frac", 0.8},
        {"val_frac", 0.1},
        {"test_frac", 0.1},
        {"unseen_speakers", 0},
        {"homophene_pairs_per_speaker", 1},
        {"min_total_ms", 1080},
        {"max_phones", 9},
        {"duration_choices_ms", {160, 200, 240, 280, 320}}}},
      {"l2s",
       {{"conformer_layers", 4},
        {"attention_heads", 4},
        {"conv_kernel", 31},
        {"latent_dim", 144},
        {"interleave_ratio", 2},
        {"dropout", 0.1},
        {"crop_size", 20},
        {"batch_size", 2},
        {"learning_rate", 1e-3},
        {"lambda_mel", 10.0},
        {"lambda_unit", 1.0},
        {"steps", 500}}},
      {"vocoder",
       {{"unit_embed_dim", 128},
        {"spk_proj_dim", 128},
        {"upsample_factors", {5, 4, 4, 2}},
        {"base_channels", 64},
        {"multi_input", true},
        {"adversarial", false},
        {"learning_rate", 2e-3},
        {"segment_mel_frames", 32},
        {"augment_enabled", true},
        {"lambda_mel", 10.0},
        {"steps", 2000},
        {"augment",
         {{"blur_kernel", 9},
          {"blur_sigma_lo", 0.1},
          {"blur_sigma_hi", 1.0},
          {"noise_sigma_min", 0.0},
          {"noise_sigma_max", 1.0},
          {"apply_prob", 1.0}}}}},
      {"metrics", {{"split", "test"}}}};
}

namespace detail {

inline void collect_unknown_keys(const nlohmann::json& user, const nlohmann::json& schema,
                                 const std::string& prefix, std::vector<std::string>& errors) {
  for (auto it = user.begin(); it != user.end(); ++it) {
    std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!schema.contains(it.key())) {
      errors.push_back("unknown key \"" + path + "\"");
      continue;
    }
    const auto& ref = schema.at(it.key());
    const auto& val = it.value();
    bool both_numbers = ref.is_number() && val.is_number();
    if (ref.is_object() != val.is_object() ||
        (!both_numbers && !ref.is_object() && ref.type() != val.type() &&
         !(ref.is_array() && val.is_array()))) {
      errors.push_back("key \"" + path + "\" has wrong type (expected " +
                       std::string(ref.type_name()) + ")");
      continue;
    }
    if (ref.is_object()) collect_unknown_keys(val, ref, path, errors);
  }
}

inline void deep_merge(nlohmann::json& base, const nlohmann::json& overlay) {
  for (auto it = overlay.begin(); it != overlay.end(); ++it) {
    if (it.value().is_object() && base.contains(it.key()) && base.at(it.key()).is_object())
      deep_merge(base.at(it.key()), it.value());
    else
      base[it.key()] = it.value();
  }
}

}  // namespace detail

class PipelineConfig {
public:
  // Loads the file (optional), applies dotted-path overrides, validates every
  // invariant and reports all violations at once.
  static PipelineConfig load(const std::filesystem::path& config_path,
                             const std::vector<std::string>& overrides = {}) {
    nlohmann::json cfg = default_config();
    std::vector<std::string> errors;

    if (!config_path.empty()) {
      std::ifstream is(config_path);
      require(is.good(), "cannot open config file: ", config_path.string());
      nlohmann::json user;
      try {
        user = nlohmann::json::parse(is);
      } catch (const std::exception& e) {
        fail("config parse error in ", config_path.string(), ": ", e.what());
      }
      detail::collect_unknown_keys(user, cfg, "", errors);
      if (errors.empty()) detail::deep_merge(cfg, user);
    }

    for (const auto& ov : overrides) {
      auto eq = ov.find('=');
      if (eq == std::string::npos) {
        errors.push_back("override \"" + ov + "\" is not key=value");
        continue;
      }
      std::string key = ov.substr(0, eq), raw = ov.substr(eq + 1);
      nlohmann::json value;
      try {
        value = nlohmann::json::parse(raw);
      } catch (...) {
        value = raw;  // plain string
      }
      // build a nested object for the dotted path and run the same checks
      nlohmann::json nested = value;
      size_t pos = key.size();
      std::vector<std::string> parts;
      {
        size_t start = 0;
        for (size_t i = 0; i <= key.size(); ++i)
          if (i == key.size() || key[i] == '.') {
            parts.push_back(key.substr(start, i - start));
            start = i + 1;
          }
      }
      (void)pos;
      for (auto it = parts.rbegin(); it != parts.rend(); ++it)
        nested = nlohmann::json{{*it, nested}};
      size_t before = errors.size();
      detail::collect_unknown_keys(nested, cfg, "", errors);
      if (errors.size() == before) detail::deep_merge(cfg, nested);
    }

    PipelineConfig out;
    out.json_ = std::move(cfg);
    out.validate(errors);
    if (!errors.empty()) {
      std::string msg = "config validation failed:";
      for (const auto& e : errors) msg += "\n  - " + e;
      throw Error(msg);
    }
    return out;
  }

  const nlohmann::json& json() const { return json_; }

  uint64_t seed() const { return json_.at("seed").get<uint64_t>(); }
  void set_seed(uint64_t s) { json_["seed"] = s; }
  int workers() const { return json_.at("workers").get<int>(); }
  void set_workers(int w) { json_["workers"] = w; }
  std::filesystem::path output_dir() const {
    return json_.at("output_dir").get<std::string>();
  }

  signal::AudioConfig audio() const {
    const auto& a = json_.at("audio");
    signal::AudioConfig c;
    c.sample_rate_hz = a.at("sample_rate_hz").get<int>();
    c.win_ms = a.at("win_ms").get<double>();
    c.hop_ms = a.at("hop_ms").get<double>();
    c.n_fft = a.at("n_fft").get<int>();
    c.n_mels = a.at("n_mels").get<int>();
    c.fmin_hz = a.at("fmin_hz").get<double>();
    c.fmax_hz = a.at("fmax_hz").get<double>();
    c.log_floor = a.at("log_floor").get<double>();
    return c;
  }

  data::CorpusConfig corpus() const {
    const auto& d = json_.at("data");
    data::CorpusConfig c;
    c.num_speakers = d.at("num_speakers").get<int>();
    c.utterances_per_speaker = d.at("utterances_per_speaker").get<int>();
    c.train_frac = d.at("train_frac").get<double>();
    c.val_frac = d.at("val_frac").get<double>();
    c.test_frac = d.at("test_frac").get<double>();
    c.unseen_speakers = d.at("unseen_speakers").get<int>();
    c.homophene_pairs_per_speaker = d.at("homophene_pairs_per_speaker").get<int>();
    c.min_total_ms = d.at("min_total_ms").get<int>();
    c.max_phones = d.at("max_phones").get<int>();
    c.duration_choices_ms = d.at("duration_choices_ms").get<std::vector<int>>();
    c.codebook_k = json_.at("units").at("k").get<int>();
    c.kmeans_iters = json_.at("units").at("kmeans_iters").get<int>();
    c.kmeans_tol = json_.at("units").at("kmeans_tol").get<double>();
    c.extractor_id = json_.at("units").at("extractor").get<std::string>();
    return c;
  }

  model::L2SConfig l2s(double lambda_unit_override = -1.0) const {
    const auto& l = json_.at("l2s");
    model::L2SConfig c;
    c.conformer_layers = l.at("conformer_layers").get<int>();
    c.attention_heads = l.at("attention_heads").get<int>();
    c.conv_kernel = l.at("conv_kernel").get<int>();
    c.latent_dim = l.at("latent_dim").get<int>();
    c.interleave_ratio = l.at("interleave_ratio").get<int>();
    c.dropout = l.at("dropout").get<double>();
    c.augment.crop_size = l.at("crop_size").get<int>();
    c.batch_size = l.at("batch_size").get<int>();
    c.learning_rate = l.at("learning_rate").get<double>();
    c.lambda_mel = l.at("lambda_mel").get<double>();
    c.lambda_unit =
        lambda_unit_override >= 0.0 ? lambda_unit_override : l.at("lambda_unit").get<double>();
    c.unit_vocab = json_.at("units").at("k").get<int>();
    c.mel_stack_dim = audio().n_mels * c.interleave_ratio;
    c.seed = seed();
    return c;
  }

  int l2s_steps() const { return json_.at("l2s").at("steps").get<int>(); }
  int vocoder_steps() const { return json_.at("vocoder").at("steps").get<int>(); }

  vocoder::VocoderConfig vocoder(int multi_input_override = -1,
                                 int augment_override = -1) const {
    const auto& v = json_.at("vocoder");
    vocoder::VocoderConfig c;
    c.n_mels = audio().n_mels;
    c.unit_vocab = json_.at("units").at("k").get<int>();
    c.unit_embed_dim = v.at("unit_embed_dim").get<int>();
    c.spk_proj_dim = v.at("spk_proj_dim").get<int>();
    c.upsample_factors = v.at("upsample_factors").get<std::vector<int>>();
    c.hop_samples = audio().hop_samples();
    c.base_channels = v.at("base_channels").get<int>();
    c.multi_input =
        multi_input_override >= 0 ? bool(multi_input_override) : v.at("multi_input").get<bool>();
    c.adversarial = v.at("adversarial").get<bool>();
    c.learning_rate = v.at("learning_rate").get<double>();
    c.segment_mel_frames = v.at("segment_mel_frames").get<int>();
    c.augment_enabled =
        augment_override >= 0 ? bool(augment_override) : v.at("augment_enabled").get<bool>();
    c.lambda_mel = v.at("lambda_mel").get<double>();
    const auto& a = v.at("augment");
    c.augment.blur_kernel = a.at("blur_kernel").get<int>();
    c.augment.blur_sigma_lo = a.at("blur_sigma_lo").get<double>();
    c.augment.blur_sigma_hi = a.at("blur_sigma_hi").get<double>();
    c.augment.noise_sigma_min = a.at("noise_sigma_min").get<double>();
    c.augment.noise_sigma_max = a.at("noise_sigma_max").get<double>();
    c.augment.apply_prob = a.at("apply_prob").get<double>();
    c.seed = seed();
    return c;
  }

  std::string metrics_split() const { return json_.at("metrics").at("split").get<std::string>(); }

private:
  void validate(std::vector<std::string>& errors) const {
    auto guard = [&errors](auto&& fn, const std::string& where) {
      try {
        fn();
      } catch (const std::exception& e) {
        errors.push_back(where + ": " + e.what());
      }
    };
    guard([&] { audio().validate(); }, "audio");
    guard([&] { corpus().validate(); }, "data/units");
    guard([&] { l2s().validate(); }, "l2s");
    guard([&] { vocoder().validate(); }, "vocoder");

    try {
      auto a = audio();
      if (std::fabs(a.frame_rate_hz() - 100.0) > 1e-9)
        errors.push_back("audio.hop_ms must keep the 100 Hz mel rate (25/50/100 Hz lattice)");
      auto v = vocoder();
      int prod = 1;
      for (int f : v.upsample_factors) prod *= f;
      if (prod != a.hop_samples())
        errors.push_back("product(vocoder.upsample_factors) = " + std::to_string(prod) +
                         " must equal audio hop " + std::to_string(a.hop_samples()));
      auto l = l2s();
      if (l.interleave_ratio != 2)
        errors.push_back("l2s.interleave_ratio must be 2 (50 Hz units over 25 fps video)");
      if (l2s_steps() < 1 || vocoder_steps() < 1) errors.push_back("steps must be >= 1");
      if (workers() < 1) errors.push_back("workers must be >= 1");
      auto split = metrics_split();
      if (split != "train" && split != "val" && split != "test")
        errors.push_back("metrics.split must be train|val|test");
    } catch (const std::exception&) {
      // section errors already recorded by the guards above
    }
  }

  nlohmann::json json_;
};

}  // namespace l2s::pipeline
