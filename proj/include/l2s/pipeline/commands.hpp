#pragma once

#include "l2s/metrics/evaluate.hpp"
#include "l2s/pipeline/config.hpp"
#include "l2s/signal/griffin_lim.hpp"

namespace l2s::pipeline {

enum ExitCode : int {
  kOk = 0,
  kRuntimeError = 1,
  kConfigError = 2,
  kMissingArtifact = 3,
};

struct RunOptions {
  bool resume = false;
  // synthesize inputs
  std::filesystem::path frames_path;
  int speaker_id = 0;
  std::filesystem::path out_wav;
  bool griffin_lim_fallback = false;  // invert the predicted mel without a vocoder
};

namespace detail {

inline uint64_t file_hash(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  require(is.good(), "cannot hash missing file: ", p.string());
  uint64_t h = 0xcbf29ce484222325ULL;
  char buf[65536];
  while (is) {
    is.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < is.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

inline std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Per-output-dir record of completed commands and artifact content hashes;
// the basis of --resume idempotence.
class RunManifest {
public:
  explicit RunManifest(const std::filesystem::path& output_dir)
      : path_(output_dir / "run_manifest.json") {
    if (std::filesystem::exists(path_)) {
      std::ifstream is(path_);
      json_ = nlohmann::json::parse(is);
    } else {
      json_ = {{"commands", nlohmann::json::object()},
               {"artifacts", nlohmann::json::object()}};
    }
  }

  bool is_done(const std::string& command, const std::string& config_hash) const {
    const auto& cmds = json_.at("commands");
    if (!cmds.contains(command)) return false;
    const auto& c = cmds.at(command);
    if (c.value("config_hash", "") != config_hash) return false;
    // every recorded artifact must still exist
    for (const auto& rel : c.at("artifacts")) {
      if (!std::filesystem::exists(path_.parent_path() / rel.get<std::string>())) return false;
    }
    return true;
  }

  void record(const std::string& command, const std::string& config_hash,
              const std::vector<std::filesystem::path>& artifacts) {
    nlohmann::json rels = nlohmann::json::array();
    for (const auto& a : artifacts) {
      auto rel = std::filesystem::relative(a, path_.parent_path()).generic_string();
      rels.push_back(rel);
      json_["artifacts"][rel] = hex64(file_hash(a));
    }
    json_["commands"][command] = {{"config_hash", config_hash}, {"artifacts", rels}};
    std::ofstream os(path_);
    require(os.good(), "cannot write run manifest: ", path_.string());
    os << json_.dump(2) << '\n';
  }

private:
  std::filesystem::path path_;
  nlohmann::json json_;
};

inline std::string config_hash(const PipelineConfig& cfg) {
  return hex64(hash_str(cfg.json().dump()));
}

inline void require_artifact(const std::filesystem::path& p, const std::string& produced_by) {
  if (!std::filesystem::exists(p))
    fail("missing artifact ", p.string(), " (run `", produced_by, "` first)");
}

}  // namespace detail

// ---- individual commands; each throws on failure ----

inline void cmd_make_data(const PipelineConfig& cfg) {
  data::build_corpus(cfg.corpus(), cfg.seed(), cfg.output_dir() / "corpus", cfg.workers());
}

inline void cmd_fit_units(const PipelineConfig& cfg) {
  auto corpus_dir = cfg.output_dir() / "corpus";
  detail::require_artifact(corpus_dir / "manifest.jsonl", "make-data");
  auto manifest = data::manifest_load(corpus_dir);
  auto ccfg = cfg.corpus();

  std::vector<units::FeatureSequence> feats(manifest.records.size());
  parallel_for(int(manifest.records.size()), cfg.workers(), [&](int i) {
    auto w = wav_read(manifest.wav_file(manifest.records[i]));
    feats[i] = units::ExtractorRegistry::instance().extract(ccfg.extractor_id, w);
  });
  std::vector<units::FeatureSequence> train_feats;
  for (size_t i = 0; i < manifest.records.size(); ++i)
    if (manifest.records[i].split == "train") train_feats.push_back(feats[i]);
  require(!train_feats.empty(), "train split is empty");
  auto km = units::kmeans_fit(train_feats, ccfg.codebook_k, cfg.seed(), ccfg.kmeans_iters,
                              ccfg.kmeans_tol);

  auto codebooks_dir = cfg.output_dir() / "codebooks";
  std::filesystem::create_directories(codebooks_dir);
  auto archived = codebooks_dir / ("k" + std::to_string(ccfg.codebook_k) + "_seed" +
                                   std::to_string(cfg.seed()) + ".uncb");
  units::codebook_save(km.codebook, archived);
  units::codebook_save(km.codebook, manifest.codebook_file());

  std::vector<std::pair<std::string, units::UnitSequence>> entries(manifest.records.size());
  parallel_for(int(manifest.records.size()), cfg.workers(), [&](int i) {
    entries[i] = {manifest.records[i].utt_id, units::quantize(feats[i], km.codebook)};
  });
  units_save(entries, manifest.units_file());
}

inline std::filesystem::path l2s_checkpoint_path(const PipelineConfig& cfg,
                                                 const std::string& variant = "") {
  return cfg.output_dir() / "checkpoints" /
         (variant.empty() ? "l2s.ckpt" : "l2s_" + variant + ".ckpt");
}

inline std::filesystem::path vocoder_checkpoint_path(const PipelineConfig& cfg,
                                                     const std::string& variant = "") {
  return cfg.output_dir() / "checkpoints" /
         (variant.empty() ? "vocoder.ckpt" : "vocoder_" + variant + ".ckpt");
}

inline void warn_extractor_mismatch(const data::Manifest& manifest, const PipelineConfig& cfg) {
  auto cb = units::codebook_load(manifest.codebook_file());
  if (auto warn = units::extractor_warning(cb, cfg.corpus().extractor_id))
    std::fprintf(stderr, "warning: %s\n", warn->c_str());
}

inline void cmd_train_l2s(const PipelineConfig& cfg) {
  auto corpus_dir = cfg.output_dir() / "corpus";
  detail::require_artifact(corpus_dir / "manifest.jsonl", "make-data");
  detail::require_artifact(corpus_dir / "units.txt", "make-data");
  auto manifest = data::manifest_load(corpus_dir);
  warn_extractor_mismatch(manifest, cfg);
  std::filesystem::create_directories(cfg.output_dir() / "checkpoints");
  model::train_l2s(manifest, cfg.l2s(), cfg.l2s_steps(), l2s_checkpoint_path(cfg),
                   cfg.workers());
}

inline void cmd_train_vocoder(const PipelineConfig& cfg) {
  auto corpus_dir = cfg.output_dir() / "corpus";
  detail::require_artifact(corpus_dir / "manifest.jsonl", "make-data");
  detail::require_artifact(corpus_dir / "units.txt", "make-data");
  auto manifest = data::manifest_load(corpus_dir);
  warn_extractor_mismatch(manifest, cfg);
  std::filesystem::create_directories(cfg.output_dir() / "checkpoints");
  vocoder::train_vocoder(manifest, cfg.vocoder(), cfg.vocoder_steps(),
                         vocoder_checkpoint_path(cfg), cfg.workers());
}

inline void check_codebook_compat(const nlohmann::json& ckpt_meta,
                                  const units::Codebook& codebook, const std::string& what) {
  auto expect = units::codebook_hash(codebook);
  auto got = ckpt_meta.value("codebook_hash", "");
  require(got == expect, what, " was trained against codebook ", got,
          " but the corpus codebook is ", expect, "; re-run training after fit-units");
}

inline void cmd_synthesize(const PipelineConfig& cfg, const RunOptions& opt) {
  require(!opt.frames_path.empty() && !opt.out_wav.empty(),
          "synthesize needs --frames and --out");
  detail::require_artifact(opt.frames_path, "make-data");
  detail::require_artifact(l2s_checkpoint_path(cfg), "train-l2s");

  auto video = data::frames_load(opt.frames_path);
  data::SpeakerSpec spk_spec;
  spk_spec.speaker_id = opt.speaker_id;
  auto spk = data::speaker_embedding(spk_spec);
  auto l2s = model::load_l2s(l2s_checkpoint_path(cfg));
  auto [mel, units_pred] = l2s.model->infer(video, spk);

  Waveform wav;
  if (opt.griffin_lim_fallback) {
    wav = signal::griffin_lim(mel, cfg.audio(), 60);
  } else {
    detail::require_artifact(vocoder_checkpoint_path(cfg), "train-vocoder");
    auto voc = vocoder::load_vocoder(vocoder_checkpoint_path(cfg));
    wav = voc.model->generate_waveform(mel.frames, units_pred.codes, spk.vector,
                                       cfg.audio().sample_rate_hz);
  }
  wav_write(wav, opt.out_wav);
}

inline metrics::MetricsReport cmd_evaluate(const PipelineConfig& cfg,
                                           const std::string& split_override = "") {
  auto corpus_dir = cfg.output_dir() / "corpus";
  detail::require_artifact(corpus_dir / "manifest.jsonl", "make-data");
  detail::require_artifact(l2s_checkpoint_path(cfg), "train-l2s");
  detail::require_artifact(vocoder_checkpoint_path(cfg), "train-vocoder");

  auto manifest = data::manifest_load(corpus_dir);
  auto codebook = units::codebook_load(manifest.codebook_file());
  auto l2s = model::load_l2s(l2s_checkpoint_path(cfg));
  auto voc = vocoder::load_vocoder(vocoder_checkpoint_path(cfg));
  check_codebook_compat(l2s.metadata, codebook, "L2S checkpoint");
  check_codebook_compat(voc.metadata, codebook, "vocoder checkpoint");

  metrics::EvaluateOptions eopt;
  eopt.workers = cfg.workers();
  std::string split = split_override.empty() ? cfg.metrics_split() : split_override;
  auto report = metrics::evaluate(l2s.model.get(), *voc.model, manifest, split, eopt);
  report.config_snapshot = cfg.json();

  auto reports_dir = cfg.output_dir() / "reports";
  std::filesystem::create_directories(reports_dir);
  report.save(reports_dir / ("metrics_" + split + ".json"));
  report.save_csv(reports_dir / ("metrics_" + split + ".csv"));
  std::ofstream table(reports_dir / ("metrics_" + split + ".txt"));
  table << report.table();
  return report;
}

// Desk-scale mirror of the paper's ablation table: rows are the cumulative
// variants {baseline, + speech units, + multi-input vocoder, + augmented mel};
// the JSON adds the corruption-robustness comparisons behind rows 3 and 4.
struct AblationResult {
  nlohmann::json report;
  std::filesystem::path json_path;
};

inline AblationResult cmd_ablate(const PipelineConfig& cfg) {
  auto corpus_dir = cfg.output_dir() / "corpus";
  detail::require_artifact(corpus_dir / "manifest.jsonl", "make-data");
  detail::require_artifact(corpus_dir / "units.txt", "make-data");
  auto manifest = data::manifest_load(corpus_dir);
  auto codebook = units::codebook_load(manifest.codebook_file());
  std::filesystem::create_directories(cfg.output_dir() / "checkpoints");

  // stage-1 variants
  auto l2s_base_cfg = cfg.l2s(/*lambda_unit=*/0.0);
  auto l2s_units_cfg = cfg.l2s();
  model::train_l2s(manifest, l2s_base_cfg, cfg.l2s_steps(),
                   l2s_checkpoint_path(cfg, "lambda0"), cfg.workers());
  model::train_l2s(manifest, l2s_units_cfg, cfg.l2s_steps(),
                   l2s_checkpoint_path(cfg, "lambda1"), cfg.workers());

  // stage-2 variants
  vocoder::train_vocoder(manifest, cfg.vocoder(/*multi_input=*/0, /*augment=*/0),
                         cfg.vocoder_steps(), vocoder_checkpoint_path(cfg, "melonly"),
                         cfg.workers());
  vocoder::train_vocoder(manifest, cfg.vocoder(/*multi_input=*/1, /*augment=*/0),
                         cfg.vocoder_steps(), vocoder_checkpoint_path(cfg, "multi"),
                         cfg.workers());
  vocoder::train_vocoder(manifest, cfg.vocoder(/*multi_input=*/1, /*augment=*/1),
                         cfg.vocoder_steps(), vocoder_checkpoint_path(cfg, "multi_aug"),
                         cfg.workers());

  auto l2s_base = model::load_l2s(l2s_checkpoint_path(cfg, "lambda0"));
  auto l2s_units = model::load_l2s(l2s_checkpoint_path(cfg, "lambda1"));
  auto voc_melonly = vocoder::load_vocoder(vocoder_checkpoint_path(cfg, "melonly"));
  auto voc_multi = vocoder::load_vocoder(vocoder_checkpoint_path(cfg, "multi"));
  auto voc_multi_aug = vocoder::load_vocoder(vocoder_checkpoint_path(cfg, "multi_aug"));

  std::string split = cfg.metrics_split();
  metrics::EvaluateOptions eopt;
  eopt.workers = cfg.workers();

  // Table rows: full pipeline, cumulative components
  auto row_baseline = metrics::evaluate(l2s_base.model.get(), *voc_melonly.model, manifest,
                                        split, eopt);
  auto row_units = metrics::evaluate(l2s_units.model.get(), *voc_melonly.model, manifest,
                                     split, eopt);
  auto row_multi = metrics::evaluate(l2s_units.model.get(), *voc_multi.model, manifest, split,
                                     eopt);
  auto row_aug = metrics::evaluate(l2s_units.model.get(), *voc_multi_aug.model, manifest,
                                   split, eopt);

  // corruption robustness on ground-truth features
  metrics::EvaluateOptions gt_clean = eopt;
  gt_clean.use_gt_features = true;
  metrics::EvaluateOptions gt_corrupt = gt_clean;
  gt_corrupt.corrupt_mel = true;
  // the heaviest corruption the training distribution covers
  gt_corrupt.corruption = cfg.vocoder().augment;
  gt_corrupt.corruption.blur_sigma_lo = gt_corrupt.corruption.blur_sigma_hi;
  gt_corrupt.corruption.noise_sigma_min = gt_corrupt.corruption.noise_sigma_max;
  gt_corrupt.corruption.apply_prob = 1.0;
  gt_corrupt.corruption_seed = cfg.seed() ^ 0xc0bbULL;

  auto melonly_clean = metrics::evaluate(nullptr, *voc_melonly.model, manifest, split, gt_clean);
  auto melonly_corrupt =
      metrics::evaluate(nullptr, *voc_melonly.model, manifest, split, gt_corrupt);
  auto multi_clean = metrics::evaluate(nullptr, *voc_multi.model, manifest, split, gt_clean);
  auto multi_corrupt = metrics::evaluate(nullptr, *voc_multi.model, manifest, split, gt_corrupt);
  auto aug_clean = metrics::evaluate(nullptr, *voc_multi_aug.model, manifest, split, gt_clean);
  auto aug_corrupt =
      metrics::evaluate(nullptr, *voc_multi_aug.model, manifest, split, gt_corrupt);

  auto row_json = [](const std::string& name, const metrics::MetricsReport& r) {
    return nlohmann::json{{"method", name},
                          {"stoi", r.mean_stoi},
                          {"estoi", r.mean_estoi},
                          {"uer", r.mean_uer},
                          {"wer", r.mean_wer}};
  };

  nlohmann::json report = {
      {"split", split},
      {"rows",
       {row_json("baseline", row_baseline), row_json("+ speech units", row_units),
        row_json("+ multi-input vocoder", row_multi), row_json("+ augmented mel", row_aug)}},
      {"unit_supervision", {{"uer_lambda0", row_baseline.mean_uer},
                            {"uer_lambda1", row_units.mean_uer},
                            {"improves", row_units.mean_uer < row_baseline.mean_uer}}},
      {"corruption_robustness",
       {{"melonly_clean_stoi", melonly_clean.mean_stoi},
        {"melonly_corrupt_stoi", melonly_corrupt.mean_stoi},
        {"multi_clean_stoi", multi_clean.mean_stoi},
        {"multi_corrupt_stoi", multi_corrupt.mean_stoi},
        {"aug_clean_stoi", aug_clean.mean_stoi},
        {"aug_corrupt_stoi", aug_corrupt.mean_stoi},
        {"multi_beats_melonly_under_corruption",
         multi_corrupt.mean_stoi > melonly_corrupt.mean_stoi},
        {"aug_degrades_less",
         (aug_clean.mean_stoi - aug_corrupt.mean_stoi) <
             (multi_clean.mean_stoi - multi_corrupt.mean_stoi)}}},
      {"config", cfg.json()}};

  auto reports_dir = cfg.output_dir() / "reports";
  std::filesystem::create_directories(reports_dir);
  AblationResult result;
  result.report = report;
  result.json_path = reports_dir / "ablation.json";
  {
    std::ofstream os(result.json_path);
    os << report.dump(2) << '\n';
    require(os.good(), "ablation report write failed");
  }
  {
    std::ofstream os(reports_dir / "ablation.csv");
    os << "method,stoi,estoi,uer,wer\n";
    for (const auto& row : report.at("rows")) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.6f\n",
                    row.at("method").get<std::string>().c_str(), row.at("stoi").get<double>(),
                    row.at("estoi").get<double>(), row.at("uer").get<double>(),
                    row.at("wer").get<double>());
      os << buf;
    }
  }
  return result;
}

// Dispatch with the spec's exit-code contract.
inline int run(const std::string& command, const std::filesystem::path& config_path,
               const std::vector<std::string>& overrides, const RunOptions& opt = {}) {
  PipelineConfig cfg;
  try {
    cfg = PipelineConfig::load(config_path, overrides);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  }

  static const std::vector<std::string> known = {
      "make-data", "fit-units", "train-l2s", "train-vocoder",
      "synthesize", "evaluate", "ablate"};
  if (std::find(known.begin(), known.end(), command) == known.end()) {
    std::fprintf(stderr, "unknown command: %s\n", command.c_str());
    return kConfigError;
  }

  try {
    std::filesystem::create_directories(cfg.output_dir());
    detail::RunManifest rm(cfg.output_dir());
    std::string chash = detail::config_hash(cfg);
    if (opt.resume && rm.is_done(command, chash)) {
      std::fprintf(stdout, "%s: already complete, nothing to do\n", command.c_str());
      return kOk;
    }

    std::vector<std::filesystem::path> artifacts;
    if (command == "make-data") {
      cmd_make_data(cfg);
      artifacts = {cfg.output_dir() / "corpus/manifest.jsonl",
                   cfg.output_dir() / "corpus/units.txt",
                   cfg.output_dir() / "corpus/codebook.uncb"};
    } else if (command == "fit-units") {
      cmd_fit_units(cfg);
      artifacts = {cfg.output_dir() / "corpus/units.txt",
                   cfg.output_dir() / "corpus/codebook.uncb"};
    } else if (command == "train-l2s") {
      cmd_train_l2s(cfg);
      artifacts = {l2s_checkpoint_path(cfg)};
    } else if (command == "train-vocoder") {
      cmd_train_vocoder(cfg);
      artifacts = {vocoder_checkpoint_path(cfg)};
    } else if (command == "synthesize") {
      cmd_synthesize(cfg, opt);
      artifacts = {opt.out_wav};
    } else if (command == "evaluate") {
      auto report = cmd_evaluate(cfg);
      std::fprintf(stdout, "%s", report.table().c_str());
      artifacts = {cfg.output_dir() / "reports" / ("metrics_" + cfg.metrics_split() + ".json")};
    } else if (command == "ablate") {
      auto result = cmd_ablate(cfg);
      std::fprintf(stdout, "ablation written to %s\n", result.json_path.string().c_str());
      artifacts = {result.json_path};
    }
    rm.record(command, chash, artifacts);
    return kOk;
  } catch (const Error& e) {
    std::string what = e.what();
    if (what.find("missing artifact") != std::string::npos) {
      std::fprintf(stderr, "%s\n", what.c_str());
      return kMissingArtifact;
    }
    std::fprintf(stderr, "error: %s\n", what.c_str());
    return kRuntimeError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntimeError;
  }
}

}  // namespace l2s::pipeline
