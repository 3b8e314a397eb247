#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "l2s/pipeline/commands.hpp"

using namespace l2s;
using namespace l2s::pipeline;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::filesystem::path write_config(const std::filesystem::path& dir, const nlohmann::json& j) {
  auto p = dir / "config.json";
  std::ofstream os(p);
  os << j.dump(2);
  return p;
}

// fast end-to-end settings: tiny corpus, tiny models, few steps
nlohmann::json smoke_config(const std::filesystem::path& out_dir) {
  return nlohmann::json{
      {"seed", 7},
      {"workers", 2},
      {"output_dir", out_dir.string()},
      {"units", {{"k", 12}, {"kmeans_iters", 15}}},
      {"data",
       {{"num_speakers", 3},
        {"utterances_per_speaker", 4},
        {"unseen_speakers", 1},
        {"train_frac", 0.8},
        {"val_frac", 0.2},
        {"test_frac", 0.0},
        {"min_total_ms", 560},
        {"max_phones", 4},
        {"duration_choices_ms", {160, 200}}}},
      {"l2s",
       {{"conformer_layers", 1},
        {"attention_heads", 2},
        {"conv_kernel", 7},
        {"latent_dim", 32},
        {"dropout", 0.0},
        {"batch_size", 2},
        {"steps", 12}}},
      {"vocoder",
       {{"base_channels", 16}, {"segment_mel_frames", 16}, {"steps", 15}}},
      {"metrics", {{"split", "test"}}}};
}

}  // namespace

TEST_CASE("default config validates and carries paper-aligned values") {
  auto cfg = PipelineConfig::load("");
  REQUIRE(cfg.audio().n_mels == 80);
  REQUIRE(cfg.audio().win_ms == 40.0);
  REQUIRE(cfg.audio().hop_ms == 10.0);
  REQUIRE(cfg.audio().frame_rate_hz() == Catch::Approx(100.0));
  REQUIRE(cfg.l2s().conv_kernel == 31);
  REQUIRE(cfg.l2s().lambda_mel == 10.0);
  REQUIRE(cfg.l2s().lambda_unit == 1.0);
  REQUIRE(cfg.vocoder().unit_embed_dim == 128);
  REQUIRE(cfg.vocoder().spk_proj_dim == 128);
  REQUIRE(cfg.vocoder().augment.blur_kernel == 9);
  // 50 Hz units via stacking factor 2
  REQUIRE(cfg.l2s().interleave_ratio == 2);
  REQUIRE(cfg.l2s().mel_stack_dim == 160);
}

TEST_CASE("unknown keys are rejected by name") {
  auto dir = fresh_dir("l2s_cfg_unknown");
  auto path = write_config(dir, {{"audio", {{"melz", 80}}}});
  try {
    PipelineConfig::load(path);
    FAIL("expected validation error");
  } catch (const Error& e) {
    REQUIRE(std::string(e.what()).find("melz") != std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("validation lists every violation, not just the first") {
  auto dir = fresh_dir("l2s_cfg_multi");
  auto path = write_config(
      dir, {{"vocoder", {{"upsample_factors", {4, 4, 4}}}},  // product 64 != 160
            {"data", {{"train_frac", 0.9}, {"val_frac", 0.3}, {"test_frac", 0.1}}}});
  try {
    PipelineConfig::load(path);
    FAIL("expected validation error");
  } catch (const Error& e) {
    std::string what = e.what();
    REQUIRE(what.find("upsample_factors") != std::string::npos);
    REQUIRE(what.find("sum to 1") != std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("dotted-path overrides reach nested keys") {
  auto cfg = PipelineConfig::load("", {"units.k=200", "l2s.latent_dim=512",
                                       "audio.fmax_hz=7600"});
  REQUIRE(cfg.l2s().unit_vocab == 200);
  REQUIRE(cfg.l2s().latent_dim == 512);
  REQUIRE(cfg.audio().fmax_hz == 7600.0);

  REQUIRE_THROWS_AS(PipelineConfig::load("", {"nope.key=1"}), Error);
  REQUIRE_THROWS_AS(PipelineConfig::load("", {"badformat"}), Error);
}

TEST_CASE("evaluate without trained checkpoints exits 3") {
  auto dir = fresh_dir("l2s_pipe_exit3");
  auto out = dir / "out";
  auto cfgp = write_config(dir, smoke_config(out));
  int rc = run("evaluate", cfgp, {});
  REQUIRE(rc == kMissingArtifact);

  // unknown command and config errors
  REQUIRE(run("frobnicate", cfgp, {}) == kConfigError);
  REQUIRE(run("evaluate", cfgp, {"units.k=bogus_string"}) == kConfigError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("make-data is deterministic across runs and worker counts") {
  auto dir = fresh_dir("l2s_pipe_det");
  auto out_a = dir / "a";
  auto out_b = dir / "b";
  auto cfg_a = write_config(dir, smoke_config(out_a));
  REQUIRE(run("make-data", cfg_a, {}) == kOk);
  auto cfg_b_json = smoke_config(out_b);
  cfg_b_json["workers"] = 1;
  auto cfg_b = write_config(fresh_dir("l2s_pipe_det_b"), cfg_b_json);
  REQUIRE(run("make-data", cfg_b, {}) == kOk);

  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
  };
  REQUIRE(slurp(out_a / "corpus/manifest.jsonl") == slurp(out_b / "corpus/manifest.jsonl"));
  REQUIRE(slurp(out_a / "corpus/units.txt") == slurp(out_b / "corpus/units.txt"));
  REQUIRE(slurp(out_a / "corpus/codebook.uncb") == slurp(out_b / "corpus/codebook.uncb"));
  std::filesystem::remove_all(dir);
  std::filesystem::remove_all(std::filesystem::temp_directory_path() / "l2s_pipe_det_b");
}

TEST_CASE("full pipeline end to end with resume semantics") {
  auto dir = fresh_dir("l2s_pipe_e2e");
  auto out = dir / "out";
  auto cfgp = write_config(dir, smoke_config(out));

  REQUIRE(run("make-data", cfgp, {}) == kOk);
  REQUIRE(std::filesystem::exists(out / "corpus/manifest.jsonl"));

  // resume: completed command is a no-op exit 0
  REQUIRE(run("make-data", cfgp, {}, RunOptions{.resume = true}) == kOk);

  REQUIRE(run("fit-units", cfgp, {}) == kOk);
  REQUIRE(std::filesystem::exists(out / "codebooks"));

  REQUIRE(run("train-l2s", cfgp, {}) == kOk);
  REQUIRE(std::filesystem::exists(out / "checkpoints/l2s.ckpt"));
  REQUIRE(run("train-vocoder", cfgp, {}) == kOk);
  REQUIRE(std::filesystem::exists(out / "checkpoints/vocoder.ckpt"));

  REQUIRE(run("evaluate", cfgp, {"metrics.split=val"}) == kOk);
  auto report_path = out / "reports/metrics_val.json";
  REQUIRE(std::filesystem::exists(report_path));
  {
    std::ifstream is(report_path);
    auto j = nlohmann::json::parse(is);
    REQUIRE(j.at("version") == 1);
    REQUIRE(j.at("count").get<int>() >= 1);
    for (const auto& u : j.at("utterances")) {
      REQUIRE(u.at("stoi").get<double>() >= -1.0);
      REQUIRE(u.at("stoi").get<double>() <= 1.0);
      REQUIRE(u.at("uer").get<double>() >= 0.0);
    }
  }

  // ground-truth passthrough: vocode GT features, compare against the report
  {
    auto manifest = data::manifest_load(out / "corpus");
    auto voc = vocoder::load_vocoder(out / "checkpoints/vocoder.ckpt");
    metrics::EvaluateOptions gt;
    gt.use_gt_features = true;
    gt.workers = 2;
    auto gt_report = metrics::evaluate(nullptr, *voc.model, manifest, "val", gt);
    REQUIRE(gt_report.mean_uer == 0.0);  // GT units against themselves
    for (const auto& u : gt_report.per_utterance) REQUIRE(u.uer == 0.0);
  }

  // synthesize from a frames file
  auto manifest = data::manifest_load(out / "corpus");
  RunOptions sopt;
  sopt.frames_path = manifest.frames_file(manifest.records[0]);
  sopt.speaker_id = manifest.records[0].speaker_id;
  sopt.out_wav = dir / "synth.wav";
  REQUIRE(run("synthesize", cfgp, {}, sopt) == kOk);
  auto wav = wav_read(sopt.out_wav);
  auto video = data::frames_load(sopt.frames_path);
  REQUIRE(int(wav.samples.size()) == video.frames * 4 * 160);

  std::filesystem::remove_all(dir);
}

TEST_CASE("griffin-lim synthesis path works without a vocoder") {
  auto dir = fresh_dir("l2s_pipe_gl");
  auto out = dir / "out";
  auto cfgp = write_config(dir, smoke_config(out));
  REQUIRE(run("make-data", cfgp, {}) == kOk);
  REQUIRE(run("train-l2s", cfgp, {}) == kOk);

  auto manifest = data::manifest_load(out / "corpus");
  RunOptions sopt;
  sopt.frames_path = manifest.frames_file(manifest.records[0]);
  sopt.speaker_id = manifest.records[0].speaker_id;
  sopt.out_wav = dir / "gl.wav";
  sopt.griffin_lim_fallback = true;
  REQUIRE(run("synthesize", cfgp, {}, sopt) == kOk);
  REQUIRE(std::filesystem::exists(sopt.out_wav));

  // without the fallback the missing vocoder is reported as exit 3
  sopt.griffin_lim_fallback = false;
  sopt.out_wav = dir / "missing.wav";
  REQUIRE(run("synthesize", cfgp, {}, sopt) == kMissingArtifact);
  std::filesystem::remove_all(dir);
}

TEST_CASE("stale codebook is rejected at evaluation time") {
  auto dir = fresh_dir("l2s_pipe_stale");
  auto out = dir / "out";
  auto cfgp = write_config(dir, smoke_config(out));
  REQUIRE(run("make-data", cfgp, {}) == kOk);
  REQUIRE(run("train-l2s", cfgp, {}) == kOk);
  REQUIRE(run("train-vocoder", cfgp, {}) == kOk);
  // re-fit the codebook with a different seed: checkpoints become stale
  REQUIRE(run("fit-units", cfgp, {"seed=99"}) == kOk);
  REQUIRE(run("evaluate", cfgp, {"metrics.split=val"}) == kRuntimeError);
  std::filesystem::remove_all(dir);
}
