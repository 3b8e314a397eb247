// Acceptance suite: one pass/fail line per criterion. Exits nonzero if any
// criterion fails. Expected runtime on a 2-core laptop CPU: ~35 minutes,
// dominated by the two overfit reproductions and the ablation study.

#include <chrono>
#include <cstdarg>
#include <map>

#include "l2s/metrics/evaluate.hpp"
#include "l2s/pipeline/commands.hpp"
#include "support/stoi_oracle.hpp"

using namespace l2s;

namespace {

struct Result {
  bool pass = false;
  std::string detail;
};

std::map<int, Result> g_results;

void record(int id, bool pass, const std::string& detail) {
  g_results[id] = {pass, detail};
  std::fprintf(stderr, "  .. criterion %d %s: %s\n", id, pass ? "ok" : "FAILED",
               detail.c_str());
}

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double secs() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof buf, f, args);
  va_end(args);
  return buf;
}

std::filesystem::path work_dir() {
  auto dir = std::filesystem::temp_directory_path() / "l2s_acceptance";
  return dir;
}

std::filesystem::path fresh_subdir(const std::string& name) {
  auto dir = work_dir() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// ---- fixtures ----

// 8-utterance stage-1 fixture; fix0/fix1 embed the homophene pair pp/bb in
// differing vowel contexts so context attention can disambiguate identical
// mouth shapes.
data::Manifest overfit_fixture(const std::filesystem::path& dir, int k) {
  data::CorpusConfig ccfg;
  ccfg.codebook_k = k;
  ccfg.kmeans_iters = 40;
  data::Manifest m;
  m.root = dir;
  m.speakers = data::make_speakers(2, 11);
  auto add = [&](const std::string& id, int spk, std::vector<data::PhoneToken> ph) {
    data::UtteranceRecord r;
    r.utt_id = id;
    r.speaker_id = spk;
    r.phones = std::move(ph);
    for (auto& t : r.phones) {
      r.duration_ms += t.duration_ms;
      r.transcript.push_back(t.symbol);
    }
    r.wav_path = "wavs/" + id + ".wav";
    r.frames_path = "frames/" + id + ".vidf";
    r.split = "train";
    m.records.push_back(std::move(r));
  };
  add("fix0", 0, {{"aa", 240}, {"pp", 160}, {"aa", 240}});
  add("fix1", 0, {{"uu", 240}, {"bb", 160}, {"uu", 240}});
  add("fix2", 0, {{"ee", 200}, {"ss", 200}, {"oo", 240}});
  add("fix3", 0, {{"ii", 240}, {"mm", 160}, {"aa", 240}});
  add("fix4", 1, {{"oo", 200}, {"ff", 200}, {"ee", 240}});
  add("fix5", 1, {{"aa", 160}, {"zz", 240}, {"uu", 240}});
  add("fix6", 1, {{"mm", 200}, {"ii", 240}, {"ss", 200}});
  add("fix7", 1, {{"vv", 200}, {"ee", 240}, {"bb", 200}});
  data::materialize_corpus(m, ccfg, 11, 2);
  return m;
}

data::Manifest vocoder_fixture(const std::filesystem::path& dir, int k) {
  data::CorpusConfig ccfg;
  ccfg.codebook_k = k;
  ccfg.kmeans_iters = 40;
  data::Manifest m;
  m.root = dir;
  m.speakers = data::make_speakers(2, 21);
  auto add = [&](const std::string& id, int spk, std::vector<data::PhoneToken> ph) {
    data::UtteranceRecord r;
    r.utt_id = id;
    r.speaker_id = spk;
    r.phones = std::move(ph);
    for (auto& t : r.phones) {
      r.duration_ms += t.duration_ms;
      r.transcript.push_back(t.symbol);
    }
    r.wav_path = "wavs/" + id + ".wav";
    r.frames_path = "frames/" + id + ".vidf";
    r.split = "train";
    m.records.push_back(std::move(r));
  };
  add("v0", 0, {{"aa", 240}, {"ss", 200}, {"ee", 240}, {"oo", 240}, {"mm", 200}});
  add("v1", 0, {{"ii", 240}, {"bb", 160}, {"uu", 280}, {"zz", 240}, {"aa", 200}});
  add("v2", 1, {{"oo", 240}, {"ff", 200}, {"aa", 240}, {"ee", 240}, {"vv", 200}});
  add("v3", 1, {{"mm", 200}, {"ee", 240}, {"pp", 160}, {"ii", 280}, {"uu", 240}});
  data::materialize_corpus(m, ccfg, 21, 2);
  return m;
}

model::L2SConfig fixture_l2s_config(int k) {
  model::L2SConfig cfg;
  cfg.unit_vocab = k;
  cfg.seed = 1;
  cfg.dropout = 0.0;
  cfg.batch_size = 4;
  cfg.augment.erase_p = 0.25;
  cfg.augment.time_mask_p = 0.25;
  return cfg;
}

// shared artifacts across criteria 6, 7 and 10
struct OverfitArtifacts {
  data::Manifest manifest;
  std::filesystem::path checkpoint;
  model::L2STrainResult result;
  bool ready = false;
};
OverfitArtifacts g_overfit;

// ---- criteria ----

void criterion_1_rate_lattice() {
  Timer timer;
  auto dir = fresh_subdir("rate_lattice");
  data::CorpusConfig ccfg;
  ccfg.num_speakers = 5;
  ccfg.utterances_per_speaker = 10;
  ccfg.homophene_pairs_per_speaker = 1;
  ccfg.codebook_k = 16;
  ccfg.kmeans_iters = 12;
  auto m = data::build_corpus(ccfg, 33, dir, 2);

  signal::AudioConfig acfg;
  auto unit_map = data::load_unit_map(m);
  bool ok = m.records.size() == 50;
  std::string why = ok ? "" : "corpus size != 50";
  for (const auto& r : m.records) {
    auto wav = wav_read(m.wav_file(r));
    auto mel = signal::log_mel(wav, acfg);
    auto video = data::frames_load(m.frames_file(r));
    const auto& u = unit_map.at(r.utt_id);
    if (mel.num_frames() != 2 * u.length() || mel.num_frames() != 4 * video.frames) {
      ok = false;
      why = "lattice violated for " + r.utt_id;
      break;
    }
    auto stacked = signal::stack_mel(mel, 2);
    auto back = signal::unstack_mel(stacked);
    if (!(back.frames == mel.frames)) {
      ok = false;
      why = "stack/unstack not exact for " + r.utt_id;
      break;
    }
  }
  double secs = timer.secs();
  if (secs >= 60.0) {
    ok = false;
    why += " over 1 min budget";
  }
  record(1, ok, fmt("50 utterances, T_mel = 2*T_units = 4*T_video exact; %.1fs", secs));
  if (!ok && !why.empty()) g_results[1].detail += " [" + why + "]";
  std::filesystem::remove_all(dir);
}

void criterion_2_loss_oracles() {
  Rng rng(202);
  bool ok = true;
  std::string why;
  for (int trial = 0; trial < 100 && ok; ++trial) {
    int b = 1 + int(rng.uniform_int(2));
    int t = 2 + int(rng.uniform_int(8));
    int d = 1 + int(rng.uniform_int(12));
    auto pred = nn::make_tensor({b, t, d}, true);
    auto target = nn::make_tensor({b, t, d});
    for (double& v : pred->value) v = 3.0 * rng.normal();
    for (double& v : target->value) v = 3.0 * rng.normal();
    double brute = 0.0;
    for (size_t i = 0; i < pred->numel(); ++i)
      brute += std::fabs(pred->value[i] - target->value[i]);
    brute /= double(pred->numel());
    double got = model::loss_mel(pred, target)->value[0];
    if (std::fabs(got - brute) > 1e-6) {
      ok = false;
      why = fmt("loss_mel off by %.2e", std::fabs(got - brute));
    }

    int k = 2 + int(rng.uniform_int(30));
    auto logits = nn::make_tensor({b, t, k}, true);
    for (double& v : logits->value) v = 2.0 * rng.normal();
    std::vector<int> targets(size_t(b) * t);
    for (auto& u : targets) u = int(rng.uniform_int(uint64_t(k)));
    double ce = 0.0;
    for (size_t r = 0; r < targets.size(); ++r) {
      double mx = -1e300;
      for (int j = 0; j < k; ++j) mx = std::max(mx, logits->value[r * k + j]);
      double denom = 0.0;
      for (int j = 0; j < k; ++j) denom += std::exp(logits->value[r * k + j] - mx);
      ce -= logits->value[r * k + targets[r]] - mx - std::log(denom);
    }
    ce /= double(targets.size());
    double got_ce = model::loss_unit(logits, targets)->value[0];
    if (std::fabs(got_ce - ce) > 1e-6) {
      ok = false;
      why = fmt("loss_unit off by %.2e", std::fabs(got_ce - ce));
    }
  }
  for (int k : {64, 200}) {
    auto logits = nn::make_tensor({1, 7, k}, true);
    std::vector<int> targets(7, k - 1);
    double got = model::loss_unit(logits, targets)->value[0];
    if (std::fabs(got - std::log(double(k))) > 1e-6) {
      ok = false;
      why = fmt("uniform CE for K=%d off", k);
    }
  }
  record(2, ok, "loss_mel/loss_unit match brute force on 100 fixtures; ln K exact" +
                    (why.empty() ? "" : " [" + why + "]"));
}

void criterion_3_gradient_check() {
  Timer timer;
  model::L2SConfig cfg;
  cfg.conformer_layers = 1;
  cfg.attention_heads = 2;
  cfg.conv_kernel = 3;
  cfg.latent_dim = 8;  // the stated width-8 config
  cfg.unit_vocab = 5;
  cfg.mel_stack_dim = 6;
  cfg.dropout = 0.0;
  cfg.seed = 7;
  model::L2SModel m(cfg);

  Rng rng(303);
  auto frames = nn::make_tensor({1, 6, 12, 12}, true);
  for (double& v : frames->value) v = rng.uniform();
  auto spk = nn::make_tensor({1, cfg.spk_embed_dim});
  for (double& v : spk->value) v = rng.normal();
  auto mel_target = nn::make_tensor({1, 12, 6});
  for (double& v : mel_target->value) v = rng.normal();
  std::vector<int> unit_targets(12);
  for (auto& u : unit_targets) u = int(rng.uniform_int(5));

  auto loss_fn = [&]() {
    Rng drop(0);
    auto out = m.forward(frames, spk, drop, /*train=*/false);
    auto lm = model::loss_mel(out.mel_stacked_pred, mel_target);
    auto lu = model::loss_unit(out.unit_logits, unit_targets);
    return model::loss_total(lm, lu, 10.0, 1.0);
  };

  auto loss = loss_fn();
  for (auto& [name, p] : m.params().all()) std::fill(p->grad.begin(), p->grad.end(), 0.0);
  nn::backward(loss);

  double worst = 0.0;
  std::string worst_at = "input";
  auto check_coord = [&](nn::TensorPtr t, size_t i, double analytic, const std::string& where) {
    double h = 1e-4;
    double keep = t->value[i];
    t->value[i] = keep + h;
    double up = loss_fn()->value[0];
    t->value[i] = keep - h;
    double down = loss_fn()->value[0];
    t->value[i] = keep;
    double numeric = (up - down) / (2.0 * h);
    double denom = std::max({std::fabs(numeric), std::fabs(analytic), 1e-5});
    double rel = std::fabs(numeric - analytic) / denom;
    if (rel > worst) {
      worst = rel;
      worst_at = where;
    }
  };

  // every input-frame coordinate plus a sample of every parameter tensor
  std::vector<double> input_grad = frames->grad;
  for (size_t i = 0; i < frames->numel(); i += 17)
    check_coord(frames, i, input_grad[i], "input");
  for (auto& [name, p] : m.params().all()) {
    std::vector<size_t> picks;
    for (int j = 0; j < 3; ++j) picks.push_back(rng.uniform_int(p->numel()));
    for (size_t i : picks) check_coord(p, i, p->grad[i], name);
  }

  double secs = timer.secs();
  bool ok = worst < 1e-3 && secs < 120.0;
  record(3, ok, fmt("L_tot (10*L1 + 1*CE) vs central differences, worst rel err %.2e at %s; %.1fs",
                    worst, worst_at.c_str(), secs));
}

void criterion_4_kmeans() {
  bool ok = true;
  std::string why;
  for (uint64_t seed = 0; seed < 20 && ok; ++seed) {
    Rng rng(700 + seed);
    Mat pts(300, 6);
    for (double& v : pts.data) v = 4.0 * rng.normal();
    units::FeatureSequence f;
    f.frames = pts;
    f.extractor_id = "acc";
    auto res = units::kmeans_fit({f}, 8, seed, 25, 0.0);
    for (size_t i = 1; i < res.distortion_history.size(); ++i)
      if (res.distortion_history[i] > res.distortion_history[i - 1] + 1e-9) {
        ok = false;
        why = fmt("distortion rose on seed %llu", (unsigned long long)seed);
      }
    // exhaustive nearest-neighbor oracle
    auto codes = units::quantize(f, res.codebook);
    for (int i = 0; i < pts.rows && ok; ++i) {
      int best = 0;
      double bd = 1e300;
      for (int c = 0; c < res.codebook.k; ++c) {
        double d = 0.0;
        for (int j = 0; j < 6; ++j) {
          double diff = pts.at(i, j) - res.codebook.centroids.at(c, j);
          d += diff * diff;
        }
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      if (codes.codes[i] != best) {
        ok = false;
        why = "quantize != exhaustive oracle";
      }
    }
  }
  {
    // separable data: K distinct points, each repeated
    Rng rng(99);
    Mat distinct(6, 4);
    for (double& v : distinct.data) v = 8.0 * rng.normal();
    Mat pts(60, 4);
    for (int i = 0; i < 60; ++i)
      std::copy(distinct.row(i % 6), distinct.row(i % 6) + 4, pts.row(i));
    units::FeatureSequence f;
    f.frames = pts;
    f.extractor_id = "acc";
    auto res = units::kmeans_fit({f}, 6, 5, 30);
    if (res.distortion_history.back() > 1e-12) {
      ok = false;
      why = "separable distortion not zero";
    }
  }
  record(4, ok, "20 seeded runs monotone; quantize == oracle; separable distortion 0" +
                    (why.empty() ? "" : " [" + why + "]"));
}

void criterion_5_stoi_dual() {
  auto speech = [&](uint64_t seed) {
    data::SpeakerSpec spk;
    spk.speaker_id = int(seed % 5);
    spk.f0_hz = 105.0 + 12.0 * double(seed % 8);
    Rng rng(seed);
    const auto& inv = data::phone_inventory();
    std::vector<data::PhoneToken> phones;
    int total = 0;
    while (total < 800) {
      int dur = 160 + 40 * int(rng.uniform_int(4));
      phones.push_back({inv[rng.uniform_int(inv.size())].symbol, dur});
      total += dur;
    }
    return data::synth_utterance(phones, spk, seed).audio;
  };
  auto noisy = [](const Waveform& w, double snr_db, uint64_t seed) {
    double p = 0.0;
    for (double s : w.samples) p += s * s;
    p /= double(w.samples.size());
    double sigma = std::sqrt(p / std::pow(10.0, snr_db / 10.0));
    Rng rng(seed);
    Waveform out = w;
    for (double& s : out.samples) s += sigma * rng.normal();
    return out;
  };

  bool ok = true;
  std::string why;
  double max_diff = 0.0;
  const double snrs[10] = {35, 25, 20, 15, 10, 5, 0, -1, 30, 12};
  for (int i = 0; i < 10 && ok; ++i) {
    auto clean = speech(500 + i);
    Waveform degraded;
    if (snrs[i] < 0) {
      degraded = white_noise(clean.duration_s(), 677 + i, 16000, 0.4);
      degraded.samples.resize(clean.samples.size());
    } else {
      degraded = noisy(clean, snrs[i], 600 + i);
    }
    double s_mine = metrics::stoi(clean, degraded);
    double s_oracle = stoi_oracle::stoi(clean.samples, degraded.samples, 16000);
    double e_mine = metrics::estoi(clean, degraded);
    double e_oracle = stoi_oracle::estoi(clean.samples, degraded.samples, 16000);
    max_diff = std::max({max_diff, std::fabs(s_mine - s_oracle), std::fabs(e_mine - e_oracle)});
    if (max_diff > 1e-4) {
      ok = false;
      why = fmt("pair %d disagrees by %.2e", i, max_diff);
    }
  }
  for (uint64_t seed : {901ull, 902ull, 903ull}) {
    auto x = speech(seed);
    if (std::fabs(metrics::stoi(x, x) - 1.0) > 1e-6 ||
        std::fabs(metrics::estoi(x, x) - 1.0) > 1e-6) {
      ok = false;
      why = "self-identity violated";
    }
  }
  {
    auto x = speech(910);
    double hi = metrics::stoi(x, noisy(x, 30.0, 1));
    double lo = metrics::stoi(x, noisy(x, 10.0, 2));
    double ehi = metrics::estoi(x, noisy(x, 30.0, 3));
    double elo = metrics::estoi(x, noisy(x, 10.0, 4));
    if (!(hi > lo && ehi > elo)) {
      ok = false;
      why = "noise monotonicity violated";
    }
  }
  record(5, ok, fmt("10 fixture pairs agree with the independent oracle (max diff %.2e); "
                    "self = 1; monotone in SNR%s",
                    max_diff, why.empty() ? "" : (" [" + why + "]").c_str()));
}

void criterion_7_overfit_stage1() {
  Timer timer;
  auto dir = fresh_subdir("overfit_l2s");
  int k = 32;
  g_overfit.manifest = overfit_fixture(dir, k);
  g_overfit.checkpoint = dir / "l2s.ckpt";
  g_overfit.result = model::train_l2s(g_overfit.manifest, fixture_l2s_config(k), 500,
                                      g_overfit.checkpoint, 1);
  g_overfit.ready = true;

  double first = 0.0, last = 0.0;
  const auto& hist = g_overfit.result.mel_loss_history;
  for (int i = 0; i < 10; ++i) first += hist[i] / 10.0;
  for (size_t i = hist.size() - 10; i < hist.size(); ++i) last += hist[i] / 10.0;
  double acc = g_overfit.result.final_unit_accuracy;
  double secs = timer.secs();
  bool ok = acc > 0.9 && last < 0.3 * first && secs < 600.0;
  record(7, ok, fmt("8 utterances, 500 steps: unit accuracy %.3f (> 0.9), mel L1 %.3f -> %.3f "
                    "(%.2fx, < 0.3x); %.0fs",
                    acc, first, last, last / first, secs));
}

void criterion_6_speaker_agnostic() {
  bool ok = true;
  std::string why;
  auto check_model = [&](const model::L2SModel& m, const std::string& which) {
    Rng rng(606);
    for (int trial = 0; trial < 20 && ok; ++trial) {
      int t = 4 + int(rng.uniform_int(6));
      auto frames = nn::make_tensor({1, t, 20, 20});
      for (double& v : frames->value) v = rng.uniform();
      auto spk_a = nn::make_tensor({1, 256});
      auto spk_b = nn::make_tensor({1, 256});
      for (double& v : spk_a->value) v = rng.normal();
      for (double& v : spk_b->value) v = rng.normal();
      Rng drop(0);
      auto out_a = m.forward(frames, spk_a, drop, false);
      Rng drop2(0);
      auto out_b = m.forward(frames, spk_b, drop2, false);
      if (out_a.unit_logits->value != out_b.unit_logits->value) {
        ok = false;
        why = "logits changed under z_spk on " + which;
      }
    }
  };
  model::L2SConfig fresh_cfg = fixture_l2s_config(32);
  fresh_cfg.seed = 42;
  model::L2SModel fresh_a(fresh_cfg);
  fresh_cfg.seed = 43;
  model::L2SModel fresh_b(fresh_cfg);
  check_model(fresh_a, "fresh(seed 42)");
  check_model(fresh_b, "fresh(seed 43)");
  if (g_overfit.ready) {
    auto trained = model::load_l2s(g_overfit.checkpoint);
    check_model(*trained.model, "trained");
  } else {
    ok = false;
    why = "trained checkpoint unavailable";
  }
  record(6, ok, "unit logits bit-identical under z_spk perturbation, 20 inputs x 3 checkpoints" +
                    (why.empty() ? "" : " [" + why + "]"));
}

void criterion_10_homophene() {
  if (!g_overfit.ready) {
    record(10, false, "stage-1 fixture unavailable");
    return;
  }
  const auto& m = g_overfit.manifest;
  auto l2s = model::load_l2s(g_overfit.checkpoint);
  auto v0 = data::frames_load(m.frames_file(m.records[0]));
  auto v1 = data::frames_load(m.frames_file(m.records[1]));
  auto spk = data::speaker_embedding(m.speaker(0));
  auto [mel0, u0] = l2s.model->infer(v0, spk);
  auto [mel1, u1] = l2s.model->infer(v1, spk);

  // fix0 = aa(240) pp(160) aa(240), fix1 = uu bb uu: the homophene segment
  // covers video frames [6, 10) and unit steps [12, 20)
  bool frames_identical = true;
  for (int t = 6; t < 10; ++t)
    for (int y = 0; y < v0.height; ++y)
      for (int x = 0; x < v0.width; ++x)
        frames_identical = frames_identical && v0.at(t, y, x) == v1.at(t, y, x);

  bool units_differ = false;
  for (int t = 12; t < 20; ++t) units_differ = units_differ || u0.codes[t] != u1.codes[t];

  bool ok = frames_identical && units_differ;
  record(10, ok,
         fmt("pp/bb segment: visual frames bit-identical (%s), predicted unit sequences "
             "differ (%s)",
             frames_identical ? "yes" : "NO", units_differ ? "yes" : "NO"));
}

void criterion_8_overfit_vocoder() {
  Timer timer;
  auto dir = fresh_subdir("overfit_voc");
  int k = 32;
  auto m = vocoder_fixture(dir, k);

  vocoder::VocoderConfig cfg;
  cfg.unit_vocab = k;
  cfg.base_channels = 64;
  cfg.learning_rate = 2e-3;
  cfg.segment_mel_frames = 48;
  cfg.seed = 2;
  auto ck = dir / "voc.ckpt";
  vocoder::train_vocoder(m, cfg, 8000, ck, 1);

  auto loaded = vocoder::load_vocoder(ck);
  auto unit_map = data::load_unit_map(m);
  signal::AudioConfig acfg;
  double mean_stoi = 0.0;
  for (const auto& r : m.records) {
    auto wav = wav_read(m.wav_file(r));
    auto mel = signal::log_mel(wav, acfg);
    auto spk = data::speaker_embedding(m.speaker(r.speaker_id));
    auto gen = loaded.model->generate_waveform(mel.frames, unit_map.at(r.utt_id).codes,
                                               spk.vector);
    size_t n = std::min(gen.samples.size(), wav.samples.size());
    gen.samples.resize(n);
    Waveform gt = wav;
    gt.samples.resize(n);
    mean_stoi += metrics::stoi(gt, gen) / double(m.records.size());
  }
  double secs = timer.secs();
  // pinned from the measured derivation run (0.781) with slack; spec expectation ~0.7
  bool ok = mean_stoi > 0.70 && secs < 900.0;
  record(8, ok, fmt("4 utterances, reconstruction mode: STOI(GT, resynthesis) = %.3f "
                    "(> 0.70 pinned); %.0fs",
                    mean_stoi, secs));
  std::filesystem::remove_all(dir);
}

std::vector<std::string> ablate_overrides(const std::filesystem::path& out_dir, bool smoke) {
  std::vector<std::string> ov = {
      "output_dir=\"" + out_dir.generic_string() + "\"",
      "workers=2",
      "seed=5",
      "units.k=32",
      "units.kmeans_iters=40",
      "data.num_speakers=4",
      "data.utterances_per_speaker=8",
      "data.unseen_speakers=1",
      "data.train_frac=0.85",
      "data.val_frac=0.15",
      "data.test_frac=0.0",
      "data.min_total_ms=1080",
      "data.max_phones=7",
      "l2s.steps=500",
      "l2s.batch_size=2",
      "l2s.dropout=0.05",
      "vocoder.steps=2500",
      "vocoder.segment_mel_frames=48",
      "metrics.split=test",
  };
  if (smoke) {
    for (auto& s : ov) {
      if (s == "l2s.steps=500") s = "l2s.steps=6";
      if (s == "vocoder.steps=2500") s = "vocoder.steps=8";
      if (s == "units.k=32") s = "units.k=8";
      if (s == "data.utterances_per_speaker=8") s = "data.utterances_per_speaker=3";
      if (s == "data.min_total_ms=1080") s = "data.min_total_ms=560";
    }
    ov.push_back("l2s.conformer_layers=1");
    ov.push_back("l2s.latent_dim=32");
    ov.push_back("l2s.attention_heads=2");
    ov.push_back("l2s.conv_kernel=7");
    ov.push_back("vocoder.base_channels=16");
    ov.push_back("vocoder.segment_mel_frames=16");
  }
  return ov;
}

void criterion_9_ablation() {
  Timer timer;
  auto dir = fresh_subdir("ablation");
  auto ov = ablate_overrides(dir / "out", /*smoke=*/false);
  int rc = pipeline::run("make-data", "", ov);
  if (rc == pipeline::kOk) rc = pipeline::run("ablate", "", ov);
  if (rc != pipeline::kOk) {
    record(9, false, fmt("pipeline exited with code %d", rc));
    return;
  }
  std::ifstream is(dir / "out/reports/ablation.json");
  auto j = nlohmann::json::parse(is);
  double uer0 = j.at("unit_supervision").at("uer_lambda0").get<double>();
  double uer1 = j.at("unit_supervision").at("uer_lambda1").get<double>();
  const auto& c = j.at("corruption_robustness");
  double melonly_corrupt = c.at("melonly_corrupt_stoi").get<double>();
  double multi_corrupt = c.at("multi_corrupt_stoi").get<double>();
  double multi_clean = c.at("multi_clean_stoi").get<double>();
  double aug_clean = c.at("aug_clean_stoi").get<double>();
  double aug_corrupt = c.at("aug_corrupt_stoi").get<double>();

  bool a = uer1 < uer0;
  bool b = multi_corrupt > melonly_corrupt;
  bool cc = (aug_clean - aug_corrupt) < (multi_clean - multi_corrupt);
  double secs = timer.secs();
  bool ok = a && b && cc && secs < 3600.0;
  record(9, ok,
         fmt("(a) UER %.3f -> %.3f with unit loss [%s]; (b) corrupted-mel STOI mel-only %.3f "
             "vs multi-input %.3f [%s]; (c) corruption drop %.3f (no aug) vs %.3f (aug) [%s]; "
             "%.0fs",
             uer0, uer1, a ? "improves" : "FAILS", melonly_corrupt, multi_corrupt,
             b ? "improves" : "FAILS", multi_clean - multi_corrupt, aug_clean - aug_corrupt,
             cc ? "improves" : "FAILS", secs));
}

void criterion_11_determinism() {
  Timer timer;
  auto dir = fresh_subdir("determinism");
  auto out = dir / "out";
  auto ov = ablate_overrides(out, /*smoke=*/true);

  int rc = pipeline::run("make-data", "", ov);
  if (rc == pipeline::kOk) rc = pipeline::run("ablate", "", ov);
  std::string first_report, first_corpus;
  if (rc == pipeline::kOk) {
    first_report = slurp(out / "reports/ablation.json");
    first_corpus = slurp(out / "corpus/manifest.jsonl");
  }

  std::filesystem::remove_all(out);
  if (rc == pipeline::kOk) rc = pipeline::run("make-data", "", ov);
  if (rc == pipeline::kOk) rc = pipeline::run("ablate", "", ov);
  bool ok = rc == pipeline::kOk;
  std::string why;
  if (ok) {
    std::string second_report = slurp(out / "reports/ablation.json");
    std::string second_corpus = slurp(out / "corpus/manifest.jsonl");
    if (second_report.empty() || second_report != first_report) {
      ok = false;
      why = "ablation.json differs between runs";
    }
    if (second_corpus != first_corpus) {
      ok = false;
      why += " corpus manifest differs";
    }
  } else {
    why = fmt("pipeline exited with code %d", rc);
  }
  record(11, ok, fmt("two seeded ablate runs byte-identical (%zu-byte report); %.0fs%s",
                     first_report.size(), timer.secs(),
                     why.empty() ? "" : (" [" + why + "]").c_str()));
}

}  // namespace

int main() {
  std::filesystem::create_directories(work_dir());
  Timer total;

  criterion_1_rate_lattice();
  criterion_2_loss_oracles();
  criterion_3_gradient_check();
  criterion_4_kmeans();
  criterion_5_stoi_dual();
  criterion_7_overfit_stage1();  // criteria 6 and 10 reuse its checkpoint
  criterion_6_speaker_agnostic();
  criterion_10_homophene();
  criterion_8_overfit_vocoder();
  criterion_9_ablation();
  criterion_11_determinism();

  static const char* names[] = {
      "",
      "rate-lattice suite",
      "loss oracles",
      "gradient checks",
      "k-means suite",
      "STOI/ESTOI dual implementation",
      "speaker-agnostic invariant",
      "overfit reproduction (stage 1)",
      "overfit reproduction (stage 2)",
      "directional ablation reproduction",
      "homophene check",
      "determinism",
  };
  bool all = true;
  for (int id = 1; id <= 11; ++id) {
    const auto& r = g_results[id];
    all = all && r.pass;
    std::printf("[%s] criterion %2d, %s: %s\n", r.pass ? "PASS" : "FAIL", id, names[id],
                r.detail.c_str());
  }
  std::printf("%s (%.0fs total)\n", all ? "ALL CRITERIA PASSED" : "SOME CRITERIA FAILED",
              total.secs());
  std::filesystem::remove_all(work_dir());
  return all ? 0 : 1;
}
