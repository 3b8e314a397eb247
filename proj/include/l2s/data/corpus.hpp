#pragma once

#include <json.hpp>

#include "l2s/data/synth.hpp"
#include "l2s/units/kmeans.hpp"

namespace l2s::data {

struct CorpusConfig {
  int num_speakers = 8;
  int utterances_per_speaker = 50;
  double train_frac = 0.8;
  double val_frac = 0.1;
  double test_frac = 0.1;
  int unseen_speakers = 0;  // if > 0, the test split is these whole speakers
  int homophene_pairs_per_speaker = 1;
  int min_total_ms = 1080;          // long enough for intelligibility metrics
  int max_phones = 9;
  std::vector<int> duration_choices_ms = {160, 200, 240, 280, 320};
  int codebook_k = 64;
  int kmeans_iters = 60;
  double kmeans_tol = 1e-5;
  std::string extractor_id = units::kProxyExtractorId;

  void validate() const {
    require(num_speakers >= 1, "num_speakers must be >= 1");
    require(utterances_per_speaker >= 1, "utterances_per_speaker must be >= 1");
    require(train_frac >= 0 && val_frac >= 0 && test_frac >= 0, "split fractions must be >= 0");
    require(std::fabs(train_frac + val_frac + test_frac - 1.0) < 1e-9,
            "split fractions must sum to 1");
    require(train_frac > 0, "train split cannot be empty");
    require(unseen_speakers >= 0 && unseen_speakers < num_speakers,
            "unseen_speakers must leave at least one training speaker");
    require(homophene_pairs_per_speaker * 2 <= utterances_per_speaker,
            "homophene pair quota exceeds utterances per speaker");
    for (int d : duration_choices_ms)
      require(d > 0 && d % kFrameMs == 0, "durations must be positive multiples of ", kFrameMs);
    require(codebook_k >= 1, "codebook_k must be >= 1");
  }
};

struct UtteranceRecord {
  std::string utt_id;
  int speaker_id = 0;
  std::vector<PhoneToken> phones;
  std::string wav_path;
  std::string frames_path;
  std::vector<std::string> transcript;
  std::string split;         // train | val | test
  std::string homophene_of;  // utt_id of the pair base, empty otherwise
  int duration_ms = 0;
};

struct Manifest {
  std::filesystem::path root;
  std::vector<UtteranceRecord> records;
  std::vector<SpeakerSpec> speakers;

  std::filesystem::path wav_file(const UtteranceRecord& r) const { return root / r.wav_path; }
  std::filesystem::path frames_file(const UtteranceRecord& r) const {
    return root / r.frames_path;
  }
  std::filesystem::path codebook_file() const { return root / "codebook.uncb"; }
  std::filesystem::path units_file() const { return root / "units.txt"; }
  std::filesystem::path manifest_file() const { return root / "manifest.jsonl"; }

  std::vector<const UtteranceRecord*> split_records(const std::string& split) const {
    std::vector<const UtteranceRecord*> out;
    for (const auto& r : records)
      if (r.split == split) out.push_back(&r);
    return out;
  }

  const SpeakerSpec& speaker(int id) const {
    for (const auto& s : speakers)
      if (s.speaker_id == id) return s;
    fail("speaker ", id, " not in manifest roster");
  }
};

namespace detail {

inline nlohmann::json record_to_json(const UtteranceRecord& r) {
  nlohmann::json phones = nlohmann::json::array();
  for (const auto& p : r.phones) phones.push_back({p.symbol, p.duration_ms});
  return nlohmann::json{{"utt_id", r.utt_id},
                        {"speaker_id", r.speaker_id},
                        {"phones", phones},
                        {"wav", r.wav_path},
                        {"frames", r.frames_path},
                        {"transcript", r.transcript},
                        {"split", r.split},
                        {"homophene_of", r.homophene_of},
                        {"duration_ms", r.duration_ms}};
}

inline UtteranceRecord record_from_json(const nlohmann::json& j) {
  UtteranceRecord r;
  r.utt_id = j.at("utt_id").get<std::string>();
  r.speaker_id = j.at("speaker_id").get<int>();
  for (const auto& p : j.at("phones"))
    r.phones.push_back({p.at(0).get<std::string>(), p.at(1).get<int>()});
  r.wav_path = j.at("wav").get<std::string>();
  r.frames_path = j.at("frames").get<std::string>();
  r.transcript = j.at("transcript").get<std::vector<std::string>>();
  r.split = j.at("split").get<std::string>();
  r.homophene_of = j.at("homophene_of").get<std::string>();
  r.duration_ms = j.at("duration_ms").get<int>();
  return r;
}

// Phone sequence for one utterance; homophene pair members get identical
// sequences except for the swapped partner phone in the middle.
inline std::vector<PhoneToken> sample_phones(const CorpusConfig& cfg, Rng& rng) {
  const auto& inv = phone_inventory();
  std::vector<PhoneToken> seq;
  int total = 0;
  while (total < cfg.min_total_ms && int(seq.size()) < cfg.max_phones) {
    const auto& ph = inv[rng.uniform_int(inv.size())];
    int dur = cfg.duration_choices_ms[rng.uniform_int(cfg.duration_choices_ms.size())];
    seq.push_back({ph.symbol, dur});
    total += dur;
  }
  return seq;
}

}  // namespace detail

inline void manifest_save(const Manifest& m) {
  std::ofstream os(m.manifest_file());
  require(os.good(), "cannot write manifest: ", m.manifest_file().string());
  for (const auto& r : m.records) os << detail::record_to_json(r).dump() << '\n';
  require(os.good(), "manifest write failed");

  nlohmann::json speakers = nlohmann::json::array();
  for (const auto& s : m.speakers)
    speakers.push_back({{"speaker_id", s.speaker_id},
                        {"f0_hz", s.f0_hz},
                        {"formant_scale", s.formant_scale},
                        {"amplitude", s.amplitude}});
  std::ofstream ss(m.root / "speakers.json");
  ss << speakers.dump(2) << '\n';
  require(ss.good(), "speakers.json write failed");
}

inline Manifest manifest_load(const std::filesystem::path& corpus_dir) {
  Manifest m;
  m.root = corpus_dir;
  std::ifstream is(m.manifest_file());
  require(is.good(), "cannot open manifest: ", m.manifest_file().string());
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    m.records.push_back(detail::record_from_json(nlohmann::json::parse(line)));
  }
  std::ifstream ss(corpus_dir / "speakers.json");
  require(ss.good(), "cannot open speakers.json in ", corpus_dir.string());
  nlohmann::json speakers = nlohmann::json::parse(ss);
  for (const auto& j : speakers) {
    SpeakerSpec s;
    s.speaker_id = j.at("speaker_id").get<int>();
    s.f0_hz = j.at("f0_hz").get<double>();
    s.formant_scale = j.at("formant_scale").get<double>();
    s.amplitude = j.at("amplitude").get<double>();
    m.speakers.push_back(s);
  }
  return m;
}

// Writes all media and derived artifacts for an already planned manifest:
// WAVs, lip-frame tensors, transcripts, a codebook fitted on the train split,
// unit sequences for every utterance, and the JSONL manifest itself.
inline void materialize_corpus(Manifest& m, const CorpusConfig& cfg, uint64_t seed,
                               int workers = 1) {
  namespace fs = std::filesystem;
  fs::create_directories(m.root / "wavs");
  fs::create_directories(m.root / "frames");

  // synthesize and write media
  parallel_for(int(m.records.size()), workers, [&](int i) {
    const auto& r = m.records[i];
    auto result = synth_utterance(r.phones, m.speaker(r.speaker_id), seed ^ hash_str(r.utt_id));
    wav_write(result.audio, m.wav_file(r));
    frames_save(result.video, m.frames_file(r));
  });

  // transcripts
  {
    std::ofstream os(m.root / "transcripts.txt");
    for (const auto& r : m.records) {
      os << r.utt_id;
      for (const auto& t : r.transcript) os << ' ' << t;
      os << '\n';
    }
    require(os.good(), "transcripts write failed");
  }

  // units: fit the codebook on the train split, quantize everything
  {
    std::vector<units::FeatureSequence> feats(m.records.size());
    parallel_for(int(m.records.size()), workers, [&](int i) {
      auto w = wav_read(m.wav_file(m.records[i]));
      feats[i] = units::ExtractorRegistry::instance().extract(cfg.extractor_id, w);
    });
    std::vector<units::FeatureSequence> train_feats;
    for (size_t i = 0; i < m.records.size(); ++i)
      if (m.records[i].split == "train") train_feats.push_back(feats[i]);
    require(!train_feats.empty(), "train split is empty; cannot fit codebook");
    auto km =
        units::kmeans_fit(train_feats, cfg.codebook_k, seed, cfg.kmeans_iters, cfg.kmeans_tol);
    units::codebook_save(km.codebook, m.codebook_file());

    std::vector<std::pair<std::string, units::UnitSequence>> entries(m.records.size());
    parallel_for(int(m.records.size()), workers, [&](int i) {
      entries[i] = {m.records[i].utt_id, units::quantize(feats[i], km.codebook)};
    });
    units_save(entries, m.units_file());
  }

  manifest_save(m);
}

// Generates the full synthetic corpus: WAVs, lip-frame tensors, transcripts,
// a fitted codebook with unit sequences for every utterance, and the JSONL
// manifest. Deterministic for a given (cfg, seed); utterance synthesis is
// parallel-safe because every utterance derives its RNG from (seed, utt_id).
inline Manifest build_corpus(const CorpusConfig& cfg, uint64_t seed,
                             const std::filesystem::path& out_dir, int workers = 1) {
  cfg.validate();
  Manifest m;
  m.root = out_dir;
  m.speakers = make_speakers(cfg.num_speakers, seed);

  // plan utterances
  for (int spk = 0; spk < cfg.num_speakers; ++spk) {
    for (int u = 0; u < cfg.utterances_per_speaker; ++u) {
      UtteranceRecord r;
      char buf[32];
      std::snprintf(buf, sizeof buf, "spk%02d_utt%03d", spk, u);
      r.utt_id = buf;
      r.speaker_id = spk;
      Rng rng(seed ^ hash_str(r.utt_id));

      bool is_pair_member = u < 2 * cfg.homophene_pairs_per_speaker;
      if (is_pair_member && u % 2 == 1) {
        // partner utterance: same phones as the base with the homophene swapped
        const auto& base = m.records.back();
        r.phones = base.phones;
        for (auto& tok : r.phones) {
          auto partner = homophene_partner(tok.symbol);
          if (partner) {
            tok.symbol = *partner;
            break;
          }
        }
        r.homophene_of = base.utt_id;
      } else {
        r.phones = detail::sample_phones(cfg, rng);
        if (is_pair_member) {
          // make sure the middle of the base contains a homophene-capable phone
          auto pairs = homophene_pairs();
          auto& pick = pairs[rng.uniform_int(pairs.size())];
          r.phones[r.phones.size() / 2].symbol = rng.bernoulli(0.5) ? pick.first : pick.second;
        }
      }
      for (const auto& tok : r.phones) r.duration_ms += tok.duration_ms;
      for (const auto& tok : r.phones) r.transcript.push_back(tok.symbol);
      r.wav_path = "wavs/" + r.utt_id + ".wav";
      r.frames_path = "frames/" + r.utt_id + ".vidf";
      m.records.push_back(std::move(r));
    }
  }

  // splits
  {
    std::vector<int> pool;
    for (int i = 0; i < int(m.records.size()); ++i) {
      auto& r = m.records[i];
      if (cfg.unseen_speakers > 0 &&
          r.speaker_id >= cfg.num_speakers - cfg.unseen_speakers) {
        r.split = "test";
      } else {
        pool.push_back(i);
      }
    }
    Rng rng(seed ^ 0x59117aULL);
    for (int i = int(pool.size()) - 1; i > 0; --i)
      std::swap(pool[i], pool[rng.uniform_int(uint64_t(i + 1))]);
    size_t n = pool.size();
    size_t n_train, n_val;
    if (cfg.unseen_speakers > 0) {
      double denom = cfg.train_frac + cfg.val_frac;
      n_train = size_t(std::lround(n * cfg.train_frac / denom));
      n_val = n - n_train;
    } else {
      n_train = size_t(std::lround(n * cfg.train_frac));
      n_val = size_t(std::lround(n * cfg.val_frac));
      require(n_train + n_val <= n, "split fractions leave no room for the test set");
    }
    for (size_t i = 0; i < n; ++i) {
      auto& r = m.records[pool[i]];
      r.split = i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");
    }
  }

  materialize_corpus(m, cfg, seed, workers);
  return m;
}

// Unit sequences keyed by utterance id.
inline std::map<std::string, units::UnitSequence> load_unit_map(const Manifest& m) {
  std::map<std::string, units::UnitSequence> out;
  for (auto& [id, seq] : units::units_load(m.units_file())) out[id] = std::move(seq);
  return out;
}

}  // namespace l2s::data
