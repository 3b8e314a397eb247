#pragma once

#include "l2s/metrics/edit_distance.hpp"
#include "l2s/metrics/stoi.hpp"
#include "l2s/model/l2s_model.hpp"
#include "l2s/vocoder/train.hpp"

namespace l2s::metrics {

inline constexpr int kMetricsReportVersion = 1;

struct UtteranceMetrics {
  std::string utt_id;
  int speaker_id = 0;
  double stoi = 0.0;
  double estoi = 0.0;
  double uer = 0.0;
  double wer = 0.0;
};

struct MetricsReport {
  std::string split;
  int count = 0;
  double mean_stoi = 0.0;
  double mean_estoi = 0.0;
  double mean_uer = 0.0;
  double mean_wer = 0.0;
  std::vector<UtteranceMetrics> per_utterance;
  nlohmann::json config_snapshot;

  nlohmann::json to_json() const {
    nlohmann::json utts = nlohmann::json::array();
    for (const auto& u : per_utterance)
      utts.push_back({{"utt_id", u.utt_id},
                      {"speaker_id", u.speaker_id},
                      {"stoi", u.stoi},
                      {"estoi", u.estoi},
                      {"uer", u.uer},
                      {"wer", u.wer}});
    return {{"version", kMetricsReportVersion},
            {"split", split},
            {"count", count},
            {"mean", {{"stoi", mean_stoi}, {"estoi", mean_estoi}, {"uer", mean_uer},
                      {"wer", mean_wer}}},
            {"utterances", utts},
            {"config", config_snapshot},
            {"notes",
             {{"wer", "token-level stand-in decoded from speech units; no external ASR"},
              {"pesq", "out of scope"}}}};
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream os(path);
    require(os.good(), "cannot write report: ", path.string());
    os << to_json().dump(2) << '\n';
    require(os.good(), "report write failed");
  }

  std::string table() const {
    std::ostringstream ss;
    ss << "split=" << split << " n=" << count << "\n";
    ss << "  STOI   ESTOI  UER    WER\n";
    char buf[128];
    std::snprintf(buf, sizeof buf, "  %.4f %.4f %.4f %.4f\n", mean_stoi, mean_estoi, mean_uer,
                  mean_wer);
    ss << buf;
    return ss.str();
  }

  void save_csv(const std::filesystem::path& path) const {
    std::ofstream os(path);
    require(os.good(), "cannot write report CSV: ", path.string());
    os << "utt_id,stoi,estoi,uer,wer\n";
    char buf[192];
    for (const auto& u : per_utterance) {
      std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.6f\n", u.utt_id.c_str(), u.stoi,
                    u.estoi, u.uer, u.wer);
      os << buf;
    }
    std::snprintf(buf, sizeof buf, "mean,%.6f,%.6f,%.6f,%.6f\n", mean_stoi, mean_estoi,
                  mean_uer, mean_wer);
    os << buf;
  }
};

// Majority phone label per unit code, learned from the train split's exact
// alignments. The WER stand-in decodes predicted units through this table.
class UnitPhoneDecoder {
public:
  static UnitPhoneDecoder fit(const data::Manifest& manifest,
                              const std::map<std::string, units::UnitSequence>& unit_map,
                              int unit_vocab) {
    std::map<int, std::map<std::string, int>> counts;
    std::map<std::string, int> phone_totals;
    for (const auto& r : manifest.records) {
      if (r.split != "train") continue;
      const auto& codes = unit_map.at(r.utt_id).codes;
      for (size_t t = 0; t < codes.size(); ++t) {
        double center_ms = (t + 0.5) * 20.0;
        double acc = 0.0;
        for (const auto& tok : r.phones) {
          if (center_ms < acc + tok.duration_ms) {
            ++counts[codes[t]][tok.symbol];
            ++phone_totals[tok.symbol];
            break;
          }
          acc += tok.duration_ms;
        }
      }
    }
    UnitPhoneDecoder d;
    d.table_.assign(unit_vocab, "");
    std::string most_common;
    int best_total = -1;
    for (const auto& [ph, n] : phone_totals)
      if (n > best_total) {
        best_total = n;
        most_common = ph;
      }
    for (int c = 0; c < unit_vocab; ++c) {
      auto it = counts.find(c);
      if (it == counts.end()) {
        d.table_[c] = most_common;  // unseen code
        continue;
      }
      int best = -1;
      for (const auto& [ph, n] : it->second)
        if (n > best) {  // ties resolve to the lexicographically smallest (map order)
          best = n;
          d.table_[c] = ph;
        }
    }
    return d;
  }

  // collapse consecutive duplicates into a phone token sequence
  std::vector<std::string> decode(const std::vector<int>& codes) const {
    std::vector<std::string> out;
    for (int c : codes) {
      require(c >= 0 && c < int(table_.size()), "unit code out of decoder range");
      if (out.empty() || out.back() != table_[c]) out.push_back(table_[c]);
    }
    return out;
  }

  const std::vector<std::string>& table() const { return table_; }

private:
  std::vector<std::string> table_;
};

struct EvaluateOptions {
  bool use_gt_features = false;  // bypass stage 1 and vocode ground-truth features
  bool corrupt_mel = false;      // blur+noise the vocoder's input mel
  vocoder::MelAugmentConfig corruption;
  uint64_t corruption_seed = 1;
  int workers = 1;
};

// Full-pipeline objective evaluation on one split: video -> (mel, units) ->
// waveform, scored against the ground-truth audio.
inline MetricsReport evaluate(const model::L2SModel* l2s, const vocoder::VocoderModel& voc,
                              const data::Manifest& manifest, const std::string& split,
                              const EvaluateOptions& opt = {}) {
  require(opt.use_gt_features || l2s != nullptr,
          "full-pipeline evaluation needs an L2S model");
  auto records = manifest.split_records(split);
  require(!records.empty(), "split '", split, "' is empty");
  auto unit_map = data::load_unit_map(manifest);
  auto codebook = units::codebook_load(manifest.codebook_file());

  signal::AudioConfig acfg;
  auto decoder = UnitPhoneDecoder::fit(manifest, unit_map, codebook.k);

  MetricsReport report;
  report.split = split;
  report.count = int(records.size());
  report.per_utterance.resize(records.size());

  parallel_for(int(records.size()), opt.workers, [&](int i) {
    const auto& r = *records[i];
    auto gt_wav = wav_read(manifest.wav_file(r));
    auto spk = data::speaker_embedding(manifest.speaker(r.speaker_id));
    const auto& gt_units = unit_map.at(r.utt_id);

    Mat mel_in;
    std::vector<int> unit_in;
    std::vector<int> predicted_units;
    if (opt.use_gt_features) {
      mel_in = signal::log_mel(gt_wav, acfg).frames;
      unit_in = gt_units.codes;
      predicted_units = gt_units.codes;
    } else {
      auto video = data::frames_load(manifest.frames_file(r));
      auto [mel_pred, units_pred] = l2s->infer(video, spk);
      mel_in = std::move(mel_pred.frames);
      unit_in = units_pred.codes;
      predicted_units = units_pred.codes;
    }

    if (opt.corrupt_mel) {
      Rng rng(opt.corruption_seed ^ hash_str(r.utt_id));
      signal::MelSpectrogram m{std::move(mel_in), 100.0};
      mel_in = vocoder::augment_mel(m, rng, opt.corruption).frames;
    }

    auto gen = voc.generate_waveform(mel_in, unit_in, spk.vector, gt_wav.sample_rate_hz);
    size_t n = std::min(gen.samples.size(), gt_wav.samples.size());
    gen.samples.resize(n);
    Waveform gt_trim = gt_wav;
    gt_trim.samples.resize(n);

    UtteranceMetrics um;
    um.utt_id = r.utt_id;
    um.speaker_id = r.speaker_id;
    um.stoi = stoi(gt_trim, gen);
    um.estoi = estoi(gt_trim, gen);
    um.uer = error_rate(gt_units.codes, predicted_units);
    um.wer = error_rate(r.transcript, decoder.decode(predicted_units));
    report.per_utterance[i] = um;
  });

  for (const auto& u : report.per_utterance) {
    report.mean_stoi += u.stoi;
    report.mean_estoi += u.estoi;
    report.mean_uer += u.uer;
    report.mean_wer += u.wer;
  }
  report.mean_stoi /= report.count;
  report.mean_estoi /= report.count;
  report.mean_uer /= report.count;
  report.mean_wer /= report.count;
  return report;
}

}  // namespace l2s::metrics
