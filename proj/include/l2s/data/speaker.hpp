#pragma once

#include "l2s/common.hpp"

namespace l2s::data {

struct SpeakerSpec {
  int speaker_id = 0;
  double f0_hz = 120.0;
  double formant_scale = 1.0;
  double amplitude = 0.9;

  void validate() const {
    require(f0_hz > 0.0, "f0 must be positive for speaker ", speaker_id);
    require(formant_scale > 0.0, "formant_scale must be positive for speaker ", speaker_id);
  }
};

struct SpeakerEmbedding {
  std::vector<double> vector;  // 256-dim, unit L2 norm
  int speaker_id = 0;
};

inline constexpr int kSpeakerEmbeddingDim = 256;

// d-vector stand-in: a unit Gaussian vector seeded by speaker_id, L2
// normalized. Stable across runs and processes.
inline SpeakerEmbedding speaker_embedding(const SpeakerSpec& speaker) {
  speaker.validate();
  Rng rng(0x5eedULL * 0x100000001b3ULL + uint64_t(speaker.speaker_id) * 0x9e3779b97f4a7c15ULL);
  SpeakerEmbedding e;
  e.speaker_id = speaker.speaker_id;
  e.vector.resize(kSpeakerEmbeddingDim);
  double norm2 = 0.0;
  for (double& v : e.vector) {
    v = rng.normal();
    norm2 += v * v;
  }
  double inv = 1.0 / std::sqrt(norm2);
  for (double& v : e.vector) v *= inv;
  return e;
}

// Deterministic roster: f0 alternates low/high around 90-250 Hz, with mild
// formant scaling per speaker.
inline std::vector<SpeakerSpec> make_speakers(int count, uint64_t seed) {
  require(count >= 1, "need at least one speaker");
  Rng rng(seed ^ 0x73706b72ULL);
  std::vector<SpeakerSpec> out(count);
  for (int i = 0; i < count; ++i) {
    auto& s = out[i];
    s.speaker_id = i;
    s.f0_hz = 90.0 + 160.0 * ((i % 2 == 0) ? rng.uniform(0.0, 0.4) : rng.uniform(0.6, 1.0));
    s.formant_scale = rng.uniform(0.85, 1.2);
    s.amplitude = rng.uniform(0.7, 0.9);
  }
  return out;
}

}  // namespace l2s::data
