#pragma once

#include "l2s/data/phones.hpp"
#include "l2s/data/speaker.hpp"
#include "l2s/data/video.hpp"
#include "l2s/wav.hpp"

namespace l2s::data {

struct PhoneToken {
  std::string symbol;
  int duration_ms = 0;
};

struct SynthResult {
  Waveform audio;
  VisualSequence video;
  std::vector<std::string> transcript;
};

inline constexpr int kFrameMs = 40;  // one video frame = 2 units = 4 mel frames

namespace detail {

// Two-pole resonator, unity gain at DC (Klatt convention).
struct Resonator {
  double a = 1.0, b = 0.0, c = 0.0;
  double y1 = 0.0, y2 = 0.0;

  void configure(double freq_hz, double bw_hz, double fs) {
    double r = std::exp(-M_PI * bw_hz / fs);
    c = -r * r;
    b = 2.0 * r * std::cos(2.0 * M_PI * freq_hz / fs);
    a = 1.0 - b - c;
    y1 = y2 = 0.0;
  }

  double tick(double x) {
    double y = a * x + b * y1 + c * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

}  // namespace detail

// Formant source-filter synthesis paired with lip rendering. Voiced phones
// use an impulse train at the speaker f0 (phase continuous across the whole
// utterance); unvoiced phones use seeded white noise. Each phone is filtered
// through three resonators at speaker-scaled formants and neighboring phones
// are cross-faded over 10 ms. Output is peak-normalized to 0.9.
inline SynthResult synth_utterance(const std::vector<PhoneToken>& phones,
                                   const SpeakerSpec& speaker, uint64_t seed) {
  require(!phones.empty(), "empty phone sequence");
  speaker.validate();
  int sr = 16000;
  int total_ms = 0;
  for (const auto& tok : phones) {
    require(tok.duration_ms > 0 && tok.duration_ms % kFrameMs == 0, "phone '", tok.symbol,
            "' duration ", tok.duration_ms, " ms is not a positive multiple of ", kFrameMs,
            " ms");
    phone_by_symbol(tok.symbol);  // throws on unknown symbol
    total_ms += tok.duration_ms;
  }
  int n = total_ms * sr / 1000;

  // audio
  Rng noise_rng(seed ^ 0xa0d10ULL);
  std::vector<double> audio(n, 0.0);
  const int half_fade = sr / 100 / 2;  // 10 ms crossfade centered on the boundary
  double period = sr / speaker.f0_hz;
  const std::array<double, 3> bandwidths = {90.0, 120.0, 160.0};

  int start = 0;
  for (const auto& tok : phones) {
    const PhoneSpec& ph = phone_by_symbol(tok.symbol);
    int len = tok.duration_ms * sr / 1000;
    int seg_lo = std::max(0, start - half_fade);
    int seg_hi = std::min(n, start + len + half_fade);

    std::array<detail::Resonator, 3> res;
    for (int i = 0; i < 3; ++i) {
      double f = std::min(ph.formants_hz[i] * speaker.formant_scale, 0.47 * sr);
      res[i].configure(f, bandwidths[i], sr);
    }

    Rng seg_noise = noise_rng.fork(uint64_t(start));
    double prev_noise = 0.0;
    for (int i = seg_lo; i < seg_hi; ++i) {
      double src;
      if (ph.voiced) {
        // impulse at every period boundary measured from utterance start
        double ph_pos = std::fmod(double(i), period);
        src = ph_pos < 1.0 ? 1.0 : 0.0;
      } else {
        // first-differenced noise: frication has no voice bar at low freq
        double n = 2.0 * seg_noise.uniform() - 1.0;
        src = 0.3 * (n - prev_noise);
        prev_noise = n;
      }
      double y = src;
      for (auto& r : res) y = r.tick(y);

      double gain = 1.0;
      if (i < start + half_fade) gain = (i - (start - half_fade)) / double(2 * half_fade);
      else if (i >= start + len - half_fade)
        gain = ((start + len + half_fade) - i) / double(2 * half_fade);
      gain = std::clamp(gain, 0.0, 1.0);
      audio[i] += speaker.amplitude * gain * y;
    }
    start += len;
  }

  SynthResult out;
  out.audio.sample_rate_hz = sr;
  out.audio.samples = std::move(audio);
  peak_normalize(out.audio, 0.9);

  // video: articulation sampled at frame centers; boundaries interpolate
  // linearly over a 40 ms window centered on the phone change
  int t_frames = total_ms / kFrameMs;
  Mat traj(t_frames, 3);
  for (int f = 0; f < t_frames; ++f) {
    double center_ms = f * kFrameMs + kFrameMs / 2.0;
    double acc_ms = 0.0;
    Articulation cur{}, nxt{};
    bool set = false;
    for (size_t p = 0; p < phones.size(); ++p) {
      double lo = acc_ms, hi = acc_ms + phones[p].duration_ms;
      acc_ms = hi;
      if (center_ms < lo || center_ms >= hi) continue;
      cur = phone_by_symbol(phones[p].symbol).articulation;
      set = true;
      double blend = 0.0;
      if (p + 1 < phones.size() && center_ms > hi - kFrameMs / 2.0) {
        nxt = phone_by_symbol(phones[p + 1].symbol).articulation;
        blend = (center_ms - (hi - kFrameMs / 2.0)) / double(kFrameMs);
      } else if (p > 0 && center_ms < lo + kFrameMs / 2.0) {
        nxt = phone_by_symbol(phones[p - 1].symbol).articulation;
        blend = ((lo + kFrameMs / 2.0) - center_ms) / double(kFrameMs);
      }
      traj.at(f, 0) = cur.aperture + blend * (nxt.aperture - cur.aperture);
      traj.at(f, 1) = cur.width + blend * (nxt.width - cur.width);
      traj.at(f, 2) = cur.protrusion + blend * (nxt.protrusion - cur.protrusion);
      break;
    }
    require(set, "frame center not covered by any phone");
  }
  out.video = render_lip_frames(traj);

  out.transcript.reserve(phones.size());
  for (const auto& tok : phones) out.transcript.push_back(tok.symbol);
  return out;
}

}  // namespace l2s::data
