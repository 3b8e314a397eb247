#pragma once

#include "l2s/data/video.hpp"

namespace l2s::model {

struct VideoAugmentConfig {
  int crop_size = 20;            // 24 -> 20, the desk-scale analog of 96 -> 88
  double flip_p = 0.5;
  double erase_p = 0.5;
  double erase_max_area = 0.25;  // fraction of the cropped frame
  double time_mask_p = 0.5;
  double time_mask_max_frac = 0.10;
};

namespace detail {

inline data::VisualSequence crop(const data::VisualSequence& in, int oy, int ox, int size) {
  data::VisualSequence out;
  out.frames = in.frames;
  out.height = size;
  out.width = size;
  out.frame_rate_hz = in.frame_rate_hz;
  out.data.resize(size_t(in.frames) * size * size);
  for (int t = 0; t < in.frames; ++t)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) out.at(t, y, x) = in.at(t, oy + y, ox + x);
  return out;
}

inline void hflip(data::VisualSequence& v) {
  for (int t = 0; t < v.frames; ++t)
    for (int y = 0; y < v.height; ++y)
      for (int x = 0; x < v.width / 2; ++x)
        std::swap(v.at(t, y, x), v.at(t, y, v.width - 1 - x));
}

}  // namespace detail

// Training path: random crop, horizontal flip, random erasing, time masking.
// Evaluation path: deterministic center crop only.
inline data::VisualSequence augment_video(const data::VisualSequence& frames, Rng& rng,
                                          const VideoAugmentConfig& cfg, bool train) {
  require(cfg.crop_size >= 1 && cfg.crop_size <= frames.height && cfg.crop_size <= frames.width,
          "crop size ", cfg.crop_size, " larger than frame ", frames.height, "x", frames.width);
  int margin_y = frames.height - cfg.crop_size;
  int margin_x = frames.width - cfg.crop_size;

  if (!train) return detail::crop(frames, margin_y / 2, margin_x / 2, cfg.crop_size);

  int oy = margin_y > 0 ? int(rng.uniform_int(uint64_t(margin_y + 1))) : 0;
  int ox = margin_x > 0 ? int(rng.uniform_int(uint64_t(margin_x + 1))) : 0;
  auto out = detail::crop(frames, oy, ox, cfg.crop_size);

  if (rng.bernoulli(cfg.flip_p)) detail::hflip(out);

  if (rng.bernoulli(cfg.erase_p)) {
    // one rectangle covering at most erase_max_area of the frame, zeroed
    int max_h = std::max(1, int(std::sqrt(cfg.erase_max_area) * cfg.crop_size));
    int eh = 1 + int(rng.uniform_int(uint64_t(max_h)));
    int ew = 1 + int(rng.uniform_int(uint64_t(max_h)));
    int ey = int(rng.uniform_int(uint64_t(cfg.crop_size - eh + 1)));
    int ex = int(rng.uniform_int(uint64_t(cfg.crop_size - ew + 1)));
    for (int t = 0; t < out.frames; ++t)
      for (int y = ey; y < ey + eh; ++y)
        for (int x = ex; x < ex + ew; ++x) out.at(t, y, x) = 0.0;
  }

  if (rng.bernoulli(cfg.time_mask_p) && out.frames > 1) {
    int max_len = std::max(1, int(cfg.time_mask_max_frac * out.frames));
    int len = 1 + int(rng.uniform_int(uint64_t(max_len)));
    int start = int(rng.uniform_int(uint64_t(out.frames - len + 1)));
    for (int t = start; t < start + len; ++t)
      for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) out.at(t, y, x) = 0.0;
  }
  return out;
}

}  // namespace l2s::model
