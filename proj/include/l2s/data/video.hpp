#pragma once

#include <filesystem>

#include "l2s/common.hpp"

namespace l2s::data {

struct VisualSequence {
  int frames = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;  // frames * height * width, values in [0,1]
  double frame_rate_hz = 25.0;

  double& at(int t, int y, int x) { return data[(size_t(t) * height + y) * width + x]; }
  double at(int t, int y, int x) const { return data[(size_t(t) * height + y) * width + x]; }

  bool operator==(const VisualSequence& o) const {
    return frames == o.frames && height == o.height && width == o.width && data == o.data;
  }
};

inline constexpr int kLipImageSize = 24;

// Renders one mouth frame per trajectory row: an anti-aliased ellipse whose
// horizontal radius tracks `width`, vertical radius tracks `aperture`, and
// brightness tracks `protrusion`. Zero aperture renders an empty (closed)
// mouth: no pixel reaches the 0.5 lit threshold.
inline VisualSequence render_lip_frames(const Mat& trajectory, int size = kLipImageSize) {
  require(trajectory.cols == 3, "trajectory must be T x 3 (aperture, width, protrusion)");
  for (double v : trajectory.data)
    require(v >= 0.0 && v <= 1.0, "trajectory value out of [0,1]: ", v);

  VisualSequence vs;
  vs.frames = trajectory.rows;
  vs.height = size;
  vs.width = size;
  vs.data.assign(size_t(vs.frames) * size * size, 0.0);

  double cx = (size - 1) / 2.0, cy = (size - 1) / 2.0;
  for (int t = 0; t < trajectory.rows; ++t) {
    double aperture = trajectory.at(t, 0);
    double width = trajectory.at(t, 1);
    double protrusion = trajectory.at(t, 2);
    double rx = 2.0 + (size * 0.38 - 2.0) * width;
    double ry = size * 0.4 * aperture;
    double brightness = 0.55 + 0.45 * protrusion;

    // faint lip line so the closed mouth is still visible (below lit threshold)
    double line = 0.3 * brightness;
    for (int x = 0; x < size; ++x) {
      double dx = (x - cx) / std::max(rx, 1.0);
      if (std::fabs(dx) <= 1.0) vs.at(t, int(cy), x) = line * (1.0 - 0.5 * dx * dx);
    }
    if (ry <= 0.0) continue;

    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        // 3x3 supersampled coverage
        int inside = 0;
        for (int sy = 0; sy < 3; ++sy)
          for (int sx = 0; sx < 3; ++sx) {
            double px = x + (sx - 1) / 3.0 - cx;
            double py = y + (sy - 1) / 3.0 - cy;
            double d = (px * px) / (rx * rx) + (py * py) / (ry * ry);
            if (d <= 1.0) ++inside;
          }
        if (inside > 0) {
          double v = brightness * (inside / 9.0);
          vs.at(t, y, x) = std::max(vs.at(t, y, x), v);
        }
      }
    }
  }
  return vs;
}

inline int lit_pixel_count(const VisualSequence& vs, int t, double threshold = 0.5) {
  int n = 0;
  for (int y = 0; y < vs.height; ++y)
    for (int x = 0; x < vs.width; ++x)
      if (vs.at(t, y, x) > threshold) ++n;
  return n;
}

// ---- VIDF binary container: "VIDF", u32 T, u32 H, u32 W, f32 data ----

inline void frames_save(const VisualSequence& vs, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "cannot open for writing: ", path.string());
  write_magic(os, "VIDF");
  write_u32(os, uint32_t(vs.frames));
  write_u32(os, uint32_t(vs.height));
  write_u32(os, uint32_t(vs.width));
  for (double v : vs.data) write_f32(os, float(v));
  require(os.good(), "write failed: ", path.string());
}

inline VisualSequence frames_load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "cannot open: ", path.string());
  expect_magic(is, "VIDF", path.string());
  VisualSequence vs;
  vs.frames = int(read_u32(is));
  vs.height = int(read_u32(is));
  vs.width = int(read_u32(is));
  require(vs.frames >= 0 && vs.height > 0 && vs.width > 0, "corrupt VIDF header: ",
          path.string());
  vs.data.resize(size_t(vs.frames) * vs.height * vs.width);
  for (double& v : vs.data) v = read_f32(is);
  require(bool(is), "truncated VIDF file: ", path.string());
  return vs;
}

}  // namespace l2s::data
