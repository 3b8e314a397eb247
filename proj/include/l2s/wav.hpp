#pragma once

#include <algorithm>
#include <filesystem>

#include "l2s/common.hpp"

namespace l2s {

struct Waveform {
  std::vector<double> samples;
  int sample_rate_hz = 16000;

  double duration_s() const { return double(samples.size()) / sample_rate_hz; }
  bool empty() const { return samples.empty(); }
};

inline double peak(const Waveform& w) {
  double p = 0.0;
  for (double s : w.samples) p = std::max(p, std::fabs(s));
  return p;
}

inline double rms(const Waveform& w) {
  if (w.samples.empty()) return 0.0;
  double acc = 0.0;
  for (double s : w.samples) acc += s * s;
  return std::sqrt(acc / double(w.samples.size()));
}

inline void peak_normalize(Waveform& w, double target = 0.9) {
  double p = peak(w);
  if (p <= 0.0) return;
  double g = target / p;
  for (double& s : w.samples) s *= g;
}

// 16-bit PCM mono WAV.
inline void wav_write(const Waveform& w, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "cannot open for writing: ", path.string());
  uint32_t n = uint32_t(w.samples.size());
  uint32_t data_bytes = n * 2;
  uint32_t sr = uint32_t(w.sample_rate_hz);
  os.write("RIFF", 4);
  write_u32(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  write_u32(os, 16);
  write_u32(os, (1u << 16) | 1u);     // PCM, mono
  write_u32(os, sr);
  write_u32(os, sr * 2);              // byte rate
  write_u32(os, (16u << 16) | 2u);    // block align 2, 16 bits
  os.write("data", 4);
  write_u32(os, data_bytes);
  for (double s : w.samples) {
    double c = std::clamp(s, -1.0, 1.0);
    int v = int(std::lround(c * 32767.0));
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 2);
  }
  require(os.good(), "write failed: ", path.string());
}

inline Waveform wav_read(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "cannot open: ", path.string());
  expect_magic(is, "RIFF", "WAV header");
  read_u32(is);
  expect_magic(is, "WAVE", "WAV header");

  Waveform w;
  bool got_fmt = false, got_data = false;
  while (is && !(got_fmt && got_data)) {
    char id[4];
    is.read(id, 4);
    if (!is) break;
    uint32_t size = read_u32(is);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      uint32_t fmt_ch = read_u32(is);
      require((fmt_ch & 0xffff) == 1, "only PCM WAV supported: ", path.string());
      require((fmt_ch >> 16) == 1, "only mono WAV supported: ", path.string());
      w.sample_rate_hz = int(read_u32(is));
      read_u32(is);
      uint32_t ba_bits = read_u32(is);
      require((ba_bits >> 16) == 16, "only 16-bit WAV supported: ", path.string());
      if (size > 16) is.seekg(size - 16, std::ios::cur);
      got_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      require(got_fmt, "WAV data chunk before fmt chunk: ", path.string());
      uint32_t n = size / 2;
      w.samples.resize(n);
      for (uint32_t i = 0; i < n; ++i) {
        unsigned char b[2];
        is.read(reinterpret_cast<char*>(b), 2);
        if (!is) fail("truncated WAV data: ", path.string());
        int16_t v = int16_t(uint16_t(b[0]) | (uint16_t(b[1]) << 8));
        w.samples[i] = double(v) / 32767.0;
      }
      got_data = true;
    } else {
      is.seekg(size + (size & 1), std::ios::cur);
    }
  }
  require(got_data, "WAV file has no data chunk: ", path.string());
  return w;
}

// Test-signal helpers.
inline Waveform sine_wave(double freq_hz, double dur_s, int sr = 16000, double amp = 1.0) {
  Waveform w;
  w.sample_rate_hz = sr;
  int n = int(std::lround(dur_s * sr));
  w.samples.resize(n);
  for (int i = 0; i < n; ++i) w.samples[i] = amp * std::sin(2.0 * M_PI * freq_hz * i / sr);
  return w;
}

inline Waveform white_noise(double dur_s, uint64_t seed, int sr = 16000, double amp = 0.5) {
  Rng rng(seed);
  Waveform w;
  w.sample_rate_hz = sr;
  int n = int(std::lround(dur_s * sr));
  w.samples.resize(n);
  for (int i = 0; i < n; ++i) w.samples[i] = amp * (2.0 * rng.uniform() - 1.0);
  return w;
}

}  // namespace l2s
