#pragma once

#include <array>
#include <map>
#include <optional>

#include "l2s/common.hpp"

namespace l2s::data {

struct Articulation {
  double aperture = 0.0;    // mouth opening, [0,1]
  double width = 0.5;       // horizontal spread, [0,1]
  double protrusion = 0.3;  // rounding/brightness, [0,1]

  bool operator==(const Articulation&) const = default;
};

struct PhoneSpec {
  std::string symbol;
  std::array<double, 3> formants_hz;
  Articulation articulation;
  bool voiced = true;

  void validate() const {
    require(formants_hz[0] < formants_hz[1] && formants_hz[1] < formants_hz[2],
            "formants must be strictly increasing for phone ", symbol);
    for (double a : {articulation.aperture, articulation.width, articulation.protrusion})
      require(a >= 0.0 && a <= 1.0, "articulation out of [0,1] for phone ", symbol);
  }
};

// Twelve-phone inventory. Three homophene pairs share an articulation triple
// (identical mouth shape) while sounding different: ss/zz, ff/vv, pp/bb.
inline const std::vector<PhoneSpec>& phone_inventory() {
  static const std::vector<PhoneSpec> inv = [] {
    std::vector<PhoneSpec> v = {
        {"aa", {730.0, 1090.0, 2440.0}, {0.90, 0.55, 0.30}, true},
        {"ee", {530.0, 1840.0, 2480.0}, {0.55, 0.75, 0.25}, true},
        {"ii", {270.0, 2290.0, 3010.0}, {0.30, 0.85, 0.20}, true},
        {"oo", {570.0, 840.0, 2410.0}, {0.60, 0.35, 0.80}, true},
        {"uu", {300.0, 870.0, 2240.0}, {0.35, 0.30, 0.90}, true},
        {"mm", {250.0, 1200.0, 2100.0}, {0.05, 0.50, 0.40}, true},
        {"ss", {2500.0, 4500.0, 6500.0}, {0.15, 0.60, 0.20}, false},
        {"zz", {2500.0, 4500.0, 6500.0}, {0.15, 0.60, 0.20}, true},
        {"ff", {1800.0, 3600.0, 5600.0}, {0.10, 0.45, 0.60}, false},
        {"vv", {1000.0, 2200.0, 3400.0}, {0.10, 0.45, 0.60}, true},
        {"pp", {800.0, 1800.0, 3000.0}, {0.00, 0.30, 0.30}, false},
        {"bb", {600.0, 1400.0, 2600.0}, {0.00, 0.30, 0.30}, true},
    };
    for (const auto& p : v) p.validate();
    return v;
  }();
  return inv;
}

inline const PhoneSpec& phone_by_symbol(const std::string& symbol) {
  for (const auto& p : phone_inventory())
    if (p.symbol == symbol) return p;
  fail("unknown phone symbol: ", symbol);
}

// Partner with the same mouth shape but a different sound, if any.
inline std::optional<std::string> homophene_partner(const std::string& symbol) {
  static const std::map<std::string, std::string> pairs = {
      {"ss", "zz"}, {"zz", "ss"}, {"ff", "vv"}, {"vv", "ff"}, {"pp", "bb"}, {"bb", "pp"},
  };
  auto it = pairs.find(symbol);
  if (it == pairs.end()) return std::nullopt;
  return it->second;
}

inline std::vector<std::pair<std::string, std::string>> homophene_pairs() {
  return {{"ss", "zz"}, {"ff", "vv"}, {"pp", "bb"}};
}

}  // namespace l2s::data
