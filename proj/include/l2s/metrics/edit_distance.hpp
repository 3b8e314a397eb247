#pragma once

#include "l2s/common.hpp"

namespace l2s::metrics {

// Levenshtein distance with unit costs.
template <typename Token>
inline int edit_distance(const std::vector<Token>& ref, const std::vector<Token>& hyp) {
  size_t n = ref.size(), m = hyp.size();
  std::vector<int> prev(m + 1), cur(m + 1);
  for (size_t j = 0; j <= m; ++j) prev[j] = int(j);
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = int(i);
    for (size_t j = 1; j <= m; ++j) {
      int sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

// Normalized by reference length (the usual WER/UER convention).
template <typename Token>
inline double error_rate(const std::vector<Token>& ref, const std::vector<Token>& hyp) {
  require(!ref.empty(), "error_rate needs a non-empty reference");
  return double(edit_distance(ref, hyp)) / double(ref.size());
}

}  // namespace l2s::metrics
