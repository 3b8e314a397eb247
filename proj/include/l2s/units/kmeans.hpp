#pragma once

#include <algorithm>

#include "l2s/units/codebook.hpp"

namespace l2s::units {

struct KmeansResult {
  Codebook codebook;
  std::vector<double> distortion_history;  // total squared distance per Lloyd iteration
  int iterations = 0;
};

namespace detail {

inline double sq_dist(const double* a, const double* b, int d) {
  double acc = 0.0;
  for (int i = 0; i < d; ++i) {
    double diff = a[i] - b[i];
    acc += diff * diff;
  }
  return acc;
}

inline int count_distinct_rows(const Mat& pts) {
  std::vector<int> idx(pts.rows);
  for (int i = 0; i < pts.rows; ++i) idx[i] = i;
  auto less = [&](int a, int b) {
    return std::lexicographical_compare(pts.row(a), pts.row(a) + pts.cols, pts.row(b),
                                        pts.row(b) + pts.cols);
  };
  std::sort(idx.begin(), idx.end(), less);
  int distinct = pts.rows == 0 ? 0 : 1;
  for (int i = 1; i < pts.rows; ++i)
    if (!std::equal(pts.row(idx[i - 1]), pts.row(idx[i - 1]) + pts.cols, pts.row(idx[i])))
      ++distinct;
  return distinct;
}

}  // namespace detail

// Lloyd's algorithm with k-means++ initialization. Deterministic for a given
// seed; empty clusters are re-seeded to the point farthest from its centroid;
// stops when the relative distortion improvement drops below tol.
inline KmeansResult kmeans_fit(const std::vector<FeatureSequence>& features, int k, uint64_t seed,
                               int max_iters = 100, double tol = 1e-6) {
  require(k >= 1, "K must be >= 1, got ", k);
  require(!features.empty(), "no feature sequences given");
  int dim = features[0].dim();
  std::string extractor_id = features[0].extractor_id;
  size_t total = 0;
  for (const auto& f : features) {
    require(f.dim() == dim, "inconsistent feature dims in k-means input");
    total += size_t(f.num_frames());
  }
  require(int(total) >= k, "need at least K=", k, " frames, got ", total);

  Mat pts(int(total), dim);
  {
    int r = 0;
    for (const auto& f : features)
      for (int t = 0; t < f.num_frames(); ++t, ++r)
        std::copy(f.frames.row(t), f.frames.row(t) + dim, pts.row(r));
  }
  require(detail::count_distinct_rows(pts) >= k, "fewer than K=", k, " distinct points");

  int n = pts.rows;
  Rng rng(seed);

  // k-means++ seeding
  Mat centroids(k, dim);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  {
    int first = int(rng.uniform_int(uint64_t(n)));
    std::copy(pts.row(first), pts.row(first) + dim, centroids.row(0));
    for (int c = 1; c < k; ++c) {
      double total_d2 = 0.0;
      for (int i = 0; i < n; ++i) {
        d2[i] = std::min(d2[i], detail::sq_dist(pts.row(i), centroids.row(c - 1), dim));
        total_d2 += d2[i];
      }
      int pick = 0;
      if (total_d2 > 0.0) {
        double target = rng.uniform() * total_d2;
        double acc = 0.0;
        pick = n - 1;
        for (int i = 0; i < n; ++i) {
          acc += d2[i];
          if (acc >= target) {
            pick = i;
            break;
          }
        }
      } else {
        pick = int(rng.uniform_int(uint64_t(n)));
      }
      std::copy(pts.row(pick), pts.row(pick) + dim, centroids.row(c));
    }
  }

  std::vector<int> assign(n, -1);
  std::vector<double> assign_d2(n, 0.0);
  std::vector<int> counts(k, 0);
  KmeansResult result;

  for (int it = 0; it < max_iters; ++it) {
    // assignment; ties break toward the lowest centroid index
    double distortion = 0.0;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = detail::sq_dist(pts.row(i), centroids.row(0), dim);
      for (int c = 1; c < k; ++c) {
        double d = detail::sq_dist(pts.row(i), centroids.row(c), dim);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      assign[i] = best;
      assign_d2[i] = best_d;
      distortion += best_d;
    }
    if (!result.distortion_history.empty())
      require(distortion <= result.distortion_history.back() + 1e-9,
              "k-means distortion increased between iterations");
    result.distortion_history.push_back(distortion);
    result.iterations = it + 1;

    bool converged = result.distortion_history.size() >= 2;
    if (converged) {
      double prev = result.distortion_history[result.distortion_history.size() - 2];
      double rel = prev > 0.0 ? (prev - distortion) / prev : 0.0;
      converged = rel < tol;
    }
    if (converged) break;

    // update
    std::fill(counts.begin(), counts.end(), 0);
    Mat sums(k, dim);
    for (int i = 0; i < n; ++i) {
      ++counts[assign[i]];
      const double* p = pts.row(i);
      double* s = sums.row(assign[i]);
      for (int j = 0; j < dim; ++j) s[j] += p[j];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        for (int j = 0; j < dim; ++j) centroids.at(c, j) = sums.at(c, j) / counts[c];
      } else {
        int farthest = int(std::max_element(assign_d2.begin(), assign_d2.end()) -
                           assign_d2.begin());
        std::copy(pts.row(farthest), pts.row(farthest) + dim, centroids.row(c));
        assign_d2[farthest] = 0.0;  // do not reuse the same point for another empty cluster
      }
    }
  }

  result.codebook.centroids = std::move(centroids);
  result.codebook.k = k;
  result.codebook.feature_dim = dim;
  result.codebook.training_seed = seed;
  result.codebook.extractor_id = extractor_id;
  return result;
}

}  // namespace l2s::units
