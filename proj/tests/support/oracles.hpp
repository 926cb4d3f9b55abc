#pragma once

// Independent reference implementations used only by tests. Each one takes
// the most direct route available and shares no code with the library
// beyond plain data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "nonpsa/matrix.hpp"
#include "nonpsa/types.hpp"

namespace oracle {

struct Neighbour {
  std::string id;
  double distance;
  std::uint64_t rank;
};

struct FlatEntry {
  std::string id;
  std::vector<float> key;
  std::uint64_t rank;
};

inline double sq_dist(const std::vector<float>& a, const std::vector<float>& b) {
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = static_cast<double>(a[j]) - static_cast<double>(b[j]);
    acc += d * d;
  }
  return acc;
}

/// Computes every distance, sorts everything, takes the first k.
/// `use_sqrt` ranks by plain L2 instead of squared L2.
inline std::vector<Neighbour> exhaustive_knn(const std::vector<FlatEntry>& entries,
                                             const std::vector<float>& query, std::size_t k,
                                             bool use_sqrt = false) {
  std::vector<Neighbour> all;
  for (const auto& e : entries) {
    const double d = sq_dist(e.key, query);
    all.push_back({e.id, use_sqrt ? std::sqrt(d) : d, e.rank});
  }
  std::sort(all.begin(), all.end(), [](const Neighbour& a, const Neighbour& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.rank < b.rank;
  });
  all.resize(std::min(k, all.size()));
  return all;
}

/// Column means with Neumaier-compensated summation.
inline std::vector<double> compensated_mean(const nonpsa::FrameMatrix& m) {
  std::vector<double> out(m.cols());
  for (std::size_t j = 0; j < m.cols(); ++j) {
    double sum = 0.0;
    double comp = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) {
      const double x = m(i, j);
      const double t = sum + x;
      comp += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
      sum = t;
    }
    out[j] = (sum + comp) / static_cast<double>(m.rows());
  }
  return out;
}

/// Direct O(T^2) silhouette: recomputes every distance for every frame.
inline double silhouette(const nonpsa::FrameMatrix& x, const std::vector<std::uint32_t>& labels,
                         std::size_t clusters) {
  const std::size_t t = x.rows();
  auto dist = [&](std::size_t i, std::size_t j) {
    double acc = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      const double d = static_cast<double>(x(i, c)) - static_cast<double>(x(j, c));
      acc += d * d;
    }
    return std::sqrt(acc);
  };
  double total = 0.0;
  for (std::size_t i = 0; i < t; ++i) {
    double a_sum = 0.0;
    std::size_t a_count = 0;
    for (std::size_t j = 0; j < t; ++j) {
      if (j != i && labels[j] == labels[i]) {
        a_sum += dist(i, j);
        ++a_count;
      }
    }
    if (a_count == 0) continue;  // singleton
    const double a = a_sum / static_cast<double>(a_count);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < clusters; ++c) {
      if (c == labels[i]) continue;
      double s = 0.0;
      std::size_t n = 0;
      for (std::size_t j = 0; j < t; ++j) {
        if (labels[j] == c) {
          s += dist(i, j);
          ++n;
        }
      }
      if (n > 0) b = std::min(b, s / static_cast<double>(n));
    }
    const double m = std::max(a, b);
    total += m > 0.0 ? (b - a) / m : 0.0;
  }
  return total / static_cast<double>(t);
}

/// Sum of squared distances from each frame to its cluster's centroid.
inline double inertia(const nonpsa::FrameMatrix& x, const std::vector<std::uint32_t>& labels,
                      const nonpsa::FrameMatrix& centroids) {
  double total = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      const double d = static_cast<double>(x(i, c)) - static_cast<double>(centroids(labels[i], c));
      total += d * d;
    }
  }
  return total;
}

/// Brute-force pair counting: returns 2 * (concordant + ties / 2) so the
/// count stays integral.
inline std::uint64_t twice_mann_whitney(const std::vector<double>& scores,
                                        const std::vector<nonpsa::Label>& labels) {
  std::uint64_t twice = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != nonpsa::Label::Symptomatic) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != nonpsa::Label::Asymptomatic) continue;
      if (scores[i] > scores[j]) twice += 2;
      if (scores[i] == scores[j]) twice += 1;
    }
  }
  return twice;
}

inline double auc_pairs(const std::vector<double>& scores, const std::vector<nonpsa::Label>& labels) {
  const auto pos = static_cast<double>(std::count(labels.begin(), labels.end(), nonpsa::Label::Symptomatic));
  const auto neg = static_cast<double>(labels.size()) - pos;
  return static_cast<double>(twice_mann_whitney(scores, labels)) / (2.0 * pos * neg);
}

/// Mean and population std by two passes.
inline std::pair<double, double> two_pass(const std::vector<double>& v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size()))};
}

struct Counts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

inline Counts count_confusion(const std::vector<double>& scores, const std::vector<nonpsa::Label>& labels,
                              double threshold) {
  Counts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pos = labels[i] == nonpsa::Label::Symptomatic;
    const bool pred = scores[i] > threshold;
    if (pos && pred) ++c.tp;
    if (pos && !pred) ++c.fn;
    if (!pos && pred) ++c.fp;
    if (!pos && !pred) ++c.tn;
  }
  return c;
}

}  // namespace oracle
