#include "nonpsa/segmentation.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "nonpsa/error.hpp"
#include "nonpsa/parallel.hpp"

namespace nonpsa {

namespace {

using Centers = std::vector<double>;  // n x D, row-major

double sq_dist(std::span<const float> x, const double* c) noexcept {
  double acc = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double d = static_cast<double>(x[j]) - c[j];
    acc += d * d;
  }
  return acc;
}

// Uniform double in [0, 1) from the top 53 bits; the standard distributions
// are not specified bit-for-bit across library vendors.
double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Greedy k-means++: each new center is the best of several D^2-weighted
// draws, judged by the resulting potential.
Centers kmeanspp(const FrameMatrix& x, std::size_t n, std::mt19937_64& rng) {
  const std::size_t t = x.rows();
  const std::size_t dim = x.cols();
  const std::size_t trials = 2 + static_cast<std::size_t>(std::log(static_cast<double>(n)));

  Centers centers(n * dim);
  auto set_center = [&](std::size_t c, std::size_t frame) {
    const auto row = x.row(frame);
    std::copy(row.begin(), row.end(), centers.begin() + static_cast<std::ptrdiff_t>(c * dim));
  };

  set_center(0, static_cast<std::size_t>(rng() % t));
  std::vector<double> closest(t);
  double potential = 0.0;
  for (std::size_t i = 0; i < t; ++i) {
    closest[i] = sq_dist(x.row(i), centers.data());
    potential += closest[i];
  }

  std::vector<double> cumulative(t);
  std::vector<double> trial_dist(t);
  std::vector<double> best_dist(t);
  for (std::size_t c = 1; c < n; ++c) {
    std::partial_sum(closest.begin(), closest.end(), cumulative.begin());
    std::size_t best_frame = 0;
    double best_potential = std::numeric_limits<double>::infinity();
    for (std::size_t trial = 0; trial < trials; ++trial) {
      std::size_t frame;
      if (potential > 0.0) {
        const double r = unit_uniform(rng) * potential;
        frame = static_cast<std::size_t>(
            std::upper_bound(cumulative.begin(), cumulative.end(), r) - cumulative.begin());
        frame = std::min(frame, t - 1);
      } else {
        frame = static_cast<std::size_t>(rng() % t);
      }
      const auto row = x.row(frame);
      std::vector<double> candidate(row.begin(), row.end());
      double pot = 0.0;
      for (std::size_t i = 0; i < t; ++i) {
        trial_dist[i] = std::min(closest[i], sq_dist(x.row(i), candidate.data()));
        pot += trial_dist[i];
      }
      if (pot < best_potential) {
        best_potential = pot;
        best_frame = frame;
        best_dist.swap(trial_dist);
      }
    }
    set_center(c, best_frame);
    closest.swap(best_dist);
    potential = best_potential;
    best_dist.resize(t);
  }
  return centers;
}

// Nearest center per frame (lowest index wins ties). Returns inertia.
double assign(const FrameMatrix& x, const Centers& centers, std::size_t n,
              std::vector<std::uint32_t>& labels, std::vector<double>& dist) {
  const std::size_t dim = x.cols();
  double inertia = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto row = x.row(i);
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t best_c = 0;
    for (std::size_t c = 0; c < n; ++c) {
      const double d = sq_dist(row, centers.data() + c * dim);
      if (d < best) {
        best = d;
        best_c = static_cast<std::uint32_t>(c);
      }
    }
    labels[i] = best_c;
    dist[i] = best;
    inertia += best;
  }
  return inertia;
}

// Moves the frame farthest from its centroid into each empty cluster, never
// emptying a donor cluster. Returns true if anything moved.
bool repair_empty(std::vector<std::uint32_t>& labels, std::vector<double>& dist, std::size_t n) {
  std::vector<std::size_t> counts(n, 0);
  for (auto l : labels) ++counts[l];
  bool moved = false;
  for (std::size_t c = 0; c < n; ++c) {
    if (counts[c] != 0) continue;
    std::size_t pick = labels.size();
    double farthest = -1.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (counts[labels[i]] > 1 && dist[i] > farthest) {
        farthest = dist[i];
        pick = i;
      }
    }
    assert(pick < labels.size());
    --counts[labels[pick]];
    labels[pick] = static_cast<std::uint32_t>(c);
    counts[c] = 1;
    dist[pick] = 0.0;
    moved = true;
  }
  return moved;
}

Centers cluster_means(const FrameMatrix& x, const std::vector<std::uint32_t>& labels, std::size_t n) {
  const std::size_t dim = x.cols();
  Centers sums(n * dim, 0.0);
  std::vector<std::size_t> counts(n, 0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto row = x.row(i);
    double* s = sums.data() + labels[i] * dim;
    for (std::size_t j = 0; j < dim; ++j) s[j] += row[j];
    ++counts[labels[i]];
  }
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t j = 0; j < dim; ++j) sums[c * dim + j] /= static_cast<double>(counts[c]);
  }
  return sums;
}

double objective(const FrameMatrix& x, const Centers& centers,
                 const std::vector<std::uint32_t>& labels, std::vector<double>& dist) {
  double inertia = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    dist[i] = sq_dist(x.row(i), centers.data() + labels[i] * x.cols());
    inertia += dist[i];
  }
  return inertia;
}

double mean_column_variance(const FrameMatrix& x) {
  const std::size_t t = x.rows();
  const std::size_t dim = x.cols();
  double total = 0.0;
  for (std::size_t j = 0; j < dim; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < t; ++i) mean += x(i, j);
    mean /= static_cast<double>(t);
    double var = 0.0;
    for (std::size_t i = 0; i < t; ++i) {
      const double d = x(i, j) - mean;
      var += d * d;
    }
    total += var / static_cast<double>(t);
  }
  return total / static_cast<double>(dim);
}

}  // namespace

std::vector<std::size_t> ClusterAssignment::cluster_sizes() const {
  std::vector<std::size_t> sizes(num_clusters(), 0);
  for (auto l : assignments) ++sizes[l];
  return sizes;
}

ClusterAssignment kmeans(const FrameMatrix& frames, std::size_t n, std::uint64_t seed,
                         const KMeansOptions& options) {
  if (n == 0) fail(ErrorCode::InvalidArgument, "k-means needs at least one cluster");
  const std::size_t t = frames.rows();
  if (t < n) {
    fail(ErrorCode::TooFewFrames, "cannot form " + std::to_string(n) + " clusters from " +
                                      std::to_string(t) + " frames");
  }
  const std::size_t dim = frames.cols();
  const double shift_tolerance = options.tolerance * mean_column_variance(frames);

  std::mt19937_64 rng(seed);
  Centers centers = kmeanspp(frames, n, rng);

  ClusterAssignment out;
  std::vector<std::uint32_t> labels(t);
  std::vector<double> dist(t);
  out.inertia_history.push_back(assign(frames, centers, n, labels, dist));

  std::vector<std::uint32_t> next_labels(t);
  for (std::size_t it = 0; it < options.max_iterations; ++it) {
    repair_empty(labels, dist, n);
    Centers updated = cluster_means(frames, labels, n);
    double shift = 0.0;
    for (std::size_t q = 0; q < updated.size(); ++q) {
      const double d = updated[q] - centers[q];
      shift += d * d;
    }
    centers = std::move(updated);
    const double inertia = assign(frames, centers, n, next_labels, dist);
    assert(inertia <= out.inertia_history.back());
    out.inertia_history.push_back(inertia);
    out.iterations = it + 1;
    const bool unchanged = next_labels == labels;
    labels.swap(next_labels);
    if (unchanged || shift <= shift_tolerance) {
      out.converged = true;
      break;
    }
  }

  // The last assignment step may have emptied a cluster.
  if (repair_empty(labels, dist, n)) {
    centers = cluster_means(frames, labels, n);
    out.inertia_history.push_back(objective(frames, centers, labels, dist));
  }

  out.inertia = out.inertia_history.back();
  out.assignments = std::move(labels);
  out.centroids = FrameMatrix(n, dim);
  for (std::size_t q = 0; q < centers.size(); ++q) out.centroids.data()[q] = static_cast<float>(centers[q]);
  return out;
}

double mean_silhouette(const FrameMatrix& frames, std::span<const std::uint32_t> labels,
                       std::size_t num_clusters) {
  if (num_clusters < 2) fail(ErrorCode::SingleCluster, "silhouette needs at least two clusters");
  const std::size_t t = frames.rows();
  if (t < 2) fail(ErrorCode::InvalidArgument, "silhouette needs at least two frames");
  if (labels.size() != t) fail(ErrorCode::InvalidArgument, "one label per frame required");

  std::vector<std::size_t> sizes(num_clusters, 0);
  for (auto l : labels) {
    if (l >= num_clusters) fail(ErrorCode::InvalidArgument, "label out of range");
    ++sizes[l];
  }

  // sums[i * n + c] = total distance from frame i to the frames of cluster c.
  std::vector<double> sums(t * num_clusters, 0.0);
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = i + 1; j < t; ++j) {
      const double d = std::sqrt(squared_l2(frames.row(i), frames.row(j)));
      sums[i * num_clusters + labels[j]] += d;
      sums[j * num_clusters + labels[i]] += d;
    }
  }

  double total = 0.0;
  for (std::size_t i = 0; i < t; ++i) {
    const std::size_t own = labels[i];
    if (sizes[own] <= 1) continue;
    const double a = sums[i * num_clusters + own] / static_cast<double>(sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < num_clusters; ++c) {
      if (c == own || sizes[c] == 0) continue;
      b = std::min(b, sums[i * num_clusters + c] / static_cast<double>(sizes[c]));
    }
    const double denom = std::max(a, b);
    if (denom > 0.0 && std::isfinite(b)) total += (b - a) / denom;
  }
  return total / static_cast<double>(t);
}

double mean_silhouette(const FrameMatrix& frames, const ClusterAssignment& assignment) {
  return mean_silhouette(frames, assignment.assignments, assignment.num_clusters());
}

std::uint64_t sequence_seed(std::uint64_t root, const FeatureSequence& seq) noexcept {
  return derive_seed(root, seq.sample_id,
                     (static_cast<std::uint64_t>(seq.layer) << 1) | static_cast<std::uint64_t>(seq.channel));
}

std::vector<std::size_t> default_candidates(std::span<const FeatureSequence> sequences) {
  std::size_t shortest = 100;
  for (const auto& s : sequences) shortest = std::min(shortest, s.num_frames());
  std::vector<std::size_t> out;
  for (std::size_t n = 2; n <= shortest; ++n) out.push_back(n);
  return out;
}

SegmentCountSelection select_n(std::span<const FeatureSequence> sequences,
                               std::span<const std::size_t> candidates, std::uint64_t seed,
                               std::size_t jobs, const KMeansOptions& options) {
  if (candidates.empty()) fail(ErrorCode::InvalidArgument, "no candidate segment counts");
  for (auto n : candidates) {
    if (n < 2) fail(ErrorCode::InvalidArgument, "candidate segment counts must be >= 2");
  }

  // scores[c * S + s]: silhouette of sequence s at candidate c, NaN if skipped.
  const std::size_t s_count = sequences.size();
  std::vector<double> scores(candidates.size() * s_count, std::numeric_limits<double>::quiet_NaN());
  parallel_for(s_count, jobs, [&](std::size_t s) {
    const auto& seq = sequences[s];
    const auto seq_seed = sequence_seed(seed, seq);
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      if (seq.num_frames() < candidates[c]) continue;
      const auto clusters = kmeans(seq.frames, candidates[c], seq_seed, options);
      scores[c * s_count + s] = mean_silhouette(seq.frames, clusters);
    }
  });

  SegmentCountSelection out;
  double best = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    CandidateScore cs;
    cs.n = candidates[c];
    double sum = 0.0;
    for (std::size_t s = 0; s < s_count; ++s) {
      const double v = scores[c * s_count + s];
      if (std::isnan(v)) {
        ++cs.sequences_skipped;
      } else {
        sum += v;
        ++cs.sequences_used;
      }
    }
    cs.mean_silhouette = cs.sequences_used > 0 ? sum / static_cast<double>(cs.sequences_used)
                                               : std::numeric_limits<double>::quiet_NaN();
    if (cs.sequences_used > 0 &&
        (cs.mean_silhouette > best || (cs.mean_silhouette == best && cs.n < out.selected_n))) {
      best = cs.mean_silhouette;
      out.selected_n = cs.n;
      any = true;
    }
    out.candidates.push_back(cs);
  }
  if (!any) fail(ErrorCode::NoValidCandidate, "every sequence is shorter than every candidate n");
  return out;
}

SegmentFeatures segment_features(const FeatureSequence& seq, std::size_t n, std::uint64_t seed,
                                 const KMeansOptions& options) {
  validate(seq);
  const auto clusters = kmeans(seq.frames, n, seed, options);
  std::vector<std::vector<std::size_t>> members(n);
  for (std::size_t i = 0; i < clusters.assignments.size(); ++i) {
    members[clusters.assignments[i]].push_back(i);
  }
  SegmentFeatures out;
  out.means.reserve(n);
  out.sizes.reserve(n);
  for (const auto& rows : members) {
    out.means.push_back(mean_of_rows(seq.frames, rows));
    out.sizes.push_back(rows.size());
  }
  return out;
}

}  // namespace nonpsa
