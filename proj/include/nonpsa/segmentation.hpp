#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nonpsa/datastore.hpp"
#include "nonpsa/ingest.hpp"
#include "nonpsa/matrix.hpp"

namespace nonpsa {

/// Lloyd iteration controls. Convergence is declared when assignments stop
/// changing or when the total squared centroid shift falls to
/// `tolerance` times the mean per-dimension variance of the frames.
struct KMeansOptions {
  std::size_t max_iterations = 300;
  double tolerance = 1e-4;
};

struct ClusterAssignment {
  /// Cluster index in [0, n) for every frame.
  std::vector<std::uint32_t> assignments;
  /// n x D centroids matching `assignments`.
  FrameMatrix centroids;
  /// Sum of squared distances from each frame to its centroid.
  double inertia = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  /// Objective after every assignment step, first entry from the seeding.
  std::vector<double> inertia_history;

  [[nodiscard]] std::size_t num_clusters() const noexcept { return centroids.rows(); }
  [[nodiscard]] std::vector<std::size_t> cluster_sizes() const;
};

/// Seeded k-means: greedy k-means++ seeding followed by Lloyd iterations.
/// Empty clusters are repaired by moving the frame farthest from its
/// centroid into them, so every cluster is non-empty on return.
/// Throws TooFewFrames when T < n.
ClusterAssignment kmeans(const FrameMatrix& frames, std::size_t n, std::uint64_t seed,
                         const KMeansOptions& options = {});

/// Mean silhouette coefficient with Euclidean distances. Frames in singleton
/// clusters contribute 0. Throws SingleCluster when n < 2.
double mean_silhouette(const FrameMatrix& frames, const ClusterAssignment& assignment);
double mean_silhouette(const FrameMatrix& frames, std::span<const std::uint32_t> labels,
                       std::size_t num_clusters);

struct CandidateScore {
  std::size_t n = 0;
  /// Average over the sequences that were long enough; NaN if none were.
  double mean_silhouette = 0.0;
  std::size_t sequences_used = 0;
  std::size_t sequences_skipped = 0;
};

struct SegmentCountSelection {
  std::vector<CandidateScore> candidates;
  std::size_t selected_n = 0;
};

/// Seed used for one sequence: root seed mixed with a stable hash of the
/// sample id and the (layer, channel), so results do not depend on order.
std::uint64_t sequence_seed(std::uint64_t root, const FeatureSequence& seq) noexcept;

/// {2, ..., min(100, shortest T)}.
std::vector<std::size_t> default_candidates(std::span<const FeatureSequence> sequences);

/// Picks the dataset-wide segment count maximising the average silhouette
/// (ties go to the smaller n). Sequences shorter than a candidate are
/// skipped for that candidate and counted.
SegmentCountSelection select_n(std::span<const FeatureSequence> sequences,
                               std::span<const std::size_t> candidates, std::uint64_t seed,
                               std::size_t jobs = 1, const KMeansOptions& options = {});

struct SegmentFeatures {
  /// One mean vector per cluster, ordered by cluster index.
  std::vector<PooledVector> means;
  /// Frames per cluster, same order.
  std::vector<std::size_t> sizes;
};

SegmentFeatures segment_features(const FeatureSequence& seq, std::size_t n, std::uint64_t seed,
                                 const KMeansOptions& options = {});

}  // namespace nonpsa
