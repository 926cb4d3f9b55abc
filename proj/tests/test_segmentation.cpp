#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "nonpsa/error.hpp"
#include "nonpsa/segmentation.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace nonpsa;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an nonpsa::Error");
  return ErrorCode::InvalidArgument;
}

/// True when two labelings induce the same partition.
bool same_partition(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
  std::set<std::pair<std::uint32_t, std::uint32_t>> pairs;
  std::set<std::uint32_t> left, right;
  for (std::size_t i = 0; i < a.size(); ++i) {
    pairs.emplace(a[i], b[i]);
    left.insert(a[i]);
    right.insert(b[i]);
  }
  return pairs.size() == left.size() && pairs.size() == right.size();
}

}  // namespace

TEST_SUITE("segmentation") {
  TEST_CASE("one cluster is the temporal mean") {
    std::mt19937_64 rng(2);
    const auto seq = synth::random_sequence(rng, 40, 12);
    const auto result = kmeans(seq.frames, 1, 17);
    CHECK(result.num_clusters() == 1);
    const auto mean = temporal_mean(seq);
    for (std::size_t j = 0; j < 12; ++j) CHECK(result.centroids(0, j) == doctest::Approx(mean.values[j]).epsilon(1e-6));
    const auto seg = segment_features(seq, 1, 17);
    REQUIRE(seg.means.size() == 1);
    CHECK(seg.means[0] == mean);
  }

  TEST_CASE("well separated blobs are recovered") {
    std::mt19937_64 rng(3);
    const std::vector<std::vector<float>> centers{{0, 0, 0}, {10, 0, 0}, {0, 10, 10}};
    auto [frames, blob] = synth::blob_frames(rng, centers, 30);
    for (std::uint64_t seed : {1u, 17u, 99u}) {
      const auto result = kmeans(frames, 3, seed);
      CHECK(result.converged);
      CHECK(same_partition(result.assignments, blob));
      CHECK(result.inertia == doctest::Approx(oracle::inertia(frames, result.assignments, result.centroids)).epsilon(1e-6));
    }
  }

  TEST_CASE("as many clusters as frames gives singletons") {
    std::mt19937_64 rng(4);
    const auto seq = synth::random_sequence(rng, 6, 3);
    const auto result = kmeans(seq.frames, 6, 5);
    const auto sizes = result.cluster_sizes();
    CHECK(std::all_of(sizes.begin(), sizes.end(), [](std::size_t s) { return s == 1; }));
    CHECK(result.inertia == doctest::Approx(0.0));
  }

  TEST_CASE("duplicate frames still fill every cluster") {
    FrameMatrix frames(5, 2, {1, 1, 1, 1, 1, 1, 1, 1, 2, 2});
    const auto result = kmeans(frames, 3, 1);
    const auto sizes = result.cluster_sizes();
    CHECK(std::all_of(sizes.begin(), sizes.end(), [](std::size_t s) { return s >= 1; }));
  }

  TEST_CASE("inertia never increases and runs are deterministic") {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 20; ++i) {
      const auto seq = synth::random_sequence(rng, 20 + rng() % 100, 2 + rng() % 10);
      const std::size_t n = 2 + rng() % 6;
      const auto a = kmeans(seq.frames, n, 1000 + i);
      const auto b = kmeans(seq.frames, n, 1000 + i);
      CHECK(a.assignments == b.assignments);
      CHECK(a.centroids == b.centroids);
      for (std::size_t h = 1; h < a.inertia_history.size(); ++h) {
        CHECK(a.inertia_history[h] <= a.inertia_history[h - 1] * (1 + 1e-12));
      }
    }
  }

  TEST_CASE("silhouette on hand-checked examples") {
    // Values from an independent reference implementation.
    FrameMatrix line(4, 1, {0, 1, 4, 6});
    const std::vector<std::uint32_t> l1{0, 0, 1, 1};
    CHECK(mean_silhouette(line, l1, 2) == doctest::Approx(0.6537337662337662).epsilon(1e-12));

    FrameMatrix pairs(4, 1, {0, 0, 100, 100});
    CHECK(mean_silhouette(pairs, l1, 2) == doctest::Approx(1.0));

    FrameMatrix plane(5, 2, {0, 0, 1, 0, 0, 1, 5, 5, 6, 5});
    const std::vector<std::uint32_t> l2{0, 0, 0, 1, 1};
    CHECK(mean_silhouette(plane, l2, 2) == doctest::Approx(0.8444761898783083).epsilon(1e-12));

    // A singleton contributes zero.
    FrameMatrix three(3, 1, {0, 1, 10});
    const std::vector<std::uint32_t> l3{0, 0, 1};
    CHECK(mean_silhouette(three, l3, 2) == doctest::Approx(oracle::silhouette(three, l3, 2)));

    CHECK(code_of([&] { mean_silhouette(line, std::vector<std::uint32_t>{0, 0, 0, 0}, 1); }) ==
          ErrorCode::SingleCluster);
  }

  TEST_CASE("silhouette agrees with the quadratic oracle") {
    std::mt19937_64 rng(6);
    for (int i = 0; i < 30; ++i) {
      const auto seq = synth::random_sequence(rng, 10 + rng() % 120, 1 + rng() % 16);
      const std::size_t n = 2 + rng() % 4;
      const auto km = kmeans(seq.frames, n, i);
      CHECK(mean_silhouette(seq.frames, km) ==
            doctest::Approx(oracle::silhouette(seq.frames, km.assignments, n)).epsilon(1e-6));
    }
  }

  TEST_CASE("select_n prefers the true blob count") {
    std::mt19937_64 rng(7);
    const std::vector<std::vector<float>> centers{{0, 0}, {8, 0}, {0, 8}};
    std::vector<FeatureSequence> seqs;
    for (int i = 0; i < 6; ++i) {
      auto [frames, blob] = synth::blob_frames(rng, centers, 10, 0.5);
      seqs.push_back({"s" + std::to_string(i), 3, Channel::Original, std::move(frames)});
    }
    const std::vector<std::size_t> candidates{2, 3, 4, 5, 6};
    const auto sel = select_n(seqs, candidates, 17);
    CHECK(sel.selected_n == 3);
    REQUIRE(sel.candidates.size() == candidates.size());
    for (const auto& c : sel.candidates) CHECK(c.sequences_used == seqs.size());

    const auto parallel = select_n(seqs, candidates, 17, 3);
    CHECK(parallel.selected_n == sel.selected_n);
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      CHECK(parallel.candidates[i].mean_silhouette == sel.candidates[i].mean_silhouette);
    }

    const std::vector<std::size_t> one{4};
    CHECK(select_n(seqs, one, 17).selected_n == 4);
  }

  TEST_CASE("select_n skips sequences that are too short") {
    std::mt19937_64 rng(8);
    std::vector<FeatureSequence> seqs{synth::random_sequence(rng, 3, 2, "short"),
                                      synth::random_sequence(rng, 20, 2, "long")};
    const std::vector<std::size_t> candidates{2, 5};
    const auto sel = select_n(seqs, candidates, 1);
    CHECK(sel.candidates[0].sequences_used == 2);
    CHECK(sel.candidates[1].sequences_used == 1);
    CHECK(sel.candidates[1].sequences_skipped == 1);
    CHECK(default_candidates(seqs) == std::vector<std::size_t>{2, 3});
  }

  TEST_CASE("segment means weighted by size give the temporal mean") {
    std::mt19937_64 rng(9);
    for (int i = 0; i < 30; ++i) {
      const auto seq = synth::random_sequence(rng, 10 + rng() % 90, 1 + rng() % 20);
      const std::size_t n = 1 + rng() % 8;
      const auto seg = segment_features(seq, n, i);
      REQUIRE(seg.means.size() == n);
      CHECK(std::accumulate(seg.sizes.begin(), seg.sizes.end(), std::size_t{0}) == seq.num_frames());
      const auto mean = temporal_mean(seq);
      for (std::size_t j = 0; j < seq.dim(); ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < n; ++c) acc += static_cast<double>(seg.sizes[c]) * seg.means[c].values[j];
        acc /= static_cast<double>(seq.num_frames());
        CHECK(acc == doctest::Approx(mean.values[j]).epsilon(1e-5).scale(1.0));
      }
    }
  }

  TEST_CASE("structured failures") {
    std::mt19937_64 rng(10);
    const auto seq = synth::random_sequence(rng, 3, 2);
    CHECK(code_of([&] { kmeans(seq.frames, 4, 1); }) == ErrorCode::TooFewFrames);
    CHECK(code_of([&] { segment_features(seq, 4, 1); }) == ErrorCode::TooFewFrames);
    CHECK(code_of([&] { kmeans(seq.frames, 0, 1); }) == ErrorCode::InvalidArgument);
  }
}
