#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "gen.hpp"
#include "hima/sort_engine.hpp"

using namespace hima;

namespace {

std::vector<std::size_t> oracle_order(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  return idx;
}

}  // namespace

TEST(SortConfig, UsageDefaults) {
  const auto c = SortConfig::for_usage(1024, 4);
  EXPECT_EQ(c.n, 256u);
  EXPECT_EQ(c.p, 16u);
  EXPECT_EQ(c.d_dpbs, 5u);
  EXPECT_EQ(c.d_pms, 7u);
  EXPECT_EQ(SortConfig::for_usage(1000, 1).p, 32u);
  EXPECT_EQ(default_dpbs_depth(2), 1u);
  EXPECT_EQ(default_dpbs_depth(4), 3u);
  EXPECT_EQ(default_dpbs_depth(64), 5u);
}

TEST(SortConfig, Rejects) {
  EXPECT_THROW(SortConfig::for_usage(0, 1), std::invalid_argument);
  EXPECT_THROW(SortConfig::for_usage(1024, 3), std::invalid_argument);
  EXPECT_THROW(SortConfig::for_usage(1024, 0), std::invalid_argument);
  EXPECT_THROW(SortConfig::for_usage(1024, 4, 0), std::invalid_argument);
}

TEST(SortCycles, FourTilesOf256) {
  std::vector<double> u(1024);
  SplitMix64 rng(1);
  for (auto& x : u) x = rng.uniform();
  const auto r = two_stage_sort<double>(u, SortConfig::for_usage(1024, 4, 5, 7));
  EXPECT_EQ(r.cycles.local_cycles, 126u);
  EXPECT_EQ(r.cycles.global_cycles, 263u);
  EXPECT_EQ(r.cycles.total_cycles, 389u);
}

TEST(SortCycles, SingleTileHasNoMerge) {
  std::vector<double> u(1024, 0.5);
  const auto r = two_stage_sort<double>(u, 1);
  EXPECT_EQ(r.cycles.local_cycles, 6u * (32u + 5u));
  EXPECT_EQ(r.cycles.global_cycles, 0u);
  EXPECT_EQ(baseline_nlogn_cycles(1024), 10240u);
  EXPECT_EQ(baseline_nlogn_cycles(1), 0u);
}

// Zero-one principle: a comparator network sorts everything iff it sorts all 0/1 inputs.
TEST(Dpbs, ZeroOneExhaustive) {
  for (std::size_t width : {2u, 3u, 5u, 8u, 11u}) {
    for (std::size_t mask = 0; mask < (1u << width); ++mask) {
      std::vector<double> v(width);
      for (std::size_t i = 0; i < width; ++i) v[i] = (mask >> i) & 1u;
      const auto asc = dpbs_sort(v, SortDirection::ascending);
      ASSERT_TRUE(std::is_sorted(asc.begin(), asc.end())) << width << " " << mask;
      const auto desc = dpbs_sort(v, SortDirection::descending);
      ASSERT_TRUE(std::is_sorted(desc.rbegin(), desc.rend()));
    }
  }
}

TEST(Mdsa, MatchesStableSortOnRandomAndTiedInputs) {
  SplitMix64 rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = gen::pick(rng, 1, 300);
    const auto v = trial % 3 == 0 ? gen::tied_vector(rng, n, 4) : gen::uniform_vector(rng, n);
    const auto cfg = SortConfig::for_usage(n, 1);
    const auto r = mdsa_sort(v, cfg);
    ASSERT_EQ(r.permutation, oracle_order(v)) << "n=" << n;
    EXPECT_EQ(r.phases_executed, 2 * detail::ceil_log2(cfg.p) + 1);
  }
}

TEST(Mdsa, AdversarialPatterns) {
  for (std::size_t n : {16u, 64u, 256u}) {
    std::vector<double> rev(n), saw(n), same(n, 0.25);
    for (std::size_t i = 0; i < n; ++i) {
      rev[i] = static_cast<double>(n - i);
      saw[i] = static_cast<double>(i % 7);
    }
    const auto cfg = SortConfig::for_usage(n, 1);
    EXPECT_EQ(mdsa_sort(rev, cfg).permutation, oracle_order(rev));
    EXPECT_EQ(mdsa_sort(saw, cfg).permutation, oracle_order(saw));
    EXPECT_EQ(mdsa_sort(same, cfg).permutation, oracle_order(same));
  }
}

TEST(Merge, RejectsUnsortedRun) {
  const auto cfg = SortConfig::for_usage(4, 2);
  std::vector<std::vector<SortKey>> runs{{{0.5, 0}, {0.1, 1}}, {{0.2, 2}, {0.3, 3}}};
  EXPECT_THROW(parallel_merge(runs, cfg), std::invalid_argument);
}

TEST(TwoStage, MatchesStableSortForAllTileCounts) {
  SplitMix64 rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n_t = std::size_t{1} << gen::pick(rng, 0, 4);
    const std::size_t n = n_t * gen::pick(rng, 1, 64);
    const auto v = trial % 2 ? gen::tied_vector(rng, n, 3) : gen::uniform_vector(rng, n);
    const auto r = two_stage_sort<double>(v, n_t);
    ASSERT_EQ(r.permutation, oracle_order(v)) << "n=" << n << " n_t=" << n_t;
  }
}

TEST(TwoStage, FloatInput) {
  const std::vector<float> v{0.5f, 0.25f, 0.75f, 0.25f};
  EXPECT_EQ(two_stage_sort<float>(v, 2).permutation, (std::vector<std::size_t>{1, 3, 0, 2}));
}

TEST(TwoStage, RejectsEmpty) {
  EXPECT_THROW(two_stage_sort<double>(std::vector<double>{}, 1), std::invalid_argument);
}
