#include <gtest/gtest.h>

#include "hima/script.hpp"
#include "hima/tile_sim.hpp"

using namespace hima;

namespace {

ArchConfig small(std::size_t n_t, TopologyKind topo = TopologyKind::hima_multimode) {
  ArchConfig c;
  c.geometry = {256, 32, 2};
  c.n_t = n_t;
  c.topology = topo;
  return c;
}

std::uint64_t inter_pt(KernelKind k, const ArchConfig& c) {
  return count_words(generate_kernel_trace(k, c), c.n_t).inter_pt;
}

std::vector<Matrix<double>> reference_reads(const MemoryGeometry& g, const std::vector<InterfaceInput<double>>& s) {
  std::vector<Matrix<double>> out;
  auto state = MemoryState<double>::zeros(g);
  for (const auto& in : s) {
    auto [next, o] = dnc_step(state, in);
    out.push_back(o.read_vectors);
    state = std::move(next);
  }
  return out;
}

}  // namespace

TEST(TileModel, Names) {
  EXPECT_EQ(kKernelOrder.size(), 13u);
  EXPECT_STREQ(to_string(KernelKind::usage_sort), "usage-sort");
  EXPECT_STREQ(kernel_type(KernelKind::memory_read), "access");
  EXPECT_STREQ(kernel_type(KernelKind::linkage), "state");
  EXPECT_EQ(parse_model("dnc-d"), ModelKind::dnc_d);
  EXPECT_THROW(parse_model("ntm"), std::invalid_argument);
}

TEST(TileModel, InterfaceWords) {
  EXPECT_EQ(interface_words({1024, 64, 4}), 64u * 7u + 23u);
  EXPECT_EQ(interface_words({64, 16, 1}), 16u * 4u + 8u);
}

TEST(TileModel, ComputeCycles) {
  EXPECT_EQ(compute_cycles(KernelKind::usage, 0, 64), 0u);
  EXPECT_EQ(compute_cycles(KernelKind::usage, 65, 64), 2u);
  EXPECT_EQ(compute_cycles(KernelKind::precedence, 64, 64), 1u + 6u);
  EXPECT_EQ(compute_cycles(KernelKind::similarity, 64, 64, 4, SoftmaxMode::exact), 7u + 40u);
  EXPECT_EQ(compute_cycles(KernelKind::similarity, 64, 64, 4, SoftmaxMode::approx), 7u + 4u);
  EXPECT_EQ(compute_cycles(KernelKind::usage_sort, 256, 64), 6u * (16u + 5u));
  EXPECT_THROW(compute_cycles(KernelKind::usage, 4, 0), std::invalid_argument);
}

TEST(TileModel, DefaultPartitions) {
  ArchConfig c;
  EXPECT_EQ(c.external(), (PartitionSpec{16, 1}));
  EXPECT_EQ(c.linkage(), (PartitionSpec{4, 4}));
  c.model = ModelKind::dnc_d;
  EXPECT_EQ(c.external(), (PartitionSpec{1, 1}));
  EXPECT_EQ(c.local_geometry(), (MemoryGeometry{64, 64, 4}));
}

TEST(TileModel, Validation) {
  auto c = small(16);
  c.ext_partition = PartitionSpec{2, 4};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = small(12, TopologyKind::h_tree);
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = small(3);
  EXPECT_THROW(c.validate(), std::invalid_argument);  // 256 % 3
  c = small(16);
  c.geometry = {32, 32, 2};
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

// Word counts produced by the traffic generator against the closed-form costs.
TEST(Traffic, ContentAndReadIdentities) {
  for (std::size_t n_t : {1u, 2u, 4u, 8u, 16u})
    for (const auto& p : external_partitions(256, 32, n_t)) {
      auto c = small(n_t);
      c.ext_partition = p;
      const double content = static_cast<double>(inter_pt(KernelKind::normalize, c) + inter_pt(KernelKind::similarity, c));
      EXPECT_EQ(content, content_cost(256, p)) << n_t << ": " << p.n_h << "x" << p.n_w;
      EXPECT_EQ(static_cast<double>(inter_pt(KernelKind::memory_read, c)), read_cost(256, 32, n_t, p));
    }
}

TEST(Traffic, LinkageIdentity) {
  for (std::size_t n_t : {1u, 2u, 4u, 8u, 16u})
    for (const auto& p : linkage_partitions(256, n_t)) {
      auto c = small(n_t);
      c.linkage_partition = p;
      EXPECT_EQ(static_cast<double>(inter_pt(KernelKind::forward_backward, c)), 256.0 * linkage_cost(n_t, p))
          << n_t << ": " << p.n_h << "x" << p.n_w;
    }
}

// Each linkage block needs its rows of w and its columns of w and p; the state
// owner holds everything in its own slice.
TEST(Traffic, LinkageGatherCoversEveryBlock) {
  auto c = small(16);
  std::uint64_t words = 0;
  for (const auto& m : generate_kernel_trace(KernelKind::linkage, c)) words += m.words;
  const std::uint64_t needed = 16u * (64u + 2u * 64u);  // 4x4 blocks of 64x64
  std::uint64_t local = 0;
  for (std::size_t t = 0; t < 16; ++t) {
    const std::size_t a = t / 4, b = t % 4, lo = t * 16, hi = lo + 16;
    auto ov = [&](std::size_t x0, std::size_t x1) { return std::min(hi, x1) > std::max(lo, x0) ? std::min(hi, x1) - std::max(lo, x0) : 0; };
    local += ov(a * 64, a * 64 + 64) + 2 * ov(b * 64, b * 64 + 64);
  }
  EXPECT_EQ(words + local, needed);
}

TEST(Traffic, DistributedModelHasNoInterTileTraffic) {
  for (auto topo : kAllTopologies)
    for (std::size_t n_t : {1u, 2u, 4u, 8u, 16u}) {
      auto c = small(n_t, topo);
      c.model = ModelKind::dnc_d;
      for (auto k : kKernelOrder) EXPECT_EQ(inter_pt(k, c), 0u);
      EXPECT_EQ(step_timing(c).inter_pt_flits, 0u);
    }
}

TEST(Timing, SingleTileIsComputeOnly) {
  const auto r = timing_report(small(1), 3);
  for (const auto& k : r.kernels) {
    EXPECT_EQ(k.traffic_cycles, 0u) << to_string(k.kernel);
    EXPECT_EQ(k.total_cycles, k.compute_cycles);
  }
  EXPECT_EQ(r.speedup, 1.0);
  EXPECT_EQ(r.total_cycles, 3 * r.step_cycles);
  EXPECT_EQ(r.ct_pt_flits, 0u);
}

TEST(Timing, KernelTotalsAddUp) {
  const auto r = step_timing(small(16));
  std::uint64_t sum = 0;
  for (const auto& k : r.kernels) {
    const auto expect = k.kernel == KernelKind::memory_write ? std::max(k.compute_cycles, k.traffic_cycles)
                                                             : k.compute_cycles + k.traffic_cycles;
    EXPECT_EQ(k.total_cycles, expect);
    sum += k.total_cycles;
  }
  EXPECT_EQ(sum, r.step_cycles);
  EXPECT_EQ(r.kernels.size(), 13u);
}

TEST(Timing, ApproximationsReduceCycles) {
  auto base = small(4);
  auto fast = base;
  fast.softmax = SoftmaxMode::approx;
  fast.skim = {0.5, SkimPolicy::skim_largest};
  EXPECT_LT(step_timing(fast).step_cycles, step_timing(base).step_cycles);
}

TEST(Timing, SweepSkipsTreesAtOddCounts) {
  auto c = small(4);
  c.geometry = {768, 32, 2};
  const auto rows = speedup_sweep(c, {1, 3, 4}, {TopologyKind::h_tree, TopologyKind::mesh});
  ASSERT_EQ(rows.size(), 2u + 3u);
  EXPECT_EQ(rows[0].speedup, 1.0);
  for (const auto& r : rows) EXPECT_GT(r.speedup, 0.0);
}

TEST(Timing, MultiModeBeatsTreeAtSixteenTiles) {
  ArchConfig c;
  const auto rows = speedup_sweep(c, {8, 16}, {TopologyKind::h_tree, TopologyKind::hima_multimode});
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_GT(rows[3].speedup, rows[1].speedup);
  EXPECT_GT(rows[3].speedup / rows[2].speedup, rows[1].speedup / rows[0].speedup);
}

TEST(RunDnc, SingleTileIsBitIdentical) {
  const MemoryGeometry g{64, 16, 2};
  const auto script = make_script<double>(g, 20, 3);
  ArchConfig c;
  c.geometry = g;
  c.n_t = 1;
  const auto run = run_dnc(c, script);
  EXPECT_EQ(run.read_vectors, reference_reads(g, script));
  EXPECT_EQ(run.report.max_rel_error, 0.0);
}

TEST(RunDnc, TiledMatchesReference) {
  const MemoryGeometry g{128, 16, 2};
  const auto script = make_script<double>(g, 25, 11);
  for (auto [n_t, topo] : {std::pair{4u, TopologyKind::mesh}, {8u, TopologyKind::binary_tree_x},
                           {16u, TopologyKind::hima_multimode}}) {
    ArchConfig c;
    c.geometry = g;
    c.n_t = n_t;
    c.topology = topo;
    const auto run = run_dnc(c, script);
    EXPECT_LE(run.report.max_rel_error, 1e-9);
    EXPECT_EQ(run.read_vectors.size(), 25u);
  }
}

TEST(RunDnc, NonOptimalPartitionsStillEquivalent) {
  const MemoryGeometry g{64, 16, 1};
  const auto script = make_script<double>(g, 10, 4);
  ArchConfig c;
  c.geometry = g;
  c.n_t = 4;
  c.ext_partition = PartitionSpec{1, 4};
  c.linkage_partition = PartitionSpec{4, 1};
  EXPECT_LE(run_dnc(c, script).report.max_rel_error, 1e-9);
}

TEST(RunDnc, SinglePrecision) {
  const MemoryGeometry g{64, 16, 2};
  ArchConfig c;
  c.geometry = g;
  c.n_t = 4;
  EXPECT_LE(run_dnc(c, make_script<float>(g, 10, 2)).report.max_rel_error, 1e-4);
}

TEST(RunDnc, RejectsDistributedConfig) {
  ArchConfig c;
  c.geometry = {64, 16, 2};
  c.model = ModelKind::dnc_d;
  EXPECT_THROW(run_dnc(c, make_script<double>(c.geometry, 1, 1)), std::invalid_argument);
}

TEST(RunDncd, SingleTileIsPlainDnc) {
  ArchConfig c;
  c.geometry = {64, 16, 2};
  c.n_t = 1;
  c.model = ModelKind::dnc_d;
  const auto scripts = make_tile_scripts<double>(c.local_geometry(), 1, 15, 8);
  const auto run = run_dncd(c, DncdConfig::shared(std::vector<double>{1.0}, 2), scripts);
  EXPECT_EQ(run.read_vectors, reference_reads(c.geometry, scripts[0]));
  EXPECT_EQ(run.report.inter_pt_flits, 0u);
}

TEST(RunDncd, OneHotAlphaSelectsTile) {
  ArchConfig c;
  c.geometry = {128, 16, 2};
  c.n_t = 4;
  c.model = ModelKind::dnc_d;
  const auto scripts = make_tile_scripts<double>(c.local_geometry(), 4, 10, 8);
  const auto run = run_dncd(c, DncdConfig::shared(std::vector<double>{0, 0, 1, 0}, 2), scripts);
  EXPECT_EQ(run.read_vectors, reference_reads(c.local_geometry(), scripts[2]));
  EXPECT_EQ(run.report.inter_pt_flits, 0u);
  EXPECT_GT(run.report.ct_pt_flits, 0u);
}

TEST(RunDncd, UniformAlphaAveragesTiles) {
  ArchConfig c;
  c.geometry = {64, 8, 1};
  c.n_t = 2;
  c.model = ModelKind::dnc_d;
  const auto scripts = make_tile_scripts<double>(c.local_geometry(), 2, 5, 1);
  const auto run = run_dncd(c, DncdConfig::uniform(2, 1), scripts);
  const auto a = reference_reads(c.local_geometry(), scripts[0]);
  const auto b = reference_reads(c.local_geometry(), scripts[1]);
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(run.read_vectors[t](0, j), 0.5 * (a[t](0, j) + b[t](0, j)), 1e-15);
}

TEST(RunDncd, RejectsBadAlpha) {
  ArchConfig c;
  c.geometry = {64, 8, 1};
  c.n_t = 2;
  c.model = ModelKind::dnc_d;
  const auto scripts = make_tile_scripts<double>(c.local_geometry(), 2, 1, 1);
  EXPECT_THROW(run_dncd(c, DncdConfig::shared(std::vector<double>{1.5, 0.0}, 1), scripts), std::invalid_argument);
  EXPECT_THROW(run_dncd(c, DncdConfig::shared(std::vector<double>{1.0}, 1), scripts), std::invalid_argument);
}
