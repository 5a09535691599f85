#include <gtest/gtest.h>

#include <algorithm>
#include <map>

#include "gen.hpp"
#include "hima/noc.hpp"

using namespace hima;

namespace {

std::vector<std::size_t> sizes_for(TopologyKind k) {
  if (k == TopologyKind::h_tree || k == TopologyKind::binary_tree_x) return {1, 2, 4, 8, 16};
  return {1, 2, 3, 4, 8, 12, 16, 24};
}

// Every admissible source/destination pair of a topology.
std::vector<std::pair<std::size_t, std::size_t>> pairs(const Topology& t) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t a = 0; a <= t.pt_count(); ++a)
    for (std::size_t b = 0; b <= t.pt_count(); ++b)
      if (a != b) out.emplace_back(a, b);
  return out;
}

TrafficTrace random_trace(SplitMix64& rng, std::size_t nodes, std::size_t count, std::size_t max_words,
                          std::uint64_t max_cycle) {
  TrafficTrace tr;
  for (std::size_t i = 0; i < count; ++i) {
    Message m;
    m.cycle = rng.next() % (max_cycle + 1);
    m.src = rng.next() % nodes;
    m.dst = rng.next() % nodes;
    m.words = gen::pick(rng, 1, max_words);
    m.tag = "m" + std::to_string(i);
    tr.push_back(m);
  }
  return tr;
}

}  // namespace

TEST(Topology, NamesRoundTrip) {
  for (auto k : kAllTopologies) EXPECT_EQ(parse_topology(to_string(k)), k);
  for (auto m : {RouterMode::broadcast_collect, RouterMode::ring, RouterMode::diagonal, RouterMode::mesh_xy,
                 RouterMode::full})
    EXPECT_EQ(parse_mode(to_string(m)), m);
  EXPECT_THROW(parse_topology("torus"), std::invalid_argument);
  EXPECT_THROW(parse_mode("xy"), std::invalid_argument);
}

TEST(Topology, CentredGridPutsTheControllerInTheMiddle) {
  const auto t = build_topology(TopologyKind::hima_multimode, 24);
  EXPECT_EQ(t.grid_rows(), 5u);
  EXPECT_EQ(t.grid_cols(), 5u);
  EXPECT_EQ(t.node_at(2, 2), t.ct());
  EXPECT_TRUE(t.ct_attachments().empty());
  EXPECT_EQ(t.degree(t.ct()), 8u);
  EXPECT_EQ(t.degree(*t.node_at(0, 0)), 3u);
  EXPECT_EQ(build_topology(TopologyKind::mesh, 24).degree(t.ct()), 4u);
}

TEST(Topology, OffGridControllerTapsCentralTiles) {
  const auto t = build_topology(TopologyKind::mesh, 16);
  EXPECT_EQ(t.grid_rows(), 4u);
  EXPECT_EQ(t.grid_cols(), 4u);
  EXPECT_EQ(t.ct_attachments(), (std::vector<std::size_t>{5, 6, 9, 10}));
  EXPECT_FALSE(t.cell(t.ct()));
  const auto r = build_topology(TopologyKind::mesh, 12);
  EXPECT_EQ(r.grid_rows() * r.grid_cols(), 12u);
  EXPECT_EQ(r.grid_rows(), 3u);
}

TEST(Topology, LinkCounts) {
  EXPECT_EQ(build_topology(TopologyKind::h_tree, 16).links().size(), 2u * 30u);
  EXPECT_EQ(build_topology(TopologyKind::star, 16).links().size(), 32u);
  EXPECT_EQ(build_topology(TopologyKind::ring, 16).links().size(), 64u);
  EXPECT_EQ(build_topology(TopologyKind::ring, 2).links().size(), 2u + 4u);
  // laterals join cousins: heap pairs (5,6), (9,10), (11,12), (13,14) in a 8-leaf tree
  EXPECT_EQ(build_topology(TopologyKind::binary_tree_x, 8).links().size(), 2u * 14u + 2u * 4u);
  EXPECT_THROW(build_topology(TopologyKind::h_tree, 12), std::invalid_argument);
  EXPECT_THROW(build_topology(TopologyKind::mesh, 0), std::invalid_argument);
}

TEST(Topology, LinksAreSymmetric) {
  for (auto k : kAllTopologies)
    for (auto n : sizes_for(k)) {
      const auto t = build_topology(k, n);
      for (const auto& l : t.links()) EXPECT_TRUE(t.link_between(l.to, l.from)) << to_string(k) << " " << n;
    }
}

TEST(HopDistance, KnownDiameters) {
  const auto hima = build_topology(TopologyKind::hima_multimode, 24);
  const auto mesh = build_topology(TopologyKind::mesh, 24);
  std::size_t hima_max = 0, mesh_max = 0;
  for (auto [a, b] : pairs(hima)) {
    hima_max = std::max(hima_max, hop_distance(hima, a, b));
    mesh_max = std::max(mesh_max, hop_distance(mesh, a, b));
  }
  EXPECT_EQ(hima_max, 4u);
  EXPECT_EQ(mesh_max, 8u);
  EXPECT_EQ(hop_distance(build_topology(TopologyKind::h_tree, 16), 0, 15), 8u);
  EXPECT_EQ(hop_distance(build_topology(TopologyKind::h_tree, 16), 0, 1), 2u);
  EXPECT_EQ(hop_distance(build_topology(TopologyKind::star, 16), 3, 9), 2u);
  EXPECT_EQ(hop_distance(build_topology(TopologyKind::ring, 16), 0, 8), 8u);  // the CT does not forward
  EXPECT_EQ(hop_distance(build_topology(TopologyKind::ring, 16), 0, 15), 1u);
  EXPECT_EQ(hop_distance(hima, 5, 5), 0u);
}

TEST(HopDistance, ModeMasks) {
  const auto t = build_topology(TopologyKind::hima_multimode, 24);
  const auto a = *t.node_at(0, 0), b = *t.node_at(0, 4);
  EXPECT_EQ(hop_distance(t, a, b, RouterMode::ring), 4u);
  EXPECT_THROW(hop_distance(t, a, *t.node_at(1, 0), RouterMode::diagonal), unreachable_error);
  EXPECT_THROW(hop_distance(t, a, b, RouterMode::broadcast_collect), unreachable_error);
  EXPECT_EQ(hop_distance(t, a, t.ct(), RouterMode::broadcast_collect), 4u);
  EXPECT_THROW(hop_distance(t, 0, 99), std::invalid_argument);
}

TEST(Route, DiagonalFirstOnMultiMode) {
  const auto t = build_topology(TopologyKind::hima_multimode, 24);
  const auto hops = route(t, RouterMode::full, *t.node_at(0, 0), *t.node_at(3, 3));
  ASSERT_EQ(hops.size(), 3u);
  for (const auto& h : hops) EXPECT_EQ(h.port, Port::SE);
  const auto bent = route(t, RouterMode::full, *t.node_at(0, 0), *t.node_at(1, 4));
  ASSERT_EQ(bent.size(), 4u);
  EXPECT_EQ(bent[0].port, Port::SE);
  for (std::size_t i = 1; i < 4; ++i) EXPECT_EQ(bent[i].port, Port::E);
}

TEST(Route, XYOnPlainMesh) {
  const auto t = build_topology(TopologyKind::mesh, 24);
  const auto hops = route(t, RouterMode::full, *t.node_at(0, 0), *t.node_at(2, 1));
  ASSERT_EQ(hops.size(), 3u);
  EXPECT_EQ(hops[0].port, Port::E);
  EXPECT_EQ(hops[1].port, Port::S);
  EXPECT_EQ(hops[2].port, Port::S);
}

// Routes are connected link chains from src to dst using only enabled ports.
TEST(Route, WellFormedEverywhere) {
  for (auto k : kAllTopologies)
    for (auto n : sizes_for(k)) {
      const auto t = build_topology(k, n);
      for (auto [a, b] : pairs(t)) {
        const auto hops = route(t, RouterMode::full, a, b);
        ASSERT_FALSE(hops.empty());
        EXPECT_EQ(hops.front().from, a);
        EXPECT_EQ(hops.back().to, b);
        for (std::size_t i = 0; i < hops.size(); ++i) {
          const auto& l = t.links()[hops[i].link];
          EXPECT_EQ(l.from, hops[i].from);
          EXPECT_EQ(l.to, hops[i].to);
          if (i > 0) {
            EXPECT_EQ(hops[i - 1].to, hops[i].from);
          }
          if (i + 1 < hops.size()) {
            EXPECT_TRUE(t.transit(hops[i].to));
          }
        }
        EXPECT_GE(hops.size(), hop_distance(t, a, b));
      }
    }
}

TEST(Route, MaskedModesStayInsideTheMask) {
  const auto t = build_topology(TopologyKind::hima_multimode, 24);
  for (auto mode : {RouterMode::ring, RouterMode::diagonal, RouterMode::mesh_xy, RouterMode::broadcast_collect})
    for (auto [a, b] : pairs(t)) {
      std::vector<Hop> hops;
      try {
        hops = route(t, mode, a, b);
      } catch (const unreachable_error&) {
        continue;
      }
      for (const auto& h : hops) EXPECT_TRUE(port_enabled(mode, h.port)) << to_string(mode);
    }
}

TEST(Simulate, IsolatedMessageLatency) {
  for (auto k : kAllTopologies) {
    const auto t = build_topology(k, 16);
    for (auto [a, b] : {std::pair<std::size_t, std::size_t>{0, 15}, {3, 16}, {16, 7}}) {
      const std::size_t h = route(t, RouterMode::full, a, b).size();
      for (std::size_t s : {1u, 4u, 9u}) {
        const auto r = simulate({{5, a, b, s, "x"}}, t);
        EXPECT_EQ(r.finish_cycle, 5 + h + s - 1) << to_string(k);
        EXPECT_EQ(r.message_hops[0], h);
      }
    }
  }
}

TEST(Simulate, LocalAndEmptyMessages) {
  const auto t = build_topology(TopologyKind::mesh, 4);
  const auto r = simulate({{2, 1, 1, 5, "self"}, {7, 0, 3, 0, "empty"}}, t);
  EXPECT_EQ(r.message_finish[0], 6u);
  EXPECT_EQ(r.message_finish[1], 7u);
  EXPECT_EQ(r.flits_injected, r.flits_delivered);
}

// Two same-route messages injected together serialize: the second tail lands S2 cycles later.
TEST(Simulate, SharedPathSerializes) {
  const auto t = build_topology(TopologyKind::mesh, 24);
  const auto a = *t.node_at(0, 0), b = *t.node_at(0, 4);
  const auto r = simulate({{0, a, b, 6, "first"}, {0, a, b, 3, "second"}}, t);
  EXPECT_EQ(r.message_finish[0], 4u + 6u - 1u);
  EXPECT_EQ(r.message_finish[1], r.message_finish[0] + 3u);
}

TEST(Simulate, RandomTrafficConservesFlitsAndRespectsBounds) {
  SplitMix64 rng(77);
  for (auto k : kAllTopologies)
    for (auto n : sizes_for(k)) {
      const auto t = build_topology(k, n);
      for (int trial = 0; trial < 4; ++trial) {
        const auto trace = random_trace(rng, t.pt_count() + 1, 40, 12, 30);
        SimParams params;
        params.queue_depth = gen::pick(rng, 1, 4);
        const auto r = simulate(trace, t, RouterMode::full, params);
        std::uint64_t words = 0, flit_hops = 0;
        std::uint64_t bound = 0;
        for (std::size_t i = 0; i < trace.size(); ++i) {
          const auto& m = trace[i];
          words += m.words;
          flit_hops += m.words * r.message_hops[i];
          const std::uint64_t earliest = m.cycle + r.message_hops[i] + m.words - 1;
          EXPECT_GE(r.message_finish[i], earliest);
          bound = std::max(bound, earliest);
        }
        EXPECT_EQ(r.flits_injected, words);
        EXPECT_EQ(r.flits_delivered, words);
        std::uint64_t carried = 0;
        for (auto f : r.link_flits) carried += f;
        EXPECT_EQ(carried, flit_hops);
        EXPECT_GE(r.finish_cycle, bound);
        EXPECT_LE(r.max_queue, params.queue_depth);
      }
    }
}

TEST(Simulate, Deterministic) {
  SplitMix64 rng(5);
  const auto t = build_topology(TopologyKind::hima_multimode, 24);
  const auto trace = random_trace(rng, 25, 200, 16, 50);
  EXPECT_EQ(simulate(trace, t), simulate(trace, t));
}

TEST(Simulate, BusiestLinkBoundsFinish) {
  SplitMix64 rng(9);
  const auto t = build_topology(TopologyKind::ring, 8);
  const auto trace = random_trace(rng, 9, 60, 8, 0);
  const auto r = simulate(trace, t);
  EXPECT_GE(r.finish_cycle + 1, *std::max_element(r.link_flits.begin(), r.link_flits.end()));
}

TEST(Simulate, MoreControllerPortsHelpTheStar) {
  const auto t = build_topology(TopologyKind::star, 16);
  TrafficTrace trace;
  for (std::size_t v = 0; v < 16; ++v) trace.push_back({0, v, (v + 8) % 16, 4, "x"});
  SimParams one;
  one.ct_ports = 1;
  EXPECT_GT(simulate(trace, t, RouterMode::full, one).finish_cycle, simulate(trace, t).finish_cycle);
}

TEST(Simulate, ModeScheduleDrainsBeforeSwitching) {
  const auto t = build_topology(TopologyKind::hima_multimode, 24);
  const auto a = *t.node_at(0, 0), b = *t.node_at(0, 4);
  // the switch at cycle 1 waits for the first message to drain; the second then uses ring links
  const auto r = simulate({{0, a, b, 4, "xy"}, {1, a, b, 2, "ring"}}, t,
                          {{0, RouterMode::mesh_xy}, {1, RouterMode::ring}});
  EXPECT_EQ(r.message_finish[0], 7u);
  EXPECT_GT(r.message_finish[1], r.message_finish[0]);
  EXPECT_EQ(r.flits_delivered, 6u);
}

TEST(Simulate, UnreachableInMode) {
  const auto t = build_topology(TopologyKind::hima_multimode, 24);
  EXPECT_THROW(simulate({{0, 0, 1, 1, "x"}}, t, RouterMode::broadcast_collect), unreachable_error);
  EXPECT_THROW(simulate({{0, 0, 99, 1, "x"}}, t), std::invalid_argument);
}
