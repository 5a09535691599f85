// SPDX-License-Identifier: Apache-2.0
//
// Flit-level NoC model: candidate topologies for one CT plus N_t PTs, the
// multi-mode router port masks, deterministic minimal routing, and a
// cycle-stepped wormhole simulator.
//
// Node numbering is shared by every topology: PTs are 0..N_t-1, the CT is N_t,
// tree-internal nodes follow.
#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hima/core.hpp"

namespace hima {

enum class TopologyKind { h_tree, binary_tree_x, mesh, star, ring, hima_multimode };

enum class Port : std::uint8_t { N, NE, E, SE, S, SW, W, NW, Tap, Up, Down, Lateral, Cw, Ccw };

enum class RouterMode { broadcast_collect, ring, diagonal, mesh_xy, full };

inline constexpr std::array<TopologyKind, 6> kAllTopologies{
    TopologyKind::h_tree, TopologyKind::binary_tree_x, TopologyKind::mesh,
    TopologyKind::star,   TopologyKind::ring,          TopologyKind::hima_multimode};

inline const char* to_string(TopologyKind k) {
  switch (k) {
    case TopologyKind::h_tree: return "h-tree";
    case TopologyKind::binary_tree_x: return "binary-tree-x";
    case TopologyKind::mesh: return "mesh";
    case TopologyKind::star: return "star";
    case TopologyKind::ring: return "ring";
    case TopologyKind::hima_multimode: return "hima-multimode";
  }
  return "?";
}

inline const char* to_string(RouterMode m) {
  switch (m) {
    case RouterMode::broadcast_collect: return "broadcast-collect";
    case RouterMode::ring: return "ring";
    case RouterMode::diagonal: return "diagonal";
    case RouterMode::mesh_xy: return "mesh-xy";
    case RouterMode::full: return "full";
  }
  return "?";
}

inline const char* to_string(Port p) {
  static constexpr const char* names[] = {"N",  "NE", "E",  "SE",      "S",  "SW",  "W",
                                          "NW", "tap", "up", "down", "lateral", "cw", "ccw"};
  return names[static_cast<int>(p)];
}

inline TopologyKind parse_topology(std::string_view s) {
  for (auto k : kAllTopologies)
    if (s == to_string(k)) return k;
  throw std::invalid_argument("unknown topology '" + std::string(s) + "'");
}

inline RouterMode parse_mode(std::string_view s) {
  for (auto m : {RouterMode::broadcast_collect, RouterMode::ring, RouterMode::diagonal, RouterMode::mesh_xy,
                 RouterMode::full})
    if (s == to_string(m)) return m;
  throw std::invalid_argument("unknown router mode '" + std::string(s) + "'");
}

inline bool is_grid(TopologyKind k) { return k == TopologyKind::mesh || k == TopologyKind::hima_multimode; }

/// Port mask of the multi-mode router. CT taps stay enabled in every mode.
inline bool port_enabled(RouterMode mode, Port p) {
  switch (mode) {
    case RouterMode::full: return true;
    case RouterMode::mesh_xy:
    case RouterMode::broadcast_collect:
      return p == Port::N || p == Port::E || p == Port::S || p == Port::W || p == Port::Tap;
    case RouterMode::ring: return p == Port::E || p == Port::W || p == Port::Tap;
    case RouterMode::diagonal: return p == Port::NE || p == Port::SW || p == Port::Tap;
  }
  return false;
}

struct Link {
  std::size_t from = 0;
  std::size_t to = 0;
  Port port = Port::Tap;
};

struct GridCell {
  int row = 0;
  int col = 0;
};

class Topology {
 public:
  TopologyKind kind() const noexcept { return kind_; }
  std::size_t pt_count() const noexcept { return n_t_; }
  std::size_t ct() const noexcept { return n_t_; }
  std::size_t node_count() const noexcept { return out_.size(); }
  bool is_pt(std::size_t v) const noexcept { return v < n_t_; }

  const std::vector<Link>& links() const noexcept { return links_; }
  const std::vector<std::size_t>& out_links(std::size_t v) const { return out_[v]; }
  const std::vector<std::size_t>& in_links(std::size_t v) const { return in_[v]; }

  /// Whether a node forwards traffic it neither sent nor receives.
  bool transit(std::size_t v) const { return transit_[v]; }

  std::optional<GridCell> cell(std::size_t v) const {
    if (!is_grid(kind_) || !cell_of_[v]) return std::nullopt;
    return cell_of_[v];
  }
  std::size_t grid_rows() const noexcept { return rows_; }
  std::size_t grid_cols() const noexcept { return cols_; }
  /// PTs the CT taps into when it sits outside the grid.
  const std::vector<std::size_t>& ct_attachments() const noexcept { return ct_attach_; }

  std::optional<std::size_t> node_at(int row, int col) const {
    if (row < 0 || col < 0 || row >= static_cast<int>(rows_) || col >= static_cast<int>(cols_)) return std::nullopt;
    return grid_[static_cast<std::size_t>(row) * cols_ + static_cast<std::size_t>(col)];
  }

  std::optional<std::size_t> link_between(std::size_t a, std::size_t b) const {
    for (std::size_t l : out_[a])
      if (links_[l].to == b) return l;
    return std::nullopt;
  }

  std::size_t degree(std::size_t v) const { return out_[v].size(); }

  friend Topology build_topology(TopologyKind kind, std::size_t n_t);

 private:
  void resize(std::size_t nodes) {
    out_.assign(nodes, {});
    in_.assign(nodes, {});
    transit_.assign(nodes, true);
    cell_of_.assign(nodes, std::nullopt);
  }
  void add_link(std::size_t a, std::size_t b, Port p) {
    out_[a].push_back(links_.size());
    in_[b].push_back(links_.size());
    links_.push_back({a, b, p});
  }

  TopologyKind kind_ = TopologyKind::mesh;
  std::size_t n_t_ = 0;
  std::vector<Link> links_;
  std::vector<std::vector<std::size_t>> out_;
  std::vector<std::vector<std::size_t>> in_;
  std::vector<bool> transit_;
  std::vector<std::optional<GridCell>> cell_of_;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> grid_;
  std::vector<std::size_t> ct_attach_;
};

namespace detail {

struct Direction {
  Port port;
  int dr;
  int dc;
};

inline constexpr std::array<Direction, 8> kCompass{{{Port::N, -1, 0},
                                                    {Port::NE, -1, 1},
                                                    {Port::E, 0, 1},
                                                    {Port::SE, 1, 1},
                                                    {Port::S, 1, 0},
                                                    {Port::SW, 1, -1},
                                                    {Port::W, 0, -1},
                                                    {Port::NW, -1, -1}}};

inline Port compass_port(int dr, int dc) {
  for (const auto& d : kCompass)
    if (d.dr == dr && d.dc == dc) return d.port;
  throw std::logic_error("compass_port: not a unit move");
}

}  // namespace detail

/// Builds one of the candidate NoCs.
///
/// Grids (mesh, hima-multimode): when N_t + 1 is an odd square the CT sits at
/// the centre of the g x g grid; otherwise the PTs form an r x c grid (r the
/// largest divisor of N_t not above sqrt N_t) and the CT taps into the central
/// PTs. Trees need a power-of-two N_t and put the CT at the root.
inline Topology build_topology(TopologyKind kind, std::size_t n_t) {
  if (n_t < 1) throw std::invalid_argument("build_topology: N_t must be >= 1");
  Topology t;
  t.kind_ = kind;
  t.n_t_ = n_t;
  const std::size_t ct = n_t;

  switch (kind) {
    case TopologyKind::mesh:
    case TopologyKind::hima_multimode: {
      const std::size_t g = detail::ceil_sqrt(n_t + 1);
      const bool centred = g * g == n_t + 1 && g % 2 == 1;
      t.resize(n_t + 1);
      if (centred) {
        t.rows_ = t.cols_ = g;
      } else {
        std::size_t r = 1;
        for (std::size_t d = 1; d * d <= n_t; ++d)
          if (n_t % d == 0) r = d;
        t.rows_ = r;
        t.cols_ = n_t / r;
      }
      t.grid_.assign(t.rows_ * t.cols_, 0);
      std::size_t next_pt = 0;
      for (std::size_t pos = 0; pos < t.grid_.size(); ++pos) {
        const bool centre = centred && pos == t.grid_.size() / 2;
        const std::size_t v = centre ? ct : next_pt++;
        t.grid_[pos] = v;
        t.cell_of_[v] = GridCell{static_cast<int>(pos / t.cols_), static_cast<int>(pos % t.cols_)};
      }
      const bool diagonals = kind == TopologyKind::hima_multimode;
      for (std::size_t pos = 0; pos < t.grid_.size(); ++pos) {
        const auto [row, col] = *t.cell_of_[t.grid_[pos]];
        for (const auto& d : detail::kCompass) {
          if (!diagonals && d.dr != 0 && d.dc != 0) continue;
          if (auto nb = t.node_at(row + d.dr, col + d.dc)) t.add_link(t.grid_[pos], *nb, d.port);
        }
      }
      if (!centred) {
        const std::size_t r0 = (t.rows_ - 1) / 2, r1 = t.rows_ / 2;
        const std::size_t c0 = (t.cols_ - 1) / 2, c1 = t.cols_ / 2;
        for (std::size_t r : {r0, r1})
          for (std::size_t c : {c0, c1}) {
            const std::size_t v = t.grid_[r * t.cols_ + c];
            if (std::find(t.ct_attach_.begin(), t.ct_attach_.end(), v) == t.ct_attach_.end())
              t.ct_attach_.push_back(v);
          }
        std::sort(t.ct_attach_.begin(), t.ct_attach_.end());
        for (std::size_t v : t.ct_attach_) {
          t.add_link(ct, v, Port::Tap);
          t.add_link(v, ct, Port::Tap);
        }
      }
      break;
    }
    case TopologyKind::h_tree:
    case TopologyKind::binary_tree_x: {
      if (!detail::is_pow2(n_t))
        throw std::invalid_argument(std::string("build_topology: ") + to_string(kind) + " needs a power-of-two N_t");
      if (n_t == 1) {
        t.resize(2);
        t.add_link(0, ct, Port::Up);
        t.add_link(ct, 0, Port::Down);
        break;
      }
      // heap numbering: 1 is the root (CT), leaves are n_t .. 2n_t-1 (PT i = heap n_t + i)
      t.resize(2 * n_t - 1);
      auto id = [&](std::size_t heap) { return heap >= n_t ? heap - n_t : heap == 1 ? ct : n_t + heap - 1; };
      for (std::size_t heap = 2; heap < 2 * n_t; ++heap) {
        t.add_link(id(heap), id(heap / 2), Port::Up);
        t.add_link(id(heap / 2), id(heap), Port::Down);
      }
      if (kind == TopologyKind::binary_tree_x) {
        for (std::size_t heap = 3; heap + 1 < 2 * n_t; heap += 2) {
          // heap odd -> right child; heap + 1 -> left child of the next parent (same level unless a power of two)
          if (detail::is_pow2(heap + 1)) continue;
          t.add_link(id(heap), id(heap + 1), Port::Lateral);
          t.add_link(id(heap + 1), id(heap), Port::Lateral);
        }
      }
      break;
    }
    case TopologyKind::star: {
      t.resize(n_t + 1);
      for (std::size_t v = 0; v < n_t; ++v) {
        t.add_link(ct, v, Port::Tap);
        t.add_link(v, ct, Port::Tap);
      }
      break;
    }
    case TopologyKind::ring: {
      t.resize(n_t + 1);
      t.transit_[ct] = false;
      if (n_t == 2) {
        t.add_link(0, 1, Port::Cw);
        t.add_link(1, 0, Port::Ccw);
      } else if (n_t > 2) {
        for (std::size_t v = 0; v < n_t; ++v) {
          t.add_link(v, (v + 1) % n_t, Port::Cw);
          t.add_link(v, (v + n_t - 1) % n_t, Port::Ccw);
        }
      }
      for (std::size_t v = 0; v < n_t; ++v) {
        t.add_link(v, ct, Port::Tap);
        t.add_link(ct, v, Port::Tap);
      }
      break;
    }
  }
  return t;
}

struct Hop {
  std::size_t link = 0;
  std::size_t from = 0;
  std::size_t to = 0;
  Port port = Port::Tap;
};

namespace detail {

inline bool link_allowed(const Topology& t, const Link& l, RouterMode mode) {
  return !is_grid(t.kind()) || port_enabled(mode, l.port);
}

/// BFS under the mode mask; transit restrictions apply to intermediate nodes.
inline std::optional<std::vector<std::size_t>> bfs_path(const Topology& t, std::size_t src, std::size_t dst,
                                                        RouterMode mode) {
  const std::size_t none = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> via(t.node_count(), none);
  std::vector<bool> seen(t.node_count(), false);
  std::queue<std::size_t> q;
  q.push(src);
  seen[src] = true;
  while (!q.empty()) {
    const std::size_t v = q.front();
    q.pop();
    if (v == dst) break;
    if (v != src && !t.transit(v)) continue;
    for (std::size_t l : t.out_links(v)) {
      const auto& link = t.links()[l];
      if (seen[link.to] || !link_allowed(t, link, mode)) continue;
      seen[link.to] = true;
      via[link.to] = l;
      q.push(link.to);
    }
  }
  if (!seen[dst]) return std::nullopt;
  std::vector<std::size_t> path;
  for (std::size_t v = dst; v != src; v = t.links()[via[v]].from) path.push_back(via[v]);
  std::reverse(path.begin(), path.end());
  return path;
}

/// Dimension-ordered grid walk between two grid nodes, or nullopt when the mode forbids it.
inline std::optional<std::vector<std::size_t>> grid_walk(const Topology& t, std::size_t src, std::size_t dst,
                                                         RouterMode mode) {
  auto a = *t.cell(src);
  const auto b = *t.cell(dst);
  const bool diagonals = t.kind() == TopologyKind::hima_multimode && mode == RouterMode::full;
  std::vector<std::size_t> path;
  auto step = [&](int dr, int dc) -> bool {
    const auto from = *t.node_at(a.row, a.col);
    const auto to = t.node_at(a.row + dr, a.col + dc);
    if (!to) return false;
    const auto l = t.link_between(from, *to);
    if (!l || !port_enabled(mode, t.links()[*l].port)) return false;
    if (*to != dst && !t.transit(*to)) return false;
    path.push_back(*l);
    a.row += dr;
    a.col += dc;
    return true;
  };
  auto sign = [](int x) { return (x > 0) - (x < 0); };
  switch (mode) {
    case RouterMode::ring:
      if (a.row != b.row) return std::nullopt;
      break;
    case RouterMode::diagonal:
      if ((b.row - a.row) != -(b.col - a.col)) return std::nullopt;
      while (a.row != b.row)
        if (!step(sign(b.row - a.row), sign(b.col - a.col))) return std::nullopt;
      return path;
    default: break;
  }
  if (diagonals)
    while (a.row != b.row && a.col != b.col)
      if (!step(sign(b.row - a.row), sign(b.col - a.col))) return std::nullopt;
  while (a.col != b.col)
    if (!step(0, sign(b.col - a.col))) return std::nullopt;
  while (a.row != b.row)
    if (!step(sign(b.row - a.row), 0)) return std::nullopt;
  return path;
}

inline std::optional<std::vector<std::size_t>> grid_route(const Topology& t, std::size_t src, std::size_t dst,
                                                          RouterMode mode) {
  if (mode == RouterMode::broadcast_collect && src != t.ct() && dst != t.ct()) return std::nullopt;
  if (t.cell(src) && t.cell(dst)) return grid_walk(t, src, dst, mode);
  // CT outside the grid: enter/leave through the nearest tapped PT, lowest id on ties
  const bool from_ct = src == t.ct();
  std::optional<std::vector<std::size_t>> best;
  std::size_t best_attach = 0;
  for (std::size_t a : t.ct_attachments()) {
    auto inner = from_ct ? grid_walk(t, a, dst, mode) : grid_walk(t, src, a, mode);
    if (!inner) continue;
    if (!best || inner->size() < best->size()) {
      best = std::move(inner);
      best_attach = a;
    }
  }
  if (!best) return std::nullopt;
  if (from_ct)
    best->insert(best->begin(), *t.link_between(t.ct(), best_attach));
  else
    best->push_back(*t.link_between(best_attach, t.ct()));
  return best;
}

/// Ring arcs may cross the wrap-around link only on their first hop, which
/// keeps the channel dependency graph acyclic without virtual channels.
inline std::optional<std::vector<std::size_t>> ring_path(const Topology& t, std::size_t src, std::size_t dst) {
  const std::size_t n = t.pt_count();
  if (src == t.ct() || dst == t.ct()) {
    if (auto l = t.link_between(src, dst)) return std::vector<std::size_t>{*l};
    return std::nullopt;
  }
  const std::size_t d_cw = (dst + n - src) % n;
  const std::size_t d_ccw = (src + n - dst) % n;
  const bool cw_ok = dst > src || src == n - 1;
  const bool ccw_ok = dst < src || src == 0;
  const bool cw = cw_ok && (!ccw_ok || d_cw <= d_ccw);
  std::vector<std::size_t> path;
  for (std::size_t v = src; v != dst;) {
    const std::size_t next = cw ? (v + 1) % n : (v + n - 1) % n;
    path.push_back(*t.link_between(v, next));
    v = next;
  }
  return path;
}

/// Shortest route of the form up*, at most one lateral hop, down*.
inline std::optional<std::vector<std::size_t>> tree_x_path(const Topology& t, std::size_t src, std::size_t dst) {
  // state = node * 3 + stage; stage 0 climbing, 1 after the lateral hop, 2 descending
  const std::size_t none = std::numeric_limits<std::size_t>::max();
  const std::size_t states = t.node_count() * 3;
  std::vector<std::size_t> via(states, none);
  std::vector<std::size_t> prev(states, none);
  std::vector<bool> seen(states, false);
  std::queue<std::size_t> q;
  q.push(src * 3);
  seen[src * 3] = true;
  std::size_t goal = none;
  while (!q.empty()) {
    const std::size_t s = q.front();
    q.pop();
    const std::size_t v = s / 3, stage = s % 3;
    if (v == dst) {
      goal = s;
      break;
    }
    for (std::size_t l : t.out_links(v)) {
      const auto& link = t.links()[l];
      std::size_t next_stage;
      if (link.port == Port::Up && stage == 0)
        next_stage = 0;
      else if (link.port == Port::Lateral && stage == 0)
        next_stage = 1;
      else if (link.port == Port::Down)
        next_stage = 2;
      else
        continue;
      const std::size_t ns = link.to * 3 + next_stage;
      if (seen[ns]) continue;
      seen[ns] = true;
      via[ns] = l;
      prev[ns] = s;
      q.push(ns);
    }
  }
  if (goal == none) return std::nullopt;
  std::vector<std::size_t> path;
  for (std::size_t s = goal; s != src * 3; s = prev[s]) path.push_back(via[s]);
  std::reverse(path.begin(), path.end());
  return path;
}

inline std::vector<std::size_t> route_links(const Topology& t, RouterMode mode, std::size_t src, std::size_t dst) {
  if (src >= t.node_count() || dst >= t.node_count()) throw std::invalid_argument("route: node out of range");
  if (src == dst) return {};
  std::optional<std::vector<std::size_t>> path;
  switch (t.kind()) {
    case TopologyKind::mesh:
    case TopologyKind::hima_multimode: path = grid_route(t, src, dst, mode); break;
    case TopologyKind::ring: path = ring_path(t, src, dst); break;
    case TopologyKind::binary_tree_x: path = tree_x_path(t, src, dst); break;
    default: path = bfs_path(t, src, dst, mode); break;
  }
  if (!path)
    throw unreachable_error("node " + std::to_string(dst) + " unreachable from " + std::to_string(src) + " in " +
                            to_string(mode) + " mode on " + to_string(t.kind()));
  return *path;
}

}  // namespace detail

/// Minimum hop count using only ports enabled in `mode`.
inline std::size_t hop_distance(const Topology& t, std::size_t a, std::size_t b, RouterMode mode = RouterMode::full) {
  if (a >= t.node_count() || b >= t.node_count()) throw std::invalid_argument("hop_distance: node out of range");
  if (is_grid(t.kind()) && mode == RouterMode::broadcast_collect && a != b && a != t.ct() && b != t.ct())
    throw unreachable_error("broadcast-collect mode only carries CT traffic");
  auto path = detail::bfs_path(t, a, b, mode);
  if (!path) throw unreachable_error("node " + std::to_string(b) + " unreachable from " + std::to_string(a));
  return path->size();
}

/// Deterministic deadlock-free route: diagonal-then-XY on the multi-mode grid
/// in full mode, XY otherwise on grids, shortest admissible arc (clockwise on
/// ties) on the ring, up-then-down on trees with at most one lateral hop.
inline std::vector<Hop> route(const Topology& t, RouterMode mode, std::size_t src, std::size_t dst) {
  std::vector<Hop> hops;
  for (std::size_t l : detail::route_links(t, mode, src, dst)) {
    const auto& link = t.links()[l];
    hops.push_back({l, link.from, link.to, link.port});
  }
  return hops;
}

// ---------------------------------------------------------------------------
// simulation

struct Message {
  std::uint64_t cycle = 0;  // earliest injection cycle
  std::size_t src = 0;
  std::size_t dst = 0;
  std::size_t words = 0;  // one flit per word
  std::string tag;
};

using TrafficTrace = std::vector<Message>;

struct ModeChange {
  std::uint64_t cycle = 0;
  RouterMode mode = RouterMode::full;
};

struct SimParams {
  std::size_t queue_depth = 4;
  std::size_t ct_ports = 4;  // star hub: flits the CT router moves per cycle
  std::size_t deadlock_factor = 10;
};

struct NocReport {
  std::uint64_t finish_cycle = 0;
  std::vector<std::uint64_t> link_flits;  // indexed by link id
  std::uint64_t stalls = 0;
  std::size_t max_queue = 0;
  std::uint64_t flits_injected = 0;
  std::uint64_t flits_delivered = 0;
  std::vector<std::uint64_t> message_finish;  // cycle the tail flit was delivered
  std::vector<std::size_t> message_hops;

  bool operator==(const NocReport&) const = default;
};

namespace detail {

class NocSimulator {
 public:
  NocSimulator(const TrafficTrace& trace, const Topology& topo, std::vector<ModeChange> schedule,
               const SimParams& params)
      : trace_(trace), topo_(topo), schedule_(std::move(schedule)), params_(params) {
    detail::require(params.queue_depth >= 1, "simulate: queue depth must be >= 1");
    std::stable_sort(schedule_.begin(), schedule_.end(),
                     [](const ModeChange& a, const ModeChange& b) { return a.cycle < b.cycle; });
    for (const auto& m : trace)
      if (m.src >= topo.node_count() || m.dst >= topo.node_count())
        throw std::invalid_argument("simulate: message endpoint out of range");
    queues_.resize(topo.links().size());
    occupancy_.resize(topo.links().size());
    alloc_.resize(topo.links().size());
    rr_.assign(topo.links().size(), 0);
    inject_owner_.assign(topo.links().size(), 0);
    popped_.assign(topo.links().size(), std::numeric_limits<std::uint64_t>::max());
    msgs_.resize(trace.size());
    report_.link_flits.assign(topo.links().size(), 0);
    report_.message_finish.assign(trace.size(), 0);
    report_.message_hops.assign(trace.size(), 0);
    pending_.resize(topo.node_count());
    order_.resize(trace.size());
    for (std::size_t i = 0; i < trace.size(); ++i) order_[i] = i;
    std::stable_sort(order_.begin(), order_.end(),
                     [&](std::size_t a, std::size_t b) { return trace[a].cycle < trace[b].cycle; });
    star_hub_ = topo.kind() == TopologyKind::star;
  }

  NocReport run() {
    std::size_t remaining = 0;
    for (std::size_t i = 0; i < trace_.size(); ++i) {
      const auto& m = trace_[i];
      report_.flits_injected += m.words;
      if (m.words == 0) {
        report_.message_finish[i] = m.cycle;
        continue;
      }
      if (m.src == m.dst) {  // local copy, one word per cycle, never enters the network
        report_.message_finish[i] = m.cycle + m.words - 1;
        report_.flits_delivered += m.words;
        report_.finish_cycle = std::max(report_.finish_cycle, report_.message_finish[i]);
        continue;
      }
      ++remaining;
    }
    std::size_t next_arrival = 0;  // index into order_
    std::uint64_t t = 0;
    std::uint64_t idle = 0;
    std::size_t max_hops = 1;
    network_mode_ = mode_at(0);

    while (remaining > 0) {
      // admit messages whose injection cycle has come; skip local ones
      while (next_arrival < order_.size() && trace_[order_[next_arrival]].cycle <= t) {
        const std::size_t i = order_[next_arrival++];
        if (trace_[i].words > 0 && trace_[i].src != trace_[i].dst) waiting_.push_back(i);
      }
      // mode switches wait for the network to drain
      const RouterMode wanted = mode_at(t);
      if (wanted != network_mode_ && in_flight_ == 0 && started_unfinished_ == 0) network_mode_ = wanted;
      if (wanted == network_mode_) {
        for (std::size_t i : waiting_) start(i, max_hops);
        waiting_.clear();
      }

      // arrivals
      for (const auto& [link, flit] : arriving_) {
        auto& q = queues_[link];
        Flit f = flit;
        f.arrive = t;
        f.feed_through = q.empty();
        q.push_back(f);
        report_.max_queue = std::max(report_.max_queue, q.size());
      }
      arriving_.clear();
      for (std::size_t l = 0; l < queues_.size(); ++l) occupancy_[l] = queues_[l].size();

      bool moved = false;
      for (std::size_t v = 0; v < topo_.node_count(); ++v) moved |= step_node(v, t, remaining);

      if (remaining == 0) break;
      const bool busy = in_flight_ > 0 || started_unfinished_ > 0;
      if (!moved && busy) {
        if (++idle > params_.deadlock_factor * topo_.node_count() * max_hops) throw deadlock_error(dump(t));
      } else {
        idle = 0;
      }
      ++t;
      if (!busy && waiting_.empty() && next_arrival < order_.size())
        t = std::max(t, trace_[order_[next_arrival]].cycle);
    }
    return report_;
  }

 private:
  struct Flit {
    std::size_t msg = 0;
    std::size_t seq = 0;
    std::size_t hop = 0;  // index in the message path of the link it arrived on
    std::uint64_t arrive = 0;
    bool feed_through = false;
  };
  struct Alloc {
    bool busy = false;
    std::size_t owner = 0;  // input link id, or injection when `inject`
    bool inject = false;
  };
  struct MsgState {
    std::vector<std::size_t> path;
    RouterMode mode = RouterMode::full;
    std::size_t injected = 0;
    std::size_t delivered = 0;
  };

  RouterMode mode_at(std::uint64_t t) const {
    RouterMode m = RouterMode::full;
    for (const auto& c : schedule_)
      if (c.cycle <= t) m = c.mode;
    return m;
  }

  void start(std::size_t i, std::size_t& max_hops) {
    msgs_[i].path = route_links(topo_, network_mode_, trace_[i].src, trace_[i].dst);
    msgs_[i].mode = network_mode_;
    report_.message_hops[i] = msgs_[i].path.size();
    max_hops = std::max(max_hops, msgs_[i].path.size());
    pending_[trace_[i].src].push_back(i);
    ++started_unfinished_;
  }

  bool ready(const Flit& f, std::uint64_t t) const {
    return (f.feed_through && t == f.arrive) || t >= f.arrive + 2;
  }

  void send(std::size_t link, Flit f) {
    const auto& m = msgs_[f.msg];
    if (!port_enabled(m.mode, topo_.links()[link].port) && is_grid(topo_.kind()))
      throw std::logic_error("flit routed through a disabled port");
    ++report_.link_flits[link];
    arriving_.push_back({link, f});
    ++in_flight_;
  }

  bool step_node(std::size_t v, std::uint64_t t, std::size_t& remaining) {
    bool moved = false;
    std::size_t budget = (star_hub_ && v == topo_.ct()) ? params_.ct_ports : std::numeric_limits<std::size_t>::max();
    const auto& ins = topo_.in_links(v);

    // ejection
    for (std::size_t in : ins) {
      auto& q = queues_[in];
      if (q.empty() || budget == 0) continue;
      Flit& f = q.front();
      if (trace_[f.msg].dst != v) continue;
      if (!ready(f, t)) continue;
      auto& m = msgs_[f.msg];
      ++m.delivered;
      ++report_.flits_delivered;
      --in_flight_;
      --budget;
      moved = true;
      if (m.delivered == trace_[f.msg].words) {
        report_.message_finish[f.msg] = t;
        report_.finish_cycle = std::max(report_.finish_cycle, t);
        --remaining;
        --started_unfinished_;
      }
      popped_[in] = t;
      q.pop_front();
    }

    // forwarding and injection, one flit per output link
    for (std::size_t out : topo_.out_links(v)) {
      if (budget == 0) break;
      auto& a = alloc_[out];
      const bool credit = occupancy_[out] < params_.queue_depth;
      if (a.busy) {
        if (a.inject) {
          const std::size_t i = inject_owner_[out];
          if (!credit) continue;
          inject_flit(i, out);
          --budget;
          moved = true;
        } else {
          auto& q = queues_[a.owner];
          if (q.empty() || !ready(q.front(), t)) continue;
          if (!credit) continue;
          forward_flit(a.owner, out, t);
          --budget;
          moved = true;
        }
        continue;
      }
      // free link: round-robin over input queues, then the injection slot
      const std::size_t slots = ins.size() + 1;
      std::optional<std::size_t> grant;
      std::optional<std::size_t> inject_msg;
      for (std::size_t k = 1; k <= slots && !grant; ++k) {
        const std::size_t s = (rr_[out] + k) % slots;
        if (s < ins.size()) {
          auto& q = queues_[ins[s]];
          if (q.empty()) continue;
          const Flit& f = q.front();
          if (trace_[f.msg].dst == v || f.seq != 0) continue;
          if (msgs_[f.msg].path[f.hop + 1] != out) continue;
          if (!ready(f, t)) continue;
          grant = s;
        } else {
          for (std::size_t i : pending_[v]) {
            if (msgs_[i].injected == 0 && msgs_[i].path.front() == out) {
              inject_msg = i;
              grant = s;
              break;
            }
          }
        }
      }
      if (!grant) continue;
      if (!credit) continue;
      rr_[out] = *grant;
      a.busy = true;
      if (inject_msg) {
        a.inject = true;
        inject_owner_[out] = *inject_msg;
        inject_flit(*inject_msg, out);
      } else {
        a.inject = false;
        a.owner = ins[*grant];
        forward_flit(a.owner, out, t);
      }
      --budget;
      moved = true;
    }

    // ready heads that did not move this cycle
    for (std::size_t in : ins) {
      const auto& q = queues_[in];
      if (!q.empty() && popped_[in] != t && ready(q.front(), t)) ++report_.stalls;
    }
    return moved;
  }

  void inject_flit(std::size_t i, std::size_t out) {
    auto& m = msgs_[i];
    Flit f{i, m.injected, 0, 0, false};
    send(out, f);
    ++m.injected;
    if (m.injected == trace_[i].words) {
      alloc_[out].busy = false;
      auto& p = pending_[trace_[i].src];
      p.erase(std::find(p.begin(), p.end(), i));
    }
  }

  void forward_flit(std::size_t in, std::size_t out, std::uint64_t t) {
    auto& q = queues_[in];
    popped_[in] = t;
    Flit f = q.front();
    q.pop_front();
    --in_flight_;  // re-counted by send
    f.hop += 1;
    send(out, f);
    if (f.seq + 1 == trace_[f.msg].words) alloc_[out].busy = false;
  }

  std::string dump(std::uint64_t t) const {
    std::ostringstream os;
    os << "NoC deadlock at cycle " << t << "; non-empty queues:";
    for (std::size_t l = 0; l < queues_.size(); ++l) {
      if (queues_[l].empty()) continue;
      const auto& link = topo_.links()[l];
      os << "\n  link " << l << " (" << link.from << "->" << link.to << ", " << to_string(link.port)
         << "): " << queues_[l].size() << " flits, head msg " << queues_[l].front().msg << " seq "
         << queues_[l].front().seq;
    }
    return os.str();
  }

  const TrafficTrace& trace_;
  const Topology& topo_;
  std::vector<ModeChange> schedule_;
  SimParams params_;
  std::vector<std::deque<Flit>> queues_;
  std::vector<std::size_t> occupancy_;
  std::vector<Alloc> alloc_;
  std::vector<std::size_t> rr_;
  std::vector<MsgState> msgs_;
  std::vector<std::vector<std::size_t>> pending_;  // per source node, messages still injecting
  std::vector<std::size_t> inject_owner_;  // message injecting on each link
  std::vector<std::uint64_t> popped_;       // last cycle each input queue released a flit
  std::vector<std::pair<std::size_t, Flit>> arriving_;
  std::vector<std::size_t> order_;
  std::vector<std::size_t> waiting_;
  std::size_t in_flight_ = 0;
  std::size_t started_unfinished_ = 0;
  RouterMode network_mode_ = RouterMode::full;
  bool star_hub_ = false;
  NocReport report_;
};

}  // namespace detail

/// Cycle-stepped run of `trace`. Mode changes take effect once in-flight flits have drained.
inline NocReport simulate(const TrafficTrace& trace, const Topology& topo, std::vector<ModeChange> schedule,
                          const SimParams& params = {}) {
  return detail::NocSimulator(trace, topo, std::move(schedule), params).run();
}

inline NocReport simulate(const TrafficTrace& trace, const Topology& topo, RouterMode mode = RouterMode::full,
                          const SimParams& params = {}) {
  return simulate(trace, topo, std::vector<ModeChange>{{0, mode}}, params);
}

}  // namespace hima
