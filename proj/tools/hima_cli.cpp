// SPDX-License-Identifier: Apache-2.0
//
// hima: command-line front end for the memory-unit model, partition planner,
// sort engine and tiled-architecture simulator.
//
// Exit codes: 0 success, 1 a check failed, 2 usage error.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "config.hpp"
#include "hima/hima.hpp"

namespace fs = std::filesystem;
using namespace hima;
using namespace hima::cli;
using ojson = nlohmann::ordered_json;

namespace {

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kUsage = 2;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format = "csv";
  std::string trace;
};

/// Artifacts go to files under --out, or the primary one to stdout when --out is absent.
class Output {
 public:
  explicit Output(std::string dir) : dir_(std::move(dir)) {
    if (!dir_.empty()) {
      std::error_code ec;
      fs::create_directories(dir_, ec);
      if (ec) throw usage_error("cannot create output directory '" + dir_ + "': " + ec.message());
    }
  }

  void write(const std::string& name, const std::string& content, bool primary) {
    if (dir_.empty()) {
      if (primary) std::cout << content;
      return;
    }
    std::ofstream f(fs::path(dir_) / name, std::ios::binary);
    if (!f) throw usage_error("cannot write '" + name + "' under '" + dir_ + "'");
    f << content;
  }

 private:
  std::string dir_;
};

struct Context {
  Flags flags;
  ExperimentConfig cfg;
  fs::path config_dir;

  bool json() const { return flags.format == "json"; }

  std::uint64_t seed(bool required) const {
    if (flags.seed) return *flags.seed;
    if (cfg.seed) return *cfg.seed;
    if (required) throw usage_error("a seed is required (--seed or \"seed\" in the config)");
    return 0;
  }
};

std::string dump(const ojson& j) { return j.dump(2) + "\n"; }

ojson partition_json(const PartitionSpec& p) { return ojson::array({p.n_h, p.n_w}); }

// ---------------------------------------------------------------------------
// reference-run

template <class Real>
int reference_run(const Context& ctx) {
  const MemoryGeometry g = ctx.cfg.geometry.value_or(MemoryGeometry{64, 16, 2});
  try {
    g.validate(true);
  } catch (const std::invalid_argument& e) {
    throw usage_error(e.what());
  }
  const auto script = make_script<Real>(g, ctx.cfg.steps, ctx.seed(true));
  StepOptions opt;
  opt.softmax = ctx.cfg.softmax;
  opt.skim = ctx.cfg.skim;
  const bool full_allocation = ctx.cfg.skim.dropped(g.N) == 0;

  std::ostringstream csv;
  ojson rows = ojson::array();
  write_csv_row(csv, "step", "invariants_ok", "usage_sum", "precedence_sum", "write_weight_sum", "memory_digest",
                "read_digest");
  auto state = MemoryState<Real>::zeros(g);
  int status = kOk;
  for (std::size_t t = 0; t < script.size(); ++t) {
    auto [next, out] = dnc_step(state, script[t], opt);
    const auto problem = check_invariants(next, &out.intermediates, full_allocation);
    auto as_double = [](std::span<const Real> v) { return std::vector<double>(v.begin(), v.end()); };
    const auto mem = as_double(next.memory.data());
    const auto rd = as_double(out.read_vectors.data());
    const double usage_sum = static_cast<double>(sum<Real>(next.usage));
    const double prec_sum = static_cast<double>(sum<Real>(next.precedence));
    const double ww_sum = static_cast<double>(sum<Real>(next.write_weights));
    const std::string mem_digest = hex64(fnv1a_digest(mem));
    const std::string read_digest = hex64(fnv1a_digest(rd));
    write_csv_row(csv, t, !problem, usage_sum, prec_sum, ww_sum, mem_digest, read_digest);
    rows.push_back({{"step", t},
                    {"invariants_ok", !problem},
                    {"usage_sum", usage_sum},
                    {"precedence_sum", prec_sum},
                    {"write_weight_sum", ww_sum},
                    {"memory_digest", mem_digest},
                    {"read_digest", read_digest}});
    if (problem) {
      std::cerr << "hima reference-run: invariant violated at step " << t << ": " << *problem << "\n";
      status = kCheckFailed;
      break;
    }
    state = std::move(next);
  }

  Output out(ctx.flags.out);
  if (ctx.json())
    out.write("reference_run.json", dump({{"schema_version", kSchemaVersion}, {"rows", rows}}), true);
  else
    out.write("reference_run.csv", csv.str(), true);
  return status;
}

// ---------------------------------------------------------------------------
// plan-partition

int plan_partition(const Context& ctx) {
  const MemoryGeometry g = ctx.cfg.geometry.value_or(MemoryGeometry{1024, 64, 4});
  g.validate(false);
  auto n_ts = ctx.cfg.n_t_list;
  std::sort(n_ts.begin(), n_ts.end());
  n_ts.erase(std::unique(n_ts.begin(), n_ts.end()), n_ts.end());

  std::ostringstream sweep_csv, optima_csv;
  ojson sweep = ojson::array(), optima = ojson::array();
  write_csv_row(sweep_csv, "n_t", "n_w", "n_h", "cost", "kernel");
  for (auto kernel : {SweepKernel::read, SweepKernel::linkage})
    for (const auto& p : sweep_costs(g.N, g.W, n_ts, kernel)) {
      write_csv_row(sweep_csv, p.n_t, p.n_w, p.n_h, p.cost, to_string(p.kernel));
      sweep.push_back({{"n_t", p.n_t}, {"n_w", p.n_w}, {"n_h", p.n_h}, {"cost", p.cost}, {"kernel", to_string(kernel)}});
    }

  const std::size_t n_t = ctx.cfg.n_t;
  const auto ext = optimal_external(g.N, g.W, n_t);
  const double ext_cost = content_cost(g.N, ext) + read_cost(g.N, g.W, n_t, ext);
  const auto lnk = optimal_linkage(n_t, g.N);
  const double lnk_cost = linkage_cost(n_t, lnk);
  write_csv_row(optima_csv, "kernel", "n_h", "n_w", "cost");
  write_csv_row(optima_csv, "external", ext.n_h, ext.n_w, ext_cost);
  write_csv_row(optima_csv, "linkage", lnk.n_h, lnk.n_w, lnk_cost);
  optima.push_back({{"kernel", "external"}, {"n_h", ext.n_h}, {"n_w", ext.n_w}, {"cost", ext_cost}});
  optima.push_back({{"kernel", "linkage"}, {"n_h", lnk.n_h}, {"n_w", lnk.n_w}, {"cost", lnk_cost}});

  Output out(ctx.flags.out);
  if (ctx.json()) {
    out.write("plan_partition.json",
              dump({{"schema_version", kSchemaVersion}, {"n_t", n_t}, {"sweep", sweep}, {"optima", optima}}), true);
  } else {
    out.write("partition_sweep.csv", sweep_csv.str(), false);
    out.write("partition_optima.csv", optima_csv.str(), true);
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// sort-bench

int sort_bench(const Context& ctx) {
  std::ostringstream csv;
  ojson rows = ojson::array();
  write_csv_row(csv, "n", "n_t", "p", "d_dpbs", "d_pms", "local_cycles", "global_cycles", "total_cycles",
                "baseline_nlogn");
  SplitMix64 rng(ctx.seed(false));
  int status = kOk;
  if (ctx.cfg.sort_rows.empty()) throw usage_error("sort-bench: no (N, N_t) rows requested");
  for (const auto& [n, n_t] : ctx.cfg.sort_rows) {
    if (n == 0) throw usage_error("sort-bench: empty usage vector (N = 0)");
    if (n_t == 0 || n % n_t != 0) throw usage_error("sort-bench: N must be divisible by N_t >= 1");
    const auto sc = SortConfig::for_usage(n, n_t, ctx.cfg.sort.d_dpbs, ctx.cfg.sort.d_pms);
    std::vector<double> usage(n);
    for (auto& u : usage) u = rng.uniform();
    const auto res = two_stage_sort<double>(usage, sc);
    std::vector<std::size_t> expected(n);
    std::iota(expected.begin(), expected.end(), std::size_t{0});
    std::stable_sort(expected.begin(), expected.end(), [&](auto a, auto b) { return usage[a] < usage[b]; });
    if (res.permutation != expected) {
      std::cerr << "hima sort-bench: two-stage sort disagrees with the reference order for N=" << n
                << ", N_t=" << n_t << "\n";
      status = kCheckFailed;
    }
    const auto base = baseline_nlogn_cycles(n);
    write_csv_row(csv, n, n_t, sc.p, sc.d_dpbs, sc.d_pms, res.cycles.local_cycles, res.cycles.global_cycles,
                  res.cycles.total_cycles, base);
    rows.push_back({{"n", n},
                    {"n_t", n_t},
                    {"p", sc.p},
                    {"d_dpbs", sc.d_dpbs},
                    {"d_pms", sc.d_pms},
                    {"local_cycles", res.cycles.local_cycles},
                    {"global_cycles", res.cycles.global_cycles},
                    {"total_cycles", res.cycles.total_cycles},
                    {"baseline_nlogn", base}});
  }
  Output out(ctx.flags.out);
  if (ctx.json())
    out.write("sort_bench.json", dump({{"schema_version", kSchemaVersion}, {"rows", rows}}), true);
  else
    out.write("sort_bench.csv", csv.str(), true);
  return status;
}

// ---------------------------------------------------------------------------
// sim and noc-sweep

std::pair<std::string, ojson> sweep_artifacts(const ArchConfig& arch, const ExperimentConfig& cfg) {
  auto n_ts = cfg.n_t_list;
  std::sort(n_ts.begin(), n_ts.end());
  n_ts.erase(std::unique(n_ts.begin(), n_ts.end()), n_ts.end());
  std::ostringstream csv;
  ojson rows = ojson::array();
  write_csv_row(csv, "model", "topology", "n_t", "step_cycles", "speedup");
  for (const auto& r : speedup_sweep(arch, n_ts, cfg.topologies)) {
    write_csv_row(csv, to_string(r.model), to_string(r.topology), r.n_t, r.step_cycles, r.speedup);
    rows.push_back({{"model", to_string(r.model)},
                    {"topology", to_string(r.topology)},
                    {"n_t", r.n_t},
                    {"step_cycles", r.step_cycles},
                    {"speedup", r.speedup}});
  }
  return {csv.str(), rows};
}

template <class Real>
int sim(const Context& ctx) {
  const auto arch = ctx.cfg.arch(MemoryGeometry{1024, 64, 4});
  try {
    arch.validate();
    if (arch.model == ModelKind::dnc_d) arch.local_geometry().validate(false);
  } catch (const std::invalid_argument& e) {
    throw usage_error(e.what());
  }
  const std::uint64_t seed = ctx.seed(true);
  RunResult<Real> run;
  try {
    if (arch.model == ModelKind::dnc) {
      run = run_dnc(arch, make_script<Real>(arch.geometry, ctx.cfg.steps, seed));
    } else {
      DncdConfig dncd = DncdConfig::uniform(arch.n_t, arch.geometry.R);
      if (ctx.cfg.alpha) {
        if (ctx.cfg.alpha->size() != arch.n_t) throw usage_error("config: alpha needs one weight per tile");
        for (double a : *ctx.cfg.alpha)
          if (!(a >= 0.0 && a <= 1.0)) throw usage_error("config: alpha weights must lie in [0, 1]");
        dncd = DncdConfig::shared(*ctx.cfg.alpha, arch.geometry.R);
      }
      run = run_dncd(arch, dncd, make_tile_scripts<Real>(arch.local_geometry(), arch.n_t, ctx.cfg.steps, seed));
    }
  } catch (const equivalence_error& e) {
    std::cerr << "hima sim: " << e.what() << "\n";
    return kCheckFailed;
  }

  const auto& r = run.report;
  std::ostringstream kernels_csv;
  ojson kernels = ojson::array();
  write_csv_row(kernels_csv, "kernel", "type", "compute_cycles", "traffic_cycles", "total_cycles", "inter_pt_words",
                "ct_pt_words");
  for (const auto& k : r.kernels) {
    write_csv_row(kernels_csv, to_string(k.kernel), kernel_type(k.kernel), k.compute_cycles, k.traffic_cycles,
                  k.total_cycles, k.inter_pt_words, k.ct_pt_words);
    kernels.push_back({{"kernel", to_string(k.kernel)},
                       {"type", kernel_type(k.kernel)},
                       {"compute_cycles", k.compute_cycles},
                       {"traffic_cycles", k.traffic_cycles},
                       {"total_cycles", k.total_cycles},
                       {"inter_pt_words", k.inter_pt_words},
                       {"ct_pt_words", k.ct_pt_words}});
  }
  std::uint64_t digest = 0xcbf29ce484222325ULL;
  for (const auto& v : run.read_vectors) {
    std::vector<double> d(v.data().begin(), v.data().end());
    digest = fnv1a_digest(d, digest);
  }
  ojson summary = {{"schema_version", kSchemaVersion},
                  {"model", to_string(arch.model)},
                  {"topology", to_string(arch.topology)},
                  {"n_t", arch.n_t},
                  {"geometry", {{"N", arch.geometry.N}, {"W", arch.geometry.W}, {"R", arch.geometry.R}}},
                  {"ext_partition", partition_json(arch.external())},
                  {"linkage_partition", partition_json(arch.linkage())},
                  {"steps", r.steps},
                  {"seed", seed},
                  {"step_cycles", r.step_cycles},
                  {"total_cycles", r.total_cycles},
                  {"baseline_step_cycles", r.baseline_step_cycles},
                  {"speedup", r.speedup},
                  {"inter_pt_flits", r.inter_pt_flits},
                  {"ct_pt_flits", r.ct_pt_flits},
                  {"noc_stalls", r.noc_stalls},
                  {"max_rel_error", r.max_rel_error},
                  {"read_digest", hex64(digest)}};
  auto [sweep_csv, sweep] = sweep_artifacts(arch, ctx.cfg);

  Output out(ctx.flags.out);
  if (ctx.json()) {
    summary["kernels"] = kernels;
    summary["sweep"] = sweep;
    out.write("sim.json", dump(summary), true);
  } else {
    out.write("kernel_breakdown.csv", kernels_csv.str(), false);
    out.write("speedup_sweep.csv", sweep_csv, false);
    out.write("summary.json", dump(summary), true);
  }
  return kOk;
}

int noc_trace(const Context& ctx, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw usage_error("cannot open trace '" + path.string() + "'");
  TrafficTrace trace;
  Topology topo;
  try {
    trace = read_trace_csv(in);
    topo = build_topology(ctx.cfg.topology, ctx.cfg.n_t);
  } catch (const std::invalid_argument& e) {
    throw usage_error(e.what());
  }
  NocReport r;
  try {
    r = simulate(trace, topo, ctx.cfg.mode, ctx.cfg.router);
  } catch (const std::invalid_argument& e) {
    throw usage_error(e.what());
  } catch (const unreachable_error& e) {
    std::cerr << "hima noc-sweep: " << e.what() << "\n";
    return kCheckFailed;
  } catch (const deadlock_error& e) {
    std::cerr << "hima noc-sweep: " << e.what() << "\n";
    return kCheckFailed;
  }
  ojson summary = {{"schema_version", kSchemaVersion},
                  {"topology", to_string(topo.kind())},
                  {"n_t", topo.pt_count()},
                  {"mode", to_string(ctx.cfg.mode)},
                  {"messages", trace.size()},
                  {"finish_cycle", r.finish_cycle},
                  {"stalls", r.stalls},
                  {"max_queue", r.max_queue},
                  {"flits_injected", r.flits_injected},
                  {"flits_delivered", r.flits_delivered}};
  std::ostringstream links, messages;
  write_link_csv(links, topo, r);
  write_message_csv(messages, trace, r);
  Output out(ctx.flags.out);
  if (ctx.json()) {
    summary["link_flits"] = r.link_flits;
    summary["message_finish"] = r.message_finish;
    out.write("noc_trace.json", dump(summary), true);
  } else {
    out.write("noc_links.csv", links.str(), false);
    out.write("noc_messages.csv", messages.str(), false);
    out.write("noc_summary.json", dump(summary), true);
  }
  return r.flits_injected == r.flits_delivered ? kOk : kCheckFailed;
}

int noc_sweep(const Context& ctx) {
  std::optional<fs::path> trace;
  if (!ctx.flags.trace.empty())
    trace = ctx.flags.trace;
  else if (ctx.cfg.trace)
    trace = ctx.config_dir / *ctx.cfg.trace;
  if (trace) return noc_trace(ctx, *trace);

  const auto arch = ctx.cfg.arch(MemoryGeometry{1024, 64, 4});
  try {
    arch.geometry.validate(true);
  } catch (const std::invalid_argument& e) {
    throw usage_error(e.what());
  }
  auto [csv, rows] = sweep_artifacts(arch, ctx.cfg);
  Output out(ctx.flags.out);
  if (ctx.json())
    out.write("noc_sweep.json", dump({{"schema_version", kSchemaVersion}, {"rows", rows}}), true);
  else
    out.write("noc_sweep.csv", csv, true);
  return kOk;
}

int dispatch(const std::string& command, Context& ctx) {
  if (!ctx.flags.config.empty()) {
    ctx.cfg = load_config(ctx.flags.config);
    ctx.config_dir = fs::path(ctx.flags.config).parent_path();
  }
  const bool single = ctx.cfg.precision == 32;
  if (command == "reference-run") return single ? reference_run<float>(ctx) : reference_run<double>(ctx);
  if (command == "plan-partition") return plan_partition(ctx);
  if (command == "sort-bench") return sort_bench(ctx);
  if (command == "sim") return single ? sim<float>(ctx) : sim<double>(ctx);
  return noc_sweep(ctx);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HiMA memory-unit model and tiled-accelerator simulator"};
  app.require_subcommand(1);
  Flags flags;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"reference-run", "run the reference memory unit on a seeded script and check state invariants"},
      {"plan-partition", "inter-tile traffic of every memory partition and the optimal choices"},
      {"sort-bench", "two-stage usage sort cycle counts against an N log N baseline"},
      {"sim", "tiled DNC / DNC-D simulation with kernel breakdown and speedup sweep"},
      {"noc-sweep", "speedup over topologies and tile counts, or a flit-level run of a trace file"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", flags.config, "experiment config (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--seed", flags.seed, "script seed (unsigned 64-bit)");
    sub->add_option("--out", flags.out, "output directory; without it the main artifact goes to stdout");
    sub->add_option("--format", flags.format, "artifact format")->check(CLI::IsMember({"csv", "json"}));
    if (name == "noc-sweep") sub->add_option("--trace", flags.trace, "trace CSV: cycle,src,dst,words,tag");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  Context ctx;
  ctx.flags = flags;
  try {
    return dispatch(app.get_subcommands().front()->get_name(), ctx);
  } catch (const usage_error& e) {
    std::cerr << "hima: " << e.what() << "\n";
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "hima: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "hima: " << e.what() << "\n";
    return kCheckFailed;
  }
}
