// Per-kernel cycle breakdown of one step on 16 tiles, then speedup over a
// single tile for each topology.
#include <cstdio>

#include "hima/hima.hpp"

int main() {
  using namespace hima;
  ArchConfig cfg;
  cfg.geometry = {1024, 64, 4};
  cfg.n_t = 16;

  const auto step = step_timing(cfg);
  std::printf("%-17s %8s %8s %8s\n", "kernel", "compute", "traffic", "total");
  for (const auto& k : step.kernels)
    std::printf("%-17s %8llu %8llu %8llu\n", to_string(k.kernel), (unsigned long long)k.compute_cycles,
                (unsigned long long)k.traffic_cycles, (unsigned long long)k.total_cycles);
  std::printf("step: %llu cycles\n\n", (unsigned long long)step.step_cycles);

  for (auto model : {ModelKind::dnc, ModelKind::dnc_d}) {
    cfg.model = model;
    for (const auto& row : speedup_sweep(cfg, {4, 8, 16}, {kAllTopologies.begin(), kAllTopologies.end()}))
      std::printf("%-5s %-15s N_t=%-2zu speedup %.2f\n", to_string(row.model), to_string(row.topology), row.n_t,
                  row.speedup);
  }
}
