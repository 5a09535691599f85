// Runs the reference memory unit for a few steps on a random interface script
// and prints a one-line state summary per step.
#include <cstdio>

#include "hima/hima.hpp"

int main() {
  using namespace hima;
  const MemoryGeometry g{64, 16, 2};
  const auto script = make_script<double>(g, 8, 42);

  auto state = MemoryState<double>::zeros(g);
  for (std::size_t t = 0; t < script.size(); ++t) {
    auto [next, out] = dnc_step(state, script[t]);
    const auto problem = check_invariants(next, &out.intermediates);
    std::printf("step %zu  usage=%.6f  precedence=%.6f  write=%.6f  %s\n", t, sum<double>(next.usage),
                sum<double>(next.precedence), sum<double>(next.write_weights), problem ? problem->c_str() : "ok");
    state = std::move(next);
  }

  // Same step with the piecewise-linear softmax and 25% usage skimming.
  StepOptions approx;
  approx.softmax = SoftmaxMode::approx;
  approx.skim = {0.25, SkimPolicy::skim_largest};
  auto exact = dnc_step(state, script.back()).second.read_vectors;
  auto fast = dnc_step(state, script.back(), approx).second.read_vectors;
  std::printf("read-vector error with approximations: %.3e\n",
              normwise_rel_error<double>(fast.data(), exact.data()));
}
