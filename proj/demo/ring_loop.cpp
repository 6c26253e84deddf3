// Small end-to-end run on the eight-Gaussian ring: annotate the corrupted
// points, train loop 0, then two restoration loops, printing SW2 and the
// low-noise loss per loop. A few minutes on one core.
//
//   ring_loop [steps] [seed]

#include <cstdio>
#include <cstdlib>
#include <string>

#include "dataloops/suite.hpp"

int main(int argc, char** argv) {
  using namespace dataloops;
  SuiteConfig cfg;
  cfg.loop.train.steps = argc > 1 ? std::stoi(argv[1]) : 4000;
  const std::uint64_t seed = argc > 2 ? std::stoull(argv[2]) : 0;
  cfg.loop.loops = 2;
  cfg.eval_truth = 4000;
  cfg.eval_generated = 4000;

  try {
    const Schedule schedule(cfg.sigma_min, cfg.sigma_max);
    const SuiteData data = suite_dataset(cfg, schedule, seed);
    std::size_t clean = 0;
    for (const auto& s : data.d0.samples) clean += s.is_clean();
    std::printf("%zu points, %zu clean, mean anchor t = %.3f\n", data.d0.size(), clean, data.anchor);

    const EvalSpec ev = suite_eval_spec(cfg, data.d0, seed);
    LoopConfig lc = cfg.loop;
    lc.seed = seed;
    std::printf("%5s %9s %9s %12s %7s\n", "loop", "sw2", "cond_mse", "loss@smin", "secs");
    run_dataloop(lc, data.d0, schedule, &ev, [](const LoopState& st) {
      const LoopReport& r = st.report;
      std::printf("%5d %9.4f %9.4f %12.5f %7.1f\n", r.loop, r.sw2, r.cond_mse,
                  r.bucket_loss.empty() ? 0.0 : r.bucket_loss.front(), r.seconds);
      std::fflush(stdout);
    });
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
