#include "stylab/bench.hpp"

#include <chrono>

namespace stylab {

double relative_change_percent(double baseline_ips, double candidate_ips) {
  if (baseline_ips == 0.0) fail("relative_change_percent: zero baseline");
  return (baseline_ips - candidate_ips) / baseline_ips * 100.0;
}

namespace {

double measure_ips(StyleTransfer* engine, const Tensor& batch, const AugPolicy& policy,
                   const StyleContext& ctx, int runs, int warmup, int workers, uint64_t seed) {
  using clock = std::chrono::steady_clock;
  const int64_t B = batch.shape[0];
  double total_ips = 0;
  for (int r = -warmup; r < runs; ++r) {
    RngStream rng = RngStream(seed).sub("bench").sub(static_cast<uint64_t>(r + warmup));
    const auto start = clock::now();
    auto views = make_views(engine, batch, policy, ctx, rng, workers);
    const auto stop = clock::now();
    (void)views;
    if (r < 0) continue;  // warmup
    const double secs = std::chrono::duration<double>(stop - start).count();
    total_ips += static_cast<double>(B) / std::max(secs, 1e-12);
  }
  return total_ips / runs;
}

}  // namespace

BenchReport run_aug_benchmark(StyleTransfer* engine, const Tensor& batch,
                              const AugPolicy& policy, const StyleContext& ctx, bool sassl_mode,
                              int runs, int warmup, int workers, uint64_t seed) {
  if (runs < 1) fail("run_aug_benchmark: need at least one run");
  if (batch.rank() != 4) fail("run_aug_benchmark: need [B,C,H,W] batch");

  AugPolicy baseline = policy;
  baseline.sassl_views = SasslViews::none;
  AugPolicy candidate = sassl_mode ? policy : baseline;

  BenchReport report;
  report.pipeline = sassl_mode ? "sassl" : "default";
  report.runs = runs;
  report.batch_size = static_cast<int>(batch.shape[0]);
  report.image_size = policy.output_size;
  report.workers = workers;
  report.baseline_images_per_second =
      measure_ips(engine, batch, baseline, ctx, runs, warmup, workers, seed);
  report.images_per_second =
      measure_ips(engine, batch, candidate, ctx, runs, warmup, workers, seed);
  report.relative_change_percent =
      relative_change_percent(report.baseline_images_per_second, report.images_per_second);
  return report;
}

}  // namespace stylab
