#pragma once

#include <string>

#include "stylab/augment.hpp"

namespace stylab {

struct BenchReport {
  std::string pipeline;                      // "default" or "sassl"
  double images_per_second = 0;              // candidate pipeline
  double baseline_images_per_second = 0;     // default pipeline
  double relative_change_percent = 0;        // (baseline - candidate) / baseline * 100
  int runs = 0;
  int batch_size = 0;
  int image_size = 0;
  int workers = 1;
};

double relative_change_percent(double baseline_ips, double candidate_ips);

/// Augmentation-only throughput: time make_views over `runs` batches after
/// `warmup` untimed batches, for both the default pipeline (stylization
/// stripped) and the candidate (`sassl_mode` keeps the configured
/// stylization). Reports mean images/second of each and the relative change.
BenchReport run_aug_benchmark(StyleTransfer* engine, const Tensor& batch,
                              const AugPolicy& policy, const StyleContext& ctx, bool sassl_mode,
                              int runs, int warmup, int workers, uint64_t seed);

}  // namespace stylab
