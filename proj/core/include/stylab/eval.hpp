#pragma once

#include <cstdint>
#include <vector>

#include "stylab/ssl.hpp"
#include "stylab/stylebank.hpp"

namespace stylab {

struct LabeledDataset {
  Tensor images;            // [N,C,H,W]
  std::vector<int> labels;  // values in 0..num_classes-1
  int num_classes = 0;

  int64_t size() const { return images.rank() == 4 ? images.shape[0] : 0; }
  Tensor image(int64_t i) const;
  void validate() const;
};

/// Procedural dataset: each class is a shape (disk, square, triangle, cross,
/// cycling) with a class hue, drawn over a randomized oriented-grating
/// background so texture varies freely while geometry stays class-defining.
struct SynthSpec {
  int classes = 4;
  int image_size = 32;
  int train_count = 1000;
  int test_count = 200;
  double texture_strength = 0.18;
  uint64_t seed = 7;
};

struct SynthData {
  LabeledDataset train;
  LabeledDataset test;
};

SynthData gen_synth(const SynthSpec& spec);

/// Frozen encoder features, no augmentation; images are resized to
/// `input_size` when it differs from their stored size (0 keeps them as-is).
Tensor encode_dataset(SslModel& model, const LabeledDataset& data, int input_size = 0,
                      int batch = 256);

struct ProbeOptions {
  int epochs = 100;
  double lr = 0.5;
};

/// Multinomial logistic regression on frozen features via full-batch gradient
/// descent with cosine-decayed learning rate. Returns test top-1 in [0,1].
double linear_probe(const Tensor& train_features, const std::vector<int>& train_labels,
                    const Tensor& test_features, const std::vector<int>& test_labels,
                    int num_classes, const ProbeOptions& opt = {});

/// k examples per class form the support set, the probe is fit on them, and
/// accuracy is measured on the held-out remainder; mean over trials. Support
/// and query sets never overlap.
double few_shot_eval(const Tensor& features, const std::vector<int>& labels, int num_classes,
                     int k, int trials, RngStream rng, const ProbeOptions& opt = {});

/// Mean cosine similarity between encoder features of an image and of its
/// stylized version (apply probability forced to 1). 1.0 when stylization is
/// a no-op.
double texture_invariance_score(SslModel& model, const LabeledDataset& data,
                                StyleTransfer& engine, const StyleBank& bank,
                                SasslParams params, int64_t n, RngStream rng);

}  // namespace stylab
