#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "stylab/augment.hpp"
#include "stylab/layers.hpp"

namespace stylab {

struct ModelConfig {
  std::vector<int> encoder_widths = {32, 64, 128, 128};
  int image_channels = 3;
  int projector_hidden = 256;
  int projector_out = 64;
  bool use_momentum_encoder = true;
  bool use_predictor = true;
};

/// Stride-2 conv stages with relu, global average pooled to a feature vector.
template <class S>
struct EncoderT {
  std::vector<Conv2dT<S>> convs;
  int out_width = 0;

  static EncoderT seeded(uint64_t seed, const std::vector<int>& widths, int image_channels);
  VarT<S> forward(TapeT<S>& t, VarT<S> batch);  // [N,C,H,W] -> [N,R]
  void visit(const std::string& prefix, const ParamVisitor<S>& fn);
};

/// Two-layer perceptron (linear, relu, linear).
template <class S>
struct MlpT {
  LinearT<S> fc1, fc2;

  static MlpT seeded(uint64_t seed, int in_dim, int hidden, int out_dim);
  VarT<S> forward(TapeT<S>& t, VarT<S> x);
  void visit(const std::string& prefix, const ParamVisitor<S>& fn);
};

/// Online encoder/projector (optionally with a predictor head) plus momentum
/// copies of the encoder and projector. The momentum copies are never trained
/// by gradient; they track the online weights through an exponential moving
/// average.
template <class S>
struct SslModelT {
  EncoderT<S> encoder;
  MlpT<S> projector;
  MlpT<S> predictor;
  EncoderT<S> target_encoder;
  MlpT<S> target_projector;
  ModelConfig config;

  static SslModelT seeded(uint64_t seed, const ModelConfig& cfg);

  /// Online tower: encoder, projector, predictor (when enabled).
  VarT<S> embed_online(TapeT<S>& t, VarT<S> views);
  /// Online tower without the predictor (plain two-view setup).
  VarT<S> embed_online_plain(TapeT<S>& t, VarT<S> views);
  /// Momentum tower, no gradients.
  TensorT<S> embed_target(const TensorT<S>& views);
  /// Encoder features only, no gradients (downstream evaluation).
  TensorT<S> encode(const TensorT<S>& batch);

  void visit(const ParamVisitor<S>& fn);
  std::vector<ParamT<S>*> trainable_params();
  /// target <- copy of online (used at initialization and on load).
  void sync_target();
};

using Encoder = EncoderT<float>;
using SslModel = SslModelT<float>;

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// <a,b> / (|a| |b|), denominators guarded by 1e-12. Exactly 1 for identical
/// inputs.
double cosine_similarity(const Tensor& a, const Tensor& b);

/// Normalized temperature-scaled cross entropy over 2N embeddings laid out so
/// rows 2k and 2k+1 are the two views of sample k. Each row's denominator
/// ranges over every other row (only the self term is excluded); stabilized
/// by per-row max subtraction.
template <class S>
VarT<S> nt_xent(TapeT<S>& t, VarT<S> embeddings, double temperature);

/// Value-only convenience wrapper.
double nt_xent_value(const Tensor& embeddings, double temperature);

/// InfoNCE with queries from the online tower and keys from the momentum
/// tower; the positive key of query i is key i, negatives are the other
/// in-batch keys. Gradients flow only through the queries.
template <class S>
VarT<S> nt_xent_momentum(TapeT<S>& t, VarT<S> queries, const TensorT<S>& keys,
                         double temperature);

double nt_xent_momentum_value(const Tensor& queries, const Tensor& keys, double temperature);

// ---------------------------------------------------------------------------
// Optimization
// ---------------------------------------------------------------------------

/// target <- m * target + (1-m) * online, elementwise, no gradients.
void ema_update(const std::vector<Param*>& target, const std::vector<Param*>& online, double m);

/// Cosine ramp from m0 at step 0 to 1 at total_steps.
double momentum_schedule(int64_t step, int64_t total_steps, double m0);

/// Linear warmup to peak_lr, then cosine decay to 0 at total_steps.
double cosine_lr(int64_t step, int64_t warmup_steps, int64_t total_steps, double peak_lr);

struct LarsConfig {
  double lr = 0.0;
  double weight_decay = 1.5e-6;
  double trust_coeff = 0.001;
  double momentum = 0.9;
  bool layer_adaptation = true;  // off: plain SGD with weight decay
};

struct LarsState {
  std::vector<Tensor> buffers;  // heavy-ball buffers, parallel to the param list
};

/// One layer-wise adapted update per parameter. Exempt parameters skip both
/// weight decay and the adaptive local rate.
void lars_step(const std::vector<Param*>& params, LarsState& state, const LarsConfig& cfg);

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainConfig {
  double temperature = 0.1;
  double peak_lr = 0.5;
  double warmup_frac = 0.05;
  int epochs = 30;
  int64_t max_steps = 0;  // 0: run all epochs
  double weight_decay = 1.5e-6;
  double trust_coeff = 0.001;
  double momentum_start = 0.996;
  double sgd_momentum = 0.9;
  int batch_size = 128;
  uint64_t seed = 1;

  void validate() const;
};

struct StepStats {
  int64_t step = 0;
  double loss = 0;
  double lr = 0;
  double m = 0;
};

/// Augment, embed both towers, take the contrastive loss, apply one LARS
/// update and one EMA update. Throws on a non-finite loss.
StepStats train_step(SslModel& model, LarsState& state, StyleTransfer* engine,
                     const Tensor& batch, const AugPolicy& policy, const StyleContext& sctx,
                     const TrainConfig& cfg, RngStream rng, int64_t step, int64_t total_steps,
                     int workers = 1);

struct PretrainResult {
  std::vector<StepStats> history;
  int64_t total_steps = 0;
};

/// Epoch loop over shuffled batches. `on_step`, when set, observes every step.
PretrainResult pretrain(SslModel& model, StyleTransfer* engine, const Tensor& images,
                        const AugPolicy& policy, const StyleContext& sctx,
                        const TrainConfig& cfg, int workers = 1,
                        const std::function<void(const StepStats&)>& on_step = {});

}  // namespace stylab
