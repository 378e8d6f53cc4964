#include "stylab/ssl.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace stylab {

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

template <class S>
EncoderT<S> EncoderT<S>::seeded(uint64_t seed, const std::vector<int>& widths,
                                int image_channels) {
  if (widths.empty()) fail("encoder: need at least one stage width");
  RngStream rng = RngStream(seed).sub("encoder");
  EncoderT<S> e;
  int in = image_channels;
  for (size_t i = 0; i < widths.size(); ++i) {
    e.convs.push_back(Conv2dT<S>::seeded(in, widths[i], 3, 2, 1, rng.sub(static_cast<uint64_t>(i))));
    in = widths[i];
  }
  e.out_width = in;
  return e;
}

template <class S>
VarT<S> EncoderT<S>::forward(TapeT<S>& t, VarT<S> batch) {
  VarT<S> x = batch;
  for (auto& c : convs) x = relu(c.forward(t, x));
  return global_avg_pool(x);
}

template <class S>
void EncoderT<S>::visit(const std::string& prefix, const ParamVisitor<S>& fn) {
  for (size_t i = 0; i < convs.size(); ++i)
    convs[i].visit(prefix + ".conv" + std::to_string(i), fn);
}

template <class S>
MlpT<S> MlpT<S>::seeded(uint64_t seed, int in_dim, int hidden, int out_dim) {
  RngStream rng = RngStream(seed).sub("mlp");
  MlpT<S> m;
  m.fc1 = LinearT<S>::seeded(in_dim, hidden, rng.sub("fc1"));
  m.fc2 = LinearT<S>::seeded(hidden, out_dim, rng.sub("fc2"));
  return m;
}

template <class S>
VarT<S> MlpT<S>::forward(TapeT<S>& t, VarT<S> x) {
  return fc2.forward(t, relu(fc1.forward(t, x)));
}

template <class S>
void MlpT<S>::visit(const std::string& prefix, const ParamVisitor<S>& fn) {
  fc1.visit(prefix + ".fc1", fn);
  fc2.visit(prefix + ".fc2", fn);
}

template <class S>
SslModelT<S> SslModelT<S>::seeded(uint64_t seed, const ModelConfig& cfg) {
  SslModelT<S> m;
  m.config = cfg;
  m.encoder = EncoderT<S>::seeded(seed, cfg.encoder_widths, cfg.image_channels);
  m.projector =
      MlpT<S>::seeded(seed ^ 0x70726f6au, m.encoder.out_width, cfg.projector_hidden, cfg.projector_out);
  m.predictor =
      MlpT<S>::seeded(seed ^ 0x70726564u, cfg.projector_out, cfg.projector_hidden, cfg.projector_out);
  m.sync_target();
  return m;
}

template <class S>
void SslModelT<S>::sync_target() {
  target_encoder = encoder;
  target_projector = projector;
  auto freeze = [](const std::string&, ParamT<S>& p) { p.trainable = false; };
  target_encoder.visit("t", freeze);
  target_projector.visit("t", freeze);
}

template <class S>
VarT<S> SslModelT<S>::embed_online(TapeT<S>& t, VarT<S> views) {
  VarT<S> z = projector.forward(t, encoder.forward(t, views));
  if (config.use_predictor) z = predictor.forward(t, z);
  return z;
}

template <class S>
VarT<S> SslModelT<S>::embed_online_plain(TapeT<S>& t, VarT<S> views) {
  return projector.forward(t, encoder.forward(t, views));
}

template <class S>
TensorT<S> SslModelT<S>::embed_target(const TensorT<S>& views) {
  TapeT<S> t;
  t.set_grad_enabled(false);
  return target_projector.forward(t, target_encoder.forward(t, t.constant(views))).value();
}

template <class S>
TensorT<S> SslModelT<S>::encode(const TensorT<S>& batch) {
  TapeT<S> t;
  t.set_grad_enabled(false);
  return encoder.forward(t, t.constant(batch)).value();
}

template <class S>
void SslModelT<S>::visit(const ParamVisitor<S>& fn) {
  encoder.visit("online.encoder", fn);
  projector.visit("online.projector", fn);
  predictor.visit("online.predictor", fn);
  target_encoder.visit("target.encoder", fn);
  target_projector.visit("target.projector", fn);
}

template <class S>
std::vector<ParamT<S>*> SslModelT<S>::trainable_params() {
  std::vector<ParamT<S>*> out;
  auto grab = [&out](const std::string&, ParamT<S>& p) {
    if (p.trainable) out.push_back(&p);
  };
  encoder.visit("o.e", grab);
  projector.visit("o.p", grab);
  if (config.use_predictor) predictor.visit("o.q", grab);
  return out;
}

template struct EncoderT<float>;
template struct MlpT<float>;
template struct SslModelT<float>;

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

double cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape)
    fail("cosine_similarity: shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  if (a.data == b.data) return 1.0;
  double dot = 0, na = 0, nb = 0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  return dot / std::max(std::sqrt(na) * std::sqrt(nb), 1e-12);
}

namespace {

/// Rows scaled to unit norm (guarded), as a tape op.
template <class S>
VarT<S> normalize_rows(TapeT<S>& t, VarT<S> x) {
  const int64_t M = x.shape()[0];
  VarT<S> norms = sqrt(sum_axes(mul(x, x), {1}));                       // [M]
  VarT<S> inv = div(t.constant(TensorT<S>::full({M}, S(1))),
                    scalar_affine(norms, 1.0, 1e-12));                  // [M]
  return scale_colvec(x, inv);
}

/// log(sum_j exp(row_j)) per row with detached max subtraction; [M,N] -> [M].
template <class S>
VarT<S> row_logsumexp(TapeT<S>& t, VarT<S> logits) {
  const TensorT<S>& lv = logits.value();
  const int64_t M = lv.shape[0], N = lv.shape[1];
  TensorT<S> rowmax({M});
  for (int64_t i = 0; i < M; ++i) {
    S mx = lv[i * N];
    for (int64_t j = 1; j < N; ++j) mx = std::max(mx, lv[i * N + j]);
    rowmax[i] = mx;
  }
  VarT<S> mx = t.constant(rowmax);
  VarT<S> shifted = add_colvec(logits, scalar_affine(mx, -1.0, 0.0));
  VarT<S> lse = log(sum_axes(exp(shifted), {1}));
  return add(lse, mx);
}

}  // namespace

template <class S>
VarT<S> nt_xent(TapeT<S>& t, VarT<S> embeddings, double temperature) {
  const auto& shp = embeddings.shape();
  if (shp.size() != 2) fail("nt_xent: need [2N,width], got " + shape_str(shp));
  const int64_t M = shp[0];
  if (M % 2 != 0) fail("nt_xent: odd row count " + std::to_string(M));
  if (M < 2) fail("nt_xent: need at least one pair");
  if (temperature <= 0) fail("nt_xent: temperature must be positive");

  VarT<S> zn = normalize_rows(t, embeddings);
  VarT<S> sims = matmul(zn, transpose2d(zn));
  VarT<S> logits = scalar_affine(sims, 1.0 / temperature, 0.0);

  // The denominator of row m excludes only l = m.
  TensorT<S> self_mask({M, M});
  TensorT<S> pos_mask({M, M});
  for (int64_t i = 0; i < M; ++i) {
    self_mask[i * M + i] = S(-1e9);
    pos_mask[i * M + (i ^ 1)] = S(1);
  }
  VarT<S> lse = row_logsumexp(t, add(logits, t.constant(self_mask)));        // [M]
  VarT<S> pos = sum_axes(mul(logits, t.constant(pos_mask)), {1});            // [M]
  return mean_all(sub(lse, pos));
}

double nt_xent_value(const Tensor& embeddings, double temperature) {
  Tape t;
  return nt_xent(t, t.constant(embeddings), temperature).value()[0];
}

template <class S>
VarT<S> nt_xent_momentum(TapeT<S>& t, VarT<S> queries, const TensorT<S>& keys,
                         double temperature) {
  const auto& qs = queries.shape();
  if (qs.size() != 2 || keys.rank() != 2 || qs[0] != keys.shape[0] || qs[1] != keys.shape[1])
    fail("nt_xent_momentum: query/key mismatch " + shape_str(qs) + " vs " + shape_str(keys.shape));
  const int64_t N = qs[0];
  if (N < 1) fail("nt_xent_momentum: empty batch");
  if (temperature <= 0) fail("nt_xent_momentum: temperature must be positive");

  // Keys are plain values: normalize them outside the graph.
  TensorT<S> kn = keys;
  for (int64_t i = 0; i < N; ++i) {
    double nrm = 0;
    for (int64_t j = 0; j < keys.shape[1]; ++j)
      nrm += static_cast<double>(keys[i * keys.shape[1] + j]) * keys[i * keys.shape[1] + j];
    const S inv = static_cast<S>(1.0 / (std::sqrt(nrm) + 1e-12));
    for (int64_t j = 0; j < keys.shape[1]; ++j) kn[i * keys.shape[1] + j] *= inv;
  }

  VarT<S> qn = normalize_rows(t, queries);
  VarT<S> logits =
      scalar_affine(matmul(qn, transpose2d(t.constant(kn))), 1.0 / temperature, 0.0);

  TensorT<S> pos_mask({N, N});
  for (int64_t i = 0; i < N; ++i) pos_mask[i * N + i] = S(1);
  VarT<S> lse = row_logsumexp(t, logits);                           // denominator over all keys
  VarT<S> pos = sum_axes(mul(logits, t.constant(pos_mask)), {1});
  return mean_all(sub(lse, pos));
}

double nt_xent_momentum_value(const Tensor& queries, const Tensor& keys, double temperature) {
  Tape t;
  return nt_xent_momentum(t, t.constant(queries), keys, temperature).value()[0];
}

template VarT<float> nt_xent<float>(TapeT<float>&, VarT<float>, double);
template VarT<double> nt_xent<double>(TapeT<double>&, VarT<double>, double);
template VarT<float> nt_xent_momentum<float>(TapeT<float>&, VarT<float>, const TensorT<float>&,
                                             double);
template VarT<double> nt_xent_momentum<double>(TapeT<double>&, VarT<double>,
                                               const TensorT<double>&, double);

// ---------------------------------------------------------------------------
// Optimization
// ---------------------------------------------------------------------------

void ema_update(const std::vector<Param*>& target, const std::vector<Param*>& online, double m) {
  if (target.size() != online.size()) fail("ema_update: parameter list size mismatch");
  if (!(m >= 0.0 && m <= 1.0)) fail("ema_update: momentum must lie in [0,1]");
  for (size_t i = 0; i < target.size(); ++i) {
    Tensor& tv = target[i]->value;
    const Tensor& ov = online[i]->value;
    if (tv.shape != ov.shape)
      fail("ema_update: shape mismatch " + shape_str(tv.shape) + " vs " + shape_str(ov.shape));
    for (int64_t j = 0; j < tv.numel(); ++j)
      tv[j] = static_cast<float>(m * tv[j] + (1.0 - m) * ov[j]);
  }
}

double momentum_schedule(int64_t step, int64_t total_steps, double m0) {
  if (total_steps <= 0) fail("momentum_schedule: total_steps must be positive");
  const double x = static_cast<double>(step) / static_cast<double>(total_steps);
  return 1.0 - (1.0 - m0) * (std::cos(M_PI * x) + 1.0) / 2.0;
}

double cosine_lr(int64_t step, int64_t warmup_steps, int64_t total_steps, double peak_lr) {
  if (total_steps <= 0) fail("cosine_lr: total_steps must be positive");
  if (step < warmup_steps)
    return peak_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  if (total_steps <= warmup_steps) return peak_lr;
  const double x = static_cast<double>(step - warmup_steps) /
                   static_cast<double>(total_steps - warmup_steps);
  return peak_lr * (std::cos(M_PI * x) + 1.0) / 2.0;
}

void lars_step(const std::vector<Param*>& params, LarsState& state, const LarsConfig& cfg) {
  if (state.buffers.empty()) {
    state.buffers.reserve(params.size());
    for (const Param* p : params) state.buffers.push_back(Tensor::zeros(p->value.shape));
  }
  if (state.buffers.size() != params.size()) fail("lars_step: state/parameter list mismatch");

  for (size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i];
    if (!p.trainable) continue;
    if (p.grad.shape != p.value.shape)
      fail("lars_step: gradient shape " + shape_str(p.grad.shape) + " != value shape " +
           shape_str(p.value.shape));
    Tensor& buf = state.buffers[i];

    const double wd = p.exempt ? 0.0 : cfg.weight_decay;
    double wn = 0, gn = 0;
    for (int64_t j = 0; j < p.value.numel(); ++j) {
      const double g = p.grad[j] + wd * p.value[j];
      wn += static_cast<double>(p.value[j]) * p.value[j];
      gn += g * g;
    }
    wn = std::sqrt(wn);
    gn = std::sqrt(gn);

    double local = 1.0;
    if (cfg.layer_adaptation && !p.exempt && wn > 0.0 && gn > 0.0)
      local = cfg.trust_coeff * wn / gn;

    const double scale = local * cfg.lr;
    for (int64_t j = 0; j < p.value.numel(); ++j) {
      const double g = p.grad[j] + wd * p.value[j];
      const double b = cfg.momentum * buf[j] + scale * g;
      buf[j] = static_cast<float>(b);
      p.value[j] = static_cast<float>(p.value[j] - b);
    }
  }
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(temperature > 0)) fail("TrainConfig: temperature must be positive");
  if (!(momentum_start >= 0.0 && momentum_start <= 1.0))
    fail("TrainConfig: momentum_start must lie in [0,1]");
  if (batch_size < 1) fail("TrainConfig: batch size must be positive");
  if (epochs < 1 && max_steps <= 0) fail("TrainConfig: nothing to run");
  if (!(warmup_frac >= 0.0 && warmup_frac < 1.0)) fail("TrainConfig: warmup_frac must lie in [0,1)");
}

namespace {

std::vector<Param*> target_params(SslModel& model) {
  std::vector<Param*> out;
  auto grab = [&out](const std::string&, Param& p) { out.push_back(&p); };
  model.target_encoder.visit("t.e", grab);
  model.target_projector.visit("t.p", grab);
  return out;
}

std::vector<Param*> online_tracked_params(SslModel& model) {
  std::vector<Param*> out;
  auto grab = [&out](const std::string&, Param& p) { out.push_back(&p); };
  model.encoder.visit("o.e", grab);
  model.projector.visit("o.p", grab);
  return out;
}

Tensor interleave_views(const Tensor& left, const Tensor& right) {
  const int64_t B = left.shape[0];
  const int64_t per = left.numel() / B;
  Tensor out({2 * B, left.shape[1], left.shape[2], left.shape[3]});
  for (int64_t b = 0; b < B; ++b) {
    std::copy(left.ptr() + b * per, left.ptr() + (b + 1) * per, out.ptr() + (2 * b) * per);
    std::copy(right.ptr() + b * per, right.ptr() + (b + 1) * per,
              out.ptr() + (2 * b + 1) * per);
  }
  return out;
}

}  // namespace

StepStats train_step(SslModel& model, LarsState& state, StyleTransfer* engine,
                     const Tensor& batch, const AugPolicy& policy, const StyleContext& sctx,
                     const TrainConfig& cfg, RngStream rng, int64_t step, int64_t total_steps,
                     int workers) {
  cfg.validate();
  auto [left, right] = make_views(engine, batch, policy, sctx,
                                  rng.sub("aug").sub(static_cast<uint64_t>(step)), workers);

  std::vector<Param*> trainables = model.trainable_params();
  for (Param* p : trainables) p->zero_grad();

  Tape t;
  double loss;
  if (model.config.use_momentum_encoder) {
    Var queries = model.embed_online(t, t.constant(left));
    Tensor keys = model.embed_target(right);
    Var l = nt_xent_momentum(t, queries, keys, cfg.temperature);
    loss = l.value()[0];
    t.backward(l);
  } else {
    Var emb = model.embed_online_plain(t, t.constant(interleave_views(left, right)));
    Var l = nt_xent(t, emb, cfg.temperature);
    loss = l.value()[0];
    t.backward(l);
  }
  if (!std::isfinite(loss))
    fail("train_step: non-finite loss at step " + std::to_string(step));
  t.write_back_param_grads();

  const int64_t warmup = static_cast<int64_t>(cfg.warmup_frac * static_cast<double>(total_steps));
  LarsConfig lars;
  lars.lr = cosine_lr(step, warmup, total_steps, cfg.peak_lr);
  lars.weight_decay = cfg.weight_decay;
  lars.trust_coeff = cfg.trust_coeff;
  lars.momentum = cfg.sgd_momentum;
  lars_step(trainables, state, lars);

  const double m = momentum_schedule(step, total_steps, cfg.momentum_start);
  if (model.config.use_momentum_encoder)
    ema_update(target_params(model), online_tracked_params(model), m);

  return StepStats{step, loss, lars.lr, m};
}

PretrainResult pretrain(SslModel& model, StyleTransfer* engine, const Tensor& images,
                        const AugPolicy& policy, const StyleContext& sctx,
                        const TrainConfig& cfg, int workers,
                        const std::function<void(const StepStats&)>& on_step) {
  cfg.validate();
  if (images.rank() != 4) fail("pretrain: need [N,C,H,W] images, got " + shape_str(images.shape));
  const int64_t n = images.shape[0];
  if (n < 1) fail("pretrain: empty dataset");

  const int64_t bs = std::min<int64_t>(cfg.batch_size, n);
  const int64_t steps_per_epoch = std::max<int64_t>(1, n / bs);
  // max_steps, when set, fixes the run length; epochs repeat as needed.
  const int64_t total_steps = cfg.max_steps > 0
                                  ? cfg.max_steps
                                  : static_cast<int64_t>(cfg.epochs) * steps_per_epoch;

  RngStream root(cfg.seed);
  LarsState state;
  PretrainResult result;
  result.total_steps = total_steps;
  result.history.reserve(static_cast<size_t>(total_steps));

  const int64_t per = images.numel() / n;
  std::vector<int64_t> order(static_cast<size_t>(n));
  int64_t step = 0;
  for (int64_t epoch = 0; step < total_steps; ++epoch) {
    for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    RngStream shuffle = root.sub("shuffle").sub(static_cast<uint64_t>(epoch));
    for (int64_t i = n - 1; i > 0; --i)
      std::swap(order[static_cast<size_t>(i)],
                order[static_cast<size_t>(shuffle.next_index(i + 1))]);

    for (int64_t b = 0; b + bs <= n && step < total_steps; b += bs) {
      Tensor batch({bs, images.shape[1], images.shape[2], images.shape[3]});
      for (int64_t k = 0; k < bs; ++k)
        std::copy(images.ptr() + order[static_cast<size_t>(b + k)] * per,
                  images.ptr() + (order[static_cast<size_t>(b + k)] + 1) * per,
                  batch.ptr() + k * per);
      StepStats s = train_step(model, state, engine, batch, policy, sctx, cfg, root, step,
                               total_steps, workers);
      result.history.push_back(s);
      if (on_step) on_step(s);
      ++step;
    }
  }
  return result;
}

}  // namespace stylab
