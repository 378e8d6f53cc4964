#pragma once

#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "stylab/rng.hpp"
#include "stylab/tensor.hpp"

namespace stylab {

template <class S>
class TapeT;

/// Handle to a value recorded on a tape. Cheap to copy; the tape owns storage.
template <class S>
class VarT {
 public:
  VarT() = default;

  const TensorT<S>& value() const;
  const TensorT<S>& grad() const;
  const std::vector<int64_t>& shape() const { return value().shape; }
  int64_t numel() const { return value().numel(); }

  bool valid() const { return tape_ != nullptr; }
  TapeT<S>* tape() const { return tape_; }
  int32_t id() const { return id_; }

 private:
  friend class TapeT<S>;
  VarT(TapeT<S>* t, int32_t id) : tape_(t), id_(id) {}
  TapeT<S>* tape_ = nullptr;
  int32_t id_ = -1;
};

/// Trainable tensor with its gradient accumulator. Exempt parameters (biases
/// and normalization offsets) receive no layer-wise rate adaptation and no
/// weight decay.
template <class S>
struct ParamT {
  TensorT<S> value;
  TensorT<S> grad;
  bool trainable = true;
  bool exempt = false;

  ParamT() = default;
  explicit ParamT(TensorT<S> v, bool exempt_ = false)
      : value(std::move(v)), grad(TensorT<S>::zeros(value.shape)), exempt(exempt_) {}

  void zero_grad() {
    for (auto& g : grad.data) g = S(0);
  }
  template <class S2>
  ParamT<S2> cast() const {
    ParamT<S2> out(value.template cast<S2>(), exempt);
    out.trainable = trainable;
    return out;
  }
};

using Param = ParamT<float>;

/// Reverse-mode tape. Every primitive appends one node in execution order;
/// backward() replays the recorded closures exactly once each, in reverse.
/// Tapes are independent: separate tapes may run on separate threads.
template <class S>
class TapeT {
 public:
  TapeT() = default;
  TapeT(const TapeT&) = delete;
  TapeT& operator=(const TapeT&) = delete;

  /// Record an input value. requires_grad marks it as a differentiation root.
  VarT<S> leaf(TensorT<S> v, bool requires_grad = false) {
    return emplace(std::move(v), requires_grad, nullptr);
  }
  VarT<S> constant(TensorT<S> v) { return leaf(std::move(v), false); }

  /// Record a parameter leaf. Gradients are added back into p.grad by
  /// write_back_param_grads() after backward().
  VarT<S> param(ParamT<S>& p) {
    VarT<S> v = leaf(p.value, grad_enabled_ && p.trainable);
    if (nodes_[v.id_].requires_grad) bindings_.push_back({&p, v.id_});
    return v;
  }

  /// Seed d(root)/d(root) = 1 and accumulate gradients into every node that
  /// requires them. root must be scalar.
  void backward(VarT<S> root);

  void write_back_param_grads() {
    for (auto& b : bindings_) {
      const TensorT<S>& g = grad_of(b.second);
      for (int64_t i = 0; i < g.numel(); ++i) b.first->grad[i] += g[i];
    }
  }

  /// When disabled, param() records constants; no backward graph is built.
  void set_grad_enabled(bool on) { grad_enabled_ = on; }
  bool grad_enabled() const { return grad_enabled_; }

  size_t size() const { return nodes_.size(); }

  // --- primitive-implementation interface ---
  VarT<S> emplace(TensorT<S> v, bool requires_grad, std::function<void(TapeT&)> back) {
    nodes_.push_back(Node{std::move(v), TensorT<S>(), std::move(back), requires_grad});
    return VarT<S>(this, static_cast<int32_t>(nodes_.size() - 1));
  }
  /// Attach the backward closure after the node exists (closures capture ids).
  void set_back(int32_t id, std::function<void(TapeT&)> f);
  const TensorT<S>& value_of(int32_t id) const { return nodes_[id].value; }
  bool requires_grad(int32_t id) const { return nodes_[id].requires_grad; }
  /// Gradient buffer of a node, allocated (zeros) on first touch.
  TensorT<S>& grad_of(int32_t id) {
    Node& n = nodes_[id];
    if (n.grad.data.empty() && n.value.numel() > 0) n.grad = TensorT<S>::zeros(n.value.shape);
    return n.grad;
  }

 private:
  struct Node {
    TensorT<S> value;
    TensorT<S> grad;
    std::function<void(TapeT&)> back;
    bool requires_grad;
  };
  // deque: node references stay valid while ops keep appending
  std::deque<Node> nodes_;
  std::vector<std::pair<ParamT<S>*, int32_t>> bindings_;
  bool grad_enabled_ = true;
};

template <class S>
const TensorT<S>& VarT<S>::value() const {
  return tape_->value_of(id_);
}
template <class S>
const TensorT<S>& VarT<S>::grad() const {
  return const_cast<TapeT<S>*>(tape_)->grad_of(id_);
}

using Tape = TapeT<float>;
using Tape64 = TapeT<double>;
using Var = VarT<float>;
using Var64 = VarT<double>;

// ---------------------------------------------------------------------------
// Differentiable primitives. All check shapes up front (errors name the
// primitive and both shapes) and reject non-finite outputs. Elementwise
// binaries accept equal shapes or a scalar (single-element) operand.
// ---------------------------------------------------------------------------

template <class S> VarT<S> add(VarT<S> a, VarT<S> b);
template <class S> VarT<S> sub(VarT<S> a, VarT<S> b);
template <class S> VarT<S> mul(VarT<S> a, VarT<S> b);
template <class S> VarT<S> div(VarT<S> a, VarT<S> b);

/// scale * x + offset with compile-time constants.
template <class S> VarT<S> scalar_affine(VarT<S> x, double scale, double offset);

template <class S> VarT<S> exp(VarT<S> x);
template <class S> VarT<S> log(VarT<S> x);
template <class S> VarT<S> relu(VarT<S> x);
template <class S> VarT<S> softplus(VarT<S> x);
template <class S> VarT<S> sqrt(VarT<S> x);
/// Clamp to [lo, hi]; gradient passes through strictly inside the range.
template <class S> VarT<S> clamp(VarT<S> x, double lo, double hi);

template <class S> VarT<S> matmul(VarT<S> a, VarT<S> b);  // [M,K]x[K,N]
template <class S> VarT<S> transpose2d(VarT<S> x);
/// x[M,N] + v[N], broadcast across rows (linear-layer bias).
template <class S> VarT<S> add_rowvec(VarT<S> x, VarT<S> v);
/// x[M,N] + v[M], broadcast across columns.
template <class S> VarT<S> add_colvec(VarT<S> x, VarT<S> v);
/// x[M,N] * v[M], scales each row (used for row normalization).
template <class S> VarT<S> scale_colvec(VarT<S> x, VarT<S> v);

/// 2-D convolution, input [N,C,H,W], kernel [F,C,kh,kw], zero padding.
template <class S> VarT<S> conv2d(VarT<S> x, VarT<S> w, int stride, int pad);
template <class S> VarT<S> conv2d(VarT<S> x, VarT<S> w, VarT<S> bias, int stride, int pad);
template <class S> VarT<S> avg_pool2d(VarT<S> x, int kernel, int stride);
template <class S> VarT<S> global_avg_pool(VarT<S> x);  // [N,C,H,W] -> [N,C]
/// Bilinear resize with half-pixel centers and edge clamping.
template <class S> VarT<S> bilinear_resize(VarT<S> x, int64_t out_h, int64_t out_w);

template <class S> VarT<S> concat(const std::vector<VarT<S>>& xs, int axis);
template <class S> VarT<S> sum_axes(VarT<S> x, std::vector<int> axes);
template <class S> VarT<S> mean_axes(VarT<S> x, std::vector<int> axes);
template <class S> VarT<S> sum_all(VarT<S> x);
template <class S> VarT<S> mean_all(VarT<S> x);
template <class S> VarT<S> l2_norm(VarT<S> x);  // scalar

/// x * scale + shift with per-channel vectors; x is [C,H,W] or [N,C,H,W],
/// scale and shift are [C].
template <class S> VarT<S> channel_affine(VarT<S> x, VarT<S> scale, VarT<S> shift);

template <class S> VarT<S> reshape(VarT<S> x, std::vector<int64_t> new_shape);

/// Per-channel mean and population standard deviation over the spatial
/// support of a [C,H,W] input; both differentiable.
template <class S> std::pair<VarT<S>, VarT<S>> instance_stats(VarT<S> x);

// ---------------------------------------------------------------------------
// Primitive catalog for gradient-verification sweeps: every primitive with a
// backward rule, bundled with representative input shapes and an in-domain
// random fill.
// ---------------------------------------------------------------------------

struct DiffPrimitive {
  std::string name;
  std::vector<std::vector<int64_t>> input_shapes;
  std::function<void(int input_index, Tensor64& t, RngStream& rng)> fill;
  std::function<Var64(Tape64&, const std::vector<Var64>&)> apply;
};

const std::vector<DiffPrimitive>& diff_primitive_set();

}  // namespace stylab
