#include "stylab/autograd.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace stylab {

namespace {

template <class S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using MapM = Eigen::Map<MatRM<S>>;
template <class S>
using MapCM = Eigen::Map<const MatRM<S>>;

template <class S>
void shape_check(bool ok, const char* prim, const TensorT<S>& a, const TensorT<S>& b) {
  if (!ok)
    fail(std::string(prim) + ": shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
}

enum class Bcast { same, a_scalar, b_scalar };

template <class S>
Bcast binary_mode(const char* prim, const TensorT<S>& a, const TensorT<S>& b) {
  if (a.shape == b.shape) return Bcast::same;
  if (a.numel() == 1) return Bcast::a_scalar;
  if (b.numel() == 1) return Bcast::b_scalar;
  shape_check(false, prim, a, b);
  return Bcast::same;  // unreachable
}

// Generic elementwise binary: fwd(x, y) and partials dfdx / dfdy evaluated at
// the forward operands. Broadcast gradients are reduced by summation.
template <class S, class F, class DA, class DB>
VarT<S> binary_op(const char* prim, VarT<S> a, VarT<S> b, F fwd, DA dfda, DB dfdb) {
  TapeT<S>& t = *a.tape();
  const TensorT<S>& av = a.value();
  const TensorT<S>& bv = b.value();
  Bcast mode = binary_mode(prim, av, bv);
  const TensorT<S>& big = (mode == Bcast::a_scalar) ? bv : av;

  TensorT<S> out(big.shape);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) {
    S x = (mode == Bcast::a_scalar) ? av[0] : av[i];
    S y = (mode == Bcast::b_scalar) ? bv[0] : bv[i];
    out[i] = fwd(x, y);
  }
  require_finite(out, prim);

  bool needs = t.requires_grad(a.id()) || t.requires_grad(b.id());
  VarT<S> out_var = t.emplace(std::move(out), needs, nullptr);
  if (needs) {
    int32_t aid = a.id(), bid = b.id(), oid = out_var.id();
    t.set_back(oid, [aid, bid, oid, mode, dfda, dfdb](TapeT<S>& tp) {
      const TensorT<S>& g = tp.grad_of(oid);
      const TensorT<S>& av2 = tp.value_of(aid);
      const TensorT<S>& bv2 = tp.value_of(bid);
      const int64_t m = g.numel();
      if (tp.requires_grad(aid)) {
        TensorT<S>& ga = tp.grad_of(aid);
        for (int64_t i = 0; i < m; ++i) {
          S x = (mode == Bcast::a_scalar) ? av2[0] : av2[i];
          S y = (mode == Bcast::b_scalar) ? bv2[0] : bv2[i];
          S d = g[i] * dfda(x, y);
          ga[(mode == Bcast::a_scalar) ? 0 : i] += d;
        }
      }
      if (tp.requires_grad(bid)) {
        TensorT<S>& gb = tp.grad_of(bid);
        for (int64_t i = 0; i < m; ++i) {
          S x = (mode == Bcast::a_scalar) ? av2[0] : av2[i];
          S y = (mode == Bcast::b_scalar) ? bv2[0] : bv2[i];
          S d = g[i] * dfdb(x, y);
          gb[(mode == Bcast::b_scalar) ? 0 : i] += d;
        }
      }
    });
  }
  return out_var;
}

// Elementwise unary with derivative expressed from input and output values.
template <class S, class F, class DF>
VarT<S> unary_op(const char* prim, VarT<S> x, F fwd, DF dfdx) {
  TapeT<S>& t = *x.tape();
  const TensorT<S>& xv = x.value();
  TensorT<S> out(xv.shape);
  for (int64_t i = 0; i < xv.numel(); ++i) out[i] = fwd(xv[i]);
  require_finite(out, prim);

  bool needs = t.requires_grad(x.id());
  VarT<S> out_var = t.emplace(std::move(out), needs, nullptr);
  if (needs) {
    int32_t xid = x.id(), oid = out_var.id();
    t.set_back(oid, [xid, oid, dfdx](TapeT<S>& tp) {
      const TensorT<S>& g = tp.grad_of(oid);
      const TensorT<S>& xv2 = tp.value_of(xid);
      const TensorT<S>& yv2 = tp.value_of(oid);
      TensorT<S>& gx = tp.grad_of(xid);
      for (int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * dfdx(xv2[i], yv2[i]);
    });
  }
  return out_var;
}

}  // namespace

// Tape needs a setter for the two-phase closure construction above.
template <class S>
void TapeT<S>::set_back(int32_t id, std::function<void(TapeT&)> f) {
  nodes_[id].back = std::move(f);
}

template <class S>
void TapeT<S>::backward(VarT<S> root) {
  if (root.numel() != 1) fail("backward: root must be scalar, got " + shape_str(root.shape()));
  if (!nodes_[root.id()].requires_grad)
    fail("backward: root does not depend on any differentiable input");
  grad_of(root.id())[0] = S(1);
  for (int32_t i = root.id(); i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.back) continue;
    if (n.grad.data.empty()) continue;  // nothing flowed into this node
    n.back(*this);
  }
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <class S>
VarT<S> add(VarT<S> a, VarT<S> b) {
  return binary_op<S>(
      "add", a, b, [](S x, S y) { return x + y; }, [](S, S) { return S(1); },
      [](S, S) { return S(1); });
}

template <class S>
VarT<S> sub(VarT<S> a, VarT<S> b) {
  return binary_op<S>(
      "sub", a, b, [](S x, S y) { return x - y; }, [](S, S) { return S(1); },
      [](S, S) { return S(-1); });
}

template <class S>
VarT<S> mul(VarT<S> a, VarT<S> b) {
  return binary_op<S>(
      "mul", a, b, [](S x, S y) { return x * y; }, [](S, S y) { return y; },
      [](S x, S) { return x; });
}

template <class S>
VarT<S> div(VarT<S> a, VarT<S> b) {
  return binary_op<S>(
      "div", a, b, [](S x, S y) { return x / y; }, [](S, S y) { return S(1) / y; },
      [](S x, S y) { return -x / (y * y); });
}

template <class S>
VarT<S> scalar_affine(VarT<S> x, double scale, double offset) {
  const S a = static_cast<S>(scale), b = static_cast<S>(offset);
  return unary_op<S>(
      "scalar_affine", x, [a, b](S v) { return a * v + b; }, [a](S, S) { return a; });
}

template <class S>
VarT<S> exp(VarT<S> x) {
  return unary_op<S>(
      "exp", x, [](S v) { return std::exp(v); }, [](S, S y) { return y; });
}

template <class S>
VarT<S> log(VarT<S> x) {
  return unary_op<S>(
      "log", x, [](S v) { return std::log(v); }, [](S v, S) { return S(1) / v; });
}

template <class S>
VarT<S> relu(VarT<S> x) {
  return unary_op<S>(
      "relu", x, [](S v) { return v > S(0) ? v : S(0); },
      [](S v, S) { return v > S(0) ? S(1) : S(0); });
}

template <class S>
VarT<S> softplus(VarT<S> x) {
  return unary_op<S>(
      "softplus", x,
      [](S v) {
        // log(1 + e^v), split for stability
        return v > S(0) ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
      },
      [](S v, S) { return S(1) / (S(1) + std::exp(-v)); });
}

template <class S>
VarT<S> sqrt(VarT<S> x) {
  return unary_op<S>(
      "sqrt", x, [](S v) { return std::sqrt(v); },
      [](S, S y) { return S(1) / (S(2) * std::max(y, S(1e-12))); });
}

template <class S>
VarT<S> clamp(VarT<S> x, double lo, double hi) {
  const S l = static_cast<S>(lo), h = static_cast<S>(hi);
  return unary_op<S>(
      "clamp", x, [l, h](S v) { return std::min(std::max(v, l), h); },
      [l, h](S v, S) { return (v > l && v < h) ? S(1) : S(0); });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

template <class S>
VarT<S> matmul(VarT<S> a, VarT<S> b) {
  TapeT<S>& t = *a.tape();
  const TensorT<S>& av = a.value();
  const TensorT<S>& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.shape[1] != bv.shape[0])
    fail("matmul: shape mismatch " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
  const int64_t M = av.shape[0], K = av.shape[1], N = bv.shape[1];

  TensorT<S> out({M, N});
  MapM<S>(out.ptr(), M, N).noalias() = MapCM<S>(av.ptr(), M, K) * MapCM<S>(bv.ptr(), K, N);
  require_finite(out, "matmul");

  bool needs = t.requires_grad(a.id()) || t.requires_grad(b.id());
  VarT<S> out_var = t.emplace(std::move(out), needs, nullptr);
  if (needs) {
    int32_t aid = a.id(), bid = b.id(), oid = out_var.id();
    t.set_back(oid, [aid, bid, oid, M, K, N](TapeT<S>& tp) {
      MapCM<S> g(tp.grad_of(oid).ptr(), M, N);
      if (tp.requires_grad(aid)) {
        MapCM<S> bm(tp.value_of(bid).ptr(), K, N);
        MapM<S>(tp.grad_of(aid).ptr(), M, K).noalias() += g * bm.transpose();
      }
      if (tp.requires_grad(bid)) {
        MapCM<S> am(tp.value_of(aid).ptr(), M, K);
        MapM<S>(tp.grad_of(bid).ptr(), K, N).noalias() += am.transpose() * g;
      }
    });
  }
  return out_var;
}

template <class S>
VarT<S> transpose2d(VarT<S> x) {
  TapeT<S>& t = *x.tape();
  const TensorT<S>& xv = x.value();
  if (xv.rank() != 2) fail("transpose2d: need rank-2, got " + shape_str(xv.shape));
  const int64_t M = xv.shape[0], N = xv.shape[1];
  TensorT<S> out({N, M});
  for (int64_t i = 0; i < M; ++i)
    for (int64_t j = 0; j < N; ++j) out[j * M + i] = xv[i * N + j];

  bool needs = t.requires_grad(x.id());
  VarT<S> out_var = t.emplace(std::move(out), needs, nullptr);
  if (needs) {
    int32_t xid = x.id(), oid = out_var.id();
    t.set_back(oid, [xid, oid, M, N](TapeT<S>& tp) {
      const TensorT<S>& g = tp.grad_of(oid);
      TensorT<S>& gx = tp.grad_of(xid);
      for (int64_t j = 0; j < N; ++j)
        for (int64_t i = 0; i < M; ++i) gx[i * N + j] += g[j * M + i];
    });
  }
  return out_var;
}

namespace {

// Shared machinery for the three [M,N] x vector broadcasts.
template <class S>
void rowcol_shape_check(const char* prim, const TensorT<S>& x, const TensorT<S>& v, bool rowvec) {
  bool ok = x.rank() == 2 && v.rank() == 1 && v.shape[0] == (rowvec ? x.shape[1] : x.shape[0]);
  if (!ok) fail(std::string(prim) + ": shape mismatch " + shape_str(x.shape) + " vs " + shape_str(v.shape));
}

}  // namespace

template <class S>
VarT<S> add_rowvec(VarT<S> x, VarT<S> v) {
  TapeT<S>& t = *x.tape();
  const TensorT<S>& xv = x.value();
  const TensorT<S>& vv = v.value();
  rowcol_shape_check("add_rowvec", xv, vv, true);
  const int64_t M = xv.shape[0], N = xv.shape[1];
  TensorT<S> out(xv.shape);
  for (int64_t i = 0; i < M; ++i)
    for (int64_t j = 0; j < N; ++j) out[i * N + j] = xv[i * N + j] + vv[j];
  require_finite(out, "add_rowvec");

  bool needs = t.requires_grad(x.id()) || t.requires_grad(v.id());
  VarT<S> out_var = t.emplace(std::move(out), needs, nullptr);
  if (needs) {
    int32_t xid = x.id(), vid = v.id(), oid = out_var.id();
    t.set_back(oid, [xid, vid, oid, M, N](TapeT<S>& tp) {
      const TensorT<S>& g = tp.grad_of(oid);
      if (tp.requires_grad(xid)) {
        TensorT<S>& gx = tp.grad_of(xid);
        for (int64_t i = 0; i < M * N; ++i) gx[i] += g[i];
      }
      if (tp.requires_grad(vid)) {
        TensorT<S>& gv = tp.grad_of(vid);
        for (int64_t i = 0; i < M; ++i)
          for (int64_t j = 0; j < N; ++j) gv[j] += g[i * N + j];
      }
    });
  }
  return out_var;
}

template <class S>
VarT<S> add_colvec(VarT<S> x, VarT<S> v) {
  TapeT<S>& t = *x.tape();
  const TensorT<S>& xv = x.value();
  const TensorT<S>& vv = v.value();
  rowcol_shape_check("add_colvec", xv, vv, false);
  const int64_t M = xv.shape[0], N = xv.shape[1];
  TensorT<S> out(xv.shape);
  for (int64_t i = 0; i < M; ++i)
    for (int64_t j = 0; j < N; ++j) out[i * N + j] = xv[i * N + j] + vv[i];
  require_finite(out, "add_colvec");

  bool needs = t.requires_grad(x.id()) || t.requires_grad(v.id());
  VarT<S> out_var = t.emplace(std::move(out), needs, nullptr);
  if (needs) {
    int32_t xid = x.id(), vid = v.id(), oid = out_var.id();
    t.set_back(oid, [xid, vid, oid, M, N](TapeT<S>& tp) {
      const TensorT<S>& g = tp.grad_of(oid);
      if (tp.requires_grad(xid)) {
        TensorT<S>& gx = tp.grad_of(xid);
        for (int64_t i = 0; i < M * N; ++i) gx[i] += g[i];
      }
      if (tp.requires_grad(vid)) {
        TensorT<S>& gv = tp.grad_of(vid);
        for (int64_t i = 0; i < M; ++i)
          for (int64_t j = 0; j < N; ++j) gv[i] += g[i * N + j];
      }
    });
  }
  return out_var;
}

template <class S>
VarT<S> scale_colvec(VarT<S> x, VarT<S> v) {
  TapeT<S>& t = *x.tape();
  const TensorT<S>& xv = x.value();
  const TensorT<S>& vv = v.value();
  rowcol_shape_check("scale_colvec", xv, vv, false);
  const int64_t M = xv.shape[0], N = xv.shape[1];
  TensorT<S> out(xv.shape);
  for (int64_t i = 0; i < M; ++i)
    for (int64_t j = 0; j < N; ++j) out[i * N + j] = xv[i * N + j] * vv[i];
  require_finite(out, "scale_colvec");

  bool needs = t.requires_grad(x.id()) || t.requires_grad(v.id());
  VarT<S> out_var = t.emplace(std::move(out), needs, nullptr);
  if (needs) {
    int32_t xid = x.id(), vid = v.id(), oid = out_var.id();
    t.set_back(oid, [xid, vid, oid, M, N](TapeT<S>& tp) {
      const TensorT<S>& g = tp.grad_of(oid);
      const TensorT<S>& xv2 = tp.value_of(xid);
      const TensorT<S>& vv2 = tp.value_of(vid);
      if (tp.requires_grad(xid)) {
        TensorT<S>& gx = tp.grad_of(xid);
        for (int64_t i = 0; i < M; ++i)
          for (int64_t j = 0; j < N; ++j) gx[i * N + j] += g[i * N + j] * vv2[i];
      }
      if (tp.requires_grad(vid)) {
        TensorT<S>& gv = tp.grad_of(vid);
        for (int64_t i = 0; i < M; ++i)
          for (int64_t j = 0; j < N; ++j) gv[i] += g[i * N + j] * xv2[i * N + j];
      }
    });
  }
  return out_var;
}

// ---------------------------------------------------------------------------
// Convolution and pooling
// ---------------------------------------------------------------------------

namespace {

struct ConvDims {
  int64_t N, C, H, W, F, kh, kw, oH, oW;
  int stride, pad;
};

template <class S>
ConvDims conv_dims(const TensorT<S>& x, const TensorT<S>& w, int stride, int pad) {
  if (x.rank() != 4 || w.rank() != 4 || x.shape[1] != w.shape[1])
    fail("conv2d: input " + shape_str(x.shape) + " incompatible with kernel " + shape_str(w.shape));
  if (stride < 1 || pad < 0) fail("conv2d: invalid stride/pad");
  ConvDims d;
  d.N = x.shape[0]; d.C = x.shape[1]; d.H = x.shape[2]; d.W = x.shape[3];
  d.F = w.shape[0]; d.kh = w.shape[2]; d.kw = w.shape[3];
  d.stride = stride; d.pad = pad;
  d.oH = (d.H + 2 * pad - d.kh) / stride + 1;
  d.oW = (d.W + 2 * pad - d.kw) / stride + 1;
  if (d.H + 2 * pad < d.kh || d.W + 2 * pad < d.kw)
    fail("conv2d: kernel " + shape_str(w.shape) + " larger than padded input " + shape_str(x.shape));
  return d;
}

// im2col for one sample: columns indexed by output position, rows by (c,ki,kj).
template <class S>
void im2col(const S* x, const ConvDims& d, S* col) {
  const int64_t K = d.C * d.kh * d.kw;
  const int64_t P = d.oH * d.oW;
  for (int64_t c = 0; c < d.C; ++c) {
    for (int64_t ki = 0; ki < d.kh; ++ki) {
      for (int64_t kj = 0; kj < d.kw; ++kj) {
        const int64_t row = (c * d.kh + ki) * d.kw + kj;
        S* dst = col + row * P;
        for (int64_t oy = 0; oy < d.oH; ++oy) {
          const int64_t iy = oy * d.stride + ki - d.pad;
          if (iy < 0 || iy >= d.H) {
            std::fill(dst + oy * d.oW, dst + (oy + 1) * d.oW, S(0));
            continue;
          }
          const S* src_row = x + (c * d.H + iy) * d.W;
          for (int64_t ox = 0; ox < d.oW; ++ox) {
            const int64_t ix = ox * d.stride + kj - d.pad;
            dst[oy * d.oW + ox] = (ix >= 0 && ix < d.W) ? src_row[ix] : S(0);
          }
        }
      }
    }
  }
  (void)K;
}

template <class S>
void col2im_add(const S* col, const ConvDims& d, S* gx) {
  const int64_t P = d.oH * d.oW;
  for (int64_t c = 0; c < d.C; ++c) {
    for (int64_t ki = 0; ki < d.kh; ++ki) {
      for (int64_t kj = 0; kj < d.kw; ++kj) {
        const int64_t row = (c * d.kh + ki) * d.kw + kj;
        const S* src = col + row * P;
        for (int64_t oy = 0; oy < d.oH; ++oy) {
          const int64_t iy = oy * d.stride + ki - d.pad;
          if (iy < 0 || iy >= d.H) continue;
          S* dst_row = gx + (c * d.H + iy) * d.W;
          for (int64_t ox = 0; ox < d.oW; ++ox) {
            const int64_t ix = ox * d.stride + kj - d.pad;
            if (ix >= 0 && ix < d.W) dst_row[ix] += src[oy * d.oW + ox];
          }
        }
      }
    }
  }
}

template <class S>
VarT<S> conv2d_impl(VarT<S> x, VarT<S> w, VarT<S>* bias, int stride, int pad) {
  TapeT<S>& t = *x.tape();
  const TensorT<S>& xv = x.value();
  const TensorT<S>& wv = w.value();
  const ConvDims d = conv_dims(xv, wv, stride, pad);
  if (bias) {
    const TensorT<S>& bv = bias->value();
    if (bv.rank() != 1 || bv.shape[0] != d.F)
      fail("conv2d: bias " + shape_str(bv.shape) + " incompatible with kernel " + shape_str(wv.shape));
  }

  const int64_t K = d.C * d.kh * d.kw;
  const int64_t P = d.oH * d.oW;
  TensorT<S> out({d.N, d.F, d.oH, d.oW});
  std::vector<S> col(static_cast<size_t>(K * P));
  MapCM<S> wm(wv.ptr(), d.F, K);
  for (int64_t n = 0; n < d.N; ++n) {
    im2col(xv.ptr() + n * d.C * d.H * d.W, d, col.data());
    MapM<S> om(out.ptr() + n * d.F * P, d.F, P);
    om.noalias() = wm * MapCM<S>(col.data(), K, P);
  }
  if (bias) {
    const TensorT<S>& bv = bias->value();
    for (int64_t n = 0; n < d.N; ++n)
      for (int64_t f = 0; f < d.F; ++f) {
        S* o = out.ptr() + (n * d.F + f) * P;
        const S b = bv[f];
        for (int64_t p = 0; p < P; ++p) o[p] += b;
      }
  }
  require_finite(out, "conv2d");

  bool needs = t.requires_grad(x.id()) || t.requires_grad(w.id()) ||
               (bias && t.requires_grad(bias->id()));
  VarT<S> out_var = t.emplace(std::move(out), needs, nullptr);
  if (needs) {
    int32_t xid = x.id(), wid = w.id(), oid = out_var.id();
    int32_t bid = bias ? bias->id() : -1;
    t.set_back(oid, [xid, wid, bid, oid, d, K, P](TapeT<S>& tp) {
      const TensorT<S>& g = tp.grad_of(oid);
      const TensorT<S>& xv2 = tp.value_of(xid);
      const TensorT<S>& wv2 = tp.value_of(wid);
      std::vector<S> col(static_cast<size_t>(K * P));
      if (tp.requires_grad(wid)) {
        TensorT<S>& gw = tp.grad_of(wid);
        MapM<S> gwm(gw.ptr(), d.F, K);
        for (int64_t n = 0; n < d.N; ++n) {
          im2col(xv2.ptr() + n * d.C * d.H * d.W, d, col.data());
          MapCM<S> gm(g.ptr() + n * d.F * P, d.F, P);
          gwm.noalias() += gm * MapCM<S>(col.data(), K, P).transpose();
        }
      }
      if (tp.requires_grad(xid)) {
        TensorT<S>& gx = tp.grad_of(xid);
        MapCM<S> wm(wv2.ptr(), d.F, K);
        for (int64_t n = 0; n < d.N; ++n) {
          MapCM<S> gm(g.ptr() + n * d.F * P, d.F, P);
          MapM<S>(col.data(), K, P).noalias() = wm.transpose() * gm;
          col2im_add(col.data(), d, gx.ptr() + n * d.C * d.H * d.W);
        }
      }
      if (bid >= 0 && tp.requires_grad(bid)) {
        TensorT<S>& gb = tp.grad_of(bid);
        for (int64_t n = 0; n < d.N; ++n)
          for (int64_t f = 0; f < d.F; ++f) {
            const S* gp = g.ptr() + (n * d.F + f) * P;
            S acc = S(0);
            for (int64_t p = 0; p < P; ++p) acc += gp[p];
            gb[f] += acc;
          }
      }
    });
  }
  return out_var;
}

}  // namespace

template <class S>
VarT<S> conv2d(VarT<S> x, VarT<S> w, int stride, int pad) {
  return conv2d_impl<S>(x, w, nullptr, stride, pad);
}

template <class S>
VarT<S> conv2d(VarT<S> x, VarT<S> w, VarT<S> bias, int stride, int pad) {
  return conv2d_impl<S>(x, w, &bias, stride, pad);
}

template <class S>
VarT<S> avg_pool2d(VarT<S> x, int kernel, int stride) {
  TapeT<S>& t = *x.tape();
  const TensorT<S>& xv = x.value();
  if (xv.rank() != 4) fail("avg_pool2d: need [N,C,H,W], got " + shape_str(xv.shape));
  if (kernel < 1 || stride < 1) fail("avg_pool2d: invalid kernel/stride");
  const int64_t N = xv.shape[0], C = xv.shape[1], H = xv.shape[2], W = xv.shape[3];
  if (H < kernel || W < kernel)
    fail("avg_pool2d: kernel larger than input " + shape_str(xv.shape));
  const int64_t oH = (H - kernel) / stride + 1, oW = (W - kernel) / stride + 1;
  TensorT<S> out({N, C, oH, oW});
  const S inv = S(1) / static_cast<S>(kernel * kernel);
  for (int64_t nc = 0; nc < N * C; ++nc) {
    const S* xp = xv.ptr() + nc * H * W;
    S* op = out.ptr() + nc * oH * oW;
    for (int64_t oy = 0; oy < oH; ++oy)
      for (int64_t ox = 0; ox < oW; ++ox) {
        S acc = S(0);
        for (int64_t ki = 0; ki < kernel; ++ki)
          for (int64_t kj = 0; kj < kernel; ++kj)
            acc += xp[(oy * stride + ki) * W + ox * stride + kj];
        op[oy * oW + ox] = acc * inv;
      }
  }
  require_finite(out, "avg_pool2d");

  bool needs = t.requires_grad(x.id());
  VarT<S> out_var = t.emplace(std::move(out), needs, nullptr);
  if (needs) {
    int32_t xid = x.id(), oid = out_var.id();
    const int k = kernel, s = stride;
    t.set_back(oid, [xid, oid, N, C, H, W, oH, oW, k, s, inv](TapeT<S>& tp) {
      const TensorT<S>& g = tp.grad_of(oid);
      TensorT<S>& gx = tp.grad_of(xid);
      for (int64_t nc = 0; nc < N * C; ++nc) {
        const S* gp = g.ptr() + nc * oH * oW;
        S* gxp = gx.ptr() + nc * H * W;
        for (int64_t oy = 0; oy < oH; ++oy)
          for (int64_t ox = 0; ox < oW; ++ox) {
            const S gv = gp[oy * oW + ox] * inv;
            for (int64_t ki = 0; ki < k; ++ki)
              for (int64_t kj = 0; kj < k; ++kj)
                gxp[(oy * s + ki) * W + ox * s + kj] += gv;
          }
      }
    });
  }
  return out_var;
}

template <class S>
VarT<S> global_avg_pool(VarT<S> x) {
  TapeT<S>& t = *x.tape();
  const TensorT<S>& xv = x.value();
  if (xv.rank() != 4) fail("global_avg_pool: need [N,C,H,W], got " + shape_str(xv.shape));
  const int64_t N = xv.shape[0], C = xv.shape[1], HW = xv.shape[2] * xv.shape[3];
  if (HW == 0) fail("global_avg_pool: empty spatial support");
  TensorT<S> out({N, C});
  const S inv = S(1) / static_cast<S>(HW);
  for (int64_t nc = 0; nc < N * C; ++nc) {
    const S* xp = xv.ptr() + nc * HW;
    S acc = S(0);
    for (int64_t i = 0; i < HW; ++i) acc += xp[i];
    out[nc] = acc * inv;
  }
  require_finite(out, "global_avg_pool");

  bool needs = t.requires_grad(x.id());
  VarT<S> out_var = t.emplace(std::move(out), needs, nullptr);
  if (needs) {
    int32_t xid = x.id(), oid = out_var.id();
    t.set_back(oid, [xid, oid, N, C, HW, inv](TapeT<S>& tp) {
      const TensorT<S>& g = tp.grad_of(oid);
      TensorT<S>& gx = tp.grad_of(xid);
      for (int64_t nc = 0; nc < N * C; ++nc) {
        const S gv = g[nc] * inv;
        S* gxp = gx.ptr() + nc * HW;
        for (int64_t i = 0; i < HW; ++i) gxp[i] += gv;
      }
    });
  }
  return out_var;
}

namespace {

struct ResizeTap {
  int64_t i0, i1;
  double w1;  // weight of i1; i0 gets 1-w1
};

// Half-pixel-center source coordinates with edge clamping.
inline std::vector<ResizeTap> resize_taps(int64_t in, int64_t out) {
  std::vector<ResizeTap> taps(static_cast<size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (int64_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    double fl = std::floor(src);
    double w1 = src - fl;
    int64_t i0 = static_cast<int64_t>(fl);
    int64_t i1 = i0 + 1;
    if (i0 < 0) i0 = 0;
    if (i1 < 0) i1 = 0;
    if (i0 > in - 1) i0 = in - 1;
    if (i1 > in - 1) i1 = in - 1;
    taps[static_cast<size_t>(o)] = {i0, i1, w1};
  }
  return taps;
}

}  // namespace

template <class S>
VarT<S> bilinear_resize(VarT<S> x, int64_t out_h, int64_t out_w) {
  TapeT<S>& t = *x.tape();
  const TensorT<S>& xv = x.value();
  if (xv.rank() != 4) fail("bilinear_resize: need [N,C,H,W], got " + shape_str(xv.shape));
  if (out_h < 1 || out_w < 1) fail("bilinear_resize: invalid output size");
  const int64_t N = xv.shape[0], C = xv.shape[1], H = xv.shape[2], W = xv.shape[3];
  if (H < 1 || W < 1) fail("bilinear_resize: empty input");
  const auto ty = resize_taps(H, out_h);
  const auto tx = resize_taps(W, out_w);

  TensorT<S> out({N, C, out_h, out_w});
  for (int64_t nc = 0; nc < N * C; ++nc) {
    const S* xp = xv.ptr() + nc * H * W;
    S* op = out.ptr() + nc * out_h * out_w;
    for (int64_t oy = 0; oy < out_h; ++oy) {
      const auto& rY = ty[static_cast<size_t>(oy)];
      for (int64_t ox = 0; ox < out_w; ++ox) {
        const auto& rX = tx[static_cast<size_t>(ox)];
        const double v00 = xp[rY.i0 * W + rX.i0];
        const double v01 = xp[rY.i0 * W + rX.i1];
        const double v10 = xp[rY.i1 * W + rX.i0];
        const double v11 = xp[rY.i1 * W + rX.i1];
        const double top = v00 + (v01 - v00) * rX.w1;
        const double bot = v10 + (v11 - v10) * rX.w1;
        op[oy * out_w + ox] = static_cast<S>(top + (bot - top) * rY.w1);
      }
    }
  }
  require_finite(out, "bilinear_resize");

  bool needs = t.requires_grad(x.id());
  VarT<S> out_var = t.emplace(std::move(out), needs, nullptr);
  if (needs) {
    int32_t xid = x.id(), oid = out_var.id();
    t.set_back(oid, [xid, oid, N, C, H, W, out_h, out_w](TapeT<S>& tp) {
      const auto ty = resize_taps(H, out_h);
      const auto tx = resize_taps(W, out_w);
      const TensorT<S>& g = tp.grad_of(oid);
      TensorT<S>& gx = tp.grad_of(xid);
      for (int64_t nc = 0; nc < N * C; ++nc) {
        const S* gp = g.ptr() + nc * out_h * out_w;
        S* gxp = gx.ptr() + nc * H * W;
        for (int64_t oy = 0; oy < out_h; ++oy) {
          const auto& rY = ty[static_cast<size_t>(oy)];
          for (int64_t ox = 0; ox < out_w; ++ox) {
            const auto& rX = tx[static_cast<size_t>(ox)];
            const double gv = gp[oy * out_w + ox];
            gxp[rY.i0 * W + rX.i0] += static_cast<S>(gv * (1 - rY.w1) * (1 - rX.w1));
            gxp[rY.i0 * W + rX.i1] += static_cast<S>(gv * (1 - rY.w1) * rX.w1);
            gxp[rY.i1 * W + rX.i0] += static_cast<S>(gv * rY.w1 * (1 - rX.w1));
            gxp[rY.i1 * W + rX.i1] += static_cast<S>(gv * rY.w1 * rX.w1);
          }
        }
      }
    });
  }
  return out_var;
}

// ---------------------------------------------------------------------------
// Shape ops, reductions
// ---------------------------------------------------------------------------

template <class S>
VarT<S> concat(const std::vector<VarT<S>>& xs, int axis) {
  if (xs.empty()) fail("concat: no inputs");
  TapeT<S>& t = *xs[0].tape();
  const size_t rank = xs[0].value().rank();
  if (axis < 0 || static_cast<size_t>(axis) >= rank) fail("concat: axis out of range");
  std::vector<int64_t> out_shape = xs[0].value().shape;
  for (size_t i = 1; i < xs.size(); ++i) {
    const auto& s = xs[i].value().shape;
    if (s.size() != rank) fail("concat: rank mismatch");
    for (size_t d = 0; d < rank; ++d)
      if (d != static_cast<size_t>(axis) && s[d] != out_shape[d])
        fail("concat: shape mismatch " + shape_str(out_shape) + " vs " + shape_str(s));
    out_shape[axis] += s[axis];
  }

  // outer: product of dims before axis; inner: product after.
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= out_shape[d];
  for (size_t d = static_cast<size_t>(axis) + 1; d < rank; ++d) inner *= out_shape[d];

  TensorT<S> out(out_shape);
  int64_t off_axis = 0;
  for (const auto& xvar : xs) {
    const TensorT<S>& xv = xvar.value();
    const int64_t ax = xv.shape[axis];
    for (int64_t o = 0; o < outer; ++o)
      std::memcpy(out.ptr() + (o * out_shape[axis] + off_axis) * inner,
                  xv.ptr() + o * ax * inner, static_cast<size_t>(ax * inner) * sizeof(S));
    off_axis += ax;
  }

  bool needs = false;
  for (const auto& xvar : xs) needs = needs || t.requires_grad(xvar.id());
  VarT<S> out_var = t.emplace(std::move(out), needs, nullptr);
  if (needs) {
    std::vector<int32_t> ids;
    std::vector<int64_t> ax_sizes;
    for (const auto& xvar : xs) {
      ids.push_back(xvar.id());
      ax_sizes.push_back(xvar.value().shape[axis]);
    }
    int32_t oid = out_var.id();
    int64_t total_axis = out_shape[axis];
    t.set_back(oid, [ids, ax_sizes, oid, outer, inner, total_axis](TapeT<S>& tp) {
      const TensorT<S>& g = tp.grad_of(oid);
      int64_t off = 0;
      for (size_t k = 0; k < ids.size(); ++k) {
        if (tp.requires_grad(ids[k])) {
          TensorT<S>& gx = tp.grad_of(ids[k]);
          for (int64_t o = 0; o < outer; ++o) {
            const S* src = g.ptr() + (o * total_axis + off) * inner;
            S* dst = gx.ptr() + o * ax_sizes[k] * inner;
            for (int64_t i = 0; i < ax_sizes[k] * inner; ++i) dst[i] += src[i];
          }
        }
        off += ax_sizes[k];
      }
    });
  }
  return out_var;
}

namespace {

// Reduction plan: for each input linear index, the destination output index.
struct ReducePlan {
  std::vector<int64_t> out_shape;
  int64_t reduced_count = 1;
};

inline ReducePlan reduce_plan(const std::vector<int64_t>& shape, std::vector<int>& axes) {
  std::sort(axes.begin(), axes.end());
  axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
  ReducePlan p;
  std::vector<bool> is_reduced(shape.size(), false);
  for (int a : axes) {
    if (a < 0 || static_cast<size_t>(a) >= shape.size()) fail("reduce: axis out of range");
    is_reduced[static_cast<size_t>(a)] = true;
    p.reduced_count *= shape[static_cast<size_t>(a)];
  }
  for (size_t d = 0; d < shape.size(); ++d)
    if (!is_reduced[d]) p.out_shape.push_back(shape[d]);
  if (p.out_shape.empty()) p.out_shape.push_back(1);
  return p;
}

// Walks input linear indices and emits the matching output index.
template <class S, class F>
void reduce_walk(const TensorT<S>& x, const std::vector<int>& axes, F&& emit) {
  const auto& shape = x.shape;
  std::vector<bool> is_reduced(shape.size(), false);
  for (int a : axes) is_reduced[static_cast<size_t>(a)] = true;
  std::vector<int64_t> idx(shape.size(), 0);
  const int64_t n = x.numel();
  for (int64_t lin = 0; lin < n; ++lin) {
    int64_t out_idx = 0;
    for (size_t d = 0; d < shape.size(); ++d)
      if (!is_reduced[d]) out_idx = out_idx * shape[d] + idx[d];
    emit(lin, out_idx);
    for (int64_t d = static_cast<int64_t>(shape.size()) - 1; d >= 0; --d) {
      if (++idx[static_cast<size_t>(d)] < shape[static_cast<size_t>(d)]) break;
      idx[static_cast<size_t>(d)] = 0;
    }
  }
}

template <class S>
VarT<S> reduce_impl(const char* prim, VarT<S> x, std::vector<int> axes, bool mean) {
  TapeT<S>& t = *x.tape();
  const TensorT<S>& xv = x.value();
  ReducePlan plan = reduce_plan(xv.shape, axes);
  const S inv = mean ? S(1) / static_cast<S>(plan.reduced_count) : S(1);
  if (mean && plan.reduced_count == 0) fail("mean: empty reduction");

  TensorT<S> out(plan.out_shape);
  reduce_walk(xv, axes, [&](int64_t lin, int64_t oidx) { out[oidx] += xv[lin]; });
  if (mean)
    for (auto& v : out.data) v *= inv;
  require_finite(out, prim);

  bool needs = t.requires_grad(x.id());
  VarT<S> out_var = t.emplace(std::move(out), needs, nullptr);
  if (needs) {
    int32_t xid = x.id(), oid = out_var.id();
    t.set_back(oid, [xid, oid, axes, inv](TapeT<S>& tp) {
      const TensorT<S>& g = tp.grad_of(oid);
      TensorT<S>& gx = tp.grad_of(xid);
      reduce_walk(tp.value_of(xid), axes,
                  [&](int64_t lin, int64_t oidx) { gx[lin] += g[oidx] * inv; });
    });
  }
  return out_var;
}

}  // namespace

template <class S>
VarT<S> sum_axes(VarT<S> x, std::vector<int> axes) {
  return reduce_impl<S>("sum", x, std::move(axes), false);
}

template <class S>
VarT<S> mean_axes(VarT<S> x, std::vector<int> axes) {
  return reduce_impl<S>("mean", x, std::move(axes), true);
}

template <class S>
VarT<S> sum_all(VarT<S> x) {
  std::vector<int> axes(x.value().rank());
  for (size_t i = 0; i < axes.size(); ++i) axes[i] = static_cast<int>(i);
  return reduce_impl<S>("sum", x, std::move(axes), false);
}

template <class S>
VarT<S> mean_all(VarT<S> x) {
  std::vector<int> axes(x.value().rank());
  for (size_t i = 0; i < axes.size(); ++i) axes[i] = static_cast<int>(i);
  return reduce_impl<S>("mean", x, std::move(axes), true);
}

template <class S>
VarT<S> l2_norm(VarT<S> x) {
  TapeT<S>& t = *x.tape();
  const TensorT<S>& xv = x.value();
  double acc = 0;
  for (int64_t i = 0; i < xv.numel(); ++i)
    acc += static_cast<double>(xv[i]) * static_cast<double>(xv[i]);
  TensorT<S> out({1});
  out[0] = static_cast<S>(std::sqrt(acc));
  require_finite(out, "l2_norm");

  bool needs = t.requires_grad(x.id());
  VarT<S> out_var = t.emplace(std::move(out), needs, nullptr);
  if (needs) {
    int32_t xid = x.id(), oid = out_var.id();
    t.set_back(oid, [xid, oid](TapeT<S>& tp) {
      const S g = tp.grad_of(oid)[0];
      const S nrm = std::max(tp.value_of(oid)[0], S(1e-12));
      const TensorT<S>& xv2 = tp.value_of(xid);
      TensorT<S>& gx = tp.grad_of(xid);
      for (int64_t i = 0; i < xv2.numel(); ++i) gx[i] += g * xv2[i] / nrm;
    });
  }
  return out_var;
}

template <class S>
VarT<S> channel_affine(VarT<S> x, VarT<S> scale, VarT<S> shift) {
  TapeT<S>& t = *x.tape();
  const TensorT<S>& xv = x.value();
  const TensorT<S>& sv = scale.value();
  const TensorT<S>& bv = shift.value();
  if (xv.rank() != 3 && xv.rank() != 4)
    fail("channel_affine: need [C,H,W] or [N,C,H,W], got " + shape_str(xv.shape));
  const int64_t C = xv.rank() == 3 ? xv.shape[0] : xv.shape[1];
  if (sv.shape != std::vector<int64_t>{C} || bv.shape != std::vector<int64_t>{C})
    fail("channel_affine: channel vectors " + shape_str(sv.shape) + "/" + shape_str(bv.shape) +
         " incompatible with input " + shape_str(xv.shape));
  const int64_t N = xv.rank() == 4 ? xv.shape[0] : 1;
  const int64_t HW = xv.rank() == 4 ? xv.shape[2] * xv.shape[3] : xv.shape[1] * xv.shape[2];

  TensorT<S> out(xv.shape);
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      const S* xp = xv.ptr() + (n * C + c) * HW;
      S* op = out.ptr() + (n * C + c) * HW;
      const S s = sv[c], b = bv[c];
      for (int64_t i = 0; i < HW; ++i) op[i] = xp[i] * s + b;
    }
  require_finite(out, "channel_affine");

  bool needs =
      t.requires_grad(x.id()) || t.requires_grad(scale.id()) || t.requires_grad(shift.id());
  VarT<S> out_var = t.emplace(std::move(out), needs, nullptr);
  if (needs) {
    int32_t xid = x.id(), sid = scale.id(), bid = shift.id(), oid = out_var.id();
    t.set_back(oid, [xid, sid, bid, oid, N, C, HW](TapeT<S>& tp) {
      const TensorT<S>& g = tp.grad_of(oid);
      const TensorT<S>& xv2 = tp.value_of(xid);
      const TensorT<S>& sv2 = tp.value_of(sid);
      for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
          const S* gp = g.ptr() + (n * C + c) * HW;
          const S* xp = xv2.ptr() + (n * C + c) * HW;
          if (tp.requires_grad(xid)) {
            S* gxp = tp.grad_of(xid).ptr() + (n * C + c) * HW;
            const S s = sv2[c];
            for (int64_t i = 0; i < HW; ++i) gxp[i] += gp[i] * s;
          }
          if (tp.requires_grad(sid)) {
            S acc = S(0);
            for (int64_t i = 0; i < HW; ++i) acc += gp[i] * xp[i];
            tp.grad_of(sid)[c] += acc;
          }
          if (tp.requires_grad(bid)) {
            S acc = S(0);
            for (int64_t i = 0; i < HW; ++i) acc += gp[i];
            tp.grad_of(bid)[c] += acc;
          }
        }
    });
  }
  return out_var;
}

template <class S>
VarT<S> reshape(VarT<S> x, std::vector<int64_t> new_shape) {
  TapeT<S>& t = *x.tape();
  const TensorT<S>& xv = x.value();
  if (TensorT<S>::count(new_shape) != xv.numel())
    fail("reshape: " + shape_str(xv.shape) + " to " + shape_str(new_shape) + " changes element count");
  TensorT<S> out(new_shape, xv.data);

  bool needs = t.requires_grad(x.id());
  VarT<S> out_var = t.emplace(std::move(out), needs, nullptr);
  if (needs) {
    int32_t xid = x.id(), oid = out_var.id();
    t.set_back(oid, [xid, oid](TapeT<S>& tp) {
      const TensorT<S>& g = tp.grad_of(oid);
      TensorT<S>& gx = tp.grad_of(xid);
      for (int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
    });
  }
  return out_var;
}

template <class S>
std::pair<VarT<S>, VarT<S>> instance_stats(VarT<S> x) {
  const TensorT<S>& xv = x.value();
  if (xv.rank() != 3) fail("instance_stats: need [C,H,W], got " + shape_str(xv.shape));
  if (xv.shape[1] * xv.shape[2] < 1) fail("instance_stats: empty spatial support");
  TapeT<S>& t = *x.tape();
  const int64_t C = xv.shape[0];

  VarT<S> mean = mean_axes(x, {1, 2});
  VarT<S> ones = t.constant(TensorT<S>::full({C}, S(1)));
  VarT<S> centered = channel_affine(x, ones, scalar_affine(mean, -1.0, 0.0));
  VarT<S> var = mean_axes(mul(centered, centered), {1, 2});
  VarT<S> stdev = sqrt(var);
  return {mean, stdev};
}

// ---------------------------------------------------------------------------
// Primitive catalog
// ---------------------------------------------------------------------------

namespace {

void fill_uniform(Tensor64& t, RngStream& rng, double lo, double hi) {
  for (auto& v : t.data) v = rng.next_uniform(lo, hi);
}

// Magnitude bounded away from zero, random sign; keeps points off relu/clamp
// kinks and away from division blowups.
void fill_signed_offzero(Tensor64& t, RngStream& rng, double lo = 0.1, double hi = 1.0) {
  for (auto& v : t.data) {
    double m = rng.next_uniform(lo, hi);
    v = rng.next_bernoulli(0.5) ? m : -m;
  }
}

using Apply = std::function<Var64(Tape64&, const std::vector<Var64>&)>;
using Fill = std::function<void(int, Tensor64&, RngStream&)>;

Fill default_fill() {
  return [](int, Tensor64& t, RngStream& rng) { fill_signed_offzero(t, rng); };
}
Fill positive_fill() {
  return [](int, Tensor64& t, RngStream& rng) { fill_uniform(t, rng, 0.5, 2.0); };
}

}  // namespace

const std::vector<DiffPrimitive>& diff_primitive_set() {
  static const std::vector<DiffPrimitive> kSet = [] {
    std::vector<DiffPrimitive> v;
    auto push = [&](std::string name, std::vector<std::vector<int64_t>> shapes, Fill fill,
                    Apply apply) {
      v.push_back(DiffPrimitive{std::move(name), std::move(shapes), std::move(fill),
                                std::move(apply)});
    };

    push("add", {{4, 3}, {4, 3}}, default_fill(),
         [](Tape64&, const std::vector<Var64>& in) { return add(in[0], in[1]); });
    push("sub", {{4, 3}, {4, 3}}, default_fill(),
         [](Tape64&, const std::vector<Var64>& in) { return sub(in[0], in[1]); });
    push("mul", {{4, 3}, {4, 3}}, default_fill(),
         [](Tape64&, const std::vector<Var64>& in) { return mul(in[0], in[1]); });
    push("div", {{4, 3}, {4, 3}},
         [](int i, Tensor64& t, RngStream& rng) {
           if (i == 0)
             fill_signed_offzero(t, rng);
           else
             fill_signed_offzero(t, rng, 0.5, 1.5);  // denominator away from 0
         },
         [](Tape64&, const std::vector<Var64>& in) { return div(in[0], in[1]); });
    push("scalar_affine", {{5}}, default_fill(),
         [](Tape64&, const std::vector<Var64>& in) { return scalar_affine(in[0], 1.7, -0.3); });
    push("exp", {{6}},
         [](int, Tensor64& t, RngStream& rng) { fill_uniform(t, rng, -1.0, 1.0); },
         [](Tape64&, const std::vector<Var64>& in) { return exp(in[0]); });
    push("log", {{6}}, positive_fill(),
         [](Tape64&, const std::vector<Var64>& in) { return log(in[0]); });
    push("relu", {{8}}, default_fill(),
         [](Tape64&, const std::vector<Var64>& in) { return relu(in[0]); });
    push("softplus", {{8}}, default_fill(),
         [](Tape64&, const std::vector<Var64>& in) { return softplus(in[0]); });
    push("sqrt", {{6}}, positive_fill(),
         [](Tape64&, const std::vector<Var64>& in) { return sqrt(in[0]); });
    push("clamp", {{8}},
         [](int, Tensor64& t, RngStream& rng) {
           // strictly inside (0,1) and away from the kinks at the bounds
           for (auto& x : t.data) x = rng.next_uniform(0.1, 0.9);
         },
         [](Tape64&, const std::vector<Var64>& in) { return clamp(in[0], 0.0, 1.0); });
    push("matmul", {{3, 4}, {4, 2}}, default_fill(),
         [](Tape64&, const std::vector<Var64>& in) { return matmul(in[0], in[1]); });
    push("transpose2d", {{3, 5}}, default_fill(),
         [](Tape64&, const std::vector<Var64>& in) { return transpose2d(in[0]); });
    push("add_rowvec", {{3, 4}, {4}}, default_fill(),
         [](Tape64&, const std::vector<Var64>& in) { return add_rowvec(in[0], in[1]); });
    push("add_colvec", {{3, 4}, {3}}, default_fill(),
         [](Tape64&, const std::vector<Var64>& in) { return add_colvec(in[0], in[1]); });
    push("scale_colvec", {{3, 4}, {3}}, default_fill(),
         [](Tape64&, const std::vector<Var64>& in) { return scale_colvec(in[0], in[1]); });
    push("conv2d", {{2, 3, 5, 5}, {4, 3, 3, 3}, {4}}, default_fill(),
         [](Tape64&, const std::vector<Var64>& in) { return conv2d(in[0], in[1], in[2], 1, 1); });
    push("conv2d_strided", {{1, 2, 7, 7}, {3, 2, 3, 3}}, default_fill(),
         [](Tape64&, const std::vector<Var64>& in) { return conv2d(in[0], in[1], 2, 1); });
    push("avg_pool2d", {{1, 2, 6, 6}}, default_fill(),
         [](Tape64&, const std::vector<Var64>& in) { return avg_pool2d(in[0], 2, 2); });
    push("global_avg_pool", {{2, 3, 4, 4}}, default_fill(),
         [](Tape64&, const std::vector<Var64>& in) { return global_avg_pool(in[0]); });
    push("bilinear_resize", {{1, 2, 5, 7}}, default_fill(),
         [](Tape64&, const std::vector<Var64>& in) { return bilinear_resize(in[0], 8, 6); });
    push("concat", {{2, 3, 2}, {2, 2, 2}}, default_fill(),
         [](Tape64&, const std::vector<Var64>& in) {
           return concat(std::vector<Var64>{in[0], in[1]}, 1);
         });
    push("sum_axes", {{2, 3, 4}}, default_fill(),
         [](Tape64&, const std::vector<Var64>& in) { return sum_axes(in[0], {0, 2}); });
    push("mean_axes", {{2, 3, 4}}, default_fill(),
         [](Tape64&, const std::vector<Var64>& in) { return mean_axes(in[0], {1}); });
    push("sum_all", {{3, 4}}, default_fill(),
         [](Tape64&, const std::vector<Var64>& in) { return sum_all(in[0]); });
    push("mean_all", {{3, 4}}, default_fill(),
         [](Tape64&, const std::vector<Var64>& in) { return mean_all(in[0]); });
    push("l2_norm", {{7}},
         [](int, Tensor64& t, RngStream& rng) { fill_signed_offzero(t, rng, 0.3, 1.0); },
         [](Tape64&, const std::vector<Var64>& in) { return l2_norm(in[0]); });
    push("channel_affine", {{3, 4, 5}, {3}, {3}}, default_fill(),
         [](Tape64&, const std::vector<Var64>& in) {
           return channel_affine(in[0], in[1], in[2]);
         });
    push("instance_stats", {{3, 4, 5}}, default_fill(),
         [](Tape64&, const std::vector<Var64>& in) {
           auto [m, s] = instance_stats(in[0]);
           return add(sum_all(m), sum_all(s));
         });
    return v;
  }();
  return kSet;
}

// ---------------------------------------------------------------------------
// Explicit instantiations (float for training, double for gradient checks)
// ---------------------------------------------------------------------------

template class TapeT<float>;
template class TapeT<double>;

#define STYLAB_INSTANTIATE_OPS(S)                                                         \
  template VarT<S> add<S>(VarT<S>, VarT<S>);                                              \
  template VarT<S> sub<S>(VarT<S>, VarT<S>);                                              \
  template VarT<S> mul<S>(VarT<S>, VarT<S>);                                              \
  template VarT<S> div<S>(VarT<S>, VarT<S>);                                              \
  template VarT<S> scalar_affine<S>(VarT<S>, double, double);                             \
  template VarT<S> exp<S>(VarT<S>);                                                       \
  template VarT<S> log<S>(VarT<S>);                                                       \
  template VarT<S> relu<S>(VarT<S>);                                                      \
  template VarT<S> softplus<S>(VarT<S>);                                                  \
  template VarT<S> sqrt<S>(VarT<S>);                                                      \
  template VarT<S> clamp<S>(VarT<S>, double, double);                                     \
  template VarT<S> matmul<S>(VarT<S>, VarT<S>);                                           \
  template VarT<S> transpose2d<S>(VarT<S>);                                               \
  template VarT<S> add_rowvec<S>(VarT<S>, VarT<S>);                                       \
  template VarT<S> add_colvec<S>(VarT<S>, VarT<S>);                                       \
  template VarT<S> scale_colvec<S>(VarT<S>, VarT<S>);                                     \
  template VarT<S> conv2d<S>(VarT<S>, VarT<S>, int, int);                                 \
  template VarT<S> conv2d<S>(VarT<S>, VarT<S>, VarT<S>, int, int);                        \
  template VarT<S> avg_pool2d<S>(VarT<S>, int, int);                                      \
  template VarT<S> global_avg_pool<S>(VarT<S>);                                           \
  template VarT<S> bilinear_resize<S>(VarT<S>, int64_t, int64_t);                         \
  template VarT<S> concat<S>(const std::vector<VarT<S>>&, int);                           \
  template VarT<S> sum_axes<S>(VarT<S>, std::vector<int>);                                \
  template VarT<S> mean_axes<S>(VarT<S>, std::vector<int>);                               \
  template VarT<S> sum_all<S>(VarT<S>);                                                   \
  template VarT<S> mean_all<S>(VarT<S>);                                                  \
  template VarT<S> l2_norm<S>(VarT<S>);                                                   \
  template VarT<S> channel_affine<S>(VarT<S>, VarT<S>, VarT<S>);                          \
  template VarT<S> reshape<S>(VarT<S>, std::vector<int64_t>);                             \
  template std::pair<VarT<S>, VarT<S>> instance_stats<S>(VarT<S>);

STYLAB_INSTANTIATE_OPS(float)
STYLAB_INSTANTIATE_OPS(double)

#undef STYLAB_INSTANTIATE_OPS

}  // namespace stylab
