#include "stylab/layers.hpp"

#include <cmath>

namespace stylab {

template <class S>
Conv2dT<S> Conv2dT<S>::seeded(int in_ch, int out_ch, int k, int stride, int pad, RngStream rng) {
  Conv2dT<S> c;
  c.stride = stride;
  c.pad = pad;
  TensorT<S> w({out_ch, in_ch, k, k});
  const double scale = std::sqrt(2.0 / (static_cast<double>(in_ch) * k * k));
  for (auto& v : w.data) v = static_cast<S>(rng.next_gaussian() * scale);
  c.weight = ParamT<S>(std::move(w));
  c.bias = ParamT<S>(TensorT<S>::zeros({out_ch}), /*exempt=*/true);
  return c;
}

template <class S>
VarT<S> Conv2dT<S>::forward(TapeT<S>& t, VarT<S> x) {
  return conv2d(x, t.param(weight), t.param(bias), stride, pad);
}

template <class S>
LinearT<S> LinearT<S>::seeded(int in_dim, int out_dim, RngStream rng) {
  LinearT<S> l;
  TensorT<S> w({in_dim, out_dim});
  const double scale = std::sqrt(1.0 / static_cast<double>(in_dim));
  for (auto& v : w.data) v = static_cast<S>(rng.next_gaussian() * scale);
  l.weight = ParamT<S>(std::move(w));
  l.bias = ParamT<S>(TensorT<S>::zeros({out_dim}), /*exempt=*/true);
  return l;
}

template <class S>
VarT<S> LinearT<S>::forward(TapeT<S>& t, VarT<S> x) {
  return add_rowvec(matmul(x, t.param(weight)), t.param(bias));
}

template struct Conv2dT<float>;
template struct Conv2dT<double>;
template struct LinearT<float>;
template struct LinearT<double>;

}  // namespace stylab
