#pragma once

#include <functional>
#include <string>

#include "stylab/autograd.hpp"
#include "stylab/rng.hpp"

namespace stylab {

/// Callback used to enumerate named parameters for checkpoints and optimizers.
template <class S>
using ParamVisitor = std::function<void(const std::string& name, ParamT<S>& p)>;

template <class S>
struct Conv2dT {
  ParamT<S> weight;  // [out,in,k,k]
  ParamT<S> bias;    // [out]
  int stride = 1;
  int pad = 1;

  static Conv2dT seeded(int in_ch, int out_ch, int k, int stride, int pad, RngStream rng);
  VarT<S> forward(TapeT<S>& t, VarT<S> x);
  void visit(const std::string& prefix, const ParamVisitor<S>& fn) {
    fn(prefix + ".weight", weight);
    fn(prefix + ".bias", bias);
  }
  template <class S2>
  Conv2dT<S2> cast() const {
    Conv2dT<S2> c;
    c.weight = weight.template cast<S2>();
    c.bias = bias.template cast<S2>();
    c.stride = stride;
    c.pad = pad;
    return c;
  }
};

template <class S>
struct LinearT {
  ParamT<S> weight;  // [in,out]
  ParamT<S> bias;    // [out]

  static LinearT seeded(int in_dim, int out_dim, RngStream rng);
  /// x is [N,in]; returns [N,out].
  VarT<S> forward(TapeT<S>& t, VarT<S> x);
  void visit(const std::string& prefix, const ParamVisitor<S>& fn) {
    fn(prefix + ".weight", weight);
    fn(prefix + ".bias", bias);
  }
  template <class S2>
  LinearT<S2> cast() const {
    LinearT<S2> l;
    l.weight = weight.template cast<S2>();
    l.bias = bias.template cast<S2>();
    return l;
  }
};

using Conv2d = Conv2dT<float>;
using Linear = LinearT<float>;

}  // namespace stylab
