#pragma once

#include <functional>
#include <vector>

#include "stylab/autograd.hpp"

namespace stylab {

/// Compare the tape gradient of a scalar-valued function against central
/// finite differences at `point`. Returns the worst relative error
///   |analytic - numeric| / max(|analytic|, |numeric|, 1e-12)
/// over all coordinates. Runs in double; throws if f is non-finite anywhere.
double grad_check(const std::function<Var64(Tape64&, Var64)>& f, const Tensor64& point,
                  double eps = 1e-5);

/// Multi-input variant: checks the gradient with respect to every point.
double grad_check_multi(const std::function<Var64(Tape64&, const std::vector<Var64>&)>& f,
                        const std::vector<Tensor64>& points, double eps = 1e-5);

/// Sweep one catalog entry: random in-domain inputs, scalar formed as a fixed
/// random weighting of the primitive output, gradients checked against finite
/// differences for every input. Returns the worst relative error seen.
double check_primitive(const DiffPrimitive& prim, RngStream rng, double eps = 1e-5);

}  // namespace stylab
