#include "stylab/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace stylab {

namespace {

double eval_forward(const std::function<Var64(Tape64&, const std::vector<Var64>&)>& f,
                    const std::vector<Tensor64>& points) {
  Tape64 t;
  std::vector<Var64> vars;
  vars.reserve(points.size());
  for (const auto& p : points) vars.push_back(t.leaf(p, false));
  Var64 out = f(t, vars);
  if (out.numel() != 1) fail("grad_check: function must be scalar-valued");
  double y = out.value()[0];
  if (!std::isfinite(y)) fail("grad_check: non-finite function value");
  return y;
}

}  // namespace

double grad_check_multi(const std::function<Var64(Tape64&, const std::vector<Var64>&)>& f,
                        const std::vector<Tensor64>& points, double eps) {
  // Analytic gradients, one tape.
  Tape64 t;
  std::vector<Var64> vars;
  vars.reserve(points.size());
  for (const auto& p : points) vars.push_back(t.leaf(p, true));
  Var64 out = f(t, vars);
  if (out.numel() != 1) fail("grad_check: function must be scalar-valued");
  if (!std::isfinite(static_cast<double>(out.value()[0])))
    fail("grad_check: non-finite function value");
  t.backward(out);

  double worst = 0.0;
  std::vector<Tensor64> work = points;
  for (size_t pi = 0; pi < points.size(); ++pi) {
    const Tensor64& analytic = vars[pi].grad();
    for (int64_t i = 0; i < points[pi].numel(); ++i) {
      const double orig = work[pi][i];
      work[pi][i] = orig + eps;
      const double fp = eval_forward(f, work);
      work[pi][i] = orig - eps;
      const double fm = eval_forward(f, work);
      work[pi][i] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[i];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-12});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

double grad_check(const std::function<Var64(Tape64&, Var64)>& f, const Tensor64& point,
                  double eps) {
  return grad_check_multi(
      [&f](Tape64& t, const std::vector<Var64>& in) { return f(t, in[0]); }, {point}, eps);
}

double check_primitive(const DiffPrimitive& prim, RngStream rng, double eps) {
  std::vector<Tensor64> points;
  points.reserve(prim.input_shapes.size());
  for (size_t i = 0; i < prim.input_shapes.size(); ++i) {
    Tensor64 p(prim.input_shapes[i]);
    prim.fill(static_cast<int>(i), p, rng);
    points.push_back(std::move(p));
  }

  // Scalarize the primitive output with a fixed random weighting so every
  // output coordinate contributes to the checked gradient.
  std::vector<int64_t> out_shape;
  {
    Tape64 t;
    std::vector<Var64> vars;
    for (const auto& p : points) vars.push_back(t.leaf(p, false));
    out_shape = prim.apply(t, vars).shape();
  }
  Tensor64 weights(out_shape);
  for (auto& w : weights.data) w = rng.next_uniform(-1.0, 1.0);

  auto f = [&prim, &weights](Tape64& t, const std::vector<Var64>& in) {
    Var64 out = prim.apply(t, in);
    return sum_all(mul(out, t.constant(weights)));
  };
  return grad_check_multi(f, points, eps);
}

}  // namespace stylab
