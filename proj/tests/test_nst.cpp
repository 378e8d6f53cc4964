#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "stylab/gradcheck.hpp"
#include "stylab/nst.hpp"

using namespace stylab;

namespace {

StyleTransfer tiny_engine(uint64_t seed, int embed_dim = 6, int styled_prefix = 13) {
  StyleTransfer e;
  e.extractor = StyleExtractor::seeded(seed, embed_dim, 4, 3);
  e.network = StylizationNetwork::seeded(seed, embed_dim, 2, 3, styled_prefix);
  return e;
}

// Bias value that makes the shifted-softplus scale head emit `target`.
float scale_bias_for(double target) { return static_cast<float>(std::log(std::exp(target - 0.01) - 1.0)); }

void force_cin(StylizationNetwork& net, int layer, double gamma, double lambda) {
  CinLayerT<float>& c = net.cin[static_cast<size_t>(layer)];
  for (auto& v : c.scale_head.weight.value.data) v = 0.0f;
  for (auto& v : c.scale_head.bias.value.data) v = scale_bias_for(gamma);
  for (auto& v : c.shift_head.weight.value.data) v = 0.0f;
  for (auto& v : c.shift_head.bias.value.data) v = static_cast<float>(lambda);
}

// Finite-difference check of parameter gradients for a scalar-valued forward.
double param_grad_check(const std::function<Var64(Tape64&)>& f,
                        const std::vector<ParamT<double>*>& params, int samples_per_param,
                        RngStream rng, double eps = 1e-5) {
  auto eval = [&f]() {
    Tape64 t;
    t.set_grad_enabled(false);
    return f(t).value()[0];
  };
  Tape64 t;
  Var64 out = f(t);
  t.backward(out);
  t.write_back_param_grads();

  double worst = 0;
  for (ParamT<double>* p : params) {
    for (int s = 0; s < samples_per_param; ++s) {
      const int64_t i = rng.next_index(p->value.numel());
      const double orig = p->value[i];
      p->value[i] = orig + eps;
      const double fp = eval();
      p->value[i] = orig - eps;
      const double fm = eval();
      p->value[i] = orig;
      const double numeric = (fp - fm) / (2 * eps);
      const double analytic = p->grad[i];
      worst = std::max(worst, std::abs(analytic - numeric) /
                                  std::max({std::abs(analytic), std::abs(numeric), 1e-12}));
    }
    p->zero_grad();
  }
  return worst;
}

}  // namespace

TEST_CASE("extract_style returns a length-100 embedding by default") {
  StyleExtractor ex = StyleExtractor::seeded(1);
  Tensor z = ex.extract(testutil::random_image(0));
  CHECK(z.shape == std::vector<int64_t>{100});
  for (float v : z.data) CHECK(std::isfinite(v));
}

TEST_CASE("extract_style is deterministic") {
  StyleExtractor ex = StyleExtractor::seeded(2);
  Tensor img = testutil::random_image(1);
  CHECK(testutil::bits_equal(ex.extract(img), ex.extract(img)));
}

TEST_CASE("extract_style golden reference for two seeded images") {
  StyleExtractor ex = StyleExtractor::seeded(0xA5, 100);
  Tensor za = ex.extract(testutil::random_image(0));
  Tensor zb = ex.extract(testutil::random_image(1));
  double d2 = 0;
  for (int i = 0; i < 100; ++i)
    d2 += (za[i] - zb[i]) * static_cast<double>(za[i] - zb[i]);
  // golden value recorded from the first verified run of this configuration
  CHECK(std::sqrt(d2) == doctest::Approx(0.922976883).epsilon(1e-3));
}

TEST_CASE("extract_style rejects undersized images") {
  StyleExtractor ex = StyleExtractor::seeded(3);
  CHECK_THROWS_AS(ex.extract(Tensor::full({3, 4, 4}, 0.5f)), std::runtime_error);
}

TEST_CASE("cin with unit scale and zero shift normalizes the channel") {
  StyleTransfer e = tiny_engine(4);
  force_cin(e.network, 0, 1.0, 0.0);
  Tensor x({2, 2, 2}, {1, 3, 5, 7, 0.1f, 0.2f, 0.3f, 0.4f});
  Tensor z = Tensor::full({6}, 0.3f);
  Tape t;
  Tensor y = e.network.cin_apply(t, t.constant(x), t.constant(z), 0).value();
  CHECK(y[0] == doctest::Approx(-1.3416).epsilon(1e-3));
  CHECK(y[1] == doctest::Approx(-0.4472).epsilon(1e-3));
  CHECK(y[2] == doctest::Approx(0.4472).epsilon(1e-3));
  CHECK(y[3] == doctest::Approx(1.3416).epsilon(1e-3));
}

TEST_CASE("cin with scale 2 and shift 1") {
  StyleTransfer e = tiny_engine(4);
  force_cin(e.network, 0, 2.0, 1.0);
  Tensor x({2, 2, 2}, {1, 3, 5, 7, 0, 0, 0, 0});
  Tape t;
  Tensor y =
      e.network.cin_apply(t, t.constant(x), t.constant(Tensor::full({6}, 0.0f)), 0).value();
  CHECK(y[0] == doctest::Approx(-1.6833).epsilon(1e-3));
  CHECK(y[1] == doctest::Approx(0.1056).epsilon(2e-2));
  CHECK(y[2] == doctest::Approx(1.8944).epsilon(1e-3));
  CHECK(y[3] == doctest::Approx(3.6833).epsilon(1e-3));
}

TEST_CASE("cin maps a constant channel to its predicted shift") {
  StyleTransfer e = tiny_engine(4);
  force_cin(e.network, 0, 1.5, 0.25);
  Tensor x = Tensor::full({2, 3, 3}, 0.6f);
  Tape t;
  Tensor y =
      e.network.cin_apply(t, t.constant(x), t.constant(Tensor::full({6}, 0.0f)), 0).value();
  for (int64_t i = 0; i < y.numel(); ++i) CHECK(y[i] == doctest::Approx(0.25).epsilon(1e-5));
}

TEST_CASE("cin rejects a channel-count mismatch") {
  StyleTransfer e = tiny_engine(4);
  Tape t;
  CHECK_THROWS_AS(e.network.cin_apply(t, t.constant(Tensor::full({3, 2, 2}, 0.5f)),
                                      t.constant(Tensor::full({6}, 0.0f)), 0),
                  std::runtime_error);
}

TEST_CASE("cin moment matching against independently computed predictor outputs") {
  StyleTransfer e = tiny_engine(11);
  RngStream rng(21);
  for (int trial = 0; trial < 8; ++trial) {
    const int layer = static_cast<int>(rng.next_index(13));
    const int C = e.network.cin[static_cast<size_t>(layer)].channels;
    Tensor x = testutil::random_tensor<float>({C, 5, 7}, rng, 0, 1);
    Tensor z = testutil::random_tensor<float>({6}, rng);

    // Predictor outputs, recomputed directly.
    const CinLayerT<float>& cl = e.network.cin[static_cast<size_t>(layer)];
    std::vector<double> gamma(static_cast<size_t>(C)), lambda(static_cast<size_t>(C));
    for (int c = 0; c < C; ++c) {
      double gs = cl.scale_head.bias.value[c], ls = cl.shift_head.bias.value[c];
      for (int d = 0; d < 6; ++d) {
        gs += static_cast<double>(cl.scale_head.weight.value[d * C + c]) * z[d];
        ls += static_cast<double>(cl.shift_head.weight.value[d * C + c]) * z[d];
      }
      gamma[static_cast<size_t>(c)] = std::log1p(std::exp(gs)) + 0.01;
      if (gs > 30) gamma[static_cast<size_t>(c)] = gs + 0.01;
      lambda[static_cast<size_t>(c)] = ls;
    }

    Tape t;
    Tensor y = e.network.cin_apply(t, t.constant(x), t.constant(z), layer).value();
    const int64_t HW = 35;
    for (int c = 0; c < C; ++c) {
      double in_mean = 0, in_sq = 0, out_mean = 0, out_sq = 0;
      for (int64_t i = 0; i < HW; ++i) {
        in_mean += x[c * HW + i];
        in_sq += static_cast<double>(x[c * HW + i]) * x[c * HW + i];
        out_mean += y[c * HW + i];
        out_sq += static_cast<double>(y[c * HW + i]) * y[c * HW + i];
      }
      in_mean /= HW;
      out_mean /= HW;
      const double in_std = std::sqrt(std::max(0.0, in_sq / HW - in_mean * in_mean));
      const double out_std = std::sqrt(std::max(0.0, out_sq / HW - out_mean * out_mean));
      if (in_std <= 1e-3) continue;
      CHECK(std::abs(out_mean - lambda[static_cast<size_t>(c)]) < 1e-4);
      const double expected_std = gamma[static_cast<size_t>(c)] * in_std / (in_std + kCinEps);
      CHECK(std::abs(out_std - expected_std) < 1e-3);
    }
  }
}

TEST_CASE("blend_embeddings endpoints and convexity") {
  Tensor zc({2}, {1.0f, 0.0f});
  Tensor zs({2}, {0.0f, 1.0f});
  CHECK(blend_embeddings(zc, zs, 0.0).data == zc.data);
  CHECK(blend_embeddings(zc, zs, 1.0).data == zs.data);
  Tensor mid = blend_embeddings(zc, zs, 0.25);
  CHECK(mid[0] == doctest::Approx(0.75));
  CHECK(mid[1] == doctest::Approx(0.25));
  CHECK_THROWS_AS(blend_embeddings(zc, zs, 1.5), std::runtime_error);
}

TEST_CASE("blend_embeddings is linear in alpha") {
  RngStream rng(31);
  Tensor zc = testutil::random_tensor<float>({9}, rng);
  Tensor zs = testutil::random_tensor<float>({9}, rng);
  const double a1 = 0.15, a2 = 0.65;
  Tensor b1 = blend_embeddings(zc, zs, a1);
  Tensor b2 = blend_embeddings(zc, zs, a2);
  Tensor bm = blend_embeddings(zc, zs, (a1 + a2) / 2);
  for (int64_t i = 0; i < 9; ++i)
    CHECK(std::abs((b1[i] + b2[i]) - 2.0 * bm[i]) < 1e-6);
}

TEST_CASE("run_stylizer preserves spatial size, including odd sizes") {
  StyleTransfer e = tiny_engine(5);
  Tensor z = Tensor::full({6}, 0.1f);
  for (auto [h, w] : {std::pair<int64_t, int64_t>{32, 32}, {17, 23}, {8, 9}}) {
    RngStream rng(h * 100 + w);
    Tensor img = testutil::random_tensor<float>({3, h, w}, rng, 0, 1);
    Tensor out = e.network.run(img, z);
    CHECK(out.shape == img.shape);
  }
}

TEST_CASE("stylizer with no styled layers ignores the style code") {
  StyleTransfer e = tiny_engine(6, 6, 0);
  Tensor img = testutil::random_image(2, 3, 12, 12);
  Tensor a = e.network.run(img, Tensor::full({6}, -2.0f));
  Tensor b = e.network.run(img, Tensor::full({6}, 3.0f));
  CHECK(testutil::bits_equal(a, b));
}

TEST_CASE("run_stylizer is deterministic and bounded to [0,1]") {
  StyleTransfer e = tiny_engine(7);
  Tensor img = testutil::random_image(3, 3, 10, 14);
  Tensor z = e.extractor.extract(img);
  Tensor a = e.network.run(img, z);
  CHECK(testutil::bits_equal(a, e.network.run(img, z)));
  for (float v : a.data) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
  // still bounded for inputs outside the image range
  Tensor wild({3, 8, 8});
  RngStream rng(44);
  for (auto& v : wild.data) v = static_cast<float>(rng.next_uniform(-3, 3));
  Tensor b = e.network.run(wild, z);
  for (float v : b.data) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("interpolate_pixels endpoints are bit-exact") {
  RngStream rng(8);
  Tensor a = testutil::random_tensor<float>({3, 5, 5}, rng, 0, 1);
  Tensor b = testutil::random_tensor<float>({3, 5, 5}, rng, 0, 1);
  CHECK(interpolate_pixels(a, b, 0.0).data == a.data);
  CHECK(interpolate_pixels(a, b, 1.0).data == b.data);
  Tensor pa = Tensor::full({1, 1, 1}, 0.0f);
  Tensor pb = Tensor::full({1, 1, 1}, 1.0f);
  CHECK(interpolate_pixels(pa, pb, 0.3)[0] == doctest::Approx(0.3));
  CHECK_THROWS_AS(interpolate_pixels(a, b, -0.1), std::runtime_error);
}

TEST_CASE("style_augment with p=0 returns the content untouched, networks untouched") {
  StyleTransfer e = tiny_engine(9);
  Tensor img = testutil::random_image(4, 3, 8, 8);
  SasslParams params;
  params.p = 0.0;
  // A wrong-length style code would make any blend or stylizer call throw.
  StyleRef bad = StyleRef::from_embedding(Tensor::full({99}, 0.0f));
  Tensor out = style_augment(e, img, bad, params, RngStream(1).sub(0ull).sub(0ull));
  CHECK(testutil::bits_equal(out, img));
}

TEST_CASE("style_augment with alpha forced to 0 equals the autoencoding mode") {
  StyleTransfer e = tiny_engine(10);
  Tensor img = testutil::random_image(5, 3, 8, 8);
  SasslParams ext;
  ext.p = 1.0;
  ext.alpha_min = ext.alpha_max = 0.0;
  ext.beta_min = ext.beta_max = 0.4;
  RngStream style_rng(77);
  Tensor style = testutil::random_tensor<float>({6}, style_rng);
  Tensor a = style_augment(e, img, StyleRef::from_embedding(style), ext,
                           RngStream(3).sub(0ull).sub(0ull));
  SasslParams self = ext;
  self.style_source = StyleSource::content_self;
  Tensor b = style_augment(e, img, StyleRef::content_self_ref(), self,
                           RngStream(3).sub(0ull).sub(0ull));
  CHECK(testutil::bits_equal(a, b));
}

TEST_CASE("style_augment with beta forced to 0 is bit-exact identity") {
  StyleTransfer e = tiny_engine(11);
  Tensor img = testutil::random_image(6, 3, 8, 8);
  SasslParams params;
  params.p = 1.0;
  params.beta_min = params.beta_max = 0.0;
  Tensor out = style_augment(e, img, StyleRef::content_self_ref(), params,
                             RngStream(4).sub(0ull).sub(0ull));
  CHECK(testutil::bits_equal(out, img));
}

TEST_CASE("style_augment output stays in the convex hull of content and stylized") {
  StyleTransfer e = tiny_engine(12);
  Tensor img = testutil::random_image(7, 3, 8, 8);
  Tensor zc = e.extractor.extract(img);
  RngStream zs_rng(55);
  Tensor zs = testutil::random_tensor<float>({6}, zs_rng);
  const double alpha = 0.37, beta = 0.81;
  Tensor zhat = blend_embeddings(zc, zs, alpha);
  Tensor stylized = e.network.run(img, zhat);
  Tensor out = interpolate_pixels(img, stylized, beta);
  for (int64_t i = 0; i < out.numel(); ++i) {
    CHECK(out[i] >= std::min(img[i], stylized[i]));
    CHECK(out[i] <= std::max(img[i], stylized[i]));
  }
}

TEST_CASE("noise style draws have the requested per-coordinate mean") {
  const int D = 8;
  RngStream setup(66);
  Tensor mu = testutil::random_tensor<float>({D}, setup, -2, 2);
  Tensor sd = testutil::random_tensor<float>({D}, setup, 0.2, 1.5);
  const int n = 10000;
  std::vector<double> acc(D, 0.0);
  RngStream root(91);
  for (int i = 0; i < n; ++i) {
    Tensor z = draw_noise_style(mu, sd, root.sub(static_cast<uint64_t>(i)));
    for (int d = 0; d < D; ++d) acc[static_cast<size_t>(d)] += z[d];
  }
  for (int d = 0; d < D; ++d) {
    const double mean = acc[static_cast<size_t>(d)] / n;
    const double bound = 3.0 * sd[d] / std::sqrt(static_cast<double>(n));
    CHECK(std::abs(mean - mu[d]) < bound);
  }
}

TEST_CASE("style_augment_batch: single sample matches the single-image call") {
  StyleTransfer e = tiny_engine(13);
  Tensor img = testutil::random_image(8, 3, 8, 8);
  Tensor batch({1, 3, 8, 8}, img.data);
  SasslParams params;
  params.p = 1.0;
  StyleRef ref = StyleRef::content_self_ref();
  RngStream rng(5);
  Tensor out = style_augment_batch(e, batch, {ref}, params, rng, 0);
  Tensor single = style_augment(e, img, ref, params, rng.sub(0ull).sub(0ull));
  Tensor out0({3, 8, 8}, std::vector<float>(out.data.begin(), out.data.end()));
  CHECK(testutil::bits_equal(out0, single));
}

TEST_CASE("style_augment_batch equals looped single calls with the same keys") {
  StyleTransfer e = tiny_engine(14);
  const int64_t B = 4;
  RngStream mk(6);
  Tensor batch = testutil::random_tensor<float>({B, 3, 8, 8}, mk, 0, 1);
  std::vector<StyleRef> refs;
  for (int64_t b = 0; b < B; ++b)
    refs.push_back(StyleRef::from_embedding(testutil::random_tensor<float>({6}, mk)));
  SasslParams params;
  params.p = 1.0;
  RngStream rng(7);
  Tensor out = style_augment_batch(e, batch, refs, params, rng, 0);
  const int64_t per = 3 * 8 * 8;
  for (int64_t b = 0; b < B; ++b) {
    Tensor img({3, 8, 8});
    std::copy(batch.ptr() + b * per, batch.ptr() + (b + 1) * per, img.ptr());
    Tensor single = style_augment(e, img, refs[static_cast<size_t>(b)], params,
                                  rng.sub(static_cast<uint64_t>(b)).sub(0ull));
    Tensor got({3, 8, 8});
    std::copy(out.ptr() + b * per, out.ptr() + (b + 1) * per, got.ptr());
    CHECK(testutil::bits_equal(got, single));
  }
}

TEST_CASE("per-sample apply decisions follow the configured probability") {
  StyleTransfer e = tiny_engine(15);
  const int64_t B = 1000;
  RngStream mk(8);
  Tensor batch = testutil::random_tensor<float>({B, 3, 8, 8}, mk, 0.2, 0.8);
  std::vector<StyleRef> refs(static_cast<size_t>(B), StyleRef::content_self_ref());
  SasslParams params;
  params.p = 0.5;
  params.beta_min = params.beta_max = 1.0;  // applied samples change almost surely
  Tensor out = style_augment_batch(e, batch, refs, params, RngStream(9), 0);
  const int64_t per = 3 * 8 * 8;
  int64_t applied = 0;
  for (int64_t b = 0; b < B; ++b) {
    bool same = true;
    for (int64_t i = 0; i < per && same; ++i) same = out[b * per + i] == batch[b * per + i];
    applied += same ? 0 : 1;
  }
  CHECK(applied >= 400);
  CHECK(applied <= 600);
}

TEST_CASE("gradients flow through the full augmentation path") {
  StyleTransferT<double> e64 = tiny_engine(16, 4).cast<double>();
  RngStream rng(10);
  Tensor64 img = testutil::random_tensor<double>({3, 8, 8}, rng, 0.15, 0.85);
  Tensor64 style = testutil::random_tensor<double>({4}, rng);
  const double err = grad_check_multi(
      [&e64](Tape64& t, const std::vector<Var64>& in) {
        Tensor64 w(in[0].value().shape);
        RngStream wr(123);
        for (auto& v : w.data) v = wr.next_uniform(-1, 1);
        Var64 out = style_augment_graph(e64, t, in[0], in[1], 0.35, 0.7);
        return sum_all(mul(out, t.constant(w)));
      },
      {img, style}, 1e-6);
  CHECK(err < 1e-4);
}

TEST_CASE("gradients of cin reach inputs, style code, and predictor weights") {
  StyleTransferT<double> e64 = tiny_engine(17, 4).cast<double>();
  RngStream rng(11);
  Tensor64 x = testutil::random_tensor<double>({4, 4, 5}, rng, 0, 1);
  Tensor64 z = testutil::random_tensor<double>({4}, rng);
  const int layer = 0;

  const double input_err = grad_check_multi(
      [&e64, layer](Tape64& t, const std::vector<Var64>& in) {
        Tensor64 w(in[0].value().shape);
        RngStream wr(321);
        for (auto& v : w.data) v = wr.next_uniform(-1, 1);
        return sum_all(mul(e64.network.cin_apply(t, in[0], in[1], layer), t.constant(w)));
      },
      {x, z}, 1e-6);
  CHECK(input_err < 1e-4);

  CinLayerT<double>& cl = e64.network.cin[layer];
  std::vector<ParamT<double>*> params = {&cl.scale_head.weight, &cl.scale_head.bias,
                                         &cl.shift_head.weight, &cl.shift_head.bias};
  const double weight_err = param_grad_check(
      [&e64, &x, &z, layer](Tape64& t) {
        Tensor64 w(x.shape);
        RngStream wr(321);
        for (auto& v : w.data) v = wr.next_uniform(-1, 1);
        return sum_all(
            mul(e64.network.cin_apply(t, t.constant(x), t.constant(z), layer), t.constant(w)));
      },
      params, 6, RngStream(12));
  CHECK(weight_err < 1e-4);
}
