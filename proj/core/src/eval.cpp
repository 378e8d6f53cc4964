#include "stylab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "stylab/imageops.hpp"

namespace stylab {

Tensor LabeledDataset::image(int64_t i) const {
  if (i < 0 || i >= size()) fail("LabeledDataset::image: index out of range");
  const int64_t per = images.numel() / size();
  Tensor out({images.shape[1], images.shape[2], images.shape[3]});
  std::copy(images.ptr() + i * per, images.ptr() + (i + 1) * per, out.ptr());
  return out;
}

void LabeledDataset::validate() const {
  if (images.rank() != 4) fail("LabeledDataset: images must be [N,C,H,W]");
  if (static_cast<int64_t>(labels.size()) != size())
    fail("LabeledDataset: label count does not match image count");
  for (int l : labels)
    if (l < 0 || l >= num_classes) fail("LabeledDataset: label out of range");
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

namespace {

enum class Shape { disk, square, triangle, cross };

// Coverage of the class shape at a pixel, supersampled 2x2.
double shape_coverage(Shape shape, double px, double py, double cx, double cy, double r) {
  int hits = 0;
  for (int sy = 0; sy < 2; ++sy)
    for (int sx = 0; sx < 2; ++sx) {
      const double x = px + 0.25 + 0.5 * sx - cx;
      const double y = py + 0.25 + 0.5 * sy - cy;
      bool in = false;
      switch (shape) {
        case Shape::disk: in = x * x + y * y <= r * r; break;
        case Shape::square: in = std::abs(x) <= r * 0.85 && std::abs(y) <= r * 0.85; break;
        case Shape::triangle: {
          const double half = (y + r) * 0.5;
          in = y >= -r && y <= r && std::abs(x) <= half;
          break;
        }
        case Shape::cross:
          in = (std::abs(x) <= r / 3.0 && std::abs(y) <= r) ||
               (std::abs(y) <= r / 3.0 && std::abs(x) <= r);
          break;
      }
      hits += in ? 1 : 0;
    }
  return hits / 4.0;
}

Tensor hsv_pixel(double h, double s, double v) {
  Tensor hsv({3, 1, 1});
  hsv[0] = static_cast<float>(h - std::floor(h));
  hsv[1] = static_cast<float>(s);
  hsv[2] = static_cast<float>(v);
  return hsv_to_rgb(hsv);
}

void render_sample(Tensor& images, int64_t index, int label, int classes, int size,
                   double texture_strength, RngStream rng) {
  const Shape shape = static_cast<Shape>(label % 4);
  const double class_hue = static_cast<double>(label) / std::max(1, classes);

  // Background: muted base color plus an oriented sinusoidal grating and
  // per-pixel hash noise.
  RngStream bg = rng.sub("background");
  const double base_h = bg.next_uniform();
  Tensor base = hsv_pixel(base_h, bg.next_uniform(0.05, 0.25), bg.next_uniform(0.35, 0.65));
  const double theta = bg.next_uniform(0.0, M_PI);
  const double freq = bg.next_uniform(2.0, 6.0);
  const double phase = bg.next_uniform(0.0, 2.0 * M_PI);
  const double amp = texture_strength * bg.next_uniform(0.5, 1.0);
  const double grain = texture_strength * 0.4;
  const double ct = std::cos(theta), st = std::sin(theta);

  RngStream noise = rng.sub("grain");
  RngStream fg = rng.sub("shape");
  const double r = fg.next_uniform(0.24, 0.34) * size;
  const double cx = size / 2.0 + fg.next_uniform(-0.08, 0.08) * size;
  const double cy = size / 2.0 + fg.next_uniform(-0.08, 0.08) * size;
  Tensor fill = hsv_pixel(class_hue + fg.next_uniform(-0.03, 0.03), fg.next_uniform(0.7, 0.9),
                          fg.next_uniform(0.8, 1.0));

  const int64_t hw = static_cast<int64_t>(size) * size;
  float* dst = images.ptr() + index * 3 * hw;
  for (int64_t y = 0; y < size; ++y)
    for (int64_t x = 0; x < size; ++x) {
      const double wave =
          amp * std::sin(2.0 * M_PI * freq * (x * ct + y * st) / static_cast<double>(size) + phase);
      const double n = grain * (noise.next_uniform() - 0.5);
      const double cov =
          shape_coverage(shape, static_cast<double>(x), static_cast<double>(y), cx, cy, r);
      for (int64_t c = 0; c < 3; ++c) {
        const double bgv = base[c] + wave + n;
        const double v = (1.0 - cov) * bgv + cov * fill[c];
        dst[c * hw + y * size + x] = static_cast<float>(std::min(1.0, std::max(0.0, v)));
      }
    }
}

LabeledDataset gen_split(const SynthSpec& spec, const char* split, int count) {
  LabeledDataset d;
  d.num_classes = spec.classes;
  d.images = Tensor({count, 3, spec.image_size, spec.image_size});
  d.labels.resize(static_cast<size_t>(count));
  RngStream root = RngStream(spec.seed).sub("synth").sub(split);
  for (int i = 0; i < count; ++i) {
    const int label = i % spec.classes;  // uniform class histogram
    d.labels[static_cast<size_t>(i)] = label;
    render_sample(d.images, i, label, spec.classes, spec.image_size, spec.texture_strength,
                  root.sub(static_cast<uint64_t>(i)));
  }
  return d;
}

}  // namespace

SynthData gen_synth(const SynthSpec& spec) {
  if (spec.classes < 1) fail("gen_synth: need at least one class");
  if (spec.image_size < 8) fail("gen_synth: image size too small");
  SynthData data;
  data.train = gen_split(spec, "train", spec.train_count);
  data.test = gen_split(spec, "test", spec.test_count);
  return data;
}

// ---------------------------------------------------------------------------
// Feature extraction and probing
// ---------------------------------------------------------------------------

Tensor encode_dataset(SslModel& model, const LabeledDataset& data, int input_size, int batch) {
  data.validate();
  const int64_t n = data.size();
  const int64_t C = data.images.shape[1];
  const int64_t H = data.images.shape[2], W = data.images.shape[3];
  const bool needs_resize = input_size > 0 && (H != input_size || W != input_size);
  const int64_t S = needs_resize ? input_size : H;
  const int64_t Sw = needs_resize ? input_size : W;

  Tensor features;
  for (int64_t start = 0; start < n; start += batch) {
    const int64_t b = std::min<int64_t>(batch, n - start);
    Tensor chunk({b, C, S, Sw});
    for (int64_t i = 0; i < b; ++i) {
      Tensor img = data.image(start + i);
      if (needs_resize) img = resize_image(img, S, Sw);
      std::copy(img.ptr(), img.ptr() + img.numel(), chunk.ptr() + i * C * S * Sw);
    }
    Tensor f = model.encode(chunk);  // [b,R]
    if (features.numel() == 0) features = Tensor({n, f.shape[1]});
    std::copy(f.ptr(), f.ptr() + f.numel(), features.ptr() + start * f.shape[1]);
  }
  return features;
}

namespace {

struct Standardizer {
  std::vector<double> mean, inv_std;

  static Standardizer fit(const Tensor& x) {
    const int64_t n = x.shape[0], d = x.shape[1];
    Standardizer s;
    s.mean.assign(static_cast<size_t>(d), 0.0);
    s.inv_std.assign(static_cast<size_t>(d), 1.0);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < d; ++j) s.mean[static_cast<size_t>(j)] += x[i * d + j];
    for (auto& m : s.mean) m /= static_cast<double>(n);
    std::vector<double> var(static_cast<size_t>(d), 0.0);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < d; ++j) {
        const double dv = x[i * d + j] - s.mean[static_cast<size_t>(j)];
        var[static_cast<size_t>(j)] += dv * dv;
      }
    for (int64_t j = 0; j < d; ++j)
      s.inv_std[static_cast<size_t>(j)] =
          1.0 / std::sqrt(var[static_cast<size_t>(j)] / static_cast<double>(n) + 1e-8);
    return s;
  }
  double apply(float v, int64_t j) const {
    return (v - mean[static_cast<size_t>(j)]) * inv_std[static_cast<size_t>(j)];
  }
};

}  // namespace

double linear_probe(const Tensor& train_features, const std::vector<int>& train_labels,
                    const Tensor& test_features, const std::vector<int>& test_labels,
                    int num_classes, const ProbeOptions& opt) {
  if (train_features.rank() != 2 || test_features.rank() != 2)
    fail("linear_probe: features must be [N,R]");
  const int64_t n = train_features.shape[0], d = train_features.shape[1];
  const int64_t nt = test_features.shape[0];
  if (static_cast<int64_t>(train_labels.size()) != n ||
      static_cast<int64_t>(test_labels.size()) != nt)
    fail("linear_probe: label count mismatch");
  if (num_classes < 1) fail("linear_probe: need at least one class");
  const int64_t K = num_classes;

  // Standardize with train statistics; affine preprocessing keeps the model
  // a single affine layer while fixing the conditioning of raw features.
  const Standardizer st = Standardizer::fit(train_features);

  std::vector<double> weight(static_cast<size_t>(K * d), 0.0);
  std::vector<double> bias(static_cast<size_t>(K), 0.0);
  std::vector<double> logits(static_cast<size_t>(K));
  std::vector<double> gw(static_cast<size_t>(K * d));
  std::vector<double> gb(static_cast<size_t>(K));
  std::vector<double> xs(static_cast<size_t>(d));

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    const double lr =
        opt.lr * (std::cos(M_PI * static_cast<double>(epoch) / std::max(1, opt.epochs)) + 1.0) /
        2.0;
    std::fill(gw.begin(), gw.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t j = 0; j < d; ++j) xs[static_cast<size_t>(j)] = st.apply(train_features[i * d + j], j);
      double mx = -1e300;
      for (int64_t k = 0; k < K; ++k) {
        double acc = bias[static_cast<size_t>(k)];
        for (int64_t j = 0; j < d; ++j) acc += weight[static_cast<size_t>(k * d + j)] * xs[static_cast<size_t>(j)];
        logits[static_cast<size_t>(k)] = acc;
        mx = std::max(mx, acc);
      }
      double z = 0;
      for (int64_t k = 0; k < K; ++k) {
        logits[static_cast<size_t>(k)] = std::exp(logits[static_cast<size_t>(k)] - mx);
        z += logits[static_cast<size_t>(k)];
      }
      for (int64_t k = 0; k < K; ++k) {
        const double p = logits[static_cast<size_t>(k)] / z;
        const double g = (p - (train_labels[static_cast<size_t>(i)] == k ? 1.0 : 0.0)) /
                         static_cast<double>(n);
        gb[static_cast<size_t>(k)] += g;
        for (int64_t j = 0; j < d; ++j)
          gw[static_cast<size_t>(k * d + j)] += g * xs[static_cast<size_t>(j)];
      }
    }
    for (size_t j = 0; j < gw.size(); ++j) weight[j] -= lr * gw[j];
    for (size_t j = 0; j < gb.size(); ++j) bias[j] -= lr * gb[j];
  }

  if (nt == 0) return 1.0;
  int64_t correct = 0;
  for (int64_t i = 0; i < nt; ++i) {
    int best = 0;
    double best_v = -1e300;
    for (int64_t k = 0; k < K; ++k) {
      double acc = bias[static_cast<size_t>(k)];
      for (int64_t j = 0; j < d; ++j)
        acc += weight[static_cast<size_t>(k * d + j)] * st.apply(test_features[i * d + j], j);
      if (acc > best_v) {
        best_v = acc;
        best = static_cast<int>(k);
      }
    }
    if (best == test_labels[static_cast<size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(nt);
}

double few_shot_eval(const Tensor& features, const std::vector<int>& labels, int num_classes,
                     int k, int trials, RngStream rng, const ProbeOptions& opt) {
  if (features.rank() != 2) fail("few_shot_eval: features must be [N,R]");
  const int64_t n = features.shape[0], d = features.shape[1];
  if (static_cast<int64_t>(labels.size()) != n) fail("few_shot_eval: label count mismatch");
  if (k < 1 || trials < 1) fail("few_shot_eval: k and trials must be positive");

  std::vector<std::vector<int64_t>> by_class(static_cast<size_t>(num_classes));
  for (int64_t i = 0; i < n; ++i) by_class[static_cast<size_t>(labels[static_cast<size_t>(i)])].push_back(i);

  double total = 0;
  for (int trial = 0; trial < trials; ++trial) {
    std::vector<int64_t> support, query;
    for (int c = 0; c < num_classes; ++c) {
      std::vector<int64_t> idx = by_class[static_cast<size_t>(c)];
      RngStream s = rng.sub(static_cast<uint64_t>(trial)).sub(static_cast<uint64_t>(c));
      for (int64_t i = static_cast<int64_t>(idx.size()) - 1; i > 0; --i)
        std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(s.next_index(i + 1))]);
      const size_t take = std::min<size_t>(static_cast<size_t>(k), idx.size());
      support.insert(support.end(), idx.begin(), idx.begin() + static_cast<ptrdiff_t>(take));
      query.insert(query.end(), idx.begin() + static_cast<ptrdiff_t>(take), idx.end());
    }
    // With every example in the support set, fall back to evaluating on it.
    const std::vector<int64_t>& eval_set = query.empty() ? support : query;

    auto gather = [&](const std::vector<int64_t>& ids, Tensor& f, std::vector<int>& y) {
      f = Tensor({static_cast<int64_t>(ids.size()), d});
      y.resize(ids.size());
      for (size_t i = 0; i < ids.size(); ++i) {
        std::copy(features.ptr() + ids[i] * d, features.ptr() + (ids[i] + 1) * d,
                  f.ptr() + static_cast<int64_t>(i) * d);
        y[i] = labels[static_cast<size_t>(ids[i])];
      }
    };
    Tensor fs, fq;
    std::vector<int> ys, yq;
    gather(support, fs, ys);
    gather(eval_set, fq, yq);
    total += linear_probe(fs, ys, fq, yq, num_classes, opt);
  }
  return total / static_cast<double>(trials);
}

double texture_invariance_score(SslModel& model, const LabeledDataset& data,
                                StyleTransfer& engine, const StyleBank& bank,
                                SasslParams params, int64_t n, RngStream rng) {
  data.validate();
  if (n < 1) fail("texture_invariance_score: need at least one image");
  n = std::min<int64_t>(n, data.size());
  // Stylize every sampled image; p = 0 stays a strict no-op.
  if (params.p > 0.0) params.p = 1.0;

  double total = 0;
  for (int64_t i = 0; i < n; ++i) {
    const Tensor img = data.image(i);
    RngStream s = rng.sub(static_cast<uint64_t>(i));
    const Tensor style = sample_styles(bank, 1, s)[0];
    const Tensor aug =
        style_augment(engine, img, StyleRef::from_embedding(style), params, s.sub(0ull).sub(0ull));

    const int64_t C = img.shape[0], H = img.shape[1], W = img.shape[2];
    Tensor pair({2, C, H, W});
    std::copy(img.ptr(), img.ptr() + img.numel(), pair.ptr());
    std::copy(aug.ptr(), aug.ptr() + aug.numel(), pair.ptr() + img.numel());
    Tensor feats = model.encode(pair);  // [2,R]
    const int64_t R = feats.shape[1];
    Tensor fa({R}), fb({R});
    std::copy(feats.ptr(), feats.ptr() + R, fa.ptr());
    std::copy(feats.ptr() + R, feats.ptr() + 2 * R, fb.ptr());
    total += cosine_similarity(fa, fb);
  }
  return total / static_cast<double>(n);
}

}  // namespace stylab
