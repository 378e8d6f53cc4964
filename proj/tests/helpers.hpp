#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "stylab/rng.hpp"
#include "stylab/tensor.hpp"

namespace testutil {

inline stylab::Tensor random_image(uint64_t key, int64_t c = 3, int64_t h = 16, int64_t w = 16) {
  stylab::RngStream rng = stylab::RngStream(0xA5).sub("golden-image").sub(key);
  stylab::Tensor img({c, h, w});
  for (auto& v : img.data) v = static_cast<float>(rng.next_uniform());
  return img;
}

template <class S>
stylab::TensorT<S> random_tensor(std::vector<int64_t> shape, stylab::RngStream& rng, double lo = -1,
                                 double hi = 1) {
  stylab::TensorT<S> t(std::move(shape));
  for (auto& v : t.data) v = static_cast<S>(rng.next_uniform(lo, hi));
  return t;
}

inline bool bits_equal(const stylab::Tensor& a, const stylab::Tensor& b) {
  return a.shape == b.shape && a.data == b.data;
}

inline double max_abs_diff(const stylab::Tensor& a, const stylab::Tensor& b) {
  double m = 0;
  for (int64_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

/// Unique temp directory, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("stylab_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

}  // namespace testutil
