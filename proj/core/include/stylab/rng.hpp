#pragma once

#include <cstdint>
#include <string_view>

namespace stylab {

/// Counter-based keyed random stream.
///
/// A stream is identified by a 64-bit key derived from a seed and a path of
/// sub-keys (integers or names). Draws are pure functions of (key, counter),
/// so a given (seed, key path) reproduces the same values no matter when or
/// in what order other streams are consumed. Deriving a substream never
/// advances the parent. This is what makes augmentation draws independent of
/// scheduling and of which other transforms ran.
class RngStream {
 public:
  explicit RngStream(uint64_t seed);

  RngStream sub(std::string_view name) const;
  RngStream sub(uint64_t index) const;

  uint64_t next_u64();
  double next_uniform();  // in [0, 1)
  double next_uniform(double lo, double hi);
  int64_t next_index(int64_t n);  // in [0, n)
  bool next_bernoulli(double p);
  double next_gaussian();  // standard normal, Box-Muller

  uint64_t key() const { return key_; }

 private:
  RngStream(uint64_t key, uint64_t counter) : key_(key), counter_(counter) {}
  uint64_t key_;
  uint64_t counter_ = 0;
};

}  // namespace stylab
