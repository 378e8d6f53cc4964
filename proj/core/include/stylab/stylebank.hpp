#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "stylab/nst.hpp"
#include "stylab/rng.hpp"
#include "stylab/tensor.hpp"

namespace stylab {

/// Immutable collection of precomputed style codes.
///
/// On-disk layout (.ssbk, all little-endian):
///   magic   "SSBK"      4 bytes
///   version u32 (= 1)
///   D       u32         embedding length
///   count   u64         number of embeddings
///   payload count*D f32 row-major
struct StyleBank {
  uint32_t embed_dim = 0;
  uint64_t count = 0;
  std::vector<float> values;  // count x embed_dim, row-major
  std::string source_tag;     // provenance, not serialized

  Tensor row(uint64_t i) const;
};

class BankError : public std::runtime_error {
 public:
  enum class Kind { bad_magic, bad_version, truncated, io, invalid };
  BankError(Kind k, const std::string& msg) : std::runtime_error(msg), kind_(k) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr uint32_t kBankVersion = 1;

/// Extract a style code for every image, in input order.
StyleBank build_bank(const std::vector<Tensor>& images, StyleExtractor& extractor,
                     std::string source_tag = {});

void save_bank(const StyleBank& bank, const std::string& path);
StyleBank load_bank(const std::string& path);

/// Uniform picks with replacement from substream "style.pick".
std::vector<Tensor> sample_styles(const StyleBank& bank, int64_t n, RngStream rng);

/// Circular-shift pairing: sample b takes its style from index (b - offset)
/// mod batch_size. A bijection for every offset; offset % B == 0 pairs every
/// sample with itself.
std::vector<int64_t> inbatch_pairing(int64_t batch_size, int64_t offset);

inline constexpr int64_t kDefaultPairingOffset = 1;

/// Per-coordinate mean and population standard deviation across bank rows
/// (diagonal covariance), used by the gaussian_noise style source.
std::pair<Tensor, Tensor> noise_style_params(const StyleBank& bank);

}  // namespace stylab
