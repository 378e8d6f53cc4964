#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "stylab/layers.hpp"
#include "stylab/tensor.hpp"

namespace stylab {

/// Named parameter table (.ssck, all little-endian):
///   magic   "SSCK"       4 bytes
///   version u32 (= 1)
///   step    u64
///   config_hash u64
///   count   u32
///   entries: name_len u32, name bytes, ndim u32, dims i64 each, f32 payload
struct Checkpoint {
  uint64_t step = 0;
  uint64_t config_hash = 0;
  std::vector<std::pair<std::string, Tensor>> params;
};

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { bad_magic, bad_version, truncated, io, mismatch };
  CheckpointError(Kind k, const std::string& msg) : std::runtime_error(msg), kind_(k) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Snapshot every parameter enumerated by `visit`.
Checkpoint snapshot_params(const std::function<void(const ParamVisitor<float>&)>& visit,
                           uint64_t step, uint64_t config_hash);

/// Write checkpoint values back into the parameters enumerated by `visit`.
/// Names must match one-to-one and shapes must agree.
void restore_params(const Checkpoint& ckpt,
                    const std::function<void(const ParamVisitor<float>&)>& visit);

}  // namespace stylab
