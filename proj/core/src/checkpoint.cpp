#include "stylab/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

namespace stylab {

namespace {

constexpr char kMagic[4] = {'S', 'S', 'C', 'K'};

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(const uint8_t* p, size_t n) : p_(p), n_(n) {}
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::string str(size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(p_ + pos_), n);
    pos_ += n;
    return s;
  }
  float f32() {
    uint32_t v = u32();
    float f;
    std::memcpy(&f, &v, 4);
    return f;
  }
  size_t remaining() const { return n_ - pos_; }

 private:
  void need(size_t n) {
    if (pos_ + n > n_)
      throw CheckpointError(CheckpointError::Kind::truncated, "checkpoint truncated");
  }
  const uint8_t* p_;
  size_t n_;
  size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::string bytes;
  bytes.append(kMagic, 4);
  put_u32(bytes, kCheckpointVersion);
  put_u64(bytes, ckpt.step);
  put_u64(bytes, ckpt.config_hash);
  put_u32(bytes, static_cast<uint32_t>(ckpt.params.size()));
  for (const auto& [name, value] : ckpt.params) {
    put_u32(bytes, static_cast<uint32_t>(name.size()));
    bytes += name;
    put_u32(bytes, static_cast<uint32_t>(value.rank()));
    for (int64_t d : value.shape) put_u64(bytes, static_cast<uint64_t>(d));
    for (float v : value.data) {
      uint32_t u;
      std::memcpy(&u, &v, 4);
      put_u32(bytes, u);
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointError::Kind::io, "cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(CheckpointError::Kind::io, "short write to '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::io, "cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw CheckpointError(CheckpointError::Kind::bad_magic,
                          "'" + path + "' is not a checkpoint");
  Reader r(reinterpret_cast<const uint8_t*>(bytes.data()) + 4, bytes.size() - 4);
  const uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointError(CheckpointError::Kind::bad_version,
                          "unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.step = r.u64();
  ckpt.config_hash = r.u64();
  const uint32_t count = r.u32();
  ckpt.params.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = r.u32();
    std::string name = r.str(name_len);
    const uint32_t ndim = r.u32();
    std::vector<int64_t> shape(ndim);
    for (uint32_t d = 0; d < ndim; ++d) shape[d] = static_cast<int64_t>(r.u64());
    Tensor t(shape);
    for (int64_t j = 0; j < t.numel(); ++j) t[j] = r.f32();
    ckpt.params.emplace_back(std::move(name), std::move(t));
  }
  if (r.remaining() != 0)
    throw CheckpointError(CheckpointError::Kind::truncated,
                          "checkpoint has trailing bytes");
  return ckpt;
}

Checkpoint snapshot_params(const std::function<void(const ParamVisitor<float>&)>& visit,
                           uint64_t step, uint64_t config_hash) {
  Checkpoint ckpt;
  ckpt.step = step;
  ckpt.config_hash = config_hash;
  visit([&ckpt](const std::string& name, Param& p) { ckpt.params.emplace_back(name, p.value); });
  return ckpt;
}

void restore_params(const Checkpoint& ckpt,
                    const std::function<void(const ParamVisitor<float>&)>& visit) {
  std::map<std::string, const Tensor*> table;
  for (const auto& [name, value] : ckpt.params) {
    if (!table.emplace(name, &value).second)
      throw CheckpointError(CheckpointError::Kind::mismatch, "duplicate entry '" + name + "'");
  }
  std::vector<std::string> missing;
  visit([&table, &missing](const std::string& name, Param& p) {
    auto it = table.find(name);
    if (it == table.end()) {
      missing.push_back(name);
      return;
    }
    if (it->second->shape != p.value.shape)
      throw CheckpointError(CheckpointError::Kind::mismatch,
                            "shape mismatch for '" + name + "': checkpoint " +
                                shape_str(it->second->shape) + " vs model " +
                                shape_str(p.value.shape));
    p.value = *it->second;
    table.erase(it);
  });
  if (!missing.empty())
    throw CheckpointError(CheckpointError::Kind::mismatch,
                          "checkpoint missing parameter '" + missing.front() + "'");
  if (!table.empty())
    throw CheckpointError(CheckpointError::Kind::mismatch,
                          "checkpoint has unknown parameter '" + table.begin()->first + "'");
}

}  // namespace stylab
