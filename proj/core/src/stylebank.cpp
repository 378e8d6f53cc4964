#include "stylab/stylebank.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace stylab {

namespace {

constexpr char kMagic[4] = {'S', 'S', 'B', 'K'};

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f32(std::string& out, float f) {
  uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(out, v);
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
  float f32() {
    uint32_t v = u32();
    float f;
    std::memcpy(&f, &v, 4);
    return f;
  }
  void raw(void* dst, size_t n) {
    need(n);
    std::memcpy(dst, p_ + pos_, n);
    pos_ += n;
  }
  size_t remaining() const { return n_ - pos_; }

 private:
  void need(size_t n) {
    if (pos_ + n > n_) throw BankError(BankError::Kind::truncated, "bank file truncated");
  }
  const uint8_t* p_;
  size_t n_;
  size_t pos_ = 0;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw BankError(BankError::Kind::io, "cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

}  // namespace

Tensor StyleBank::row(uint64_t i) const {
  if (i >= count) fail("StyleBank::row: index out of range");
  Tensor z({static_cast<int64_t>(embed_dim)});
  std::copy(values.begin() + static_cast<ptrdiff_t>(i * embed_dim),
            values.begin() + static_cast<ptrdiff_t>((i + 1) * embed_dim), z.data.begin());
  return z;
}

StyleBank build_bank(const std::vector<Tensor>& images, StyleExtractor& extractor,
                     std::string source_tag) {
  if (images.empty()) fail("build_bank: need at least one image");
  StyleBank bank;
  bank.embed_dim = static_cast<uint32_t>(extractor.embed_dim);
  bank.count = images.size();
  bank.source_tag = std::move(source_tag);
  bank.values.reserve(images.size() * static_cast<size_t>(extractor.embed_dim));
  for (const Tensor& img : images) {
    Tensor z = extractor.extract(img);
    bank.values.insert(bank.values.end(), z.data.begin(), z.data.end());
  }
  return bank;
}

void save_bank(const StyleBank& bank, const std::string& path) {
  if (bank.count * bank.embed_dim != bank.values.size())
    throw BankError(BankError::Kind::invalid, "bank value count inconsistent with header");
  std::string bytes;
  bytes.reserve(20 + 4 * bank.values.size());
  bytes.append(kMagic, 4);
  put_u32(bytes, kBankVersion);
  put_u32(bytes, bank.embed_dim);
  put_u64(bytes, bank.count);
  for (float v : bank.values) put_f32(bytes, v);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw BankError(BankError::Kind::io, "cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw BankError(BankError::Kind::io, "short write to '" + path + "'");
}

StyleBank load_bank(const std::string& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw BankError(BankError::Kind::bad_magic, "'" + path + "' is not a style bank");
  Reader r(reinterpret_cast<const uint8_t*>(bytes.data()) + 4, bytes.size() - 4);
  const uint32_t version = r.u32();
  if (version != kBankVersion)
    throw BankError(BankError::Kind::bad_version,
                    "unsupported bank version " + std::to_string(version));
  StyleBank bank;
  bank.embed_dim = r.u32();
  bank.count = r.u64();
  if (bank.embed_dim == 0)
    throw BankError(BankError::Kind::invalid, "bank embedding length is zero");
  const uint64_t n = bank.count * bank.embed_dim;
  if (r.remaining() != n * 4)
    throw BankError(BankError::Kind::truncated,
                    "bank payload is " + std::to_string(r.remaining()) + " bytes, expected " +
                        std::to_string(n * 4));
  bank.values.resize(n);
  for (uint64_t i = 0; i < n; ++i) bank.values[i] = r.f32();
  for (float v : bank.values)
    if (!std::isfinite(v))
      throw BankError(BankError::Kind::invalid, "bank contains non-finite values");
  bank.source_tag = path;
  return bank;
}

std::vector<Tensor> sample_styles(const StyleBank& bank, int64_t n, RngStream rng) {
  if (bank.count == 0) fail("sample_styles: empty bank");
  RngStream pick = rng.sub("style.pick");
  std::vector<Tensor> out;
  out.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i)
    out.push_back(bank.row(static_cast<uint64_t>(pick.next_index(static_cast<int64_t>(bank.count)))));
  return out;
}

std::vector<int64_t> inbatch_pairing(int64_t batch_size, int64_t offset) {
  if (batch_size < 1) fail("inbatch_pairing: batch size must be positive");
  if (batch_size == 1)
    std::fprintf(stderr,
                 "warning: in-batch pairing with batch size 1 pairs the sample with itself "
                 "(equivalent to content_self)\n");
  std::vector<int64_t> idx(static_cast<size_t>(batch_size));
  for (int64_t b = 0; b < batch_size; ++b) {
    int64_t s = (b - offset) % batch_size;
    if (s < 0) s += batch_size;
    idx[static_cast<size_t>(b)] = s;
  }
  return idx;
}

std::pair<Tensor, Tensor> noise_style_params(const StyleBank& bank) {
  if (bank.count == 0) fail("noise_style_params: empty bank");
  const int64_t d = bank.embed_dim;
  Tensor mean({d});
  Tensor stddev({d});
  for (int64_t j = 0; j < d; ++j) {
    double acc = 0;
    for (uint64_t i = 0; i < bank.count; ++i) acc += bank.values[i * bank.embed_dim + j];
    const double mu = acc / static_cast<double>(bank.count);
    double var = 0;
    for (uint64_t i = 0; i < bank.count; ++i) {
      const double dv = bank.values[i * bank.embed_dim + j] - mu;
      var += dv * dv;
    }
    var /= static_cast<double>(bank.count);
    mean[j] = static_cast<float>(mu);
    stddev[j] = static_cast<float>(std::sqrt(var));
  }
  return {mean, stddev};
}

}  // namespace stylab
