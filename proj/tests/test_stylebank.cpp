#include <doctest.h>

#include <fstream>

#include "helpers.hpp"
#include "stylab/stylebank.hpp"

using namespace stylab;

namespace {

StyleBank random_bank(uint64_t seed, int count, int dim) {
  StyleBank bank;
  bank.embed_dim = static_cast<uint32_t>(dim);
  bank.count = static_cast<uint64_t>(count);
  RngStream rng(seed);
  bank.values.resize(static_cast<size_t>(count * dim));
  for (auto& v : bank.values) v = static_cast<float>(rng.next_uniform(-2, 2));
  return bank;
}

}  // namespace

TEST_CASE("build_bank preserves order and matches single extractions") {
  StyleExtractor ex = StyleExtractor::seeded(1, 10, 4, 3);
  std::vector<Tensor> images = {testutil::random_image(0, 3, 8, 8),
                                testutil::random_image(1, 3, 8, 8),
                                testutil::random_image(0, 3, 8, 8)};
  StyleBank bank = build_bank(images, ex, "unit");
  CHECK(bank.count == 3);
  CHECK(bank.embed_dim == 10);
  for (int i = 0; i < 3; ++i) {
    Tensor z = ex.extract(images[static_cast<size_t>(i)]);
    CHECK(bank.row(static_cast<uint64_t>(i)).data == z.data);
  }
  CHECK(bank.row(0).data == bank.row(2).data);  // identical inputs, identical rows
  CHECK_THROWS_AS(build_bank({}, ex), std::runtime_error);
}

TEST_CASE("bank save/load round-trips bitwise") {
  testutil::TempDir dir("bank");
  StyleBank bank = random_bank(2, 7, 12);
  const std::string path = dir / "styles.ssbk";
  save_bank(bank, path);
  StyleBank loaded = load_bank(path);
  CHECK(loaded.embed_dim == bank.embed_dim);
  CHECK(loaded.count == bank.count);
  CHECK(loaded.values == bank.values);
}

TEST_CASE("bank load failures carry distinct error kinds") {
  testutil::TempDir dir("bankerr");
  StyleBank bank = random_bank(3, 4, 6);
  const std::string good = dir / "good.ssbk";
  save_bank(bank, good);

  // truncation
  {
    std::ifstream in(good, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out(dir / "short.ssbk", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 5));
  }
  try {
    load_bank(dir / "short.ssbk");
    FAIL("expected truncation error");
  } catch (const BankError& e) {
    CHECK(e.kind() == BankError::Kind::truncated);
  }

  // wrong magic
  {
    std::ofstream out(dir / "bad.ssbk", std::ios::binary);
    out << "NOPE0000000000000000000000";
  }
  try {
    load_bank(dir / "bad.ssbk");
    FAIL("expected magic error");
  } catch (const BankError& e) {
    CHECK(e.kind() == BankError::Kind::bad_magic);
  }

  // wrong version
  {
    std::ifstream in(good, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    bytes[4] = 9;  // version lives right after the magic
    std::ofstream out(dir / "ver.ssbk", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  try {
    load_bank(dir / "ver.ssbk");
    FAIL("expected version error");
  } catch (const BankError& e) {
    CHECK(e.kind() == BankError::Kind::bad_version);
  }

  // missing file
  try {
    load_bank(dir / "missing.ssbk");
    FAIL("expected io error");
  } catch (const BankError& e) {
    CHECK(e.kind() == BankError::Kind::io);
  }
}

TEST_CASE("sample_styles: in-range, reproducible, single-row banks trivial") {
  StyleBank bank = random_bank(4, 1, 5);
  std::vector<Tensor> picks = sample_styles(bank, 10, RngStream(5));
  for (const Tensor& z : picks) CHECK(z.data == bank.row(0).data);

  StyleBank big = random_bank(5, 9, 5);
  std::vector<Tensor> a = sample_styles(big, 20, RngStream(6));
  std::vector<Tensor> b = sample_styles(big, 20, RngStream(6));
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].data == b[i].data);
}

TEST_CASE("sample_styles is close to uniform over rows") {
  StyleBank bank = random_bank(6, 4, 3);
  std::vector<Tensor> picks = sample_styles(bank, 10000, RngStream(7));
  std::vector<int> counts(4, 0);
  for (const Tensor& z : picks)
    for (int r = 0; r < 4; ++r)
      if (z.data == bank.row(static_cast<uint64_t>(r)).data) {
        ++counts[static_cast<size_t>(r)];
        break;
      }
  for (int r = 0; r < 4; ++r) {
    CHECK(counts[static_cast<size_t>(r)] >= 2300);
    CHECK(counts[static_cast<size_t>(r)] <= 2700);
  }
}

TEST_CASE("inbatch pairing: spec example, zero shift, composition") {
  CHECK(inbatch_pairing(4, 1) == std::vector<int64_t>{3, 0, 1, 2});
  CHECK(inbatch_pairing(4, 0) == std::vector<int64_t>{0, 1, 2, 3});

  // applying the shift B times composes to the identity
  const int64_t B = 6, b0 = 2;
  std::vector<int64_t> idx = {0, 1, 2, 3, 4, 5};
  const std::vector<int64_t> shift = inbatch_pairing(B, b0);
  for (int64_t k = 0; k < B; ++k) {
    std::vector<int64_t> next(static_cast<size_t>(B));
    for (int64_t i = 0; i < B; ++i)
      next[static_cast<size_t>(i)] = idx[static_cast<size_t>(shift[static_cast<size_t>(i)])];
    idx = next;
  }
  CHECK(idx == std::vector<int64_t>{0, 1, 2, 3, 4, 5});
}

TEST_CASE("inbatch pairing is a bijection, never self when offset is coprime") {
  for (int64_t B = 2; B <= 16; ++B)
    for (int64_t b0 = 0; b0 <= 16; ++b0) {
      const std::vector<int64_t> p = inbatch_pairing(B, b0);
      std::vector<bool> seen(static_cast<size_t>(B), false);
      for (int64_t b = 0; b < B; ++b) {
        CHECK(p[static_cast<size_t>(b)] >= 0);
        CHECK(p[static_cast<size_t>(b)] < B);
        seen[static_cast<size_t>(p[static_cast<size_t>(b)])] = true;
        if (b0 % B != 0) CHECK(p[static_cast<size_t>(b)] != b);
      }
      for (bool s : seen) CHECK(s);
    }
}

TEST_CASE("noise params: hand example and degenerate banks") {
  StyleBank two;
  two.embed_dim = 3;
  two.count = 2;
  two.values = {0, 5, -1, 2, 5, -1};  // rows [0,5,-1] and [2,5,-1]
  auto [mu, sd] = noise_style_params(two);
  CHECK(mu.shape == std::vector<int64_t>{3});
  CHECK(mu[0] == doctest::Approx(1.0));
  CHECK(sd[0] == doctest::Approx(1.0));  // population
  CHECK(mu[1] == doctest::Approx(5.0));
  CHECK(sd[1] == doctest::Approx(0.0));

  StyleBank same = random_bank(8, 1, 4);
  same.count = 3;
  same.values.insert(same.values.end(), same.values.begin(), same.values.begin() + 4);
  same.values.insert(same.values.end(), same.values.begin(), same.values.begin() + 4);
  auto [mu2, sd2] = noise_style_params(same);
  for (int64_t i = 0; i < 4; ++i) CHECK(sd2[i] == doctest::Approx(0.0));
}
