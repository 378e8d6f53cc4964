#include "stylab/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace stylab {
namespace {

// splitmix64 finalizer; full-period bijective mixer.
uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

uint64_t fold(uint64_t key, uint64_t word) { return mix64(key ^ mix64(word ^ 0x2545f4914f6cdd1dull)); }

uint64_t hash_name(std::string_view name) {
  // FNV-1a
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

RngStream::RngStream(uint64_t seed) : key_(mix64(seed ^ 0x53544c4142u /* "STLAB" */)) {}

RngStream RngStream::sub(std::string_view name) const { return RngStream(fold(key_, hash_name(name)), 0); }

RngStream RngStream::sub(uint64_t index) const { return RngStream(fold(key_, index), 0); }

uint64_t RngStream::next_u64() { return mix64(key_ ^ mix64(counter_++ + 0x9e3779b97f4a7c15ull)); }

double RngStream::next_uniform() {
  // Top 53 bits give a uniform double in [0, 1).
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::next_uniform(double lo, double hi) { return lo + next_uniform() * (hi - lo); }

int64_t RngStream::next_index(int64_t n) {
  if (n <= 0) throw std::invalid_argument("RngStream::next_index: n must be positive");
  int64_t i = static_cast<int64_t>(next_uniform() * static_cast<double>(n));
  return i < n ? i : n - 1;
}

bool RngStream::next_bernoulli(double p) { return next_uniform() < p; }

double RngStream::next_gaussian() {
  // Box-Muller; u1 shifted away from zero so log stays finite.
  double u1 = next_uniform();
  double u2 = next_uniform();
  u1 = u1 > 0.0 ? u1 : 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace stylab
