#include "brepmae/rng.hpp"

#include <algorithm>
#include <numeric>

namespace brepmae {

uint64_t RngStream::next_below(uint64_t n) {
  // rejection sampling to avoid modulo bias
  if (n == 0) return 0;
  uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return v % n;
}

std::vector<int> RngStream::permutation(int n) {
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    int j = static_cast<int>(next_below(static_cast<uint64_t>(i) + 1));
    std::swap(p[i], p[j]);
  }
  return p;
}

std::vector<int> RngStream::sample_without_replacement(int n, int k) {
  // partial Fisher-Yates over an index array
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < k; ++i) {
    int j = i + static_cast<int>(next_below(static_cast<uint64_t>(n - i)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

uint64_t fnv1a64(const void* data, size_t len) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  uint64_t h = 0xcbf29ce484222325ULL;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

namespace {
uint64_t mix(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace

RngStream derive_stream(uint64_t seed, const std::string& tag) {
  return RngStream(mix(seed, fnv1a64(tag)));
}
RngStream derive_stream(uint64_t seed, const std::string& tag, uint64_t a) {
  return RngStream(mix(mix(seed, fnv1a64(tag)), a));
}
RngStream derive_stream(uint64_t seed, const std::string& tag, uint64_t a, uint64_t b) {
  return RngStream(mix(mix(mix(seed, fnv1a64(tag)), a), b));
}

}  // namespace brepmae
