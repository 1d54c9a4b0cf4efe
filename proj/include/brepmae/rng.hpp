#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace brepmae {

// splitmix64: the single 64-bit generator used everywhere. Independent
// streams are derived by hashing (seed, purpose tag, indices) so draws for
// masking, dropout, init, shuffling etc. never interleave across purposes.
class RngStream {
 public:
  explicit RngStream(uint64_t state) : state_(state) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0,1)
  double next_double() { return (next_u64() >> 11) * 0x1.0p-53; }

  // uniform in [lo,hi)
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // uniform integer in [0,n)
  uint64_t next_below(uint64_t n);

  // Fisher-Yates permutation of 0..n-1
  std::vector<int> permutation(int n);

  // k distinct indices from 0..n-1, ascending
  std::vector<int> sample_without_replacement(int n, int k);

 private:
  uint64_t state_;
};

uint64_t fnv1a64(const void* data, size_t len);
uint64_t fnv1a64(const std::string& s);

// Stream for (seed, tag) plus optional numeric qualifiers, e.g. epoch or
// graph index.
RngStream derive_stream(uint64_t seed, const std::string& tag);
RngStream derive_stream(uint64_t seed, const std::string& tag, uint64_t a);
RngStream derive_stream(uint64_t seed, const std::string& tag, uint64_t a, uint64_t b);

}  // namespace brepmae
