#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace av {

// Deterministic PRNG (xoshiro256**) with explicit distributions. The standard
// library distributions are implementation-defined, so all sampling goes
// through this class to keep runs bit-reproducible across platforms.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();

  // [0, 1)
  double uniform();
  // (0, 1), safe as a log argument
  double uniform_open();
  double normal();
  // [0, n)
  int64_t uniform_int(int64_t n);
  // index sampled proportionally to non-negative weights
  size_t categorical(std::span<const double> weights);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(static_cast<int64_t>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stable stream derivation: one base seed fans out into independent streams
// keyed by strings such as "round:alice:cnn-init". Adding streams never
// perturbs existing ones.
uint64_t derive_seed(uint64_t base, std::string_view stream);

}  // namespace av
