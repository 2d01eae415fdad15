#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace compmap {

// Mixes a base seed with a stream id (splitmix64 finalizer). Used to give
// every episode / worker its own independent, reproducible stream.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

// Seeded generator with platform-independent distributions. The standard
// library distributions are implementation-defined, so uniform/normal
// draws are computed here from raw mt19937_64 output.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  double uniform();                 // [0, 1)
  double normal();                  // standard normal, Box-Muller
  bool bernoulli(double p) { return uniform() < p; }
  std::size_t index(std::size_t n);  // uniform in [0, n)

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

  // k distinct values from [0, n), in sampling order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace compmap
