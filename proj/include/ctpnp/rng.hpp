#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace ctpnp {

/// Philox4x32-10 counter-based generator (Salmon et al., Random123). Every
/// draw is a pure function of (key, counter), which makes per-element noise
/// independent of evaluation order and worker count.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);

/// Uniform in (0, 1) from the top 52 bits of two 32-bit words.
double philox_uniform(std::uint32_t hi, std::uint32_t lo);

/// Standard normal for element `index` of stream `stream` under `seed`
/// (Box-Muller on one Philox block).
double philox_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

/// Sequential convenience wrapper: a Philox stream consumed in counter order.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {}

  double uniform();  // (0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::array<std::uint32_t, 4> next_block();

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int used_ = 4;
};

}  // namespace ctpnp
