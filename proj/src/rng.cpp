#include "ctpnp/rng.hpp"

#include <cmath>

namespace ctpnp {
namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

std::array<std::uint32_t, 4> block_for(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return philox4x32_10({static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                        static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)},
                       {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)});
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

double philox_uniform(std::uint32_t hi, std::uint32_t lo) {
  // 52 bits so that bits + 0.5 is still exact and the result stays below 1.
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 12;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-52;
}

double philox_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  const auto b = block_for(seed, stream, index);
  const double u1 = philox_uniform(b[0], b[1]);
  const double u2 = philox_uniform(b[2], b[3]);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

std::array<std::uint32_t, 4> CounterRng::next_block() { return block_for(seed_, stream_, counter_++); }

double CounterRng::uniform() {
  if (used_ > 2) {
    block_ = next_block();
    used_ = 0;
  }
  const double u = philox_uniform(block_[used_], block_[used_ + 1]);
  used_ += 2;
  return u;
}

double CounterRng::normal() {
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

std::uint64_t CounterRng::below(std::uint64_t n) {
  // 53-bit uniform scaled down; bias is negligible for the sizes used here.
  const auto k = static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
  return k < n ? k : n - 1;
}

}  // namespace ctpnp
