#include "cmdplab/rng.hpp"

#include <random>

#include "cmdplab/error.hpp"

namespace cmdplab {
namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

std::array<std::uint32_t, 4> Rng::philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                                std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

void Rng::refill() {
  const std::array<std::uint32_t, 4> counter{static_cast<std::uint32_t>(block_),
                                             static_cast<std::uint32_t>(block_ >> 32), 0u, 0u};
  const std::array<std::uint32_t, 2> key{static_cast<std::uint32_t>(key_),
                                         static_cast<std::uint32_t>(key_ >> 32)};
  const auto out = philox4x32_10(counter, key);
  buffer_[0] = (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
  buffer_[1] = (static_cast<std::uint64_t>(out[3]) << 32) | out[2];
  ++block_;
  available_ = 2;
}

Rng::result_type Rng::operator()() {
  if (available_ == 0) refill();
  return buffer_[2 - available_--];
}

double Rng::uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

Rng Rng::split(std::string_view name) const {
  // FNV-1a over the name, then mixed with the parent key.
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (const char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return Rng(mix64(key_ ^ mix64(h)));
}

Rng Rng::split(std::uint64_t index) const { return Rng(mix64(mix64(key_) + index)); }

std::vector<double> dirichlet(std::span<const double> alpha, Rng& rng) {
  std::vector<double> out(alpha.size());
  double total = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (!(alpha[i] > 0.0)) throw Error(ErrorCode::MalformedProblem, "dirichlet concentration must be positive");
    std::gamma_distribution<double> gamma(alpha[i], 1.0);
    out[i] = gamma(rng);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

}  // namespace cmdplab
