#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

namespace cmdplab {

/// Philox4x32-10 counter-based generator.
///
/// A stream is identified by a 64-bit key; draws are the encryption of an
/// incrementing 128-bit counter under that key, so streams never overlap and
/// child streams can be derived by name without coordination. Satisfies the
/// UniformRandomBitGenerator requirements so it can drive <random>
/// distributions.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) : key_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();

  /// Independent child stream. Same (parent key, name) always gives the same
  /// child; the parent's position is not consulted.
  Rng split(std::string_view name) const;
  Rng split(std::uint64_t index) const;

  std::uint64_t key() const { return key_; }

  /// Raw block function, exposed for known-answer tests.
  static std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                                    std::array<std::uint32_t, 2> key);

 private:
  void refill();

  std::uint64_t key_;
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int available_ = 0;
};

/// Dirichlet draw as normalized Gamma(alpha_i, 1) variates. Every alpha_i
/// must be positive.
std::vector<double> dirichlet(std::span<const double> alpha, Rng& rng);

}  // namespace cmdplab
