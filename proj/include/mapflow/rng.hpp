#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string_view>

namespace mapflow {

// Philox4x32-10 counter-based generator. A stream is identified by its
// 64-bit key; the 128-bit counter walks through the stream.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t key = 0, std::uint64_t counter_hi = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    if (pos_ == 2) refill();
    return buf_[pos_++];
  }

  // Uniform on [0,1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }
  // Uniform on (0,1].
  double uniform_pos() { return static_cast<double>(((*this)() >> 11) + 1) * 0x1.0p-53; }
  double exponential() { return -std::log(uniform_pos()); }
  bool bernoulli(double p) { return uniform() < p; }
  // Uniform integer in [0, n), n > 0 (Lemire's method).
  std::uint64_t below(std::uint64_t n);

  std::uint64_t key() const { return key_; }
  // Independent stream derived from this stream's key and a tag.
  Rng split(std::uint64_t tag) const;

  static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                            std::array<std::uint32_t, 2> key);

 private:
  void refill();

  std::uint64_t key_;
  std::array<std::uint32_t, 4> ctr_;
  std::array<std::uint64_t, 2> buf_{};
  int pos_ = 2;
};

std::uint64_t mix64(std::uint64_t x);
std::uint64_t hash_string(std::string_view s);
// Stream id for (seed, experiment, replica).
std::uint64_t stream_id(std::uint64_t seed, std::string_view experiment, std::uint64_t replica);
inline Rng make_stream(std::uint64_t seed, std::string_view experiment, std::uint64_t replica) {
  return Rng(stream_id(seed, experiment, replica));
}

}  // namespace mapflow
