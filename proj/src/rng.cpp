#include "mapflow/rng.hpp"

#include "mapflow/error.hpp"

namespace mapflow {

namespace {

constexpr std::uint32_t kM0 = 0xD2511F53u;
constexpr std::uint32_t kM1 = 0xCD9E8D57u;
constexpr std::uint32_t kW0 = 0x9E3779B9u;
constexpr std::uint32_t kW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

}  // namespace

const char* error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidExponent: return "InvalidExponent";
    case ErrorCode::MassDeficitNegative: return "MassDeficitNegative";
    case ErrorCode::DivergentExposure: return "DivergentExposure";
    case ErrorCode::StepCapExceeded: return "StepCapExceeded";
    case ErrorCode::DivisionAtAbsorption: return "DivisionAtAbsorption";
    case ErrorCode::StartOffGrid: return "StartOffGrid";
    case ErrorCode::EvaluationNearPole: return "EvaluationNearPole";
    case ErrorCode::TimeBeyondHorizon: return "TimeBeyondHorizon";
    case ErrorCode::BudgetExceeded: return "BudgetExceeded";
    case ErrorCode::TruncatedAncestor: return "TruncatedAncestor";
    case ErrorCode::EmptySample: return "EmptySample";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Error";
}

std::array<std::uint32_t, 4> Rng::block(std::array<std::uint32_t, 4> c,
                                        std::array<std::uint32_t, 2> k) {
  for (int r = 0; r < 10; ++r) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kM0, c[0], hi0, lo0);
    mulhilo(kM1, c[2], hi1, lo1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    k[0] += kW0;
    k[1] += kW1;
  }
  return c;
}

Rng::Rng(std::uint64_t key, std::uint64_t counter_hi)
    : key_(key),
      ctr_{0u, 0u, static_cast<std::uint32_t>(counter_hi), static_cast<std::uint32_t>(counter_hi >> 32)} {}

void Rng::refill() {
  auto out = block(ctr_, {static_cast<std::uint32_t>(key_), static_cast<std::uint32_t>(key_ >> 32)});
  if (++ctr_[0] == 0) ++ctr_[1];
  buf_[0] = (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
  buf_[1] = (static_cast<std::uint64_t>(out[3]) << 32) | out[2];
  pos_ = 0;
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "below(0)");
  std::uint64_t x = (*this)();
  __uint128_t m = static_cast<__uint128_t>(x) * n;
  std::uint64_t l = static_cast<std::uint64_t>(m);
  if (l < n) {
    std::uint64_t t = -n % n;
    while (l < t) {
      x = (*this)();
      m = static_cast<__uint128_t>(x) * n;
      l = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

Rng Rng::split(std::uint64_t tag) const { return Rng(mix64(key_ ^ mix64(tag + 0x632BE59BD9B4E019ull))); }

// splitmix64 finalizer
std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// FNV-1a
std::uint64_t hash_string(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t stream_id(std::uint64_t seed, std::string_view experiment, std::uint64_t replica) {
  return mix64(mix64(seed) ^ hash_string(experiment) ^ mix64(replica * 0xD1B54A32D192ED03ull + 1));
}

}  // namespace mapflow
