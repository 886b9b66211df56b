#pragma once

#include <cstdint>
#include <random>

namespace lecam {

/// Seeded random stream. The same (seed, stream) pair always reproduces the
/// same sequence of draws; distinct stream ids give statistically independent
/// sequences for the same seed.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      0x9e3779b9u};
    engine_.seed(seq);
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  /// Child stream keyed by an extra index (episode, restart, individual...).
  RngStream derive(std::uint64_t index) const {
    return RngStream(seed_ ^ (0xd1b54a32d192ed03ull * (stream_ + 1)), index + 0x632be59bd9b4e019ull * (stream_ + 1));
  }

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_(engine_); }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace lecam
