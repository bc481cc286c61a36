#pragma once

#include <cstdint>
#include <random>

namespace cmbclean {

// splitmix64 finalizer, used to derive independent seed streams from a
// master seed without correlated low bits.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return splitmix64(seed ^ splitmix64(stream));
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return derive_seed(derive_seed(seed, a), b);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                                    std::uint64_t c) {
    return derive_seed(derive_seed(seed, a, b), c);
}

// Stream identifiers used when deriving per-purpose seeds. Values are part of
// the reproducibility contract: changing them changes every generated dataset.
namespace stream {
inline constexpr std::uint64_t cmb = 1;
inline constexpr std::uint64_t noise = 2;
inline constexpr std::uint64_t foreground_pattern = 3;
inline constexpr std::uint64_t foreground_modulation = 4;
inline constexpr std::uint64_t split = 5;
inline constexpr std::uint64_t init = 6;
inline constexpr std::uint64_t shuffle = 7;
inline constexpr std::uint64_t dropout = 8;
inline constexpr std::uint64_t validation = 9;
inline constexpr std::uint64_t mc_sample = 10;
}  // namespace stream

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
    double normal(double mean, double stddev) {
        return mean + stddev * normal();
    }
    std::uint64_t next_u64() { return engine_(); }

    std::mt19937_64& engine() { return engine_; }

  private:
    std::mt19937_64 engine_;
};

}  // namespace cmbclean
