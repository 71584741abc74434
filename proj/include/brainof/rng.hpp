#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace brainof {

// All randomness flows from one root seed. Named sub-streams (data, masks,
// init, ...) derive independent engines so components are reproducible in
// isolation.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    static Rng substream(std::uint64_t root_seed, std::string_view name) {
        // FNV-1a over the stream name mixed into the root seed
        std::uint64_t h = 14695981039346656037ull;
        for (char c : name) {
            h ^= static_cast<std::uint8_t>(c);
            h *= 1099511628211ull;
        }
        return Rng(root_seed ^ h);
    }

    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }
    double normal(double mean, double stddev) {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }
    std::uint64_t integer(std::uint64_t lo, std::uint64_t hi) {  // inclusive range
        return std::uniform_int_distribution<std::uint64_t>(lo, hi)(engine_);
    }

    std::mt19937_64& engine() { return engine_; }

    std::string state() const;
    void set_state(const std::string& s);

  private:
    std::mt19937_64 engine_;
};

}  // namespace brainof
