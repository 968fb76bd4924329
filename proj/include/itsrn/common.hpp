#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace itsrn {

// Error taxonomy: shape_error for dimension mismatches, format_error for
// file/config problems, contract_error for violated preconditions.
struct shape_error : std::runtime_error {
    explicit shape_error(const std::string& what) : std::runtime_error(what) {}
};

struct format_error : std::runtime_error {
    explicit format_error(const std::string& what) : std::runtime_error(what) {}
};

struct contract_error : std::runtime_error {
    explicit contract_error(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {
inline void fail_check(const char* expr, const char* file, int line) {
    std::ostringstream oss;
    oss << "check failed: " << expr << " (" << file << ":" << line << ")";
    throw contract_error(oss.str());
}
}  // namespace detail

#define ITSRN_CHECK(cond)                                            \
    do {                                                             \
        if (!(cond)) ::itsrn::detail::fail_check(#cond, __FILE__, __LINE__); \
    } while (0)

// Seeded RNG with a serializable state so training runs can resume
// bit-identically. All randomness in the project flows through this type.
class Rng {
public:
    Rng() : gen_(0x9e3779b97f4a7c15ull) {}
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(gen_); }

    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(gen_);
    }

    // Standard normal.
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(gen_); }

    // Normal truncated to [-2*std, 2*std], resampling outside the band.
    double trunc_normal(double std_dev) {
        for (;;) {
            double z = normal() * std_dev;
            if (std::abs(z) <= 2.0 * std_dev) return z;
        }
    }

    // Uniform integer in [0, n).
    std::int64_t below(std::int64_t n) {
        return std::uniform_int_distribution<std::int64_t>(0, n - 1)(gen_);
    }

    std::uint64_t raw() { return gen_(); }

    std::string serialize() const {
        std::ostringstream oss;
        oss << gen_;
        return oss.str();
    }

    void deserialize(const std::string& s) {
        std::istringstream iss(s);
        iss >> gen_;
        if (!iss) throw format_error("rng state: malformed stream");
    }

    std::mt19937_64& engine() { return gen_; }

private:
    std::mt19937_64 gen_;
};

}  // namespace itsrn
