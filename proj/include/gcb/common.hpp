// Shared error taxonomy, invariant checks, and deterministic RNG helpers.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace gcb {

enum class ErrorCode {
    EmptyHistory,
    NonMonotonicTimestamps,
    ItemOutOfRange,
    MalformedRecord,
    MissingField,
    HistoryTooShort,
    UnknownItem,
    DegenerateInput,
    NonFiniteLoss,
    ShapeMismatch,
    GradMismatch,
    NoCategories,
    HorizonMismatch,
    CheckpointMismatch,
    ConfigError,
    IoError,
    InvariantViolated,
};

const char* error_code_name(ErrorCode code);

class GcbError : public std::runtime_error {
public:
    GcbError(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
          code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
    throw GcbError(code, message);
}

// Always-on invariant check (asserts stay active in release builds).
#define GCB_CHECK(cond, code, msg)                          \
    do {                                                    \
        if (!(cond)) {                                      \
            ::gcb::raise((code), (msg));                    \
        }                                                   \
    } while (0)

// Deterministic RNG. All distributions are derived from raw mt19937_64 words
// so sequences do not depend on the standard library's distribution
// implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n).
    std::uint64_t index(std::uint64_t n) {
        if (n <= 1) return 0;
        const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % n;
        std::uint64_t r;
        do {
            r = gen_();
        } while (r >= limit);
        return r % n;
    }

    // Standard normal via Box-Muller with a cached spare.
    double gauss() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * 3.14159265358979323846 * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[index(i)]);
        }
    }

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace gcb
