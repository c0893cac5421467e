#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>

namespace treeattn {

using NodeId = std::int32_t;
inline constexpr NodeId kInvalidNode = -1;

/// Model-shape constants that turn token counts into bytes.
/// The per-datum unit is n_heads * n_layers * dtype_bytes.
struct CostParams {
    int d_head = 128;
    int n_heads = 32;
    int n_layers = 32;
    int dtype_bytes = 2;

    std::uint64_t unit() const {
        return static_cast<std::uint64_t>(n_heads) * n_layers * dtype_bytes;
    }

    void validate() const {
        if (d_head <= 0 || n_heads <= 0 || n_layers <= 0)
            throw std::invalid_argument("CostParams: dimensions must be positive");
        if (dtype_bytes != 2 && dtype_bytes != 4 && dtype_bytes != 8)
            throw std::invalid_argument("CostParams: dtype_bytes must be 2, 4 or 8");
    }
};

/// Exact ratio of two non-negative integers, kept reduced.
struct Rational {
    std::uint64_t num = 0;
    std::uint64_t den = 1;

    Rational() = default;
    Rational(std::uint64_t n, std::uint64_t d) : num(n), den(d) {
        if (d == 0) throw std::invalid_argument("Rational: zero denominator");
        const std::uint64_t g = std::gcd(num, den);
        if (g > 1) { num /= g; den /= g; }
    }

    double value() const { return static_cast<double>(num) / static_cast<double>(den); }

    friend bool operator==(const Rational& a, const Rational& b) {
        return a.num == b.num && a.den == b.den;
    }
};

}  // namespace treeattn
