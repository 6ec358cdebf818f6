#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace predann {

// Quantile with linear interpolation between order statistics (numpy
// default). `sorted` must be ascending.
template <class T>
inline double quantile_sorted(const std::vector<T>& sorted, double q) {
    if (sorted.empty()) throw std::invalid_argument("quantile_sorted: empty input");
    if (q <= 0.0) return static_cast<double>(sorted.front());
    if (q >= 1.0) return static_cast<double>(sorted.back());
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= sorted.size()) return static_cast<double>(sorted.back());
    return static_cast<double>(sorted[lo]) * (1.0 - frac) + static_cast<double>(sorted[lo + 1]) * frac;
}

template <class T>
inline double quantile(std::vector<T> values, double q) {
    std::sort(values.begin(), values.end());
    return quantile_sorted(values, q);
}

// round half away from zero (used wherever fractional sample counts appear)
inline std::int64_t round_half_away(double x) { return std::llround(x); }

}  // namespace predann
