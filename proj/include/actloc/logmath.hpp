#ifndef ACTLOC_LOGMATH_HPP
#define ACTLOC_LOGMATH_HPP

#include <cmath>
#include <limits>
#include <span>

namespace actloc {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Contributions more than this far below the running total are dropped:
// exp(-40) is below double ulp for the magnitudes we accumulate.
inline constexpr double kLogAddCutoff = -40.0;

inline double log_add(double x, double y) {
    if (y > x) std::swap(x, y);
    if (x == kNegInf) return kNegInf;
    const double d = y - x;
    if (d < kLogAddCutoff) return x;
    return x + std::log1p(std::exp(d));
}

// log(sum_i exp(v[i])) with max-shift; -inf for an empty span.
inline double log_sum_exp(std::span<const double> v) {
    double m = kNegInf;
    for (double x : v)
        if (x > m) m = x;
    if (m == kNegInf) return kNegInf;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

inline double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

}  // namespace actloc

#endif
