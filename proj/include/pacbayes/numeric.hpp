// Numerical helpers shared by the divergence, bound and oracle modules.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pacbayes {

/// Raised when an argument lies outside the mathematical domain of an operation.
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when two inputs that must share an index set have different sizes.
class DimensionMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline void require(bool ok, const std::string& what) {
    if (!ok) throw DomainError(what);
}

inline void require_same_size(std::size_t a, std::size_t b, const char* what) {
    if (a != b)
        throw DimensionMismatch(std::string(what) + ": size " + std::to_string(a) +
                                " vs " + std::to_string(b));
}

/// log Σ exp(x_i) with max-subtraction. Entries equal to -inf are ignored;
/// returns -inf for an empty or all -inf input.
inline double log_sum_exp(std::span<const double> x) {
    double m = -kInf;
    for (double v : x) m = std::max(m, v);
    if (m == -kInf) return -kInf;
    if (m == kInf) return kInf;
    double s = 0.0;
    for (double v : x) s += std::exp(v - m);
    return m + std::log(s);
}

/// Normalizes log-weights into probabilities (softmax), in place semantics on a copy.
inline std::vector<double> softmax(std::span<const double> log_w) {
    const double lse = log_sum_exp(log_w);
    if (!std::isfinite(lse)) throw DomainError("softmax: no finite log-weight");
    std::vector<double> out(log_w.size());
    for (std::size_t i = 0; i < log_w.size(); ++i) out[i] = std::exp(log_w[i] - lse);
    // renormalize to absorb rounding in exp
    const double s = std::accumulate(out.begin(), out.end(), 0.0);
    for (double& v : out) v /= s;
    return out;
}

/// Bernstein's function g(x) = (e^x - 1 - x) / x^2 with the convention g(0) = 1.
/// Near zero (but not at zero) the Taylor series is used to avoid cancellation.
inline double bernstein_g(double x) {
    if (x == 0.0) return 1.0;
    if (std::abs(x) < 1e-4) return 0.5 + x / 6.0 + x * x / 24.0 + x * x * x / 120.0;
    return (std::expm1(x) - x) / (x * x);
}

/// Natural log of `count` expressed without overflow for huge cardinalities.
struct LogCardinality {
    double value = 0.0;  // nats

    static LogCardinality of(double count) {
        require(count >= 1.0, "cardinality must be >= 1");
        return {std::log(count)};
    }
    static LogCardinality from_log(double log_count) {
        require(log_count >= 0.0 && !std::isnan(log_count), "log-cardinality must be >= 0");
        return {log_count};
    }
};

struct ScalarMaximum {
    double argmax = 0.0;
    double value = -kInf;
};

/// Maximizes f over [lo, hi] on a log scale: a `scan_points` log-grid scan locates
/// the best cell, then golden-section refines inside the neighbouring bracket to
/// relative tolerance `rel_tol` in the argument.
inline ScalarMaximum maximize_log_scale(const std::function<double(double)>& f, double lo,
                                        double hi, double rel_tol = 1e-6,
                                        std::size_t scan_points = 1000) {
    require(lo > 0.0 && hi > lo, "maximize_log_scale: need 0 < lo < hi");
    const double llo = std::log(lo), lhi = std::log(hi);
    const double step = (lhi - llo) / static_cast<double>(scan_points - 1);
    std::size_t best = 0;
    double best_v = -kInf;
    for (std::size_t i = 0; i < scan_points; ++i) {
        const double v = f(std::exp(llo + step * static_cast<double>(i)));
        if (v > best_v) {
            best_v = v;
            best = i;
        }
    }
    double a = llo + step * static_cast<double>(best == 0 ? 0 : best - 1);
    double b = llo + step * static_cast<double>(std::min(best + 1, scan_points - 1));
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - invphi * (b - a), d = a + invphi * (b - a);
    double fc = f(std::exp(c)), fd = f(std::exp(d));
    // relative tolerance in the argument == absolute tolerance in log-space
    while (b - a > rel_tol) {
        if (fc > fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = f(std::exp(c));
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = f(std::exp(d));
        }
    }
    ScalarMaximum out{std::exp(0.5 * (a + b)), f(std::exp(0.5 * (a + b)))};
    if (best_v > out.value) out = {std::exp(llo + step * static_cast<double>(best)), best_v};
    return out;
}

/// Least-squares slope of y on x.
inline double ols_slope(std::span<const double> x, std::span<const double> y) {
    require_same_size(x.size(), y.size(), "ols_slope");
    require(x.size() >= 2, "ols_slope: need at least two points");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxy / sxx;
}

}  // namespace pacbayes
