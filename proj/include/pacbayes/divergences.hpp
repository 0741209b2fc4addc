// Divergences between distributions and the inversions the bound catalog needs.
#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "numeric.hpp"

namespace pacbayes {

/// Probability mass over the index set {0, ..., M-1}.
///
/// Construction validates nonnegativity and sum-to-one (within `tol`), then
/// renormalizes so downstream sums are exact to rounding.
class DiscreteDistribution {
public:
    DiscreteDistribution() = default;

    explicit DiscreteDistribution(std::vector<double> weights, double tol = 1e-9)
        : w_(std::move(weights)) {
        require(!w_.empty(), "distribution must have at least one atom");
        double s = 0.0;
        for (double v : w_) {
            require(std::isfinite(v) && v >= 0.0, "distribution weights must be finite and >= 0");
            s += v;
        }
        require(std::abs(s - 1.0) <= tol,
                "distribution weights sum to " + std::to_string(s) + ", expected 1");
        for (double& v : w_) v /= s;
    }

    static DiscreteDistribution uniform(std::size_t m) {
        require(m >= 1, "uniform: need m >= 1");
        return DiscreteDistribution(std::vector<double>(m, 1.0 / static_cast<double>(m)));
    }

    static DiscreteDistribution dirac(std::size_t m, std::size_t k) {
        require(k < m, "dirac: index out of range");
        std::vector<double> w(m, 0.0);
        w[k] = 1.0;
        return DiscreteDistribution(std::move(w));
    }

    /// Rescales arbitrary nonnegative masses (not all zero) to a distribution.
    static DiscreteDistribution normalized(std::vector<double> mass) {
        double s = 0.0;
        for (double v : mass) {
            require(std::isfinite(v) && v >= 0.0, "normalized: masses must be finite and >= 0");
            s += v;
        }
        require(s > 0.0, "normalized: all masses are zero");
        for (double& v : mass) v /= s;
        return DiscreteDistribution(std::move(mass));
    }

    /// Builds a distribution from unnormalized log-masses (-inf allowed).
    static DiscreteDistribution from_log(std::span<const double> log_mass) {
        return DiscreteDistribution(softmax(log_mass));
    }

    std::size_t size() const { return w_.size(); }
    double operator[](std::size_t i) const { return w_[i]; }
    const std::vector<double>& weights() const { return w_; }

    double expect(std::span<const double> f) const {
        require_same_size(w_.size(), f.size(), "expectation");
        double s = 0.0;
        for (std::size_t i = 0; i < w_.size(); ++i)
            if (w_[i] > 0.0) s += w_[i] * f[i];
        return s;
    }

    bool operator==(const DiscreteDistribution&) const = default;

private:
    std::vector<double> w_;
};

/// Isotropic Gaussian N(mean, std^2 I_d). d = 0 is allowed and denotes the
/// degenerate point mass on the empty parameter vector.
struct DiagonalGaussian {
    std::vector<double> mean;
    double std = 1.0;

    DiagonalGaussian() = default;
    DiagonalGaussian(std::vector<double> m, double s) : mean(std::move(m)), std(s) {
        require(std::isfinite(s) && s > 0.0, "gaussian std must be > 0");
    }
    std::size_t dim() const { return mean.size(); }
};

/// Binary relative entropy kl(p|q) in nats with 0 log 0 = 0. Returns +inf when
/// q is 0 or 1 and p differs from it.
inline double kl_bernoulli(double p, double q) {
    require(p >= 0.0 && p <= 1.0, "kl_bernoulli: p outside [0,1]");
    require(q >= 0.0 && q <= 1.0, "kl_bernoulli: q outside [0,1]");
    if (p == q) return 0.0;
    if (q == 0.0 || q == 1.0) return kInf;
    double v = 0.0;
    if (p > 0.0) v += p * std::log(p / q);
    if (p < 1.0) v += (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
    return v > 0.0 ? v : 0.0;
}

/// Largest p in [q, 1] with kl(q|p) <= b, by bisection to 1e-9. The returned
/// point is the lower end of the final bracket, so it always satisfies the budget.
inline double kl_inverse_upper(double q, double b) {
    require(q >= 0.0 && q <= 1.0, "kl_inverse_upper: q outside [0,1]");
    require(!std::isnan(b) && b >= 0.0, "kl_inverse_upper: negative budget");
    if (b == 0.0 || q == 1.0) return q;
    if (b == kInf) return 1.0;
    // The supremum reaches 1 iff kl(q|1) <= b, which only happens for q = 1.
    double lo = q, hi = 1.0;
    while (hi - lo > 1e-9) {
        const double mid = 0.5 * (lo + hi);
        if (kl_bernoulli(q, mid) <= b)
            lo = mid;
        else
            hi = mid;
    }
    return lo;
}

inline double kl_discrete(const DiscreteDistribution& rho, const DiscreteDistribution& pi) {
    require_same_size(rho.size(), pi.size(), "kl_discrete");
    double s = 0.0;
    for (std::size_t i = 0; i < rho.size(); ++i) {
        if (rho[i] <= 0.0) continue;
        if (pi[i] <= 0.0) return kInf;
        s += rho[i] * std::log(rho[i] / pi[i]);
    }
    return s > 0.0 ? s : 0.0;
}

/// KL against a prior given through per-atom log masses (which need not be
/// normalized into doubles, e.g. log(1/M) for astronomically large M).
inline double kl_discrete_log_prior(const DiscreteDistribution& rho,
                                    std::span<const double> log_pi) {
    require_same_size(rho.size(), log_pi.size(), "kl_discrete_log_prior");
    double s = 0.0;
    for (std::size_t i = 0; i < rho.size(); ++i) {
        if (rho[i] <= 0.0) continue;
        if (log_pi[i] == -kInf) return kInf;
        s += rho[i] * (std::log(rho[i]) - log_pi[i]);
    }
    return s;
}

inline double chi2_discrete(const DiscreteDistribution& rho, const DiscreteDistribution& pi) {
    require_same_size(rho.size(), pi.size(), "chi2_discrete");
    double s = 0.0;
    for (std::size_t i = 0; i < rho.size(); ++i) {
        if (pi[i] <= 0.0) {
            if (rho[i] > 0.0) return kInf;
            continue;
        }
        const double ratio = rho[i] / pi[i];
        s += pi[i] * (ratio * ratio - 1.0);
    }
    return s > 0.0 ? s : 0.0;
}

/// KL(N(m, s^2 I) || N(prior_mean, sigma^2 I)).
inline double kl_gaussian_diag(const DiagonalGaussian& rho, std::span<const double> prior_mean,
                               double prior_std) {
    require(rho.std > 0.0, "kl_gaussian_diag: posterior std must be > 0");
    require(prior_std > 0.0, "kl_gaussian_diag: prior std must be > 0");
    require_same_size(rho.dim(), prior_mean.size(), "kl_gaussian_diag");
    double sq = 0.0;
    for (std::size_t i = 0; i < rho.dim(); ++i) {
        const double diff = rho.mean[i] - prior_mean[i];
        sq += diff * diff;
    }
    const double sigma2 = prior_std * prior_std;
    const double ratio = rho.std * rho.std / sigma2;
    const double d = static_cast<double>(rho.dim());
    return sq / (2.0 * sigma2) + 0.5 * d * (ratio - std::log(ratio) - 1.0);
}

inline double kl_gaussian_diag(const DiagonalGaussian& rho, double prior_std) {
    const std::vector<double> zero(rho.dim(), 0.0);
    return kl_gaussian_diag(rho, zero, prior_std);
}

/// KL between the uniform law on a radius-s ball and the uniform law on a
/// radius-B ball containing it.
inline double kl_uniform_ball(std::size_t d, double radius_outer, double radius_inner) {
    require(radius_outer > 0.0 && radius_inner > 0.0, "kl_uniform_ball: radii must be > 0");
    require(radius_inner <= radius_outer, "kl_uniform_ball: inner radius exceeds outer");
    return static_cast<double>(d) * std::log(radius_outer / radius_inner);
}

/// log E_pi e^h - (E_rho h - KL(rho||pi)). Nonnegative, zero exactly at the
/// Gibbs measure pi_h.
inline double dv_gap(std::span<const double> h, const DiscreteDistribution& rho,
                     const DiscreteDistribution& pi) {
    require_same_size(h.size(), pi.size(), "dv_gap");
    require_same_size(rho.size(), pi.size(), "dv_gap");
    const double kl = kl_discrete(rho, pi);
    if (kl == kInf) return kInf;
    std::vector<double> terms(h.size());
    for (std::size_t i = 0; i < h.size(); ++i)
        terms[i] = pi[i] > 0.0 ? std::log(pi[i]) + h[i] : -kInf;
    const double log_mgf = log_sum_exp(terms);
    return log_mgf - (rho.expect(h) - kl);
}

}  // namespace pacbayes
