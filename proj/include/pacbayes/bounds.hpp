// Empirical generalization bounds. Each function maps the empirical summary of a
// posterior (its average empirical risk and divergence to the prior) to a
// Certificate holding the bound value and how it decomposes.
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "divergences.hpp"
#include "numeric.hpp"
#include "risk_table.hpp"

namespace pacbayes {

struct Term {
    std::string name;
    double value = 0.0;
    bool additive = true;  // contributes to Certificate::value by summation
};

struct Certificate {
    std::string bound_id;
    double value = 0.0;
    std::optional<double> lambda;
    double eps = 0.0;
    double C = 1.0;
    std::vector<Term> terms;
    bool vacuous = false;

    std::optional<double> term(const std::string& name) const {
        for (const auto& t : terms)
            if (t.name == name) return t.value;
        return std::nullopt;
    }

    /// Sum of the additive terms; equals `value` up to rounding for every bound.
    double additive_sum() const {
        double s = 0.0;
        for (const auto& t : terms)
            if (t.additive) s += t.value;
        return s;
    }
};

struct BoundInput {
    double emp_risk = 0.0;
    double kl = 0.0;
    std::optional<double> chi2;
    std::size_t n = 1;
    double eps = 0.05;
    double C = 1.0;
    std::optional<double> kappa;
    std::optional<double> delta_tail;

    void validate() const {
        require(n >= 1, "bound input: n must be >= 1");
        require(eps > 0.0 && eps < 1.0, "bound input: eps must lie in (0,1)");
        require(C > 0.0, "bound input: C must be > 0");
        require(!std::isnan(emp_risk) && emp_risk >= 0.0 && emp_risk <= C,
                "bound input: emp_risk outside [0, C]");
        require(!std::isnan(kl) && kl >= 0.0, "bound input: kl must be >= 0");
        if (chi2) require(!std::isnan(*chi2) && *chi2 >= 0.0, "bound input: chi2 must be >= 0");
        if (kappa) require(*kappa > 0.0, "bound input: kappa must be > 0");
        if (delta_tail) require(*delta_tail >= 0.0, "bound input: delta_tail must be >= 0");
    }

    double nd() const { return static_cast<double>(n); }
    double log_inv_eps() const { return -std::log(eps); }
};

namespace detail {

inline Certificate finish(Certificate c) {
    // Additive pieces are summed in order so that value == additive_sum().
    c.value = c.additive_sum();
    c.vacuous = !(c.value < c.C);
    return c;
}

inline Certificate make(const std::string& id, const BoundInput& in,
                        std::optional<double> lambda = std::nullopt) {
    Certificate c;
    c.bound_id = id;
    c.eps = in.eps;
    c.C = in.C;
    c.lambda = lambda;
    return c;
}

// log(2 sqrt(n) / eps), the confidence term shared by the kl-form bounds.
inline double log_two_sqrt_n_over_eps(const BoundInput& in) {
    return std::log(2.0) + 0.5 * std::log(in.nd()) + in.log_inv_eps();
}

}  // namespace detail

/// Union bound over a finite class of size M = exp(log_M).
inline Certificate bound_union_finite(double r_min, LogCardinality log_M, std::size_t n, double eps,
                                      double C) {
    BoundInput in;
    in.emp_risk = r_min;
    in.n = n;
    in.eps = eps;
    in.C = C;
    in.validate();
    auto c = detail::make("union_finite", in);
    const double complexity = log_M.value + in.log_inv_eps();
    c.terms = {{"empirical", r_min},
               {"complexity", complexity, false},
               {"slack", C * std::sqrt(complexity / (2.0 * in.nd()))}};
    return detail::finish(std::move(c));
}

inline Certificate bound_catoni_linear(const BoundInput& in, double lambda) {
    in.validate();
    require(lambda > 0.0 && std::isfinite(lambda), "catoni_linear: lambda must be > 0");
    auto c = detail::make("catoni_linear", in, lambda);
    c.terms = {{"empirical", in.emp_risk},
               {"variance", lambda * in.C * in.C / (8.0 * in.nd())},
               {"complexity", (in.kl + in.log_inv_eps()) / lambda},
               {"kl", in.kl, false}};
    return detail::finish(std::move(c));
}

/// Minimizer of lambda C^2 / (8n) + (kl + log 1/eps) / lambda.
inline double select_lambda_closed_form(double kl, std::size_t n, double eps, double C) {
    require(n >= 1, "select_lambda: n must be >= 1");
    require(eps > 0.0 && eps < 1.0 + 1e-15, "select_lambda: eps must lie in (0,1)");
    require(C > 0.0, "select_lambda: C must be > 0");
    const double num = kl - std::log(eps);
    require(num > 0.0, "select_lambda: kl + log(1/eps) must be > 0");
    return std::sqrt(8.0 * static_cast<double>(n) * num) / C;
}

/// {1, 2, ..., n}.
inline std::vector<double> arithmetic_grid(std::size_t n) {
    require(n >= 1, "arithmetic_grid: n must be >= 1");
    std::vector<double> g(n);
    for (std::size_t k = 0; k < n; ++k) g[k] = static_cast<double>(k + 1);
    return g;
}

/// {e^k : k = 0, 1, ...} intersected with [1, n].
inline std::vector<double> geometric_grid(std::size_t n) {
    require(n >= 1, "geometric_grid: n must be >= 1");
    std::vector<double> g;
    const double ln = std::log(static_cast<double>(n));
    for (int k = 0; static_cast<double>(k) <= ln + 1e-12; ++k) g.push_back(std::exp(k));
    return g;
}

/// Catoni's linear bound made uniform over a finite grid of lambdas. `per_lambda`
/// returns the posterior summary used at each lambda (it may depend on lambda).
inline Certificate bound_lambda_grid(const std::function<BoundInput(double)>& per_lambda,
                                     const std::vector<double>& grid) {
    require(!grid.empty(), "lambda_grid: empty grid");
    const double log_card = std::log(static_cast<double>(grid.size()));
    std::optional<Certificate> best;
    for (double lambda : grid) {
        BoundInput in = per_lambda(lambda);
        in.validate();
        require(lambda > 0.0, "lambda_grid: grid values must be > 0");
        auto c = detail::make("lambda_grid", in, lambda);
        c.terms = {{"empirical", in.emp_risk},
                   {"variance", lambda * in.C * in.C / (8.0 * in.nd())},
                   {"complexity", (in.kl + log_card + in.log_inv_eps()) / lambda},
                   {"kl", in.kl, false},
                   {"log_grid_size", log_card, false}};
        c = detail::finish(std::move(c));
        if (!best || c.value < best->value) best = std::move(c);
    }
    return *best;
}

inline Certificate bound_lambda_grid(const BoundInput& in, const std::vector<double>& grid) {
    return bound_lambda_grid([&](double) { return in; }, grid);
}

// The kl-form bounds below are stated for losses in [0,1]. Inputs with range C
// are divided by C before evaluation and the certificate is scaled back by C.

inline Certificate bound_mcallester_maurer(const BoundInput& in) {
    in.validate();
    auto c = detail::make("mcallester", in);
    const double num = in.kl + in.log_inv_eps() + 2.5 * std::log(in.nd()) + 8.0;
    c.terms = {{"empirical", in.emp_risk},
               {"slack", in.C * std::sqrt(num / (2.0 * in.nd() - 1.0))},
               {"kl", in.kl, false}};
    return detail::finish(std::move(c));
}

inline Certificate bound_seeger_maurer(const BoundInput& in) {
    in.validate();
    auto c = detail::make("seeger", in);
    const double budget = (in.kl + detail::log_two_sqrt_n_over_eps(in)) / in.nd();
    const double q = in.emp_risk / in.C;
    const double inv = kl_inverse_upper(std::min(q, 1.0), budget);
    c.terms = {{"empirical", in.emp_risk},
               {"slack", in.C * inv - in.emp_risk},
               {"budget", budget, false},
               {"kl", in.kl, false}};
    return detail::finish(std::move(c));
}

inline Certificate bound_tolstikhin_seldin(const BoundInput& in) {
    in.validate();
    auto c = detail::make("tolstikhin_seldin", in);
    const double b = (in.kl + detail::log_two_sqrt_n_over_eps(in)) / (2.0 * in.nd());
    const double q = in.emp_risk / in.C;
    c.terms = {{"empirical", in.emp_risk},
               {"sqrt_term", in.C * std::sqrt(2.0 * q * b)},
               {"linear_term", in.C * 2.0 * b},
               {"kl", in.kl, false}};
    return detail::finish(std::move(c));
}

inline Certificate bound_thiemann(const BoundInput& in, double lambda) {
    in.validate();
    require(lambda > 0.0 && lambda < 2.0, "thiemann: lambda must lie in (0,2)");
    auto c = detail::make("thiemann", in, lambda);
    const double shrink = 1.0 - lambda / 2.0;
    const double num = in.kl + detail::log_two_sqrt_n_over_eps(in);
    c.terms = {{"empirical", in.emp_risk / shrink},
               {"complexity", in.C * num / (in.nd() * lambda * shrink)},
               {"kl", in.kl, false}};
    return detail::finish(std::move(c));
}

/// (1 - e^{-a q}) / (1 - e^{-a}), written with expm1 so it is accurate for tiny a.
inline double catoni_phi_inverse(double a, double q) {
    require(a > 0.0, "catoni_phi_inverse: a must be > 0");
    return std::expm1(-a * q) / std::expm1(-a);
}

inline Certificate bound_catoni_phi(const BoundInput& in, double lambda) {
    in.validate();
    require(lambda > 0.0 && std::isfinite(lambda), "catoni_phi: lambda must be > 0");
    auto c = detail::make("catoni_phi", in, lambda);
    const double a = lambda / in.nd();
    const double q = in.emp_risk / in.C + (in.kl + in.log_inv_eps()) / lambda;
    const double v = in.C * catoni_phi_inverse(a, q);
    c.terms = {{"empirical", in.emp_risk},
               {"slack", v - in.emp_risk},
               {"phi_argument", q, false},
               {"kl", in.kl, false}};
    return detail::finish(std::move(c));
}

/// Generic convex-divergence bound: sup{q in [0,1] : D(p, q) <= (kl + log_moment +
/// log 1/eps) / n}. D(p, .) must be nondecreasing to the right of its feasible
/// region; the search brackets on [p, 1] (or [0, p] when p itself is infeasible).
inline Certificate bound_germain_generic(double p, double kl, std::size_t n, double eps,
                                         double log_moment,
                                         const std::function<double(double, double)>& D) {
    BoundInput in;
    in.emp_risk = p;
    in.kl = kl;
    in.n = n;
    in.eps = eps;
    in.validate();
    require(p <= 1.0, "germain_generic: p must lie in [0,1]");
    auto c = detail::make("germain_generic", in);
    const double budget = (kl + log_moment + in.log_inv_eps()) / in.nd();
    auto ok = [&](double q) { return D(p, q) <= budget; };
    double value;
    if (ok(1.0)) {
        value = 1.0;
    } else {
        double lo, hi = 1.0;
        if (ok(p)) {
            lo = p;
        } else if (ok(0.0)) {
            lo = 0.0;
            hi = p;
        } else {
            throw DomainError("germain_generic: no feasible q; D is not monotone here");
        }
        while (hi - lo > 1e-9) {
            const double mid = 0.5 * (lo + hi);
            if (ok(mid))
                lo = mid;
            else
                hi = mid;
        }
        value = lo;
    }
    c.terms = {{"empirical", p}, {"slack", value - p}, {"budget", budget, false}};
    return detail::finish(std::move(c));
}

/// Losses whose centred version is sub-Gaussian with constant C.
inline Certificate bound_subgaussian(const BoundInput& in, double lambda) {
    require(in.n >= 1 && in.eps > 0.0 && in.eps < 1.0 && in.C > 0.0 && in.kl >= 0.0,
            "subgaussian: invalid input");
    require(lambda > 0.0 && std::isfinite(lambda), "subgaussian: lambda must be > 0");
    auto c = detail::make("subgaussian", in, lambda);
    c.C = kInf;  // the loss is unbounded, so no value is trivially vacuous
    c.terms = {{"empirical", in.emp_risk},
               {"variance", lambda * in.C * in.C / in.nd()},
               {"complexity", (in.kl + in.log_inv_eps()) / lambda},
               {"kl", in.kl, false}};
    return detail::finish(std::move(c));
}

inline Certificate bound_chi_square(const BoundInput& in) {
    require(in.kappa.has_value(), "chi_square: kappa is required");
    require(in.chi2.has_value(), "chi_square: chi2 is required");
    require(in.n >= 1 && in.eps > 0.0 && in.eps < 1.0 && *in.kappa > 0.0 && *in.chi2 >= 0.0,
            "chi_square: invalid input");
    auto c = detail::make("chi_square", in);
    c.C = kInf;
    c.terms = {{"empirical", in.emp_risk},
               {"slack", std::sqrt(*in.kappa * (1.0 + *in.chi2) / (in.nd() * in.eps))},
               {"chi2", *in.chi2, false}};
    return detail::finish(std::move(c));
}

/// Psi_alpha(u) = -log(1 - u alpha) / alpha; +inf at u = 1/alpha.
inline double truncation_psi(double alpha, double u) {
    require(alpha > 0.0, "truncation_psi: alpha must be > 0");
    if (u * alpha >= 1.0) return kInf;
    return -std::log1p(-u * alpha) / alpha;
}

inline double truncation_psi_inverse(double alpha, double v) {
    require(alpha > 0.0, "truncation_psi_inverse: alpha must be > 0");
    if (v == kInf) return 1.0 / alpha;
    return -std::expm1(-alpha * v) / alpha;
}

/// (1/n) sum_i Psi_{lambda/n}(min(loss_i, n/lambda)) for one hypothesis.
inline double truncated_empirical_risk(std::span<const double> losses, double lambda) {
    require(!losses.empty(), "truncated_empirical_risk: no losses");
    require(lambda > 0.0, "truncated_empirical_risk: lambda must be > 0");
    const double n = static_cast<double>(losses.size());
    const double alpha = lambda / n;
    double s = 0.0;
    for (double l : losses) s += truncation_psi(alpha, std::min(l, n / lambda));
    return s / n;
}

inline Certificate bound_truncated(const BoundInput& in, double lambda, double trunc_emp_risk,
                                   double delta_tail) {
    require(in.n >= 1 && in.eps > 0.0 && in.eps < 1.0 && in.kl >= 0.0,
            "truncated: invalid input");
    require(lambda > 0.0 && std::isfinite(lambda), "truncated: lambda must be > 0");
    require(trunc_emp_risk >= 0.0, "truncated: truncated risk must be >= 0");
    require(delta_tail >= 0.0, "truncated: delta_tail must be >= 0");
    auto c = detail::make("truncated", in, lambda);
    const double alpha = lambda / in.nd();
    const double v = trunc_emp_risk + (in.kl + in.log_inv_eps()) / lambda;
    c.terms = {{"psi_inverse", truncation_psi_inverse(alpha, v)},
               {"tail", delta_tail},
               {"truncated_empirical", trunc_emp_risk, false},
               {"kl", in.kl, false}};
    return detail::finish(std::move(c));
}

/// Localized bound with data-dependent prior pi_{-xi r}, evaluated exactly as
/// the closed-form ratio; see the README for the range of lambda where it is
/// observed to hold.
inline Certificate bound_localized_empirical(const RiskTable& table,
                                             const DiscreteDistribution& rho,
                                             const DiscreteDistribution& pi, double lambda,
                                             double xi, double eps) {
    table.validate();
    require_same_size(rho.size(), table.size(), "localized_empirical rho");
    require_same_size(pi.size(), table.size(), "localized_empirical pi");
    require(xi >= 0.0 && xi < 1.0, "localized_empirical: xi must lie in [0,1)");
    require(lambda > 0.0 && std::isfinite(lambda), "localized_empirical: lambda must be > 0");
    require(eps > 0.0 && eps < 1.0, "localized_empirical: eps must lie in (0,1)");

    std::vector<double> logw(pi.size());
    for (std::size_t j = 0; j < pi.size(); ++j)
        logw[j] = pi[j] > 0.0 ? std::log(pi[j]) - xi * table.emp_risk[j] : -kInf;
    const auto local_prior = DiscreteDistribution::from_log(logw);

    const double nd = static_cast<double>(table.n);
    const double er = rho.expect(table.emp_risk);
    const double kl = kl_discrete(rho, local_prior);
    const double num = (1.0 - xi) * er + kl + (1.0 + xi) * std::log(2.0 / eps);
    const double den = (1.0 - xi) * lambda + (1.0 + xi) * bernstein_g(lambda / nd) * lambda * lambda / nd;

    Certificate c;
    c.bound_id = "localized_empirical";
    c.eps = eps;
    c.C = table.C;
    c.lambda = lambda;
    c.terms = {{"ratio", num / den},
               {"numerator", num, false},
               {"denominator", den, false},
               {"kl_local", kl, false},
               {"empirical", er, false}};
    return detail::finish(std::move(c));
}

}  // namespace pacbayes
