// Synthetic tasks with known risks and the experiments run on them: Bernstein
// constants, oracle right-hand sides, pi-dimension, violation frequencies,
// convergence rates and exponential-moment checks.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "bounds.hpp"
#include "divergences.hpp"
#include "numeric.hpp"
#include "posteriors.hpp"
#include "risk_table.hpp"

namespace pacbayes {

/// Unknown bound identifiers, rules, or bounds whose required inputs are absent.
class SemanticError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class TaskKind { risk_table, threshold_margin, heavy_tail };

inline const char* to_string(TaskKind k) {
    switch (k) {
        case TaskKind::risk_table: return "risk_table";
        case TaskKind::threshold_margin: return "threshold_margin";
        case TaskKind::heavy_tail: return "heavy_tail";
    }
    return "?";
}

struct TaskSpec {
    TaskKind kind = TaskKind::risk_table;
    // risk_table: Bernoulli error rate of every hypothesis
    std::vector<double> p;
    bool shared_noise = false;
    // threshold_margin: thresholds k/(grid_size-1); the Bayes threshold is grid index `star`
    double tau = 0.25;
    std::size_t grid_size = 11;
    std::optional<std::size_t> star;
    // heavy_tail: loss_j = scale_j * L with L Lomax(alpha) of mean 1
    std::vector<double> scale;
    double alpha = 3.0;
    std::uint64_t seed = 0;
};

/// Generative task with closed-form risks. Hypotheses are indexed 0..M-1.
class SyntheticTask {
public:
    explicit SyntheticTask(const TaskSpec& spec) : spec_(spec) {
        switch (spec.kind) {
            case TaskKind::risk_table: init_risk_table(); break;
            case TaskKind::threshold_margin: init_threshold(); break;
            case TaskKind::heavy_tail: init_heavy_tail(); break;
        }
        theta_star_ = static_cast<std::size_t>(
            std::min_element(risk_.begin(), risk_.end()) - risk_.begin());
        for (std::size_t j = 0; j < risk_.size(); ++j)
            if (j != theta_star_ && risk_[j] == risk_[theta_star_])
                throw DomainError("synthetic task: the risk minimizer is not unique");
        if (spec.kind != TaskKind::heavy_tail) {
            std::vector<double> sm(risk_.size());
            for (std::size_t j = 0; j < sm.size(); ++j) sm[j] = second_moment(j, theta_star_);
            bernstein_ = bernstein_ratio_max(sm);
        }
    }

    const TaskSpec& spec() const { return spec_; }
    TaskKind kind() const { return spec_.kind; }
    std::size_t size() const { return risk_.size(); }
    double C() const { return C_; }
    const std::vector<double>& true_risk() const { return risk_; }
    std::size_t theta_star() const { return theta_star_; }
    double risk_star() const { return risk_[theta_star_]; }
    /// Exact Bernstein constant (bounded kinds only).
    std::optional<double> bernstein_K() const { return bernstein_; }
    /// Upper bound on the per-example loss variance (heavy_tail only).
    std::optional<double> kappa() const { return kappa_; }

    /// E[(loss_j - loss_k)^2] for a single example.
    double second_moment(std::size_t j, std::size_t k) const {
        switch (spec_.kind) {
            case TaskKind::risk_table: {
                const double a = spec_.p[j], b = spec_.p[k];
                if (j == k) return 0.0;
                return spec_.shared_noise ? std::abs(a - b) : a + b - 2.0 * a * b;
            }
            case TaskKind::threshold_margin:
                return std::abs(thresholds_[j] - thresholds_[k]);
            case TaskKind::heavy_tail: {
                if (j == k) return 0.0;
                const double v = spec_.alpha / (spec_.alpha - 2.0);
                const double a = spec_.scale[j], b = spec_.scale[k];
                return (a * a + b * b) * (v + 1.0) - 2.0 * a * b;
            }
        }
        return 0.0;
    }

    /// E[max(loss_j - t, 0)] (zero for bounded kinds once t >= C).
    double expected_excess(std::size_t j, double t) const {
        if (spec_.kind != TaskKind::heavy_tail) return t >= C_ ? 0.0 : kInf;
        const double a = spec_.alpha, s = a - 1.0, mu = spec_.scale[j];
        // E(L - u)_+ = s/(a-1) (1 + u/s)^{1-a} for L Lomax(a, s); here L is scaled by mu.
        require(t >= 0.0, "expected_excess: threshold must be >= 0");
        return mu * (s / (a - 1.0)) * std::pow(1.0 + t / mu / s, 1.0 - a);
    }

    /// n x M matrix of per-example losses.
    std::vector<std::vector<double>> sample_losses(std::size_t n, std::mt19937_64& rng) const {
        const std::size_t M = size();
        std::vector<std::vector<double>> out(n, std::vector<double>(M, 0.0));
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        for (std::size_t i = 0; i < n; ++i) {
            auto& row = out[i];
            switch (spec_.kind) {
                case TaskKind::risk_table:
                    if (spec_.shared_noise) {
                        const double u = unif(rng);
                        for (std::size_t j = 0; j < M; ++j) row[j] = u < spec_.p[j] ? 1.0 : 0.0;
                    } else {
                        for (std::size_t j = 0; j < M; ++j) row[j] = unif(rng) < spec_.p[j] ? 1.0 : 0.0;
                    }
                    break;
                case TaskKind::threshold_margin: {
                    const double x = unif(rng);
                    const double t_star = thresholds_[theta_star_];
                    const double eta = x >= t_star ? 0.5 + spec_.tau : 0.5 - spec_.tau;
                    const bool y = unif(rng) < eta;
                    for (std::size_t j = 0; j < M; ++j) row[j] = ((x >= thresholds_[j]) != y) ? 1.0 : 0.0;
                    break;
                }
                case TaskKind::heavy_tail:
                    for (std::size_t j = 0; j < M; ++j) row[j] = spec_.scale[j] * lomax(unif(rng));
                    break;
            }
        }
        return out;
    }

    /// Empirical risks of a fresh sample of size n. Independent risk tables use
    /// per-hypothesis binomial counts, which has the same law as averaging a
    /// sampled loss matrix.
    std::vector<double> sample_emp_risk(std::size_t n, std::mt19937_64& rng) const {
        const double nd = static_cast<double>(n);
        if (spec_.kind == TaskKind::risk_table && !spec_.shared_noise) {
            std::vector<double> r(size());
            for (std::size_t j = 0; j < size(); ++j) {
                std::binomial_distribution<long long> bin(static_cast<long long>(n), spec_.p[j]);
                r[j] = static_cast<double>(bin(rng)) / nd;
            }
            return r;
        }
        if (spec_.kind == TaskKind::risk_table) {
            // Shared noise: r_j = fraction of uniforms below p_j.
            std::uniform_real_distribution<double> unif(0.0, 1.0);
            std::vector<double> u(n);
            for (double& v : u) v = unif(rng);
            std::sort(u.begin(), u.end());
            std::vector<double> r(size());
            for (std::size_t j = 0; j < size(); ++j)
                r[j] = static_cast<double>(std::lower_bound(u.begin(), u.end(), spec_.p[j]) - u.begin()) / nd;
            return r;
        }
        const auto L = sample_losses(n, rng);
        std::vector<double> r(size(), 0.0);
        for (const auto& row : L)
            for (std::size_t j = 0; j < row.size(); ++j) r[j] += row[j];
        for (double& v : r) v /= nd;
        return r;
    }

private:
    void init_risk_table() {
        require(!spec_.p.empty(), "risk_table task: no hypotheses");
        for (double v : spec_.p) require(v >= 0.0 && v <= 1.0, "risk_table task: p_j outside [0,1]");
        risk_ = spec_.p;
        C_ = 1.0;
    }

    void init_threshold() {
        require(spec_.tau > 0.0 && spec_.tau <= 0.5, "threshold_margin task: tau outside (0, 1/2]");
        require(spec_.grid_size >= 2, "threshold_margin task: need at least two thresholds");
        const std::size_t G = spec_.grid_size;
        const std::size_t star = spec_.star.value_or((G - 1) / 2);
        require(star < G, "threshold_margin task: star index out of range");
        thresholds_.resize(G);
        for (std::size_t k = 0; k < G; ++k) thresholds_[k] = static_cast<double>(k) / static_cast<double>(G - 1);
        risk_.resize(G);
        for (std::size_t k = 0; k < G; ++k)
            risk_[k] = 0.5 - spec_.tau + 2.0 * spec_.tau * std::abs(thresholds_[k] - thresholds_[star]);
        C_ = 1.0;
    }

    void init_heavy_tail() {
        require(!spec_.scale.empty(), "heavy_tail task: no hypotheses");
        require(spec_.alpha > 2.0, "heavy_tail task: alpha must exceed 2 for a finite variance");
        double kap = 0.0;
        for (double s : spec_.scale) {
            require(s > 0.0, "heavy_tail task: scales must be > 0");
            kap = std::max(kap, s * s * spec_.alpha / (spec_.alpha - 2.0));
        }
        risk_ = spec_.scale;
        kappa_ = kap;
        C_ = kInf;
    }

    // Lomax(alpha) with scale alpha-1 (mean 1) by inversion.
    double lomax(double u) const {
        const double a = spec_.alpha;
        return (a - 1.0) * (std::pow(1.0 - u, -1.0 / a) - 1.0);
    }

    double bernstein_ratio_max(const std::vector<double>& sm) const;

    TaskSpec spec_;
    std::vector<double> risk_;
    std::vector<double> thresholds_;
    std::size_t theta_star_ = 0;
    double C_ = 1.0;
    std::optional<double> bernstein_;
    std::optional<double> kappa_;
};

inline SyntheticTask make_synthetic_task(const TaskSpec& spec) { return SyntheticTask(spec); }

// ---------------------------------------------------------------------------
// Bernstein constant
// ---------------------------------------------------------------------------

struct BernsteinEstimate {
    double K = 0.0;
    int kappa_exponent = 1;
    std::vector<double> ratios;  // per hypothesis; NaN where skipped (theta* or 0/0)
};

/// K = max over theta of E[(l - l*)^2] / (R - R*), from exact moments. A positive
/// numerator over a zero excess risk yields K = +inf.
inline BernsteinEstimate estimate_bernstein_constant(const std::vector<double>& risk,
                                                     const std::vector<double>& second_moment,
                                                     std::size_t star) {
    require_same_size(risk.size(), second_moment.size(), "estimate_bernstein_constant");
    require(star < risk.size(), "estimate_bernstein_constant: star out of range");
    BernsteinEstimate e;
    e.ratios.assign(risk.size(), std::nan(""));
    for (std::size_t j = 0; j < risk.size(); ++j) {
        if (j == star) continue;
        const double gap = risk[j] - risk[star];
        const double num = second_moment[j];
        if (gap <= 0.0) {
            if (num > 0.0) {
                e.ratios[j] = kInf;
                e.K = kInf;
            }
            continue;
        }
        e.ratios[j] = num / gap;
        e.K = std::max(e.K, e.ratios[j]);
    }
    return e;
}

inline double SyntheticTask::bernstein_ratio_max(const std::vector<double>& sm) const {
    return estimate_bernstein_constant(risk_, sm, theta_star_).K;
}

inline BernsteinEstimate estimate_bernstein_constant(const SyntheticTask& task) {
    require(task.kind() != TaskKind::heavy_tail,
            "estimate_bernstein_constant: exact moments need a bounded task");
    std::vector<double> sm(task.size());
    for (std::size_t j = 0; j < sm.size(); ++j) sm[j] = task.second_moment(j, task.theta_star());
    return estimate_bernstein_constant(task.true_risk(), sm, task.theta_star());
}

/// Plug-in estimate from `samples` simulated examples: both the second moments
/// and the excess risks are replaced by sample means.
inline BernsteinEstimate estimate_bernstein_constant_sampled(const SyntheticTask& task,
                                                             std::size_t samples,
                                                             std::uint64_t seed) {
    require(samples >= 1, "estimate_bernstein_constant_sampled: need samples >= 1");
    const std::size_t M = task.size(), star = task.theta_star();
    std::vector<double> sm(M, 0.0), gap(M, 0.0);
    auto rng = detail::stream(seed, 0, 7);
    const std::size_t chunk = 4096;
    for (std::size_t done = 0; done < samples; done += chunk) {
        const auto L = task.sample_losses(std::min(chunk, samples - done), rng);
        for (const auto& row : L)
            for (std::size_t j = 0; j < M; ++j) {
                const double d = row[j] - row[star];
                sm[j] += d * d;
                gap[j] += d;
            }
    }
    const double S = static_cast<double>(samples);
    for (std::size_t j = 0; j < M; ++j) {
        sm[j] /= S;
        gap[j] /= S;
    }
    // A sampled excess risk can come out <= 0 for tiny gaps; such entries carry no information.
    BernsteinEstimate e;
    e.ratios.assign(M, std::nan(""));
    for (std::size_t j = 0; j < M; ++j) {
        if (j == star || gap[j] <= 0.0) continue;
        e.ratios[j] = sm[j] / gap[j];
        e.K = std::max(e.K, e.ratios[j]);
    }
    return e;
}

// ---------------------------------------------------------------------------
// Oracle right-hand sides
// ---------------------------------------------------------------------------

enum class RhoFamily { gibbs_and_dirac, dirac_only };

struct FamilyMinimum {
    double value = kInf;
    std::optional<double> beta;         // set when a Gibbs measure attains it
    std::optional<std::size_t> dirac;   // set when a Dirac mass attains it
};

/// pi_{-beta R}: weights proportional to pi exp(-beta R).
inline DiscreteDistribution localized_prior(const DiscreteDistribution& pi,
                                            std::span<const double> risk, double beta) {
    return gibbs_posterior(pi, risk, beta);
}

/// min over rho in the family of E_rho f + c KL(rho || base). The Gibbs members
/// are base_{-beta f} for beta on a log grid plus beta = 1/c, which is the exact
/// unconstrained minimizer.
inline FamilyMinimum minimize_over_family(std::span<const double> f,
                                          const DiscreteDistribution& base, double c,
                                          RhoFamily family,
                                          const std::vector<double>& extra_betas = {}) {
    require_same_size(f.size(), base.size(), "minimize_over_family");
    require(c > 0.0, "minimize_over_family: c must be > 0");
    FamilyMinimum best;
    for (std::size_t j = 0; j < f.size(); ++j) {
        if (base[j] <= 0.0) continue;
        const double v = f[j] - c * std::log(base[j]);
        if (v < best.value) best = {v, std::nullopt, j};
    }
    if (family == RhoFamily::dirac_only) return best;
    std::vector<double> betas = extra_betas;
    betas.push_back(1.0 / c);
    for (int k = 0; k <= 200; ++k) betas.push_back(std::pow(10.0, -3.0 + 10.0 * k / 200.0));
    for (double beta : betas) {
        const auto rho = gibbs_posterior(base, f, beta);
        const double v = rho.expect(f) + c * kl_discrete(rho, base);
        if (v < best.value) best = {v, beta, std::nullopt};
    }
    return best;
}

enum class OracleVariant { expectation, probability, fast };

struct OracleProblem {
    std::vector<double> true_risk;
    DiscreteDistribution pi;
    std::size_t n = 1;
    double C = 1.0;
    double eps = 0.05;
    double K = 1.0;  // Bernstein constant, used by the fast variant

    std::size_t star() const {
        return static_cast<std::size_t>(std::min_element(true_risk.begin(), true_risk.end()) -
                                        true_risk.begin());
    }
};

inline OracleProblem oracle_problem(const SyntheticTask& task, const DiscreteDistribution& pi,
                                    std::size_t n, double eps = 0.05) {
    return {task.true_risk(), pi, n, task.C(), eps, task.bernstein_K().value_or(kInf)};
}

/// Right-hand side of the oracle inequalities, with the infimum over rho taken
/// over the Gibbs-plus-Dirac family (or Dirac masses only).
///   expectation: inf E R + lambda C^2/8n + KL/lambda
///   probability: inf E R + lambda C^2/4n + 2 (KL + log 2/eps)/lambda
///   fast:        2 inf E R - R* + max(2K,C) KL/n      (lambda is n/max(2K,C))
inline double oracle_bound_rhs(const OracleProblem& prob, double lambda, OracleVariant variant,
                               RhoFamily family = RhoFamily::gibbs_and_dirac) {
    require_same_size(prob.true_risk.size(), prob.pi.size(), "oracle_bound_rhs");
    require(prob.n >= 1, "oracle_bound_rhs: n must be >= 1");
    const double nd = static_cast<double>(prob.n);
    switch (variant) {
        case OracleVariant::expectation: {
            require(lambda > 0.0, "oracle_bound_rhs: lambda must be > 0");
            const auto m = minimize_over_family(prob.true_risk, prob.pi, 1.0 / lambda, family);
            return m.value + lambda * prob.C * prob.C / (8.0 * nd);
        }
        case OracleVariant::probability: {
            require(lambda > 0.0, "oracle_bound_rhs: lambda must be > 0");
            require(prob.eps > 0.0 && prob.eps < 1.0, "oracle_bound_rhs: eps must lie in (0,1)");
            const auto m = minimize_over_family(prob.true_risk, prob.pi, 2.0 / lambda, family);
            return m.value + lambda * prob.C * prob.C / (4.0 * nd) +
                   2.0 * std::log(2.0 / prob.eps) / lambda;
        }
        case OracleVariant::fast: {
            require(std::isfinite(prob.K) && prob.K >= 0.0, "oracle_bound_rhs: fast variant needs finite K");
            const double mm = std::max(2.0 * prob.K, prob.C);
            std::vector<double> excess(prob.true_risk.size());
            const double rs = prob.true_risk[prob.star()];
            for (std::size_t j = 0; j < excess.size(); ++j) excess[j] = prob.true_risk[j] - rs;
            const auto m = minimize_over_family(excess, prob.pi, mm / nd, family);
            return 2.0 * m.value;
        }
    }
    return kInf;
}

struct PiDimension {
    double d_pi = 0.0;
    double beta_star = std::nan("");  // NaN when every risk is equal
};

/// sup over beta >= 0 of beta E_{pi_{-beta R}}[R - R*].
inline double pi_dimension_objective(const DiscreteDistribution& pi, std::span<const double> risk,
                                     double beta) {
    const double rs = *std::min_element(risk.begin(), risk.end());
    std::vector<double> excess(risk.size());
    for (std::size_t j = 0; j < risk.size(); ++j) excess[j] = risk[j] - rs;
    return beta * gibbs_posterior(pi, excess, beta).expect(excess);
}

inline PiDimension pi_dimension(const DiscreteDistribution& pi, const std::vector<double>& risk,
                                double C) {
    require_same_size(pi.size(), risk.size(), "pi_dimension");
    require(C > 0.0, "pi_dimension: C must be > 0");
    const double rs = *std::min_element(risk.begin(), risk.end());
    bool flat = true;
    for (std::size_t j = 0; j < risk.size(); ++j)
        if (pi[j] > 0.0 && risk[j] > rs) flat = false;
    if (flat) return {};
    const auto best = maximize_log_scale(
        [&](double beta) { return pi_dimension_objective(pi, risk, beta); }, 1e-6, 1e8, 1e-6, 1000);
    return {best.value, best.argmax};
}

/// -log E_pi exp(-beta (R - R*)).
inline double log_laplace_excess(const DiscreteDistribution& pi, std::span<const double> risk,
                                 double beta) {
    const double rs = *std::min_element(risk.begin(), risk.end());
    std::vector<double> t(risk.size());
    for (std::size_t j = 0; j < risk.size(); ++j)
        t[j] = pi[j] > 0.0 ? std::log(pi[j]) - beta * (risk[j] - rs) : -kInf;
    return -log_sum_exp(t);
}

struct LocalizedOracle {
    double value = 0.0;             // infimum over the rho family
    double closed_form = 0.0;       // 4 m log sum_theta pi-weighted exp(-n gap/(4m)) / n at rho = delta*
    double non_localized = 0.0;     // 4 m log(M) / n
    double split_displayed = 0.0;   // 4m/n log(m_tau + e^{-n tau/4m}(M - m_tau))
    double split_swapped = 0.0;     // 4m/n log((M - m_tau) + e^{-n tau/4m} m_tau)
    double tau = 0.0;               // smallest positive gap
    std::size_t m_tau = 0;          // card{theta : gap >= tau}
};

/// Localized oracle bound with lambda = n / max(2K, C):
/// inf over rho of 3 (E R - R*) + 4 max(2K,C) KL(rho || pi_{-lambda R / 4}) / n.
inline LocalizedOracle localized_oracle_rhs(const std::vector<double>& risk,
                                            const DiscreteDistribution& pi, double K,
                                            std::size_t n, double C) {
    require_same_size(risk.size(), pi.size(), "localized_oracle_rhs");
    require(n >= 1 && C > 0.0 && K >= 0.0 && std::isfinite(K), "localized_oracle_rhs: invalid input");
    const double nd = static_cast<double>(n);
    const double m = std::max(2.0 * K, C);
    const double lambda = nd / m;
    const double rs = *std::min_element(risk.begin(), risk.end());
    std::vector<double> gap(risk.size());
    for (std::size_t j = 0; j < gap.size(); ++j) gap[j] = risk[j] - rs;
    const auto local = localized_prior(pi, gap, lambda / 4.0);

    LocalizedOracle out;
    std::vector<double> f(gap.size());
    for (std::size_t j = 0; j < f.size(); ++j) f[j] = 3.0 * gap[j];
    // The exact minimizer is pi_{-(lambda/4 + 3n/(4m)) R}; beta = 0 is rho = pi_{-lambda R/4} itself.
    const auto fm = minimize_over_family(f, local, 4.0 * m / nd, RhoFamily::gibbs_and_dirac,
                                         {0.0, 3.0 * nd / (4.0 * m)});
    out.value = fm.value;

    // At rho = delta_{theta*} the bound is 4m KL(delta* || pi_{-lambda R/4}) / n; with a
    // uniform prior this is 4m log sum_theta exp(-n gap / (4m)) / n.
    const std::size_t star = static_cast<std::size_t>(std::min_element(risk.begin(), risk.end()) - risk.begin());
    out.closed_form = 4.0 * m * (-std::log(local[star])) / nd;
    out.non_localized = 4.0 * m * std::log(static_cast<double>(risk.size())) / nd;

    out.tau = kInf;
    for (double g : gap)
        if (g > 0.0) out.tau = std::min(out.tau, g);
    if (std::isfinite(out.tau)) {
        for (double g : gap)
            if (g >= out.tau) ++out.m_tau;
        const double M = static_cast<double>(gap.size());
        const double e = std::exp(-nd * out.tau / (4.0 * m));
        const double mt = static_cast<double>(out.m_tau);
        out.split_displayed = 4.0 * m * std::log(mt + e * (M - mt)) / nd;
        out.split_swapped = 4.0 * m * std::log((M - mt) + e * mt) / nd;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::size_t thread_count(std::size_t work) {
    std::size_t t = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("PACBAYES_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && v >= 1) t = std::min(t, static_cast<std::size_t>(v));
    }
    return std::max<std::size_t>(1, std::min(t, work));
}

// Runs body(i) for i in [0, count); results are written by index so the
// output never depends on scheduling.
template <class Body>
void parallel_for(std::size_t count, Body&& body) {
    const std::size_t threads = thread_count(count);
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (std::size_t i; (i = next.fetch_add(1)) < count;) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace detail

enum class RuleKind { gibbs, erm_dirac, fixed_rho };

struct PosteriorRule {
    RuleKind kind = RuleKind::erm_dirac;
    double lambda = 1.0;                      // gibbs temperature
    std::optional<DiscreteDistribution> rho;  // fixed_rho

    static PosteriorRule gibbs(double lambda) { return {RuleKind::gibbs, lambda, std::nullopt}; }
    static PosteriorRule erm() { return {}; }
    static PosteriorRule fixed(DiscreteDistribution r) { return {RuleKind::fixed_rho, 1.0, std::move(r)}; }
};

/// Bound identifiers understood by violation_experiment.
inline const std::vector<std::string>& violation_catalog() {
    static const std::vector<std::string> ids = {
        "union_finite", "catoni_linear", "mcallester",  "seeger",
        "tolstikhin_seldin", "thiemann", "catoni_phi", "lambda_grid",
        "subgaussian", "chi_square", "truncated", "localized_empirical",
        "oracle_probability"};
    return ids;
}

struct ViolationConfig {
    std::string bound_id = "seeger";
    PosteriorRule rule;
    std::size_t n = 500;
    double eps = 0.05;
    std::size_t trials = 1000;
    std::uint64_t seed = 0;
    double corruption_factor = 1.0;  // multiplies every bound value (control runs)
    double thiemann_lambda = 1.0;
    double xi = 0.5;                  // localized_empirical
    std::optional<double> lambda;     // overrides the data-independent default
};

struct TrialRow {
    std::size_t n = 0;
    std::uint64_t seed = 0;
    double excess_risk = 0.0;
    double bound_value = 0.0;
    bool violated = false;
};

struct ExperimentReport {
    std::size_t trials = 0;
    std::size_t violations = 0;
    double violation_rate = 0.0;
    double se = 0.0;
    double mean_bound = 0.0;
    double mean_true_risk = 0.0;
    std::vector<TrialRow> rows;
    // rate experiments
    std::vector<std::size_t> n_grid;
    std::vector<double> mean_excess;
    std::optional<double> slope;  // empty when undefined
};

namespace detail {

struct TrialSummary {
    DiscreteDistribution rho;
    std::vector<double> emp;
    std::optional<std::vector<double>> trunc;  // truncated risks per hypothesis
};

inline DiscreteDistribution apply_rule(const PosteriorRule& rule, const DiscreteDistribution& pi,
                                       const std::vector<double>& emp) {
    switch (rule.kind) {
        case RuleKind::gibbs: return gibbs_posterior(pi, emp, rule.lambda);
        case RuleKind::erm_dirac: {
            const auto k = static_cast<std::size_t>(std::min_element(emp.begin(), emp.end()) - emp.begin());
            return DiscreteDistribution::dirac(emp.size(), k);
        }
        case RuleKind::fixed_rho:
            if (!rule.rho) throw SemanticError("fixed_rho rule without a distribution");
            require_same_size(rule.rho->size(), emp.size(), "fixed_rho");
            return *rule.rho;
    }
    return pi;
}

}  // namespace detail

/// Default, data-independent lambda for the linear-type bounds at this (M, n, eps).
inline double default_lambda(const SyntheticTask& task, std::size_t n, double eps) {
    const double C = std::isfinite(task.C()) ? task.C() : 1.0;
    return select_lambda_closed_form(std::log(static_cast<double>(task.size())), n, eps, C);
}

/// Value of bound `id` for posterior rho given one trial's empirical summary.
inline double evaluate_catalog_bound(const std::string& id, const SyntheticTask& task,
                                     const DiscreteDistribution& pi, const DiscreteDistribution& rho,
                                     const std::vector<double>& emp,
                                     const std::optional<std::vector<double>>& trunc,
                                     const ViolationConfig& cfg) {
    const std::size_t M = task.size();
    const double C = task.C();
    BoundInput in;
    in.emp_risk = rho.expect(emp);
    in.kl = kl_discrete(rho, pi);
    in.n = cfg.n;
    in.eps = cfg.eps;
    in.C = std::isfinite(C) ? C : 1.0;
    const double lam = cfg.lambda.value_or(default_lambda(task, cfg.n, cfg.eps));
    auto need_bounded = [&] {
        if (!std::isfinite(C)) throw SemanticError(id + " needs a bounded loss");
        in.emp_risk = std::min(in.emp_risk, C);
    };
    if (id == "union_finite") {
        need_bounded();
        return bound_union_finite(in.emp_risk, LogCardinality::of(static_cast<double>(M)), cfg.n, cfg.eps, C).value;
    }
    if (id == "catoni_linear") { need_bounded(); return bound_catoni_linear(in, lam).value; }
    if (id == "mcallester") { need_bounded(); return bound_mcallester_maurer(in).value; }
    if (id == "seeger") { need_bounded(); return bound_seeger_maurer(in).value; }
    if (id == "tolstikhin_seldin") { need_bounded(); return bound_tolstikhin_seldin(in).value; }
    if (id == "thiemann") { need_bounded(); return bound_thiemann(in, cfg.thiemann_lambda).value; }
    if (id == "catoni_phi") { need_bounded(); return bound_catoni_phi(in, lam).value; }
    if (id == "lambda_grid") { need_bounded(); return bound_lambda_grid(in, geometric_grid(cfg.n)).value; }
    if (id == "subgaussian") {
        need_bounded();
        // A [0,C] variable is sub-Gaussian with constant C/2 in the sense of the bound.
        in.C = C / 2.0;
        const double l = cfg.lambda.value_or(std::sqrt(static_cast<double>(cfg.n) *
                                                       (std::log(static_cast<double>(M)) - std::log(cfg.eps))) / in.C);
        return bound_subgaussian(in, l).value;
    }
    if (id == "chi_square") {
        if (!task.kappa()) throw SemanticError("chi_square needs a variance bound kappa");
        in.kappa = task.kappa();
        in.chi2 = chi2_discrete(rho, pi);
        return bound_chi_square(in).value;
    }
    if (id == "truncated") {
        if (!trunc) throw SemanticError("truncated needs per-example losses");
        double delta = 0.0;
        const double cut = static_cast<double>(cfg.n) / lam;
        for (std::size_t j = 0; j < M; ++j)
            if (rho[j] > 0.0) delta += rho[j] * task.expected_excess(j, cut);
        return bound_truncated(in, lam, rho.expect(*trunc), delta).value;
    }
    if (id == "localized_empirical") {
        need_bounded();
        RiskTable t;
        t.emp_risk = emp;
        t.n = cfg.n;
        t.C = C;
        return bound_localized_empirical(t, rho, pi, lam, cfg.xi, cfg.eps).value;
    }
    if (id == "oracle_probability") {
        need_bounded();
        if (cfg.rule.kind != RuleKind::gibbs)
            throw SemanticError("oracle_probability applies to the Gibbs rule");
        auto prob = oracle_problem(task, pi, cfg.n, cfg.eps);
        return oracle_bound_rhs(prob, cfg.rule.lambda, OracleVariant::probability);
    }
    throw SemanticError("unknown bound id '" + id + "'");
}

/// Monte-Carlo frequency of E_rho R > bound, with uniform prior over the task's class.
inline ExperimentReport violation_experiment(const SyntheticTask& task, const ViolationConfig& cfg) {
    require(cfg.trials >= 1, "violation_experiment: trials must be >= 1");
    require(cfg.n >= 1, "violation_experiment: n must be >= 1");
    if (std::find(violation_catalog().begin(), violation_catalog().end(), cfg.bound_id) ==
        violation_catalog().end())
        throw SemanticError("unknown bound id '" + cfg.bound_id + "'");
    const auto pi = DiscreteDistribution::uniform(task.size());
    const bool want_trunc = cfg.bound_id == "truncated";
    const double lam = cfg.lambda.value_or(default_lambda(task, cfg.n, cfg.eps));
    // Fail fast on configuration errors before spawning trials.
    {
        auto rng = detail::stream(cfg.seed, ~0ULL, 3);
        const auto emp = task.sample_emp_risk(1, rng);
        const auto rho = detail::apply_rule(cfg.rule, pi, emp);
        std::optional<std::vector<double>> trunc;
        if (want_trunc) trunc = std::vector<double>(task.size(), 0.0);
        ViolationConfig probe = cfg;
        probe.n = std::max<std::size_t>(cfg.n, 1);
        (void)evaluate_catalog_bound(cfg.bound_id, task, pi, rho, emp, trunc, probe);
    }

    std::vector<TrialRow> rows(cfg.trials);
    std::vector<double> true_risks(cfg.trials);
    detail::parallel_for(cfg.trials, [&](std::size_t t) {
        const std::uint64_t ts = detail::splitmix64(cfg.seed ^ detail::splitmix64(t));
        auto rng = detail::stream(ts, 0);
        std::vector<double> emp;
        std::optional<std::vector<double>> trunc;
        if (want_trunc) {
            const auto L = task.sample_losses(cfg.n, rng);
            emp.assign(task.size(), 0.0);
            trunc = std::vector<double>(task.size(), 0.0);
            std::vector<double> col(cfg.n);
            for (std::size_t j = 0; j < task.size(); ++j) {
                for (std::size_t i = 0; i < cfg.n; ++i) {
                    col[i] = L[i][j];
                    emp[j] += L[i][j];
                }
                emp[j] /= static_cast<double>(cfg.n);
                (*trunc)[j] = truncated_empirical_risk(col, lam);
            }
        } else {
            emp = task.sample_emp_risk(cfg.n, rng);
        }
        const auto rho = detail::apply_rule(cfg.rule, pi, emp);
        const double value =
            cfg.corruption_factor * evaluate_catalog_bound(cfg.bound_id, task, pi, rho, emp, trunc, cfg);
        const double risk = rho.expect(task.true_risk());
        true_risks[t] = risk;
        rows[t] = {cfg.n, ts, risk - task.risk_star(), value, risk > value};
    });

    ExperimentReport rep;
    rep.trials = cfg.trials;
    for (std::size_t t = 0; t < cfg.trials; ++t) {
        rep.violations += rows[t].violated ? 1 : 0;
        rep.mean_bound += rows[t].bound_value;
        rep.mean_true_risk += true_risks[t];
    }
    const double T = static_cast<double>(cfg.trials);
    rep.violation_rate = static_cast<double>(rep.violations) / T;
    rep.se = std::sqrt(rep.violation_rate * (1.0 - rep.violation_rate) / T);
    rep.mean_bound /= T;
    rep.mean_true_risk /= T;
    rep.rows = std::move(rows);
    return rep;
}

enum class RateRule { fast, slow };

/// Mean excess risk of the Gibbs posterior over a grid of sample sizes, and the
/// least-squares slope of log(mean excess) against log n.
inline ExperimentReport rate_experiment(const SyntheticTask& task, const std::vector<std::size_t>& n_grid,
                                        std::size_t reps, std::uint64_t seed, RateRule rule) {
    require(n_grid.size() >= 5, "rate_experiment: need at least five sample sizes");
    require(reps >= 1, "rate_experiment: reps must be >= 1");
    for (std::size_t k = 0; k < n_grid.size(); ++k) {
        require(n_grid[k] >= 1, "rate_experiment: sample sizes must be >= 1");
        if (k > 0) require(n_grid[k] > n_grid[k - 1], "rate_experiment: grid must be increasing");
    }
    const auto pi = DiscreteDistribution::uniform(task.size());
    double K = 0.0;
    if (rule == RateRule::fast) {
        require(task.bernstein_K().has_value() && std::isfinite(*task.bernstein_K()),
                "rate_experiment: fast rule needs a finite Bernstein constant");
        K = *task.bernstein_K();
    }
    const double C = task.C();
    const std::size_t G = n_grid.size();
    std::vector<TrialRow> rows(G * reps);
    detail::parallel_for(G * reps, [&](std::size_t idx) {
        const std::size_t g = idx / reps, r = idx % reps;
        const std::size_t n = n_grid[g];
        const std::uint64_t ts = detail::splitmix64(seed ^ detail::splitmix64(idx));
        auto rng = detail::stream(ts, n);
        const auto emp = task.sample_emp_risk(n, rng);
        const double nd = static_cast<double>(n);
        const double lambda = rule == RateRule::fast
                                  ? nd / std::max(2.0 * K, C)
                                  : select_lambda_closed_form(std::log(static_cast<double>(task.size())), n, 0.05, C);
        const auto rho = gibbs_posterior(pi, emp, lambda);
        const double excess = std::max(0.0, rho.expect(task.true_risk()) - task.risk_star());
        rows[idx] = {n, ts, excess, std::nan(""), false};
        (void)r;
    });
    ExperimentReport rep;
    rep.trials = G * reps;
    rep.n_grid = n_grid;
    std::vector<double> lx, ly;
    for (std::size_t g = 0; g < G; ++g) {
        double s = 0.0;
        for (std::size_t r = 0; r < reps; ++r) s += rows[g * reps + r].excess_risk;
        const double mean = s / static_cast<double>(reps);
        rep.mean_excess.push_back(mean);
        if (mean > 0.0) {
            lx.push_back(std::log(static_cast<double>(n_grid[g])));
            ly.push_back(std::log(mean));
        }
    }
    if (lx.size() >= 2) rep.slope = ols_slope(lx, ly);
    rep.rows = std::move(rows);
    return rep;
}

// ---------------------------------------------------------------------------
// Exponential moments
// ---------------------------------------------------------------------------

enum class DistKind { bernoulli, uniform, constant };

struct DistSpec {
    DistKind kind = DistKind::bernoulli;
    double p = 0.5;            // bernoulli
    double a = 0.0, b = 1.0;   // uniform support, also the range for bernoulli/constant
    double c = 0.0;            // constant value

    double mean() const {
        switch (kind) {
            case DistKind::bernoulli: return p;
            case DistKind::uniform: return 0.5 * (a + b);
            case DistKind::constant: return c;
        }
        return 0.0;
    }
    double variance() const {
        switch (kind) {
            case DistKind::bernoulli: return p * (1.0 - p);
            case DistKind::uniform: return (b - a) * (b - a) / 12.0;
            case DistKind::constant: return 0.0;
        }
        return 0.0;
    }
    double lo() const { return kind == DistKind::uniform ? a : (kind == DistKind::constant ? c : 0.0); }
    double hi() const { return kind == DistKind::uniform ? b : (kind == DistKind::constant ? c : 1.0); }

    double draw(std::mt19937_64& rng) const {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        switch (kind) {
            case DistKind::bernoulli: return u(rng) < p ? 1.0 : 0.0;
            case DistKind::uniform: return a + (b - a) * u(rng);
            case DistKind::constant: return c;
        }
        return 0.0;
    }

    /// Exact E exp(t sum_{i<n}(U_i - EU)) where available.
    std::optional<double> exact_mgf(double t, std::size_t n) const {
        const double nd = static_cast<double>(n);
        switch (kind) {
            case DistKind::bernoulli: return std::pow(1.0 - p + p * std::exp(t), nd) * std::exp(-t * nd * p);
            case DistKind::constant: return 1.0;
            case DistKind::uniform: {
                if (t == 0.0) return 1.0;
                const double w = b - a;
                const double one = (std::exp(t * w / 2.0) - std::exp(-t * w / 2.0)) / (t * w);
                return std::pow(one, nd);
            }
        }
        return std::nullopt;
    }
};

struct MomentCheck {
    double t = 0.0;
    double estimate = 0.0;
    double se = 0.0;
    double hoeffding_rhs = 0.0;
    double bernstein_rhs = 0.0;
    bool hoeffding_ok = false;
    bool bernstein_ok = false;
    std::optional<double> exact;
    std::optional<bool> exact_ok;  // |estimate - exact| <= 3 se
};

/// Monte-Carlo check of the Hoeffding and Bernstein moment inequalities for sums
/// of n i.i.d. copies, each allowed 5 relative standard errors of slack.
inline std::vector<MomentCheck> verify_exponential_moment(const DistSpec& dist, std::size_t n,
                                                          const std::vector<double>& t_grid,
                                                          std::size_t samples, std::uint64_t seed) {
    require(std::isfinite(dist.lo()) && std::isfinite(dist.hi()) && dist.lo() <= dist.hi(),
            "verify_exponential_moment: distribution must be bounded");
    require(samples >= 2 && n >= 1, "verify_exponential_moment: need samples >= 2 and n >= 1");
    if (dist.kind == DistKind::bernoulli) require(dist.p >= 0.0 && dist.p <= 1.0, "bernoulli p outside [0,1]");
    const double range = dist.hi() - dist.lo();
    const double mu = dist.mean(), var = dist.variance(), nd = static_cast<double>(n);
    std::vector<MomentCheck> out;
    for (std::size_t k = 0; k < t_grid.size(); ++k) {
        const double t = t_grid[k];
        auto rng = detail::stream(seed, k, 11);
        double sum = 0.0, sum_sq = 0.0;
        for (std::size_t s = 0; s < samples; ++s) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) acc += dist.draw(rng) - mu;
            const double e = std::exp(t * acc);
            sum += e;
            sum_sq += e * e;
        }
        const double S = static_cast<double>(samples);
        MomentCheck c;
        c.t = t;
        c.estimate = sum / S;
        c.se = std::sqrt(std::max(0.0, sum_sq / S - c.estimate * c.estimate) / (S - 1.0));
        c.hoeffding_rhs = std::exp(nd * t * t * range * range / 8.0);
        c.bernstein_rhs = std::exp(bernstein_g(range * t) * nd * t * t * var);
        const double slack = 1.0 + 5.0 * c.se / c.estimate;
        c.hoeffding_ok = c.estimate <= c.hoeffding_rhs * slack;
        c.bernstein_ok = c.estimate <= c.bernstein_rhs * slack;
        c.exact = dist.exact_mgf(t, n);
        if (c.exact) c.exact_ok = std::abs(c.estimate - *c.exact) <= 3.0 * c.se + 1e-12 * *c.exact;
        out.push_back(c);
    }
    return out;
}

}  // namespace pacbayes
