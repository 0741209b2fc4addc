// Posterior construction: Gibbs measures over finite classes, bound
// minimization across temperatures, model selection, single-draw certificates,
// Gaussian variational fits and the exponentially weighted forecaster.
#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bounds.hpp"
#include "divergences.hpp"
#include "numeric.hpp"
#include "risk_table.hpp"

namespace pacbayes {

/// Weights proportional to pi(theta) exp(-lambda r(theta)), in log-domain.
inline DiscreteDistribution gibbs_posterior(const DiscreteDistribution& pi,
                                            std::span<const double> risk, double lambda) {
    require_same_size(pi.size(), risk.size(), "gibbs_posterior");
    require(lambda >= 0.0 && !std::isnan(lambda), "gibbs_posterior: lambda must be >= 0");
    if (lambda == 0.0) return pi;
    std::vector<double> logw(pi.size());
    // Shifting by the minimal risk keeps exponents near zero without changing the result.
    double rmin = kInf;
    for (std::size_t j = 0; j < risk.size(); ++j)
        if (pi[j] > 0.0) rmin = std::min(rmin, risk[j]);
    for (std::size_t j = 0; j < pi.size(); ++j)
        logw[j] = pi[j] > 0.0 ? std::log(pi[j]) - lambda * (risk[j] - rmin) : -kInf;
    return DiscreteDistribution::from_log(logw);
}

/// E_rho r + lambda C^2/(8n) + (KL(rho||pi) + log_extra + log 1/eps) / lambda.
inline double catoni_objective(const DiscreteDistribution& rho, const DiscreteDistribution& pi,
                               const RiskTable& table, double lambda, double eps,
                               double log_extra = 0.0) {
    const double nd = static_cast<double>(table.n);
    return rho.expect(table.emp_risk) + lambda * table.C * table.C / (8.0 * nd) +
           (kl_discrete(rho, pi) + log_extra - std::log(eps)) / lambda;
}

struct PosteriorCertificate {
    DiscreteDistribution rho;
    Certificate certificate;
};

/// Gibbs posterior at the grid temperature that minimizes the grid-uniform bound.
/// Ties go to the earliest grid entry.
inline PosteriorCertificate minimize_bound_grid(const DiscreteDistribution& pi,
                                                const RiskTable& table,
                                                const std::vector<double>& grid, double eps) {
    table.validate();
    require(!grid.empty(), "minimize_bound_grid: empty grid");
    require_same_size(pi.size(), table.size(), "minimize_bound_grid");
    auto summary = [&](double lambda) {
        const auto rho = gibbs_posterior(pi, table.emp_risk, lambda);
        BoundInput in;
        in.emp_risk = std::min(rho.expect(table.emp_risk), table.C);
        in.kl = kl_discrete(rho, pi);
        in.n = table.n;
        in.eps = eps;
        in.C = table.C;
        return in;
    };
    auto cert = bound_lambda_grid(summary, grid);
    return {gibbs_posterior(pi, table.emp_risk, *cert.lambda), std::move(cert)};
}

struct ModelChoice {
    std::size_t index = 0;
    DiscreteDistribution rho;
    Certificate certificate;
    std::vector<double> scores;
};

/// Picks the model whose Gibbs posterior minimizes
/// E_rho r + (KL(rho||pi_j) + log 1/p(j)) / lambda. Ties go to the lowest index.
inline ModelChoice model_select(
    const std::vector<std::pair<DiscreteDistribution, RiskTable>>& models,
    const DiscreteDistribution& p, double lambda, double eps) {
    require(!models.empty(), "model_select: no models");
    require_same_size(models.size(), p.size(), "model_select");
    require(lambda > 0.0, "model_select: lambda must be > 0");
    const std::size_t n = models.front().second.n;
    const double C = models.front().second.C;
    ModelChoice out;
    std::vector<DiscreteDistribution> rhos;
    for (const auto& [pi, table] : models) {
        table.validate();
        if (table.n != n || table.C != C)
            throw DimensionMismatch("model_select: models must share n and C");
        require_same_size(pi.size(), table.size(), "model_select prior");
        rhos.push_back(gibbs_posterior(pi, table.emp_risk, lambda));
    }
    for (std::size_t j = 0; j < models.size(); ++j) {
        const double penalty = p[j] > 0.0 ? -std::log(p[j]) : kInf;
        const auto& [pi, table] = models[j];
        out.scores.push_back(rhos[j].expect(table.emp_risk) +
                             (kl_discrete(rhos[j], pi) + penalty) / lambda);
    }
    for (std::size_t j = 1; j < out.scores.size(); ++j)
        if (out.scores[j] < out.scores[out.index]) out.index = j;

    const auto& [pi, table] = models[out.index];
    out.rho = rhos[out.index];
    BoundInput in;
    in.emp_risk = std::min(out.rho.expect(table.emp_risk), C);
    in.kl = kl_discrete(out.rho, pi);
    in.n = n;
    in.eps = eps;
    in.C = C;
    auto cert = bound_catoni_linear(in, lambda);
    const double penalty = -std::log(p[out.index]);
    cert.bound_id = "model_select";
    cert.terms.push_back({"model_penalty", penalty / lambda});
    cert.terms.push_back({"log_inv_model_weight", penalty, false});
    out.certificate = detail::finish(std::move(cert));
    return out;
}

/// sum_theta rho(theta) f_theta(x).
inline double aggregate_prediction(const DiscreteDistribution& rho,
                                   std::span<const double> predictions) {
    require_same_size(rho.size(), predictions.size(), "aggregate_prediction");
    return rho.expect(predictions);
}

/// Bound for one hypothesis drawn from rho; the log density ratio may be negative.
inline Certificate single_draw_certificate(const DiscreteDistribution& pi,
                                           const DiscreteDistribution& rho, std::size_t theta_idx,
                                           double emp_risk_theta, std::size_t n, double eps,
                                           double C, double lambda) {
    require_same_size(pi.size(), rho.size(), "single_draw_certificate");
    require(theta_idx < rho.size() && rho[theta_idx] > 0.0,
            "single_draw_certificate: drawn index outside the support of rho");
    require(pi[theta_idx] > 0.0, "single_draw_certificate: drawn index has zero prior mass");
    require(lambda > 0.0, "single_draw_certificate: lambda must be > 0");
    BoundInput in;
    in.emp_risk = emp_risk_theta;
    in.n = n;
    in.eps = eps;
    in.C = C;
    in.validate();
    const double log_ratio = std::log(rho[theta_idx]) - std::log(pi[theta_idx]);
    auto c = detail::make("single_draw", in, lambda);
    c.terms = {{"empirical", emp_risk_theta},
               {"variance", lambda * C * C / (8.0 * in.nd())},
               {"complexity", (log_ratio + in.log_inv_eps()) / lambda},
               {"log_density_ratio", log_ratio, false}};
    return detail::finish(std::move(c));
}

// ---------------------------------------------------------------------------
// Gaussian variational posterior
// ---------------------------------------------------------------------------

/// Anything with the interface below can be optimized. Losses must lie in [0,1].
template <class T>
concept SurrogateObjective = requires(const T& t, std::span<const double> theta, std::size_t i,
                                      std::span<double> g) {
    { t.dim() } -> std::convertible_to<std::size_t>;
    { t.size() } -> std::convertible_to<std::size_t>;
    { t.loss(theta, i) } -> std::convertible_to<double>;
    t.gradient(theta, i, g);  // accumulates d loss / d theta into g
};

enum class CertificateKind { catoni_linear, seeger };

struct VariationalConfig {
    std::size_t mc_samples = 32;
    double step_size = 0.05;
    std::size_t max_iters = 2000;
    std::uint64_t seed = 0;
    double split_fraction = 0.0;
    bool fixed_std = false;  // pin s to sigma / sqrt(n) and optimize the mean only
    std::size_t patience = 50;
    std::size_t cert_samples = 0;  // 0 means 10 * mc_samples
    std::size_t prior_iters = 200;
    CertificateKind certificate = CertificateKind::catoni_linear;

    void validate() const {
        require(mc_samples >= 1, "variational config: mc_samples must be >= 1");
        require(step_size > 0.0, "variational config: step_size must be > 0");
        require(split_fraction >= 0.0 && split_fraction < 1.0,
                "variational config: split_fraction must lie in [0,1)");
    }
};

struct GaussianFit {
    DiagonalGaussian posterior;
    std::vector<double> prior_mean;
    double prior_std = 1.0;
    std::size_t n_cert = 0;  // examples the certificate is computed on
    std::size_t offset = 0;  // index of the first certification example
    Certificate certificate;
    double kl = 0.0;
    double initial_objective = 0.0;
    double final_objective = 0.0;
    std::vector<double> trace;          // MC objective at every iteration
    std::vector<double> best_so_far;    // running minimum of trace
    double train_risk = 0.0;            // MC risk at the last iteration
    double train_risk_se = 0.0;
    double cert_risk = 0.0;             // fresh MC risk used by the certificate
    double cert_risk_se = 0.0;
};

namespace detail {

inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b)};
    return std::mt19937_64(seq);
}

struct McEstimate {
    double risk = 0.0;
    double se = 0.0;
    std::vector<double> grad_m;
    double grad_log_s = 0.0;
};

// Monte-Carlo estimate of E_{N(m, s^2 I)} of the average loss on [begin, end),
// with reparameterization gradients with respect to m and log s.
template <SurrogateObjective Obj>
McEstimate mc_risk(const Obj& obj, std::span<const double> m, double s, std::size_t begin,
                   std::size_t end, std::size_t samples, std::mt19937_64& rng, bool want_grad) {
    const std::size_t d = m.size();
    const double count = static_cast<double>(end - begin);
    McEstimate e;
    e.grad_m.assign(d, 0.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> z(d), theta(d), g(d);
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t k = 0; k < samples; ++k) {
        for (std::size_t i = 0; i < d; ++i) {
            z[i] = normal(rng);
            theta[i] = m[i] + s * z[i];
        }
        double r = 0.0;
        std::fill(g.begin(), g.end(), 0.0);
        for (std::size_t i = begin; i < end; ++i) {
            r += obj.loss(theta, i);
            if (want_grad) obj.gradient(theta, i, g);
        }
        r /= count;
        sum += r;
        sum_sq += r * r;
        if (want_grad)
            for (std::size_t i = 0; i < d; ++i) {
                e.grad_m[i] += g[i] / count;
                e.grad_log_s += g[i] / count * z[i] * s;
            }
    }
    const double S = static_cast<double>(samples);
    e.risk = sum / S;
    const double var = samples > 1 ? std::max(0.0, (sum_sq - S * e.risk * e.risk) / (S - 1.0)) : 0.0;
    e.se = std::sqrt(var / S);
    for (double& v : e.grad_m) v /= S;
    e.grad_log_s /= S;
    return e;
}

}  // namespace detail

/// Fits N(m, s^2 I) by gradient descent on (m, log s) of
/// MC risk + lambda/(8n) + (KL + log 1/eps)/lambda, then certifies the final
/// parameters with a fresh MC risk estimate.
///
/// With split_fraction > 0 the leading examples fit the prior mean (plain
/// gradient descent on their average loss) and only the rest enter the bound.
template <SurrogateObjective Obj>
GaussianFit optimize_gaussian_posterior(const Obj& obj, double prior_std,
                                        const VariationalConfig& cfg, double lambda, double eps) {
    cfg.validate();
    require(prior_std > 0.0, "optimize_gaussian_posterior: prior std must be > 0");
    require(lambda > 0.0, "optimize_gaussian_posterior: lambda must be > 0");
    require(eps > 0.0 && eps < 1.0, "optimize_gaussian_posterior: eps must lie in (0,1)");
    const std::size_t d = obj.dim();
    const std::size_t n_total = obj.size();
    const auto n_prior = static_cast<std::size_t>(std::floor(cfg.split_fraction * static_cast<double>(n_total)));
    require(n_total > n_prior, "optimize_gaussian_posterior: no examples left for the bound");

    GaussianFit fit;
    fit.prior_std = prior_std;
    fit.offset = n_prior;
    fit.n_cert = n_total - n_prior;
    fit.prior_mean.assign(d, 0.0);
    if (n_prior > 0) {
        std::vector<double> g(d);
        for (std::size_t it = 0; it < cfg.prior_iters; ++it) {
            std::fill(g.begin(), g.end(), 0.0);
            for (std::size_t i = 0; i < n_prior; ++i) obj.gradient(fit.prior_mean, i, g);
            for (std::size_t k = 0; k < d; ++k)
                fit.prior_mean[k] -= cfg.step_size * 10.0 * g[k] / static_cast<double>(n_prior);
        }
    }

    const double nd = static_cast<double>(fit.n_cert);
    const double sigma2 = prior_std * prior_std;
    const double log_inv_eps = -std::log(eps);
    std::vector<double> m = fit.prior_mean;
    double log_s = cfg.fixed_std ? std::log(prior_std / std::sqrt(nd)) : std::log(prior_std);

    auto kl_of = [&](std::span<const double> mm, double s) {
        return kl_gaussian_diag(DiagonalGaussian(std::vector<double>(mm.begin(), mm.end()), s),
                                fit.prior_mean, prior_std);
    };
    auto objective = [&](double risk, double kl) {
        return risk + lambda / (8.0 * nd) + (kl + log_inv_eps) / lambda;
    };

    double best = kInf;
    std::size_t bad = 0;
    detail::McEstimate est;
    for (std::size_t it = 0; it <= cfg.max_iters; ++it) {
        auto rng = detail::stream(cfg.seed, it);
        const double s = std::exp(log_s);
        const bool last = it == cfg.max_iters;
        est = detail::mc_risk(obj, m, s, n_prior, n_total, cfg.mc_samples, rng, !last);
        const double kl = kl_of(m, s);
        const double f = objective(est.risk, kl);
        if (!std::isfinite(f)) throw DomainError("optimize_gaussian_posterior: non-finite objective");
        if (it == 0) fit.initial_objective = f;
        fit.trace.push_back(f);
        best = std::min(best, f);
        fit.best_so_far.push_back(best);
        if (f > fit.initial_objective + std::max(1.0, std::abs(fit.initial_objective))) {
            if (++bad >= cfg.patience)
                throw DomainError("optimize_gaussian_posterior: objective diverged");
        } else {
            bad = 0;
        }
        if (last) break;

        for (std::size_t k = 0; k < d; ++k) {
            const double g = est.grad_m[k] + (m[k] - fit.prior_mean[k]) / sigma2 / lambda;
            if (!std::isfinite(g)) throw DomainError("optimize_gaussian_posterior: non-finite gradient");
            m[k] -= cfg.step_size * g;
        }
        if (!cfg.fixed_std) {
            const double g = est.grad_log_s + static_cast<double>(d) * (s * s / sigma2 - 1.0) / lambda;
            if (!std::isfinite(g)) throw DomainError("optimize_gaussian_posterior: non-finite gradient");
            log_s -= cfg.step_size * g;
        }
    }
    fit.train_risk = est.risk;
    fit.train_risk_se = est.se;
    fit.final_objective = fit.trace.back();

    const double s = std::exp(log_s);
    fit.posterior = DiagonalGaussian(m, s);
    fit.kl = kl_of(m, s);
    const std::size_t cert_samples = cfg.cert_samples ? cfg.cert_samples : 10 * cfg.mc_samples;
    auto rng = detail::stream(cfg.seed, cfg.max_iters + 1, 1);
    const auto fresh = detail::mc_risk(obj, m, s, n_prior, n_total, cert_samples, rng, false);
    fit.cert_risk = fresh.risk;
    fit.cert_risk_se = fresh.se;

    BoundInput in;
    in.emp_risk = std::clamp(fresh.risk, 0.0, 1.0);
    in.kl = fit.kl;
    in.n = fit.n_cert;
    in.eps = eps;
    in.C = 1.0;
    fit.certificate = cfg.certificate == CertificateKind::seeger ? bound_seeger_maurer(in)
                                                                 : bound_catoni_linear(in, lambda);
    return fit;
}

/// 1-D bounded quadratic: loss_i(theta) = min((theta - x_i)^2, 1).
struct BoundedQuadratic {
    std::vector<double> x;

    std::size_t dim() const { return 1; }
    std::size_t size() const { return x.size(); }
    double loss(std::span<const double> theta, std::size_t i) const {
        const double r = theta[0] - x[i];
        return std::min(r * r, 1.0);
    }
    void gradient(std::span<const double> theta, std::size_t i, std::span<double> g) const {
        const double r = theta[0] - x[i];
        if (r * r < 1.0) g[0] += 2.0 * r;
    }
};

/// Logistic surrogate log(1 + e^{-y <theta, x>}) / log 2 clipped at 1.
struct ClippedLogistic {
    std::vector<std::vector<double>> x;
    std::vector<double> y;  // labels in {-1, +1}

    std::size_t dim() const { return x.empty() ? 0 : x.front().size(); }
    std::size_t size() const { return x.size(); }
    double margin(std::span<const double> theta, std::size_t i) const {
        double s = 0.0;
        for (std::size_t k = 0; k < theta.size(); ++k) s += theta[k] * x[i][k];
        return y[i] * s;
    }
    double loss(std::span<const double> theta, std::size_t i) const {
        const double z = margin(theta, i);
        const double l = (z > 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z))) / std::log(2.0);
        return std::min(l, 1.0);
    }
    void gradient(std::span<const double> theta, std::size_t i, std::span<double> g) const {
        const double z = margin(theta, i);
        if (loss(theta, i) >= 1.0) return;
        const double dz = -1.0 / (1.0 + std::exp(z)) / std::log(2.0);
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += dz * y[i] * x[i][k];
    }
};

// ---------------------------------------------------------------------------
// Exponentially weighted aggregation
// ---------------------------------------------------------------------------

struct OnlineState {
    DiscreteDistribution weights;
    DiscreteDistribution prior;
    double eta = 1.0;
    double cum_loss = 0.0;
    std::vector<double> cum_best;  // cumulative loss of every expert
    std::size_t rounds = 0;
};

inline OnlineState ewa_init(const DiscreteDistribution& pi, double eta) {
    require(eta > 0.0 && std::isfinite(eta), "ewa: eta must be > 0");
    return {pi, pi, eta, 0.0, std::vector<double>(pi.size(), 0.0), 0};
}

/// Plays one round: suffers E_{rho_t} loss_t, then reweights. Returns the round loss.
inline double ewa_step(OnlineState& st, std::span<const double> round_losses) {
    require_same_size(st.weights.size(), round_losses.size(), "ewa_step");
    const double suffered = st.weights.expect(round_losses);
    st.cum_loss += suffered;
    for (std::size_t j = 0; j < round_losses.size(); ++j) st.cum_best[j] += round_losses[j];
    ++st.rounds;
    // Recompute from the prior and cumulative losses so that the weights after t
    // rounds coincide with the batch Gibbs posterior at temperature eta * t.
    std::vector<double> mean(st.cum_best.size());
    const double t = static_cast<double>(st.rounds);
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] = st.cum_best[j] / t;
    st.weights = gibbs_posterior(st.prior, mean, st.eta * t);
    return suffered;
}

struct EwaResult {
    OnlineState state;
    double regret = 0.0;
};

inline EwaResult ewa_run(const std::vector<std::vector<double>>& losses, double eta,
                         const DiscreteDistribution& pi) {
    auto st = ewa_init(pi, eta);
    for (const auto& row : losses) ewa_step(st, row);
    double best = kInf;
    for (double v : st.cum_best) best = std::min(best, v);
    return {st, losses.empty() ? 0.0 : st.cum_loss - best};
}

/// Horizon-dependent rate (2/C) sqrt(2 log M / T).
inline double ewa_horizon_eta(std::size_t M, std::size_t T, double C) {
    require(M >= 2, "ewa_horizon_eta: need at least two experts");
    require(T >= 1 && C > 0.0, "ewa_horizon_eta: need T >= 1 and C > 0");
    return 2.0 / C * std::sqrt(2.0 * std::log(static_cast<double>(M)) / static_cast<double>(T));
}

}  // namespace pacbayes
