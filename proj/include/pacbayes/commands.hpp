// Library side of the command-line tool: everything the CLI prints is computed
// here, so tests can check command output against direct calls.
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "bounds.hpp"
#include "divergences.hpp"
#include "io.hpp"
#include "oracle_lab.hpp"
#include "posteriors.hpp"

namespace pacbayes::commands {

/// Posterior selector: "dirac" (ERM, lowest index on ties), "dirac:k",
/// "gibbs" (temperature equal to the bound's lambda), "gibbs:beta", or explicit weights.
struct PosteriorChoice {
    enum class Kind { erm, dirac, gibbs, weights } kind = Kind::erm;
    std::size_t index = 0;
    std::optional<double> beta;
    std::vector<double> weights;
};

inline PosteriorChoice parse_posterior(const std::string& s) {
    PosteriorChoice p;
    if (s.empty() || s == "dirac" || s == "erm") return p;
    auto after = [&](std::size_t k) { return s.substr(k); };
    try {
        if (s.rfind("dirac:", 0) == 0) {
            p.kind = PosteriorChoice::Kind::dirac;
            std::size_t used = 0;
            const long long v = std::stoll(after(6), &used);
            if (used != s.size() - 6 || v < 0) throw std::invalid_argument("index");
            p.index = static_cast<std::size_t>(v);
            return p;
        }
        if (s == "gibbs") {
            p.kind = PosteriorChoice::Kind::gibbs;
            return p;
        }
        if (s.rfind("gibbs:", 0) == 0) {
            p.kind = PosteriorChoice::Kind::gibbs;
            std::size_t used = 0;
            p.beta = std::stod(after(6), &used);
            if (used != s.size() - 6 || !(*p.beta >= 0.0)) throw std::invalid_argument("beta");
            return p;
        }
    } catch (const std::exception&) {
        throw io::SchemaError("posterior '" + s + "': malformed selector");
    }
    // Anything else names a JSON file holding {"weights": [...]} or a bare array.
    const auto j = io::load_json_file(s);
    const auto& arr = j.is_object() && j.contains("weights") ? j["weights"] : j;
    if (!arr.is_array()) throw io::SchemaError(s + ": expected an array of weights");
    p.kind = PosteriorChoice::Kind::weights;
    for (const auto& e : arr) {
        if (!e.is_number()) throw io::SchemaError(s + ": weights must be numbers");
        p.weights.push_back(e.get<double>());
    }
    return p;
}

/// Posterior summary over the hypotheses listed in a task file.
struct Summary {
    DiscreteDistribution rho;
    double emp_risk = 0.0;
    double kl = 0.0;
    double chi2 = 0.0;
};

inline Summary summarize(const io::TaskFile& f, const DiscreteDistribution& rho) {
    require_same_size(rho.size(), f.size(), "posterior");
    Summary s{rho, std::min(rho.expect(f.emp_risk), f.C), kl_discrete_log_prior(rho, f.log_prior), 0.0};
    double acc = 0.0;
    for (std::size_t j = 0; j < rho.size(); ++j) {
        if (rho[j] <= 0.0) continue;
        if (f.log_prior[j] == -kInf) {
            acc = kInf;
            break;
        }
        acc += std::exp(2.0 * std::log(rho[j]) - f.log_prior[j]);
    }
    s.chi2 = std::max(0.0, acc - 1.0);
    return s;
}

inline DiscreteDistribution resolve_posterior(const io::TaskFile& f, const PosteriorChoice& p,
                                              double default_beta) {
    const std::size_t M = f.size();
    switch (p.kind) {
        case PosteriorChoice::Kind::erm: {
            const auto k = static_cast<std::size_t>(
                std::min_element(f.emp_risk.begin(), f.emp_risk.end()) - f.emp_risk.begin());
            return DiscreteDistribution::dirac(M, k);
        }
        case PosteriorChoice::Kind::dirac:
            if (p.index >= M) throw SemanticError("posterior dirac:" + std::to_string(p.index) + " out of range");
            return DiscreteDistribution::dirac(M, p.index);
        case PosteriorChoice::Kind::gibbs: {
            const double beta = p.beta.value_or(default_beta);
            std::vector<double> logw(M);
            for (std::size_t j = 0; j < M; ++j) logw[j] = f.log_prior[j] - beta * f.emp_risk[j];
            return DiscreteDistribution::from_log(logw);
        }
        case PosteriorChoice::Kind::weights:
            if (p.weights.size() != M) throw io::SchemaError("posterior weights: length differs from emp_risk length");
            try {
                return DiscreteDistribution(p.weights, 1e-9);
            } catch (const DomainError& e) {
                throw io::SchemaError(std::string("posterior weights: ") + e.what());
            }
    }
    return DiscreteDistribution::uniform(M);
}

struct CertifyOptions {
    std::string bound = "catoni_linear";
    std::optional<double> lambda;
    PosteriorChoice posterior;
    std::string grid = "geometric";
    double xi = 0.5;
    std::optional<double> delta_tail;
    std::optional<double> eps;  // overrides the file
};

inline const std::vector<std::string>& certify_catalog() {
    static const std::vector<std::string> ids = {
        "union_finite",      "catoni_linear", "lambda_grid", "mcallester",  "seeger",
        "tolstikhin_seldin", "thiemann",      "catoni_phi",  "subgaussian", "chi_square",
        "truncated",         "localized_empirical"};
    return ids;
}

/// lambda used when the caller gives none. For the Catoni-type bounds this is the
/// closed-form minimizer at the ERM Dirac's divergence to the prior (data-independent
/// when the prior is uniform).
inline double default_lambda(const io::TaskFile& f, const std::string& bound) {
    if (bound == "thiemann") return 1.0;
    const double nd = static_cast<double>(f.n);
    const double cplx = f.log_cardinality() - std::log(f.eps);
    if (bound == "subgaussian") return std::sqrt(nd * cplx) / f.C;
    return select_lambda_closed_form(f.log_cardinality(), f.n, f.eps, f.C);
}

inline Certificate certify(io::TaskFile f, const CertifyOptions& opt) {
    using std::find;
    if (find(certify_catalog().begin(), certify_catalog().end(), opt.bound) == certify_catalog().end())
        throw SemanticError("unknown bound id '" + opt.bound + "'");
    if (opt.eps) {
        if (!(*opt.eps > 0.0 && *opt.eps < 1.0)) throw io::SchemaError("--eps must lie in (0,1)");
        f.eps = *opt.eps;
    }
    const double lam = opt.lambda.value_or(default_lambda(f, opt.bound));
    const auto rho = resolve_posterior(f, opt.posterior, lam);
    const auto s = summarize(f, rho);

    BoundInput in;
    in.emp_risk = s.emp_risk;
    in.kl = s.kl;
    in.n = f.n;
    in.eps = f.eps;
    in.C = f.C;
    const std::string& b = opt.bound;
    if (b == "union_finite")
        return bound_union_finite(s.emp_risk, LogCardinality::from_log(f.log_cardinality()), f.n, f.eps, f.C);
    if (b == "catoni_linear") return bound_catoni_linear(in, lam);
    if (b == "lambda_grid") {
        if (opt.grid != "geometric" && opt.grid != "arithmetic")
            throw io::SchemaError("--grid must be 'geometric' or 'arithmetic'");
        return bound_lambda_grid(in, opt.grid == "geometric" ? geometric_grid(f.n) : arithmetic_grid(f.n));
    }
    if (b == "mcallester") return bound_mcallester_maurer(in);
    if (b == "seeger") return bound_seeger_maurer(in);
    if (b == "tolstikhin_seldin") return bound_tolstikhin_seldin(in);
    if (b == "thiemann") {
        if (!(lam > 0.0 && lam < 2.0)) throw SemanticError("thiemann needs lambda in (0,2)");
        return bound_thiemann(in, lam);
    }
    if (b == "catoni_phi") return bound_catoni_phi(in, lam);
    if (b == "subgaussian") return bound_subgaussian(in, lam);
    if (b == "chi_square") {
        if (!f.kappa) throw SemanticError("chi_square needs 'kappa' in the task file");
        in.kappa = f.kappa;
        in.chi2 = s.chi2;
        return bound_chi_square(in);
    }
    if (b == "truncated") {
        if (!f.losses) throw SemanticError("truncated needs per-example 'losses' in the task file");
        double trunc = 0.0;
        std::vector<double> col(f.n);
        for (std::size_t j = 0; j < f.size(); ++j) {
            if (rho[j] <= 0.0) continue;
            for (std::size_t i = 0; i < f.n; ++i) col[i] = (*f.losses)[i][j];
            trunc += rho[j] * truncated_empirical_risk(col, lam);
        }
        double delta = 0.0;
        if (opt.delta_tail) {
            delta = *opt.delta_tail;
        } else if (static_cast<double>(f.n) / lam < f.C) {
            throw SemanticError("truncated: n/lambda < C, so the tail term must be given (--delta-tail)");
        }
        return bound_truncated(in, lam, trunc, delta);
    }
    if (b == "localized_empirical") {
        if (!f.prior) throw SemanticError("localized_empirical needs a full 'prior' weight vector");
        RiskTable t;
        t.emp_risk = f.emp_risk;
        t.n = f.n;
        t.C = f.C;
        return bound_localized_empirical(t, rho, *f.prior, lam, opt.xi, f.eps);
    }
    throw SemanticError("unknown bound id '" + b + "'");
}

struct Comparison {
    std::vector<Certificate> certificates;  // sorted by value, ascending
    std::string tightest;
};

/// Every applicable bound at its default configuration. Thiemann's lambda is
/// chosen on a 19-point grid in (0,2) with eps split evenly across the grid.
/// The localized empirical bound is left out (see the README).
inline Comparison compare(io::TaskFile f, const PosteriorChoice& posterior, std::optional<double> eps) {
    if (eps) {
        if (!(*eps > 0.0 && *eps < 1.0)) throw io::SchemaError("--eps must lie in (0,1)");
        f.eps = *eps;
    }
    Comparison out;
    CertifyOptions o;
    o.posterior = posterior;
    for (const std::string b : {"union_finite", "catoni_linear", "lambda_grid", "mcallester", "seeger",
                                "tolstikhin_seldin", "catoni_phi"}) {
        o.bound = b;
        out.certificates.push_back(certify(f, o));
    }
    {
        io::TaskFile g = f;
        const int steps = 19;
        g.eps = f.eps / steps;
        std::optional<Certificate> best;
        for (int k = 1; k <= steps; ++k) {
            o.bound = "thiemann";
            o.lambda = 0.1 * k;
            auto c = certify(g, o);
            c.eps = f.eps;
            if (!best || c.value < best->value) best = c;
        }
        out.certificates.push_back(*best);
        o.lambda.reset();
    }
    if (f.kappa) {
        o.bound = "chi_square";
        out.certificates.push_back(certify(f, o));
    }
    if (f.losses && static_cast<double>(f.n) / default_lambda(f, "truncated") >= f.C) {
        o.bound = "truncated";
        out.certificates.push_back(certify(f, o));
    }
    std::stable_sort(out.certificates.begin(), out.certificates.end(),
                     [](const Certificate& a, const Certificate& b) { return a.value < b.value; });
    out.tightest = out.certificates.front().bound_id;
    return out;
}

}  // namespace pacbayes::commands
