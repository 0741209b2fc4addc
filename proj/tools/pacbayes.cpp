// pacbayes: certify posteriors, compare bounds, and run violation / rate experiments.
//
// Exit codes: 0 success, 2 malformed input or arguments, 3 a request that is
// well-formed but cannot be served (unknown bound, missing kappa, ...).

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pacbayes/commands.hpp"

namespace {

using namespace pacbayes;
using pacbayes::io::json;

constexpr int kExitSchema = 2;
constexpr int kExitSemantic = 3;

std::string fmt17(double v) {
    if (std::isnan(v)) return "NA";
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io::SchemaError(path + ": cannot open for writing");
    out << text;
}

void print_certificate(const Certificate& c) {
    std::cout << c.bound_id << ": " << fmt17(c.value);
    if (c.lambda) std::cout << "  (lambda=" << fmt17(*c.lambda) << ")";
    if (c.vacuous) std::cout << "  [vacuous]";
    std::cout << "\n";
    for (const auto& t : c.terms) std::cout << "  " << t.name << " = " << fmt17(t.value) << "\n";
}

struct ExperimentFile {
    TaskSpec spec;
    std::optional<std::size_t> n;
    std::optional<double> eps;
};

ExperimentFile load_experiment_file(const std::string& path) {
    const auto j = io::load_json_file(path);
    const auto f = io::parse_task_file(j, false);
    if (!f.task) throw io::SchemaError("field 'task': missing (a generative task is required)");
    try {
        (void)make_synthetic_task(*f.task);
    } catch (const DomainError& err) {
        throw io::SchemaError(std::string("field 'task': ") + err.what());
    }
    ExperimentFile e{*f.task, std::nullopt, std::nullopt};
    if (j.contains("n")) e.n = f.n;
    if (j.contains("eps")) e.eps = f.eps;
    return e;
}

PosteriorRule parse_rule(const std::string& s) {
    if (s == "erm" || s == "dirac") return PosteriorRule::erm();
    if (s.rfind("gibbs:", 0) == 0) {
        try {
            std::size_t used = 0;
            const double l = std::stod(s.substr(6), &used);
            if (used == s.size() - 6 && l > 0.0) return PosteriorRule::gibbs(l);
        } catch (const std::exception&) {
        }
    }
    throw io::SchemaError("--rule '" + s + "': expected 'erm' or 'gibbs:<lambda>'");
}

std::string experiment_csv(const ExperimentReport& rep, const std::string& summary) {
    std::ostringstream os;
    os << "# schema: 1\n";
    os << "n,seed,excess_risk,bound_value,violated\n";
    for (const auto& r : rep.rows)
        os << r.n << ',' << r.seed << ',' << fmt17(r.excess_risk) << ',' << fmt17(r.bound_value) << ','
           << (r.violated ? 1 : 0) << '\n';
    os << "# summary " << summary << '\n';
    return os.str();
}

std::vector<std::size_t> parse_grid(const std::string& s) {
    std::vector<std::size_t> g;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const long long v = std::stoll(item, &used);
            if (used != item.size() || v < 1) throw std::invalid_argument(item);
            g.push_back(static_cast<std::size_t>(v));
        } catch (const std::exception&) {
            throw io::SchemaError("--n-grid: '" + item + "' is not a positive integer");
        }
    }
    if (g.size() < 5) throw io::SchemaError("--n-grid: need at least five sample sizes");
    const double ratio = static_cast<double>(g[1]) / static_cast<double>(g[0]);
    if (!(ratio > 1.0)) throw io::SchemaError("--n-grid: sizes must increase");
    for (std::size_t k = 1; k < g.size(); ++k) {
        const double r = static_cast<double>(g[k]) / static_cast<double>(g[k - 1]);
        if (std::abs(r / ratio - 1.0) > 0.05) throw io::SchemaError("--n-grid: not geometric");
    }
    return g;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PAC-Bayes certificates and experiments"};
    app.require_subcommand(1);

    std::string task_path, out_path, posterior = "dirac", bound = "catoni_linear", grid = "geometric";
    std::optional<double> lambda, eps, delta_tail;
    double xi = 0.5;

    auto* certify = app.add_subcommand("certify", "bound the risk of one posterior");
    certify->add_option("task", task_path, "task file (JSON)")->required();
    certify->add_option("--bound", bound, "bound identifier");
    certify->add_option("--lambda", lambda, "temperature / free parameter of the bound");
    certify->add_option("--posterior", posterior, "dirac | dirac:k | gibbs | gibbs:beta | weights file");
    certify->add_option("--grid", grid, "lambda grid for lambda_grid: geometric | arithmetic");
    certify->add_option("--xi", xi, "localization level for localized_empirical");
    certify->add_option("--delta-tail", delta_tail, "tail term for the truncated bound");
    certify->add_option("--eps", eps, "confidence level (overrides the file)");
    certify->add_option("--out", out_path, "write the certificate JSON here");

    auto* compare = app.add_subcommand("compare", "evaluate every applicable bound");
    compare->add_option("task", task_path, "task file (JSON)")->required();
    compare->add_option("--posterior", posterior, "posterior selector, as for certify");
    compare->add_option("--eps", eps, "confidence level (overrides the file)");
    compare->add_option("--out", out_path, "write the comparison JSON here");

    std::size_t trials = 1000, reps = 200;
    long long trials_raw = 1000, reps_raw = 200;
    std::uint64_t seed = 0;
    std::optional<std::size_t> n_opt;
    std::string rule = "erm", rate_rule = "fast", n_grid = "100,200,400,800,1600,3200,6400,12800";
    double corruption = 1.0, thiemann_lambda = 1.0;

    auto* violate = app.add_subcommand("violate", "Monte-Carlo bound violation frequency");
    violate->add_option("task", task_path, "experiment file with a generative 'task'")->required();
    violate->add_option("--bound", bound, "bound identifier");
    violate->add_option("--trials", trials_raw, "number of simulated samples");
    violate->add_option("--seed", seed, "base RNG seed");
    violate->add_option("--n", n_opt, "sample size (overrides the file)");
    violate->add_option("--eps", eps, "confidence level (overrides the file)");
    violate->add_option("--rule", rule, "posterior rule: erm | gibbs:<lambda>");
    violate->add_option("--lambda", lambda, "bound lambda (default: closed form at log M)");
    violate->add_option("--thiemann-lambda", thiemann_lambda, "lambda of the thiemann bound");
    violate->add_option("--xi", xi, "localization level for localized_empirical");
    violate->add_option("--corruption", corruption, "scale every bound value (control runs)");
    violate->add_option("--out", out_path, "CSV output path");

    auto* rates = app.add_subcommand("rates", "excess-risk decay of the Gibbs posterior");
    rates->add_option("task", task_path, "experiment file with a generative 'task'")->required();
    rates->add_option("--n-grid", n_grid, "comma-separated geometric sample sizes");
    rates->add_option("--reps", reps_raw, "repetitions per sample size");
    rates->add_option("--rule", rate_rule, "fast | slow");
    rates->add_option("--seed", seed, "base RNG seed");
    rates->add_option("--out", out_path, "CSV output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitSchema;
    }

    try {
        if (*certify) {
            commands::CertifyOptions opt;
            opt.bound = bound;
            opt.lambda = lambda;
            opt.posterior = commands::parse_posterior(posterior);
            opt.grid = grid;
            opt.xi = xi;
            opt.delta_tail = delta_tail;
            opt.eps = eps;
            const auto f = io::parse_task_file(io::load_json_file(task_path));
            const auto cert = commands::certify(f, opt);
            const std::string text = io::certificate_to_json(cert).dump(2) + "\n";
            if (out_path.empty()) {
                std::cout << text;
            } else {
                write_text(out_path, text);
                print_certificate(cert);
            }
        } else if (*compare) {
            const auto f = io::parse_task_file(io::load_json_file(task_path));
            const auto cmp = commands::compare(f, commands::parse_posterior(posterior), eps);
            json j;
            j["schema"] = io::kSchemaVersion;
            j["tightest"] = cmp.tightest;
            j["certificates"] = json::array();
            for (const auto& c : cmp.certificates) j["certificates"].push_back(io::certificate_to_json(c));
            if (!out_path.empty()) write_text(out_path, j.dump(2) + "\n");
            for (const auto& c : cmp.certificates)
                std::cout << std::left << std::setw(20) << c.bound_id << ' ' << fmt17(c.value)
                          << (c.vacuous ? "  [vacuous]" : "") << '\n';
            std::cout << "tightest: " << cmp.tightest << '\n';
        } else if (*violate) {
            if (trials_raw < 1) throw io::SchemaError("--trials must be >= 1");
            trials = static_cast<std::size_t>(trials_raw);
            const auto ef = load_experiment_file(task_path);
            const auto task = make_synthetic_task(ef.spec);
            ViolationConfig cfg;
            cfg.bound_id = bound;
            cfg.rule = parse_rule(rule);
            cfg.n = n_opt.value_or(ef.n.value_or(500));
            if (cfg.n < 1) throw io::SchemaError("--n must be >= 1");
            cfg.eps = eps.value_or(ef.eps.value_or(0.05));
            if (!(cfg.eps > 0.0 && cfg.eps < 1.0)) throw io::SchemaError("--eps must lie in (0,1)");
            cfg.trials = trials;
            cfg.seed = seed;
            cfg.corruption_factor = corruption;
            cfg.thiemann_lambda = thiemann_lambda;
            cfg.xi = xi;
            cfg.lambda = lambda;
            const auto rep = violation_experiment(task, cfg);
            std::ostringstream sum;
            sum << "bound=" << bound << " trials=" << rep.trials << " violations=" << rep.violations
                << " violation_rate=" << fmt17(rep.violation_rate) << " se=" << fmt17(rep.se)
                << " mean_bound=" << fmt17(rep.mean_bound) << " mean_true_risk=" << fmt17(rep.mean_true_risk);
            write_text(out_path, experiment_csv(rep, sum.str()));
            if (!out_path.empty()) std::cout << sum.str() << '\n';
        } else if (*rates) {
            if (reps_raw < 1) throw io::SchemaError("--reps must be >= 1");
            reps = static_cast<std::size_t>(reps_raw);
            if (rate_rule != "fast" && rate_rule != "slow") throw io::SchemaError("--rule must be 'fast' or 'slow'");
            const auto grid_v = parse_grid(n_grid);
            const auto ef = load_experiment_file(task_path);
            const auto task = make_synthetic_task(ef.spec);
            const auto rep = rate_experiment(task, grid_v, reps, seed,
                                             rate_rule == "fast" ? RateRule::fast : RateRule::slow);
            ExperimentReport per_n;
            for (std::size_t g = 0; g < grid_v.size(); ++g)
                per_n.rows.push_back({grid_v[g], seed, rep.mean_excess[g], std::nan(""), false});
            std::ostringstream sum;
            sum << "rule=" << rate_rule << " reps=" << reps
                << " slope=" << (rep.slope ? fmt17(*rep.slope) : std::string("NA"));
            write_text(out_path, experiment_csv(per_n, sum.str()));
            if (!out_path.empty()) std::cout << sum.str() << '\n';
        }
    } catch (const io::SchemaError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitSchema;
    } catch (const SemanticError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitSemantic;
    } catch (const std::invalid_argument& e) {
        // Domain errors raised while evaluating a bound on well-formed input.
        std::cerr << "error: " << e.what() << '\n';
        return kExitSemantic;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitSemantic;
    }
    return 0;
}
