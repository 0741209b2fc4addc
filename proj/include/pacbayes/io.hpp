// JSON task files and report serialization. Requires nlohmann/json.
#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bounds.hpp"
#include "divergences.hpp"
#include "oracle_lab.hpp"

namespace pacbayes::io {

using nlohmann::json;

/// Malformed input file: missing or mistyped fields, bad lengths, bad sums.
class SchemaError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kSchemaVersion = 1;

struct TaskFile {
    std::size_t n = 0;
    double eps = 0.05;
    double C = 1.0;
    std::vector<double> log_prior;  // per-hypothesis log prior mass
    std::optional<DiscreteDistribution> prior;  // present when given as plain weights
    std::vector<double> emp_risk;
    std::optional<std::vector<double>> true_risk;
    std::optional<std::vector<std::vector<double>>> losses;
    std::optional<double> kappa;
    std::optional<double> log_M;  // class size for the union bound, in nats
    std::optional<TaskSpec> task;

    std::size_t size() const { return emp_risk.size(); }
    double log_cardinality() const {
        return log_M.value_or(std::log(static_cast<double>(emp_risk.size())));
    }
};

namespace detail {

[[noreturn]] inline void fail(const std::string& field, const std::string& what) {
    throw SchemaError("field '" + field + "': " + what);
}

inline double get_number(const json& j, const std::string& key) {
    if (!j.contains(key)) fail(key, "missing");
    if (!j[key].is_number()) fail(key, "expected a number");
    return j[key].get<double>();
}

inline std::vector<double> get_vector(const json& j, const std::string& key) {
    if (!j[key].is_array()) fail(key, "expected an array of numbers");
    std::vector<double> v;
    for (std::size_t i = 0; i < j[key].size(); ++i) {
        const auto& e = j[key][i];
        if (!e.is_number()) fail(key + "[" + std::to_string(i) + "]", "expected a number");
        v.push_back(e.get<double>());
    }
    return v;
}

inline bool is_count(const json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
}

inline void check_schema(const json& j) {
    if (!j.is_object()) throw SchemaError("top level: expected a JSON object");
    if (j.contains("schema")) {
        if (!j["schema"].is_number_integer() || j["schema"].get<int>() != kSchemaVersion)
            fail("schema", "unsupported version (expected 1)");
    }
}

inline TaskKind parse_kind(const std::string& s) {
    if (s == "risk_table") return TaskKind::risk_table;
    if (s == "threshold_margin") return TaskKind::threshold_margin;
    if (s == "heavy_tail") return TaskKind::heavy_tail;
    fail("task.kind", "unknown kind '" + s + "'");
}

}  // namespace detail

inline TaskSpec parse_task_spec(const json& t) {
    using namespace detail;
    if (!t.is_object()) fail("task", "expected an object");
    if (!t.contains("kind") || !t["kind"].is_string()) fail("task.kind", "missing or not a string");
    TaskSpec s;
    s.kind = parse_kind(t["kind"].get<std::string>());
    if (t.contains("p")) s.p = get_vector(t, "p");
    if (t.contains("shared_noise")) {
        if (!t["shared_noise"].is_boolean()) fail("task.shared_noise", "expected a boolean");
        s.shared_noise = t["shared_noise"].get<bool>();
    }
    if (t.contains("tau")) s.tau = get_number(t, "tau");
    if (t.contains("grid_size")) {
        if (!is_count(t["grid_size"])) fail("task.grid_size", "expected a positive integer");
        s.grid_size = t["grid_size"].get<std::size_t>();
    }
    if (t.contains("star")) {
        if (!is_count(t["star"])) fail("task.star", "expected a nonnegative integer");
        s.star = t["star"].get<std::size_t>();
    }
    if (t.contains("scale")) s.scale = get_vector(t, "scale");
    if (t.contains("alpha")) s.alpha = get_number(t, "alpha");
    if (s.kind == TaskKind::risk_table && s.p.empty()) fail("task.p", "risk_table needs error rates");
    if (s.kind == TaskKind::heavy_tail && s.scale.empty()) fail("task.scale", "heavy_tail needs scales");
    return s;
}

inline json task_spec_to_json(const TaskSpec& s) {
    json t;
    t["kind"] = to_string(s.kind);
    switch (s.kind) {
        case TaskKind::risk_table:
            t["p"] = s.p;
            t["shared_noise"] = s.shared_noise;
            break;
        case TaskKind::threshold_margin:
            t["tau"] = s.tau;
            t["grid_size"] = s.grid_size;
            if (s.star) t["star"] = *s.star;
            break;
        case TaskKind::heavy_tail:
            t["scale"] = s.scale;
            t["alpha"] = s.alpha;
            break;
    }
    return t;
}

/// Parses and validates a task file. Risk tables need n, eps, C, emp_risk and a
/// prior (weights or log masses); files carrying only a generative "task" are
/// accepted with `require_table = false`.
inline TaskFile parse_task_file(const json& j, bool require_table = true) {
    using namespace detail;
    check_schema(j);
    TaskFile f;
    if (j.contains("task")) f.task = parse_task_spec(j["task"]);

    if (j.contains("n") || require_table) {
        if (!j.contains("n")) fail("n", "missing");
        if (!is_count(j["n"]) || j["n"].get<std::size_t>() < 1)
            fail("n", "expected a positive integer");
        f.n = j["n"].get<std::size_t>();
    }
    if (j.contains("eps") || require_table) {
        f.eps = get_number(j, "eps");
        if (!(f.eps > 0.0 && f.eps < 1.0)) fail("eps", "must lie in (0,1)");
    }
    if (j.contains("C")) {
        f.C = get_number(j, "C");
        if (!(f.C > 0.0)) fail("C", "must be > 0");
    } else if (require_table) {
        fail("C", "missing");
    }
    if (!require_table && !j.contains("emp_risk")) return f;

    if (!j.contains("emp_risk")) fail("emp_risk", "missing");
    f.emp_risk = get_vector(j, "emp_risk");
    if (f.emp_risk.empty()) fail("emp_risk", "must not be empty");
    for (std::size_t i = 0; i < f.emp_risk.size(); ++i)
        if (!(f.emp_risk[i] >= 0.0 && f.emp_risk[i] <= f.C))
            fail("emp_risk[" + std::to_string(i) + "]", "outside [0, C]");
    const std::size_t M = f.emp_risk.size();

    if (j.contains("prior") && j.contains("log_prior_mass"))
        fail("prior", "give either 'prior' or 'log_prior_mass', not both");
    if (j.contains("prior")) {
        auto w = get_vector(j, "prior");
        if (w.size() != M)
            fail("prior", "length " + std::to_string(w.size()) + " differs from emp_risk length " +
                              std::to_string(M));
        double s = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (!(w[i] >= 0.0)) fail("prior[" + std::to_string(i) + "]", "must be >= 0");
            s += w[i];
        }
        if (std::abs(s - 1.0) > 1e-9) {
            std::ostringstream os;
            os << "sums to " << s << " (expected 1 within 1e-9)";
            fail("prior", os.str());
        }
        f.prior = DiscreteDistribution(w, 1e-9);
        f.log_prior.resize(M);
        for (std::size_t i = 0; i < M; ++i) f.log_prior[i] = w[i] > 0.0 ? std::log((*f.prior)[i]) : -kInf;
    } else if (j.contains("log_prior_mass")) {
        f.log_prior = get_vector(j, "log_prior_mass");
        if (f.log_prior.size() != M) fail("log_prior_mass", "length differs from emp_risk length");
        for (std::size_t i = 0; i < M; ++i)
            if (!(f.log_prior[i] <= 1e-12)) fail("log_prior_mass[" + std::to_string(i) + "]", "must be <= 0");
        // The listed atoms may be a subset of a larger class; only check total mass <= 1.
        if (log_sum_exp(f.log_prior) > 1e-9) fail("log_prior_mass", "total mass exceeds 1");
    } else {
        fail("prior", "missing (give 'prior' or 'log_prior_mass')");
    }

    if (j.contains("true_risk")) {
        auto v = get_vector(j, "true_risk");
        if (v.size() != M) fail("true_risk", "length differs from emp_risk length");
        f.true_risk = std::move(v);
    }
    if (j.contains("losses")) {
        if (!j["losses"].is_array()) fail("losses", "expected an array of rows");
        std::vector<std::vector<double>> rows;
        for (std::size_t i = 0; i < j["losses"].size(); ++i) {
            const auto& row = j["losses"][i];
            if (!row.is_array() || row.size() != M)
                fail("losses[" + std::to_string(i) + "]", "expected " + std::to_string(M) + " numbers");
            std::vector<double> r;
            for (const auto& e : row) {
                if (!e.is_number()) fail("losses[" + std::to_string(i) + "]", "expected numbers");
                r.push_back(e.get<double>());
            }
            rows.push_back(std::move(r));
        }
        if (rows.size() != f.n) fail("losses", "row count differs from n");
        RiskTable t;
        t.emp_risk = f.emp_risk;
        t.n = f.n;
        t.C = f.C;
        t.losses = rows;
        try {
            t.validate();
        } catch (const std::invalid_argument& e) {
            fail("losses", e.what());
        }
        f.losses = std::move(rows);
    }
    if (j.contains("kappa")) {
        f.kappa = get_number(j, "kappa");
        if (!(*f.kappa > 0.0)) fail("kappa", "must be > 0");
    }
    if (j.contains("log_M")) {
        f.log_M = get_number(j, "log_M");
        if (!(*f.log_M >= std::log(static_cast<double>(M)) - 1e-9))
            fail("log_M", "smaller than the log of the number of listed hypotheses");
    }
    return f;
}

inline json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError(path + ": cannot open file");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw SchemaError(path + ": " + e.what());
    }
}

inline json certificate_to_json(const Certificate& c) {
    json j;
    j["schema"] = kSchemaVersion;
    j["bound"] = c.bound_id;
    j["value"] = c.value;
    if (c.lambda) j["lambda"] = *c.lambda;
    j["eps"] = c.eps;
    json terms = json::object();
    for (const auto& t : c.terms) terms[t.name] = t.value;
    j["terms"] = terms;
    j["vacuous"] = c.vacuous;
    return j;
}

}  // namespace pacbayes::io
