#include <cmath>
#include <map>
#include <string>

#include <gtest/gtest.h>

#include "pacbayes/commands.hpp"
#include "pacbayes/io.hpp"

using namespace pacbayes;
using io::json;

namespace {

json base_file() {
    return json{{"schema", 1}, {"n", 100}, {"eps", 0.05}, {"C", 1.0},
                {"prior", {0.25, 0.25, 0.5}}, {"emp_risk", {0.1, 0.2, 0.3}}};
}

std::string schema_message(const json& j) {
    try {
        io::parse_task_file(j);
    } catch (const io::SchemaError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(TaskFile, ParsesValidFile) {
    const auto f = io::parse_task_file(base_file());
    EXPECT_EQ(f.n, 100u);
    EXPECT_EQ(f.size(), 3u);
    EXPECT_NEAR(f.log_prior[2], std::log(0.5), 1e-15);
    EXPECT_NEAR(f.log_cardinality(), std::log(3.0), 1e-15);
    ASSERT_TRUE(f.prior.has_value());
}

TEST(TaskFile, SchemaErrorsNameTheField) {
    auto j = base_file();
    j["prior"] = {0.3, 0.3, 0.3};
    EXPECT_NE(schema_message(j).find("'prior'"), std::string::npos);
    EXPECT_NE(schema_message(j).find("sums to 0.9"), std::string::npos);

    j = base_file();
    j.erase("n");
    EXPECT_NE(schema_message(j).find("'n'"), std::string::npos);

    j = base_file();
    j["emp_risk"] = {0.1, 1.2, 0.3};
    EXPECT_NE(schema_message(j).find("emp_risk[1]"), std::string::npos);

    j = base_file();
    j["prior"] = {0.5, 0.5};
    EXPECT_NE(schema_message(j).find("length"), std::string::npos);

    j = base_file();
    j["eps"] = 1.5;
    EXPECT_NE(schema_message(j).find("'eps'"), std::string::npos);

    j = base_file();
    j["schema"] = 2;
    EXPECT_NE(schema_message(j).find("'schema'"), std::string::npos);

    j = base_file();
    j["emp_risk"] = {0.1, "x", 0.3};
    EXPECT_NE(schema_message(j).find("emp_risk[1]"), std::string::npos);

    EXPECT_FALSE(schema_message(json::array()).empty());
}

TEST(TaskFile, LogPriorMassForHugeClasses) {
    json j = {{"n", 10000}, {"eps", 0.05}, {"C", 1.0}, {"log_M", 1000100.0 * std::log(2.0)},
              {"log_prior_mass", {-1000100.0 * std::log(2.0)}}, {"emp_risk", {0.0}}};
    const auto f = io::parse_task_file(j);
    EXPECT_NEAR(f.log_cardinality(), 1000100.0 * std::log(2.0), 1e-6);
    EXPECT_FALSE(f.prior.has_value());
    j["log_prior_mass"] = {0.5};
    EXPECT_THROW(io::parse_task_file(j), io::SchemaError);
    j["log_prior_mass"] = {-0.1};
    j["log_M"] = -1.0;
    EXPECT_THROW(io::parse_task_file(j), io::SchemaError);
}

TEST(TaskFile, LossesMustMatchEmpiricalRisk) {
    auto j = base_file();
    j["n"] = 2;
    j["emp_risk"] = {0.5, 0.0, 1.0};
    j["losses"] = {{1.0, 0.0, 1.0}, {0.0, 0.0, 1.0}};
    EXPECT_NO_THROW(io::parse_task_file(j));
    j["emp_risk"] = {0.4, 0.0, 1.0};
    EXPECT_NE(schema_message(j).find("'losses'"), std::string::npos);
    j["emp_risk"] = {0.5, 0.0, 1.0};
    j["losses"] = {{1.0, 0.0, 1.0}};
    EXPECT_NE(schema_message(j).find("row count"), std::string::npos);
}

TEST(TaskFile, GenerativeTaskOnly) {
    const json j = {{"schema", 1}, {"n", 500}, {"task", {{"kind", "risk_table"}, {"p", {0.1, 0.4}}}}};
    const auto f = io::parse_task_file(j, false);
    ASSERT_TRUE(f.task.has_value());
    EXPECT_EQ(f.task->p.size(), 2u);
    EXPECT_THROW(io::parse_task_file(j, true), io::SchemaError);
    const json bad = {{"task", {{"kind", "mystery"}}}};
    EXPECT_THROW(io::parse_task_file(bad, false), io::SchemaError);
}

TEST(TaskSpecJson, RoundTrip) {
    TaskSpec s;
    s.kind = TaskKind::threshold_margin;
    s.tau = 0.2;
    s.grid_size = 21;
    s.star = 3;
    const auto back = io::parse_task_spec(io::task_spec_to_json(s));
    EXPECT_EQ(back.kind, s.kind);
    EXPECT_EQ(back.tau, s.tau);
    EXPECT_EQ(back.grid_size, s.grid_size);
    EXPECT_EQ(back.star, s.star);
    TaskSpec h;
    h.kind = TaskKind::heavy_tail;
    h.scale = {0.5, 1.0 / 3.0};
    h.alpha = 3.5;
    const auto hb = io::parse_task_spec(io::task_spec_to_json(h));
    EXPECT_EQ(hb.scale, h.scale);
    EXPECT_EQ(hb.alpha, h.alpha);
}

TEST(CertificateJson, ValueRoundTripsExactly) {
    BoundInput in;
    in.emp_risk = 0.26;
    in.kl = std::log(100.0);
    in.n = 1000;
    in.eps = 0.05;
    const auto c = bound_seeger_maurer(in);
    const auto j = json::parse(io::certificate_to_json(c).dump());
    EXPECT_EQ(j["value"].get<double>(), c.value);
    EXPECT_EQ(j["schema"].get<int>(), 1);
    EXPECT_EQ(j["bound"].get<std::string>(), "seeger");
    EXPECT_EQ(j["terms"]["budget"].get<double>(), *c.term("budget"));
    EXPECT_FALSE(j["vacuous"].get<bool>());
    EXPECT_FALSE(j.contains("lambda"));
}

TEST(Commands, PosteriorSelectors) {
    EXPECT_EQ(commands::parse_posterior("dirac").kind, commands::PosteriorChoice::Kind::erm);
    const auto k = commands::parse_posterior("dirac:4");
    EXPECT_EQ(k.kind, commands::PosteriorChoice::Kind::dirac);
    EXPECT_EQ(k.index, 4u);
    EXPECT_EQ(*commands::parse_posterior("gibbs:2.5").beta, 2.5);
    EXPECT_THROW(commands::parse_posterior("dirac:x"), io::SchemaError);
    EXPECT_THROW(commands::parse_posterior("gibbs:-1"), io::SchemaError);
    EXPECT_THROW(commands::parse_posterior("/nonexistent/weights.json"), io::SchemaError);
}

TEST(Commands, CertifyMatchesLibrary) {
    const auto f = io::parse_task_file(base_file());
    commands::CertifyOptions o;
    o.bound = "seeger";
    o.posterior = commands::parse_posterior("dirac:0");
    BoundInput in;
    in.emp_risk = 0.1;
    in.kl = -std::log(0.25);
    in.n = 100;
    in.eps = 0.05;
    EXPECT_EQ(commands::certify(f, o).value, bound_seeger_maurer(in).value);

    o.bound = "chi_square";
    EXPECT_THROW(commands::certify(f, o), SemanticError);
    o.bound = "bogus";
    EXPECT_THROW(commands::certify(f, o), SemanticError);
    o.bound = "catoni_linear";
    o.posterior = commands::parse_posterior("dirac:9");
    EXPECT_THROW(commands::certify(f, o), SemanticError);
}

TEST(Commands, CompareSingleHypothesisUsesZeroKl) {
    const json j = {{"n", 200}, {"eps", 0.05}, {"C", 1.0}, {"prior", {1.0}}, {"emp_risk", {0.3}}};
    const auto cmp = commands::compare(io::parse_task_file(j), {}, std::nullopt);
    for (const auto& c : cmp.certificates) {
        if (auto kl = c.term("kl")) {
            EXPECT_EQ(*kl, 0.0) << c.bound_id;
        }
        EXPECT_GE(c.value, 0.3) << c.bound_id;
    }
    BoundInput in;
    in.emp_risk = 0.3;
    in.n = 200;
    in.eps = 0.05;
    for (const auto& c : cmp.certificates) {
        if (c.bound_id == "mcallester") {
            EXPECT_EQ(c.value, bound_mcallester_maurer(in).value);
        }
    }
}

TEST(Commands, CompareSortedAndNoiselessScaling) {
    // Noiseless ERM: the kl-form slacks shrink like 1/n, McAllester's like 1/sqrt(n).
    auto slack = [](std::size_t n) {
        json j = {{"n", n}, {"eps", 0.05}, {"C", 1.0}, {"prior", {0.5, 0.5}}, {"emp_risk", {0.0, 0.4}}};
        const auto cmp = commands::compare(io::parse_task_file(j), {}, std::nullopt);
        for (std::size_t k = 1; k < cmp.certificates.size(); ++k)
            EXPECT_LE(cmp.certificates[k - 1].value, cmp.certificates[k].value);
        std::map<std::string, double> v;
        for (const auto& c : cmp.certificates) v[c.bound_id] = c.value;
        return v;
    };
    const auto a = slack(1000), b = slack(100000);
    for (const std::string id : {"seeger", "tolstikhin_seldin", "thiemann"}) EXPECT_LT(b.at(id), a.at(id) / 50.0) << id;
    EXPECT_GT(b.at("mcallester"), a.at("mcallester") / 20.0);
    EXPECT_LT(b.at("mcallester"), a.at("mcallester") / 5.0);
}
