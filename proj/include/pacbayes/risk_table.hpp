#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "numeric.hpp"

namespace pacbayes {

/// Per-hypothesis empirical risks over a finite class, with the sample that
/// produced them when it is available.
///
/// `losses` is row-major: losses[i][j] is the loss of hypothesis j on example i.
struct RiskTable {
    std::vector<double> emp_risk;
    std::optional<std::vector<std::vector<double>>> losses;
    std::optional<std::vector<double>> true_risk;
    std::size_t n = 0;
    double C = 1.0;

    std::size_t size() const { return emp_risk.size(); }

    void validate() const {
        require(n >= 1, "risk table: n must be >= 1");
        require(C > 0.0, "risk table: loss range C must be > 0");
        require(!emp_risk.empty(), "risk table: no hypotheses");
        for (double r : emp_risk)
            require(r >= 0.0 && r <= C, "risk table: empirical risk outside [0, C]");
        if (true_risk) {
            require_same_size(true_risk->size(), emp_risk.size(), "risk table true_risk");
            for (double r : *true_risk)
                require(r >= 0.0 && r <= C, "risk table: true risk outside [0, C]");
        }
        if (losses) {
            require_same_size(losses->size(), n, "risk table losses rows");
            std::vector<double> mean(emp_risk.size(), 0.0);
            for (const auto& row : *losses) {
                require_same_size(row.size(), emp_risk.size(), "risk table losses columns");
                for (std::size_t j = 0; j < row.size(); ++j) {
                    require(row[j] >= 0.0 && row[j] <= C, "risk table: loss outside [0, C]");
                    mean[j] += row[j];
                }
            }
            for (std::size_t j = 0; j < mean.size(); ++j)
                require(std::abs(mean[j] / static_cast<double>(n) - emp_risk[j]) <= 1e-12,
                        "risk table: emp_risk differs from column means of losses");
        }
    }

    static RiskTable from_losses(std::vector<std::vector<double>> rows, double C) {
        require(!rows.empty(), "risk table: empty loss matrix");
        RiskTable t;
        t.n = rows.size();
        t.C = C;
        t.emp_risk.assign(rows.front().size(), 0.0);
        for (const auto& row : rows) {
            require_same_size(row.size(), t.emp_risk.size(), "risk table losses columns");
            for (std::size_t j = 0; j < row.size(); ++j) t.emp_risk[j] += row[j];
        }
        for (double& r : t.emp_risk) r /= static_cast<double>(t.n);
        t.losses = std::move(rows);
        t.validate();
        return t;
    }
};

}  // namespace pacbayes
