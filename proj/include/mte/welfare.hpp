#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mte/common.hpp"
#include "mte/model.hpp"
#include "mte/numerics.hpp"
#include "mte/rng.hpp"

namespace mte {

// One targeting cell: covariates, nonmanipulable instrument, population share.
struct Cell {
    Key x;
    Key w;
    double weight = 1.0;
    std::string label;
};

// ---------------------------------------------------------------------------
// Cost specifications

class CostSpec {
public:
    struct Zero {};
    struct ConstantPerEligible {
        double amount;
    };
    struct Voucher {};  // c = z * d, paid only on take-up
    struct General {
        std::function<double(const Key& x, const Key& w, double z, int d)> c;
        double dz_step;
    };

    CostSpec() : form_(Zero{}) {}

    static CostSpec zero() { return CostSpec(); }
    static CostSpec constant_per_eligible(double amount) {
        CostSpec s;
        s.form_ = ConstantPerEligible{amount};
        return s;
    }
    static CostSpec voucher() {
        CostSpec s;
        s.form_ = Voucher{};
        return s;
    }
    static CostSpec general(std::function<double(const Key&, const Key&, double, int)> c,
                            double dz_step = 1e-6) {
        CostSpec s;
        s.form_ = General{std::move(c), dz_step};
        return s;
    }

    bool is_zero() const { return std::holds_alternative<Zero>(form_); }
    bool is_voucher() const { return std::holds_alternative<Voucher>(form_); }

    double value(const Key& x, const Key& w, double z, int d) const {
        if (std::holds_alternative<Zero>(form_)) return 0.0;
        if (const auto* c = std::get_if<ConstantPerEligible>(&form_)) return c->amount;
        if (std::holds_alternative<Voucher>(form_)) return d ? z : 0.0;
        return std::get<General>(form_).c(x, w, z, d);
    }

    double dz(const Key& x, const Key& w, double z, int d) const {
        if (std::holds_alternative<Zero>(form_) ||
            std::holds_alternative<ConstantPerEligible>(form_))
            return 0.0;
        if (std::holds_alternative<Voucher>(form_)) return d ? 1.0 : 0.0;
        const auto& g = std::get<General>(form_);
        const double h = g.dz_step;
        return (g.c(x, w, z + h, d) - g.c(x, w, z - h, d)) / (2.0 * h);
    }

private:
    std::variant<Zero, ConstantPerEligible, Voucher, General> form_;
};

// ---------------------------------------------------------------------------
// Subsidy rules

struct SubsidyRule {
    std::vector<Cell> cells;
    std::vector<double> assignment;  // one z per cell
    Interval action_space;

    void validate() const {
        if (cells.size() != assignment.size())
            throw DomainError("SubsidyRule: one assignment per cell required");
        if (cells.empty()) throw DomainError("SubsidyRule: no cells");
        double total = 0.0;
        for (const Cell& c : cells) {
            if (c.weight < 0.0) throw DomainError("SubsidyRule: negative cell weight");
            total += c.weight;
        }
        if (std::fabs(total - 1.0) > 1e-12)
            throw DomainError("SubsidyRule: cell weights must sum to 1");
        for (double z : assignment)
            if (!action_space.contains(z, 1e-12))
                throw DomainError("SubsidyRule: assignment outside the action space");
    }
};

// ---------------------------------------------------------------------------
// Welfare reports

struct CellWelfare {
    double takeup = 0.0;
    double gross = 0.0;
    double cost = 0.0;
};

struct WelfareReport {
    double gross = 0.0;                    // E over cells of the MTE integral
    std::optional<double> baseline;        // E[Y0], unknown unless supplied
    double cost = 0.0;
    double net = 0.0;                      // baseline (if known) + gross - cost
    std::vector<CellWelfare> per_cell;
    std::vector<std::string> warnings;
};

/// Counterfactual take-up rate of one cell under the rule: g(x, w, pi(x,w)).
inline double takeup_under_rule(const PropensityFn& g, const SubsidyRule& rule,
                                std::size_t cell_index) {
    const Cell& c = rule.cells.at(cell_index);
    return g.at(c.x, c.w, rule.assignment.at(cell_index));
}

/// Welfare of a subsidy rule through the MTE-integral representation:
/// per cell, gross = integral of MTE(x, .) from 0 to the induced take-up and
/// cost = c(x,w,z,1) u + c(x,w,z,0) (1-u); totals are weight-averaged.
/// Evaluations beyond a grid curve's identified region are collected as
/// warnings, not failures.
inline WelfareReport welfare_of_rule(const MteCurve& mte, const PropensityFn& g,
                                     const CostSpec& cost, const SubsidyRule& rule,
                                     std::optional<double> baseline = std::nullopt,
                                     double quad_tol = 1e-9) {
    rule.validate();
    WelfareReport report;
    report.baseline = baseline;
    report.per_cell.resize(rule.cells.size());

    for (std::size_t i = 0; i < rule.cells.size(); ++i) {
        const Cell& c = rule.cells[i];
        const double z = rule.assignment[i];
        const double u = takeup_under_rule(g, rule, i);

        bool extrapolated = false;
        const auto f = [&](double t) {
            const MteValue v = mte.at(c.x, std::clamp(t, 1e-15, 1.0 - 1e-15));
            extrapolated = extrapolated || v.extrapolated;
            return v.value;
        };
        const double gross = quad_integrate(f, 0.0, u, quad_tol);
        const double cell_cost =
            cost.value(c.x, c.w, z, 1) * u + cost.value(c.x, c.w, z, 0) * (1.0 - u);

        report.per_cell[i] = {u, gross, cell_cost};
        report.gross += c.weight * gross;
        report.cost += c.weight * cell_cost;
        if (extrapolated)
            report.warnings.push_back("cell " + std::to_string(i) +
                                      ": MTE evaluated outside its identified region");
    }
    report.net = baseline.value_or(0.0) + report.gross - report.cost;
    return report;
}

struct McWelfare {
    double net = 0.0;        // mean of y - realized cost (includes the Y0 level)
    double std_error = 0.0;
};

/// Brute-force welfare oracle: simulates individuals from the normal model,
/// applies the counterfactual take-up rule literally, and averages outcome
/// minus realized cost. Deterministic given seed.
inline McWelfare mc_oracle_welfare(const SelectionParams& params, const CostSpec& cost,
                                   const SubsidyRule& rule, std::size_t n, std::uint64_t seed) {
    rule.validate();
    params.validate();

    std::array<double, 9> cv = params.covariance();
    std::array<double, 9> L{};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j <= i; ++j) {
            double s = cv[i * 3 + j];
            for (int m = 0; m < j; ++m) s -= L[i * 3 + m] * L[j * 3 + m];
            if (i == j)
                L[i * 3 + i] = std::sqrt(std::max(s, 1e-300));
            else
                L[i * 3 + j] = s / L[j * 3 + j];
        }
    }

    // Cumulative cell weights for sampling.
    std::vector<double> cum(rule.cells.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < rule.cells.size(); ++i) {
        acc += rule.cells[i].weight;
        cum[i] = acc;
    }

    Rng rng = Rng(seed).fork(2);
    long double total = 0.0L, total2 = 0.0L;
    for (std::size_t r = 0; r < n; ++r) {
        const double pick = rng.uniform01() * acc;
        std::size_t i = std::lower_bound(cum.begin(), cum.end(), pick) - cum.begin();
        if (i >= rule.cells.size()) i = rule.cells.size() - 1;
        const Cell& c = rule.cells[i];
        const double z = rule.assignment[i];

        const double n1 = rng.normal(), n2 = rng.normal(), n3 = rng.normal();
        const double u1 = L[0] * n1;
        const double u0 = L[3] * n1 + L[4] * n2;
        const double v = L[6] * n1 + L[7] * n2 + L[8] * n3;

        const double idx = dot_with_intercept(params.betaD, c.x) + params.gamma * z;
        const int d = idx + v >= 0.0 ? 1 : 0;
        const double y = d ? dot_with_intercept(params.beta1, c.x) + u1
                           : dot_with_intercept(params.beta0, c.x) + u0;
        const double s = y - cost.value(c.x, c.w, z, d);
        total += s;
        total2 += static_cast<long double>(s) * s;
    }
    const double mean = static_cast<double>(total / n);
    const double var = std::max(static_cast<double>(total2 / n) - mean * mean, 0.0);
    return {mean, std::sqrt(var / static_cast<double>(n))};
}

}  // namespace mte
