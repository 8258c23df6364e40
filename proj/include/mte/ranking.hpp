#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mte/common.hpp"
#include "mte/model.hpp"
#include "mte/welfare.hpp"

namespace mte {

/// Set of MTE curves on a resistance grid that agree with the data: values
/// pinned on the identified knots, a shape restriction across all knots, and
/// a box on the unpinned ones (an unbounded tail would make every ranking
/// question vacuous). The box default is 10x the largest pinned magnitude.
struct IdentifiedMteSet {
    std::vector<double> u_grid;
    std::map<std::size_t, double> pinned;  // knot index -> value
    Monotonicity shape = Monotonicity::None;
    double bound_lo = -1.0;
    double bound_hi = 1.0;

    static IdentifiedMteSet make(std::vector<double> grid, std::map<std::size_t, double> pins,
                                 Monotonicity shape_restriction,
                                 std::optional<Interval> bounds = std::nullopt) {
        IdentifiedMteSet s;
        s.u_grid = std::move(grid);
        s.pinned = std::move(pins);
        s.shape = shape_restriction;
        if (s.u_grid.size() < 2) throw DomainError("IdentifiedMteSet: grid too small");
        for (const auto& [k, v] : s.pinned)
            if (k >= s.u_grid.size()) throw DomainError("IdentifiedMteSet: pin off the grid");
        if (bounds) {
            s.bound_lo = bounds->lo;
            s.bound_hi = bounds->hi;
        } else {
            double m = 0.0;
            for (const auto& [k, v] : s.pinned) m = std::max(m, std::fabs(v));
            if (m == 0.0) m = 1.0;
            s.bound_lo = -10.0 * m;
            s.bound_hi = 10.0 * m;
        }
        if (!(s.bound_hi > s.bound_lo))
            throw DomainError("IdentifiedMteSet: empty bound box");
        return s;
    }

    /// Builds the set from a grid-form curve estimate: masked knots pin the
    /// set, unmasked ones stay free.
    static IdentifiedMteSet from_curve(const MteCurve& curve, const Key& x,
                                       Monotonicity shape_restriction,
                                       std::optional<Interval> bounds = std::nullopt) {
        const auto& cells = curve.grid_form().cells;
        const auto it = cells.find(x);
        if (it == cells.end()) throw DomainError("IdentifiedMteSet: unknown cell");
        std::map<std::size_t, double> pins;
        for (std::size_t k = 0; k < it->second.grid.size(); ++k)
            if (it->second.identified[k]) pins[k] = it->second.grid.values[k];
        return make(it->second.grid.points, std::move(pins), shape_restriction, bounds);
    }

    std::size_t size() const { return u_grid.size(); }

    std::vector<LinearConstraint> equalities() const {
        std::vector<LinearConstraint> eq;
        for (const auto& [k, v] : pinned) {
            std::vector<double> a(size(), 0.0);
            a[k] = 1.0;
            eq.push_back({std::move(a), v});
        }
        return eq;
    }

    std::vector<LinearConstraint> inequalities() const {
        std::vector<LinearConstraint> in;
        const std::size_t K = size();
        if (shape != Monotonicity::None) {
            for (std::size_t i = 0; i + 1 < K; ++i) {
                std::vector<double> a(K, 0.0);
                // decreasing: m_{i+1} - m_i <= 0; increasing: m_i - m_{i+1} <= 0
                a[i + 1] = shape == Monotonicity::Decreasing ? 1.0 : -1.0;
                a[i] = -a[i + 1];
                in.push_back({std::move(a), 0.0});
            }
        }
        for (std::size_t i = 0; i < K; ++i) {
            if (pinned.count(i)) continue;  // box applies to unpinned knots
            std::vector<double> up(K, 0.0), dn(K, 0.0);
            up[i] = 1.0;
            dn[i] = -1.0;
            in.push_back({std::move(up), bound_hi});
            in.push_back({std::move(dn), -bound_lo});
        }
        return in;
    }

    bool feasible() const {
        try {
            lp_min_linear(std::vector<double>(size(), 0.0), equalities(), inequalities());
            return true;
        } catch (const LpInfeasibleError&) {
            return false;
        }
    }

    // trapezoid quadrature weights on the grid
    std::vector<double> inner_weights() const {
        const std::size_t K = size();
        std::vector<double> t(K, 0.0);
        for (std::size_t i = 0; i + 1 < K; ++i) {
            const double h = u_grid[i + 1] - u_grid[i];
            t[i] += 0.5 * h;
            t[i + 1] += 0.5 * h;
        }
        return t;
    }
};

enum class RankOrder { LeftWeaklyBetter, RightWeaklyBetter, Equivalent, Incomparable };

inline const char* to_string(RankOrder o) {
    switch (o) {
    case RankOrder::LeftWeaklyBetter: return "left_weakly_better";
    case RankOrder::RightWeaklyBetter: return "right_weakly_better";
    case RankOrder::Equivalent: return "equivalent";
    case RankOrder::Incomparable: return "incomparable";
    }
    return "?";
}

struct RankVerdict {
    RankOrder order = RankOrder::Incomparable;
    double v_min = 0.0;  // extremes of the welfare difference S(A) - S(B)
    double v_max = 0.0;
    Interval bounds_used;  // the unpinned box, surfaced on every verdict
    // member curves witnessing both strict orderings, for incomparable pairs
    std::optional<std::pair<std::vector<double>, std::vector<double>>> certificates;
};

/// Distribution of the take-up induced by a rule within one x-cell: at each
/// grid knot, the weighted share of w-cells whose take-up is at most u.
inline std::vector<double> induced_cdf(const PropensityFn& g, const SubsidyRule& rule,
                                       const Key& x, const std::vector<double>& u_grid) {
    double wtotal = 0.0;
    std::vector<std::pair<double, double>> takeups;  // (takeup, weight)
    for (std::size_t i = 0; i < rule.cells.size(); ++i) {
        if (rule.cells[i].x != x) continue;
        takeups.push_back({g.at(x, rule.cells[i].w, rule.assignment[i]), rule.cells[i].weight});
        wtotal += rule.cells[i].weight;
    }
    if (takeups.empty()) throw DomainError("induced_cdf: no cells with this x");
    std::vector<double> cdf(u_grid.size(), 0.0);
    for (std::size_t k = 0; k < u_grid.size(); ++k) {
        double mass = 0.0;
        for (const auto& [t, w] : takeups)
            if (t <= u_grid[k]) mass += w;
        cdf[k] = mass / wtotal;
    }
    return cdf;
}

/// Partial welfare ranking of two rules over the identified set: the welfare
/// difference is a fixed linear functional of the curve, so its range over
/// the set decides the order. One-signed range => comparable; both signs =>
/// incomparable, with the extremal curves as certificates.
inline RankVerdict rank_pair(const IdentifiedMteSet& set, const PropensityFn& g,
                             const SubsidyRule& rule_a, const SubsidyRule& rule_b,
                             double tol = 1e-9) {
    rule_a.validate();
    rule_b.validate();
    if (rule_a.cells.size() != rule_b.cells.size())
        throw DomainError("rank_pair: rules must share the cell layout");

    // x-marginal weights
    std::map<Key, double> xweight;
    for (const Cell& c : rule_a.cells) xweight[c.x] += c.weight;

    const std::vector<double> tau = set.inner_weights();
    std::vector<double> objective(set.size(), 0.0);
    for (const auto& [x, wx] : xweight) {
        const auto fa = induced_cdf(g, rule_a, x, set.u_grid);
        const auto fb = induced_cdf(g, rule_b, x, set.u_grid);
        for (std::size_t k = 0; k < set.size(); ++k)
            objective[k] += wx * (fb[k] - fa[k]) * tau[k];
    }

    const auto eq = set.equalities();
    const auto in = set.inequalities();

    LpSolution lo, hi;
    try {
        lo = lp_min_linear(objective, eq, in);
        std::vector<double> neg(objective.size());
        for (std::size_t k = 0; k < neg.size(); ++k) neg[k] = -objective[k];
        hi = lp_min_linear(neg, eq, in);
        hi.value = -hi.value;
    } catch (const LpInfeasibleError&) {
        throw Error("rank_pair: the identified set is empty");
    }

    RankVerdict verdict;
    verdict.v_min = lo.value;
    verdict.v_max = hi.value;
    verdict.bounds_used = {set.bound_lo, set.bound_hi};
    const bool a_weakly = lo.value >= -tol;
    const bool b_weakly = hi.value <= tol;
    if (a_weakly && b_weakly)
        verdict.order = RankOrder::Equivalent;
    else if (a_weakly)
        verdict.order = RankOrder::LeftWeaklyBetter;
    else if (b_weakly)
        verdict.order = RankOrder::RightWeaklyBetter;
    else {
        verdict.order = RankOrder::Incomparable;
        verdict.certificates = {lo.x, hi.x};
    }
    return verdict;
}

struct PartialOrder {
    std::vector<std::string> names;
    std::vector<std::pair<std::size_t, std::size_t>> edges;  // strictly-better Hasse edges
    std::vector<std::pair<std::size_t, std::size_t>> incomparable;
    std::vector<std::pair<std::size_t, std::size_t>> equivalent;
    std::vector<RankVerdict> verdicts;  // row-major upper triangle
};

/// Pairwise ranking of a list of rules, reduced to Hasse edges; incomparable
/// pairs are reported rather than forced.
inline PartialOrder rank_list(const IdentifiedMteSet& set, const PropensityFn& g,
                              const std::vector<SubsidyRule>& rules,
                              const std::vector<std::string>& names, double tol = 1e-9) {
    if (rules.size() < 1) throw DomainError("rank_list: no rules");
    PartialOrder order;
    order.names = names;

    const std::size_t n = rules.size();
    std::vector<std::vector<bool>> better(n, std::vector<bool>(n, false));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const RankVerdict v = rank_pair(set, g, rules[i], rules[j], tol);
            order.verdicts.push_back(v);
            switch (v.order) {
            case RankOrder::LeftWeaklyBetter: better[i][j] = true; break;
            case RankOrder::RightWeaklyBetter: better[j][i] = true; break;
            case RankOrder::Equivalent: order.equivalent.push_back({i, j}); break;
            case RankOrder::Incomparable: order.incomparable.push_back({i, j}); break;
            }
        }
    }
    // transitive reduction of the strict relation
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (!better[i][j]) continue;
            bool redundant = false;
            for (std::size_t k = 0; k < n && !redundant; ++k)
                redundant = k != i && k != j && better[i][k] && better[k][j];
            if (!redundant) order.edges.push_back({i, j});
        }
    }
    return order;
}

inline std::string to_dot(const PartialOrder& order) {
    std::ostringstream out;
    out << "digraph ranking {\n";
    for (std::size_t i = 0; i < order.names.size(); ++i)
        out << "  n" << i << " [label=\"" << order.names[i] << "\"];\n";
    for (const auto& [i, j] : order.edges)
        out << "  n" << i << " -> n" << j << ";\n";
    for (const auto& [i, j] : order.equivalent)
        out << "  n" << i << " -> n" << j << " [dir=none, style=bold, label=\"=\"];\n";
    for (const auto& [i, j] : order.incomparable)
        out << "  n" << i << " -> n" << j << " [dir=none, style=dashed, label=\"?\"];\n";
    out << "}\n";
    return out.str();
}

}  // namespace mte
