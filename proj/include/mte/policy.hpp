#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mte/common.hpp"
#include "mte/model.hpp"
#include "mte/welfare.hpp"

namespace mte {

inline double mte_integral(const MteCurve& mte, const Key& x, double a, double b,
                           double tol = 1e-9) {
    if (a == b) return 0.0;
    const auto f = [&](double t) { return mte.value_clamped(x, t); };
    return a < b ? quad_integrate(f, a, b, tol) : -quad_integrate(f, b, a, tol);
}

enum class SolutionKind { Interior, CornerLow, CornerHigh };

inline const char* to_string(SolutionKind k) {
    switch (k) {
    case SolutionKind::Interior: return "interior";
    case SolutionKind::CornerLow: return "corner_low";
    case SolutionKind::CornerHigh: return "corner_high";
    }
    return "?";
}

struct SolveResult {
    double z_star = 0.0;
    double u_star = 0.0;
    SolutionKind kind = SolutionKind::Interior;
    double lambda_at_solution = 0.0;
    double welfare_at_solution = 0.0;  // per-cell gross - cost, baseline-free
    bool fallback_used = false;        // set by callers that rerouted to solve_general
};

/// Marginal benefit of subsidy at z:
///   Lambda = MTE(x, g(x,w,z)) - z - g(x,w,z) / (dg/dz).
/// The derivative is closed-form for probit propensities and a finite
/// difference on tabulated ones.
inline double lambda_eval(const MteCurve& mte, const PropensityFn& g, const Cell& cell, double z) {
    const double take = g.at(cell.x, cell.w, z);
    const double deriv = g.dz(cell.x, cell.w, z);
    if (!(deriv > 0.0)) throw DomainError("lambda_eval: propensity derivative not positive");
    return mte.value_clamped(cell.x, take) - z - take / deriv;
}

/// Marginal benefit per unit subsidy for a general cost, normalized by dg/dz
/// so that the voucher case coincides with lambda_eval. From the full
/// first-order condition:
///   MTE(g) dg - [u dc1 + c1 dg + (1-u) dc0 - c0 dg] = 0.
inline double lambda_general(const MteCurve& mte, const PropensityFn& g, const CostSpec& cost,
                             const Cell& cell, double z) {
    const double u = g.at(cell.x, cell.w, z);
    const double dg = g.dz(cell.x, cell.w, z);
    if (!(dg > 0.0)) throw DomainError("lambda_general: propensity derivative not positive");
    const double c1 = cost.value(cell.x, cell.w, z, 1);
    const double c0 = cost.value(cell.x, cell.w, z, 0);
    const double dc1 = cost.dz(cell.x, cell.w, z, 1);
    const double dc0 = cost.dz(cell.x, cell.w, z, 0);
    return mte.value_clamped(cell.x, u) - c1 + c0 - (u * dc1 + (1.0 - u) * dc0) / dg;
}

namespace detail {

inline double cell_welfare(const MteCurve& mte, const PropensityFn& g, const CostSpec& cost,
                           const Cell& cell, double z, double quad_tol) {
    const double u = g.at(cell.x, cell.w, z);
    return mte_integral(mte, cell.x, 0.0, u, quad_tol) -
           cost.value(cell.x, cell.w, z, 1) * u - cost.value(cell.x, cell.w, z, 0) * (1.0 - u);
}

inline SolveResult make_result(const MteCurve& mte, const PropensityFn& g, const CostSpec& cost,
                               const Cell& cell, double z, SolutionKind kind, double quad_tol) {
    SolveResult r;
    r.z_star = z;
    r.u_star = g.at(cell.x, cell.w, z);
    r.kind = kind;
    r.lambda_at_solution = lambda_general(mte, g, cost, cell, z);
    r.welfare_at_solution = cell_welfare(mte, g, cost, cell, z, quad_tol);
    return r;
}

}  // namespace detail

/// Optimal subsidy for one cell under positive selection (decreasing MTE),
/// weakly concave propensity, and voucher cost. The marginal benefit is then
/// decreasing in z, so endpoint signs decide corners and a bracketed root is
/// the unique interior optimum. A monotonicity or concavity check failure
/// throws; the caller should use solve_general instead.
inline SolveResult solve_positive_selection(const MteCurve& mte, const PropensityFn& g,
                                            const CostSpec& cost, const Cell& cell,
                                            Interval action_space, double quad_tol = 1e-9) {
    if (!cost.is_voucher())
        throw DomainError("solve_positive_selection: requires the voucher cost");
    if (mte.declared() != Monotonicity::Decreasing || !mte.verify_monotone(cell.x))
        throw DomainError("solve_positive_selection: MTE is not decreasing; use solve_general");

    {
        const auto zs = linspace(action_space.lo, action_space.hi, 1001);
        double prev = g.at(cell.x, cell.w, zs[0]);
        double cur = g.at(cell.x, cell.w, zs[1]);
        for (std::size_t i = 2; i < zs.size(); ++i) {
            const double next = g.at(cell.x, cell.w, zs[i]);
            if (next - 2.0 * cur + prev > 1e-9)
                throw DomainError(
                    "solve_positive_selection: propensity not concave in z; use solve_general");
            prev = cur;
            cur = next;
        }
    }

    const auto lam = [&](double z) { return lambda_eval(mte, g, cell, z); };
    const double zl = action_space.lo, zu = action_space.hi;
    if (lam(zl) < 0.0) return detail::make_result(mte, g, cost, cell, zl, SolutionKind::CornerLow, quad_tol);
    if (lam(zu) > 0.0) return detail::make_result(mte, g, cost, cell, zu, SolutionKind::CornerHigh, quad_tol);

    const double ztol = std::max(1e-12, 1e-10 * (zu - zl));
    const double zstar = find_root_bracketed(lam, zl, zu, ztol);
    // Stationary points landing on a corner are reported as corners.
    SolutionKind kind = SolutionKind::Interior;
    double z = zstar;
    if (zstar - zl <= 2.0 * ztol) {
        kind = SolutionKind::CornerLow;
        z = zl;
    } else if (zu - zstar <= 2.0 * ztol) {
        kind = SolutionKind::CornerHigh;
        z = zu;
    }
    return detail::make_result(mte, g, cost, cell, z, kind, quad_tol);
}

/// Optimal subsidy under negative selection (increasing MTE) and zero cost:
/// a corner decided by the sign of the MTE integral over the attainable
/// take-up range. Ties go to the low corner.
inline SolveResult solve_negative_selection(const MteCurve& mte, const PropensityFn& g,
                                            const CostSpec& cost, const Cell& cell,
                                            Interval action_space, double quad_tol = 1e-9) {
    if (!cost.is_zero()) throw DomainError("solve_negative_selection: requires zero cost");
    if (mte.declared() != Monotonicity::Increasing || !mte.verify_monotone(cell.x))
        throw DomainError("solve_negative_selection: MTE is not increasing; use solve_general");

    const double ulo = g.at(cell.x, cell.w, action_space.lo);
    const double uhi = g.at(cell.x, cell.w, action_space.hi);
    const double integral = mte_integral(mte, cell.x, ulo, uhi, quad_tol);
    const double tol = 1e-9 * std::max(1.0, mte.scale(cell.x));
    const double z = integral <= tol ? action_space.lo : action_space.hi;
    const SolutionKind kind =
        integral <= tol ? SolutionKind::CornerLow : SolutionKind::CornerHigh;
    return detail::make_result(mte, g, cost, cell, z, kind, quad_tol);
}

/// General solver: evaluates cell welfare on a z-grid, polishes every sign
/// change of the first-order condition, and compares all stationary
/// candidates plus both endpoints. Always returns the best candidate found.
inline SolveResult solve_general(const MteCurve& mte, const PropensityFn& g, const CostSpec& cost,
                                 const Cell& cell, Interval action_space, int grid_n = 256,
                                 double quad_tol = 1e-9) {
    if (grid_n < 64) throw DomainError("solve_general: grid_n must be at least 64");
    const double zl = action_space.lo, zu = action_space.hi;

    std::vector<double> candidates = {zl, zu};
    const auto zs = linspace(zl, zu, static_cast<std::size_t>(grid_n) + 1);
    std::vector<double> lam(zs.size());
    for (std::size_t i = 0; i < zs.size(); ++i)
        lam[i] = lambda_general(mte, g, cost, cell, zs[i]);

    const double ztol = std::max(1e-12, 1e-10 * (zu - zl));
    for (std::size_t i = 1; i < zs.size(); ++i) {
        if (lam[i - 1] == 0.0) candidates.push_back(zs[i - 1]);
        if (lam[i - 1] * lam[i] < 0.0) {
            candidates.push_back(find_root_bracketed(
                [&](double z) { return lambda_general(mte, g, cost, cell, z); }, zs[i - 1], zs[i],
                ztol));
        }
    }

    // Coarse welfare argmax as an extra candidate against missed stationarity.
    double vbest = -std::numeric_limits<double>::infinity();
    double zgrid = zl;
    double acc = mte_integral(mte, cell.x, 0.0, g.at(cell.x, cell.w, zs[0]), quad_tol);
    double uprev = g.at(cell.x, cell.w, zs[0]);
    for (std::size_t i = 0; i < zs.size(); ++i) {
        if (i > 0) {
            const double u = g.at(cell.x, cell.w, zs[i]);
            acc += mte_integral(mte, cell.x, uprev, u, quad_tol);
            uprev = u;
        }
        const double v = acc - cost.value(cell.x, cell.w, zs[i], 1) * uprev -
                         cost.value(cell.x, cell.w, zs[i], 0) * (1.0 - uprev);
        if (v > vbest) {
            vbest = v;
            zgrid = zs[i];
        }
    }
    candidates.push_back(zgrid);

    double best = -std::numeric_limits<double>::infinity();
    double zstar = zl;
    for (double z : candidates) {
        const double v = detail::cell_welfare(mte, g, cost, cell, z, quad_tol);
        if (v > best) {
            best = v;
            zstar = z;
        }
    }

    SolutionKind kind = SolutionKind::Interior;
    if (zstar - zl <= 2.0 * ztol)
        kind = SolutionKind::CornerLow;
    else if (zu - zstar <= 2.0 * ztol)
        kind = SolutionKind::CornerHigh;
    SolveResult r = detail::make_result(mte, g, cost, cell, zstar, kind, quad_tol);
    r.welfare_at_solution = best;
    return r;
}

/// Identified bounds on the optimal subsidy from the sign of the marginal
/// benefit at probe points (positive selection): Lambda >= 0 at z pushes the
/// optimum right of z, <= 0 pushes it left.
inline Interval bound_optimal(const MteCurve& mte, const PropensityFn& g, const Cell& cell,
                              Interval action_space, const std::vector<double>& probes,
                              double tol = -1.0) {
    if (tol < 0.0) tol = 1e-9 * std::max(1.0, mte.scale(cell.x));
    double lower = action_space.lo;
    double upper = action_space.hi;
    for (double z : probes) {
        if (!action_space.contains(z, 1e-12))
            throw DomainError("bound_optimal: probe outside the action space");
        const double lam = lambda_eval(mte, g, cell, z);
        if (lam >= -tol) lower = std::max(lower, z);
        if (lam <= tol) upper = std::min(upper, z);
    }
    if (lower > upper + 1e-12)
        throw Error("bound_optimal: marginal benefit crosses upward between probes; "
                    "positive selection is violated");
    return {lower, upper};
}

/// Collects per-cell solutions into a subsidy rule.
inline SubsidyRule assemble_rule(const std::vector<SolveResult>& results,
                                 const std::vector<Cell>& cells, Interval action_space) {
    if (results.size() != cells.size())
        throw DomainError("assemble_rule: one result per cell required");
    SubsidyRule rule;
    rule.cells = cells;
    rule.action_space = action_space;
    rule.assignment.reserve(results.size());
    for (const SolveResult& r : results) rule.assignment.push_back(r.z_star);
    rule.validate();
    return rule;
}

}  // namespace mte
