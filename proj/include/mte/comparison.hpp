#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mte/common.hpp"
#include "mte/model.hpp"
#include "mte/policy.hpp"

namespace mte {

// Mandate everyone with resistance below the threshold.
struct ThresholdPolicy {
    double u_star = 0.0;
};

// One instrument cell inside a fixed x-cell: value, population share, and the
// z-range the policy-maker can use there.
struct WCell {
    Key w;
    double weight = 1.0;
    Interval z_range;
};

struct WelfareLadder {
    double s_sub = 0.0;
    double s_dir = 0.0;
    double s_con = 0.0;
    double s_fb = 0.0;
    std::vector<Interval> identified_support;
    bool first_best_attained = false;
    std::vector<std::string> warnings;
};

/// Take-up values reachable through the instruments: per x-cell, the union
/// over w of [g(x,w,z_lo), g(x,w,z_hi)], merged where overlapping.
inline std::vector<Interval> identified_support(const PropensityFn& g, const Key& x,
                                                const std::vector<WCell>& wcells) {
    std::vector<Interval> spans;
    for (const WCell& c : wcells)
        spans.push_back({g.at(x, c.w, c.z_range.lo), g.at(x, c.w, c.z_range.hi)});
    std::sort(spans.begin(), spans.end(),
              [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
    std::vector<Interval> merged;
    for (const Interval& s : spans) {
        if (!merged.empty() && s.lo <= merged.back().hi + 1e-12)
            merged.back().hi = std::max(merged.back().hi, s.hi);
        else
            merged.push_back(s);
    }
    return merged;
}

namespace detail {

// Running integral of the MTE over [0,u] restricted to the support.
inline double support_integral(const MteCurve& mte, const Key& x,
                               const std::vector<Interval>& support, double u, double tol) {
    double total = 0.0;
    for (const Interval& s : support) {
        if (u <= s.lo) break;
        total += mte_integral(mte, x, s.lo, std::min(u, s.hi), tol);
    }
    return total;
}

// Zero crossings of the curve inside [lo, hi], located on a fine grid and
// polished by the root finder.
inline std::vector<double> curve_crossings(const MteCurve& mte, const Key& x, double lo,
                                           double hi) {
    std::vector<double> out;
    if (!(hi > lo)) return out;
    const int npts = 512;
    double prev = mte.value_clamped(x, lo);
    for (int i = 1; i <= npts; ++i) {
        const double u = lo + (hi - lo) * i / npts;
        const double cur = mte.value_clamped(x, u);
        if (prev == 0.0) out.push_back(lo + (hi - lo) * (i - 1) / npts);
        if (prev * cur < 0.0) {
            out.push_back(find_root_bracketed(
                [&](double t) { return mte.value_clamped(x, t); },
                lo + (hi - lo) * (i - 1) / npts, u, 1e-12));
        }
        prev = cur;
    }
    return out;
}

}  // namespace detail

/// First-best mandate threshold for a decreasing curve: the unique zero of
/// the MTE, clipped into [0,1] when the curve is one-signed.
inline ThresholdPolicy first_best_policy(const MteCurve& mte, const Key& x) {
    if (mte.declared() != Monotonicity::Decreasing || !mte.verify_monotone(x))
        throw DomainError("first_best_policy: MTE must be decreasing");
    const double eps = 1e-9;
    if (mte.value_clamped(x, eps) <= 0.0) return {0.0};
    if (mte.value_clamped(x, 1.0 - eps) >= 0.0) return {1.0};
    return {find_root_bracketed([&](double u) { return mte.value_clamped(x, u); }, eps,
                                1.0 - eps, 1e-12)};
}

/// Optimal identified welfare of four policy classes on one x-cell, cost
/// omitted: subsidy rules (s_sub), direct mandates (s_dir), constant mandates
/// (s_con), and the infeasible resistance-targeting benchmark (s_fb).
inline WelfareLadder welfare_ladder(const MteCurve& mte, const PropensityFn& g, const Key& x,
                                    const std::vector<WCell>& wcells, double tol = 1e-9) {
    if (wcells.empty()) throw DomainError("welfare_ladder: no instrument cells");
    double wsum = 0.0;
    for (const WCell& c : wcells) wsum += c.weight;
    if (std::fabs(wsum - 1.0) > 1e-9)
        throw DomainError("welfare_ladder: instrument weights must sum to 1");

    WelfareLadder ladder;
    ladder.identified_support = identified_support(g, x, wcells);
    const auto& supp = ladder.identified_support;

    bool extrapolated = false;
    const auto probe = [&](double u) {
        const MteValue v = mte.at(x, std::clamp(u, 1e-15, 1.0 - 1e-15));
        extrapolated = extrapolated || v.extrapolated;
        return v.value;
    };

    // direct mandates: all of the support or none of it
    double full = 0.0;
    for (const Interval& s : supp) full += quad_integrate(probe, s.lo, s.hi, tol);
    ladder.s_dir = std::max(0.0, full);
    ladder.s_con = ladder.s_dir;

    // infeasible benchmark: only where the curve helps
    double fb = 0.0;
    for (const Interval& s : supp)
        fb += quad_integrate([&](double u) { return std::max(probe(u), 0.0); }, s.lo, s.hi,
                             tol);
    ladder.s_fb = fb;

    // subsidy rules: per w-cell, the best reachable upper limit of the
    // support-restricted running integral; candidates are the reachable
    // endpoints and the curve's sign changes in between
    double sub = 0.0;
    for (const WCell& c : wcells) {
        const double a = g.at(x, c.w, c.z_range.lo);
        const double b = g.at(x, c.w, c.z_range.hi);
        std::vector<double> candidates = {a, b};
        for (double r : detail::curve_crossings(mte, x, a, b)) candidates.push_back(r);
        double bestv = -std::numeric_limits<double>::infinity();
        for (double u : candidates)
            bestv = std::max(bestv, detail::support_integral(mte, x, supp, u, tol));
        sub += c.weight * bestv;
    }
    ladder.s_sub = sub;

    ladder.first_best_attained = std::fabs(ladder.s_sub - ladder.s_fb) <= 1e-7;
    if (extrapolated)
        ladder.warnings.push_back("MTE evaluated outside its identified region on the support");
    return ladder;
}

}  // namespace mte
