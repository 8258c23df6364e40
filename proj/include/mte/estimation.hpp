#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "mte/common.hpp"
#include "mte/model.hpp"
#include "mte/numerics.hpp"
#include "mte/welfare.hpp"

namespace mte {

// ---------------------------------------------------------------------------
// Choice equation

/// Probit fit of the choice equation on [1, x, z]. A nonpositive subsidy
/// coefficient undermines invertibility in z and is surfaced as a warning.
inline PropensityFn fit_choice_probit(const Dataset& data,
                                      std::vector<std::string>* warnings = nullptr) {
    data.validate();
    const std::size_t n = data.size(), kx = data.x.cols();
    Matrix design(n, kx + 2);
    for (std::size_t i = 0; i < n; ++i) {
        design(i, 0) = 1.0;
        for (std::size_t j = 0; j < kx; ++j) design(i, j + 1) = data.x(i, j);
        design(i, kx + 1) = data.z[i];
    }
    const std::vector<double> coef = probit_fit(design, data.d);
    std::vector<double> betaD(coef.begin(), coef.end() - 1);
    const double gamma = coef.back();
    if (!(gamma > 0.0) && warnings)
        warnings->push_back("fitted subsidy coefficient is not positive; the propensity is "
                            "not invertible in z");
    return PropensityFn::probit(std::move(betaD), gamma);
}

// ---------------------------------------------------------------------------
// Heckman two-step

struct HeckmanFit {
    std::vector<double> betaD;
    double gamma = 0.0;
    std::vector<double> beta1, beta0;
    double rho1 = 0.0, rho0 = 0.0;
    double sigma1 = 1.0, sigma0 = 1.0;
    std::size_t n = 0;
    std::vector<std::string> warnings;

    double mte_slope() const { return rho1 * sigma1 - rho0 * sigma0; }
};

/// Two-step selection fit: probit choice equation, then outcome regressions
/// with the appropriate truncation-correction term per treatment arm.
/// The correction coefficients recover rho*sigma; the error variances follow
/// from the residual variance plus the truncation identity.
inline HeckmanFit heckman_two_step(const Dataset& data) {
    data.validate();
    const std::size_t n = data.size(), kx = data.x.cols();

    HeckmanFit fit;
    fit.n = n;
    const PropensityFn g = fit_choice_probit(data, &fit.warnings);
    fit.betaD = g.probit_form().betaD;
    fit.gamma = g.probit_form().gamma;

    std::vector<double> index(n);
    for (std::size_t i = 0; i < n; ++i)
        index[i] = dot_with_intercept(fit.betaD, data.x_row(i)) + fit.gamma * data.z[i];

    // One arm at a time: d = 1 uses pdf/cdf, d = 0 uses -pdf/(1-cdf).
    const auto arm = [&](int dval, std::vector<double>& beta, double& rho, double& sigma) {
        std::vector<std::size_t> rows;
        std::size_t dropped = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (data.d[i] != dval) continue;
            const double p = norm_cdf(index[i]);
            const double denom = dval ? p : 1.0 - p;
            if (denom < 1e-10) {
                ++dropped;
                continue;
            }
            rows.push_back(i);
        }
        if (dropped > 0)
            fit.warnings.push_back("arm d=" + std::to_string(dval) + ": dropped " +
                                   std::to_string(dropped) +
                                   " rows with a degenerate correction term");
        if (rows.size() < kx + 2)
            throw DomainError("heckman_two_step: too few usable rows in arm d=" +
                              std::to_string(dval));

        Matrix design(rows.size(), kx + 2);
        std::vector<double> y(rows.size());
        std::vector<double> mills(rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const std::size_t i = rows[r];
            const double p = norm_cdf(index[i]);
            const double lam =
                dval ? norm_pdf(index[i]) / p : -norm_pdf(index[i]) / (1.0 - p);
            design(r, 0) = 1.0;
            for (std::size_t j = 0; j < kx; ++j) design(r, j + 1) = data.x(i, j);
            design(r, kx + 1) = lam;
            y[r] = data.y[i];
            mills[r] = lam;
        }
        const std::vector<double> coef = ols_fit(design, y);
        beta.assign(coef.begin(), coef.end() - 1);
        const double rho_sigma = coef.back();

        double rss = 0.0, corr = 0.0;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            double fitv = 0.0;
            for (std::size_t j = 0; j < kx + 2; ++j) fitv += design(r, j) * coef[j];
            const double e = y[r] - fitv;
            rss += e * e;
            corr += mills[r] * (mills[r] + index[rows[r]]);
        }
        const double var =
            rss / rows.size() + rho_sigma * rho_sigma * (corr / rows.size());
        sigma = std::sqrt(std::max(var, 1e-12));
        rho = rho_sigma / sigma;
        if (rho > 1.0 || rho < -1.0) {
            fit.warnings.push_back("arm d=" + std::to_string(dval) +
                                   ": correlation clipped into [-1,1]");
            rho = std::clamp(rho, -1.0, 1.0);
        }
    };

    arm(1, fit.beta1, fit.rho1, fit.sigma1);
    arm(0, fit.beta0, fit.rho0, fit.sigma0);
    return fit;
}

/// Normal-model MTE implied by a two-step fit; decreasing when the slope is
/// positive.
inline MteCurve mte_from_heckman(const HeckmanFit& fit) {
    std::vector<double> diff(fit.beta1.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = fit.beta1[i] - fit.beta0[i];
    return MteCurve::normal_parametric(std::move(diff), fit.mte_slope());
}

// ---------------------------------------------------------------------------
// Semiparametric two-stage fit

struct SemiparametricFit {
    std::vector<double> beta1, beta0;
    std::vector<double> theta;  // lambda(p) = sum_{k>=2} theta[k] p^k
    int degree = 0;
    std::vector<std::string> warnings;
};

/// Partially linear outcome fit on the generated propensity regressor:
/// y ~ x + x*p + polynomial(p). The polynomial's constant is collinear with
/// the intercept and its linear term with the p-block, so both are absorbed;
/// the reported selection correction is identified up to those terms.
inline SemiparametricFit semiparametric_two_stage(const Dataset& data, int degree) {
    if (degree < 2 || degree > 5)
        throw DomainError("semiparametric_two_stage: degree must be in [2,5]");
    data.validate();
    const std::size_t n = data.size(), kx = data.x.cols();

    SemiparametricFit fit;
    fit.degree = degree;
    const PropensityFn g = fit_choice_probit(data, &fit.warnings);

    const std::size_t ncols = 1 + kx + 1 + kx + static_cast<std::size_t>(degree) - 1;
    Matrix design(n, ncols);
    for (std::size_t i = 0; i < n; ++i) {
        const double p = g.at(data.x_row(i), data.w_row(i), data.z[i]);
        std::size_t c = 0;
        design(i, c++) = 1.0;
        for (std::size_t j = 0; j < kx; ++j) design(i, c++) = data.x(i, j);
        design(i, c++) = p;
        for (std::size_t j = 0; j < kx; ++j) design(i, c++) = data.x(i, j) * p;
        double pk = p;
        for (int k = 2; k <= degree; ++k) {
            pk *= p;
            design(i, c++) = pk;
        }
    }

    std::vector<double> coef;
    try {
        coef = ols_fit(design, data.y);
    } catch (const RankDeficiencyError& e) {
        throw Error("semiparametric_two_stage: collinearity between the propensity "
                    "polynomial and the covariates (column " +
                    std::to_string(e.column) + ")");
    }

    fit.beta0.assign(coef.begin(), coef.begin() + 1 + kx);
    std::vector<double> diff(coef.begin() + 1 + kx, coef.begin() + 2 + 2 * kx);
    fit.beta1.resize(diff.size());
    for (std::size_t i = 0; i < diff.size(); ++i) fit.beta1[i] = fit.beta0[i] + diff[i];
    fit.theta.assign(degree + 1, 0.0);
    for (int k = 2; k <= degree; ++k) fit.theta[k] = coef[2 + 2 * kx + (k - 2)];
    return fit;
}

inline MteCurve mte_from_semiparametric(const SemiparametricFit& fit,
                                        Monotonicity declared = Monotonicity::None) {
    std::vector<double> diff(fit.beta1.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = fit.beta1[i] - fit.beta0[i];
    std::vector<double> dlambda(fit.theta.size() - 1, 0.0);
    for (std::size_t k = 1; k < fit.theta.size(); ++k)
        dlambda[k - 1] = static_cast<double>(k) * fit.theta[k];
    return MteCurve::poly_lambda_prime(std::move(diff), std::move(dlambda), declared);
}

// ---------------------------------------------------------------------------
// Local instrumental variables

/// Local-linear derivative of E[Y | propensity] per x-cell on a resistance
/// grid; the local slope is the curve estimate. Grid knots with fewer than
/// 30 observations within one bandwidth are left out of the identified mask.
inline MteCurve liv_estimate(const Dataset& data, const PropensityFn& g,
                             const std::vector<double>& u_grid, double bandwidth = 0.0) {
    data.validate();
    if (u_grid.size() < 2) throw DomainError("liv_estimate: grid too small");
    const std::size_t n = data.size();

    std::map<Key, std::vector<std::size_t>> cells;
    for (std::size_t i = 0; i < n; ++i) cells[data.x_row(i)].push_back(i);

    std::map<Key, MteCurve::MaskedGrid> out;
    for (const auto& [x, rows] : cells) {
        if (rows.size() < 500)
            throw DomainError("liv_estimate: cell needs at least 500 observations");

        std::vector<double> p(rows.size()), y(rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const std::size_t i = rows[r];
            p[r] = g.at(x, data.w_row(i), data.z[i]);
            y[r] = data.y[i];
        }

        double h = bandwidth;
        if (!(h > 0.0)) {
            double mean = 0.0;
            for (double v : p) mean += v;
            mean /= p.size();
            double var = 0.0;
            for (double v : p) var += (v - mean) * (v - mean);
            var /= p.size();
            h = 1.06 * std::sqrt(var) * std::pow(static_cast<double>(p.size()), -0.2);
            if (!(h > 0.0)) throw DomainError("liv_estimate: degenerate propensity spread");
        }

        std::vector<double> values(u_grid.size(), 0.0);
        std::vector<bool> mask(u_grid.size(), false);
        double last_good = 0.0;
        for (std::size_t k = 0; k < u_grid.size(); ++k) {
            const double u = u_grid[k];
            double s0 = 0, s1 = 0, s2 = 0, sy = 0, sxy = 0;
            std::size_t close = 0;
            for (std::size_t r = 0; r < p.size(); ++r) {
                const double t = (p[r] - u) / h;
                if (t <= -1.0 || t >= 1.0) continue;
                ++close;
                const double wgt = 1.0 - t * t;  // Epanechnikov, scale-free
                const double dx = p[r] - u;
                s0 += wgt;
                s1 += wgt * dx;
                s2 += wgt * dx * dx;
                sy += wgt * y[r];
                sxy += wgt * dx * y[r];
            }
            const double denom = s0 * s2 - s1 * s1;
            if (close >= 30 && denom > 1e-12 * s0 * h * h) {
                values[k] = (s0 * sxy - s1 * sy) / denom;
                mask[k] = true;
                last_good = values[k];
            } else {
                values[k] = last_good;  // filler; flagged by the mask
            }
        }
        // leading unmasked knots inherit the first computed value
        for (std::size_t k = u_grid.size(); k-- > 0;) {
            if (mask[k])
                last_good = values[k];
            else
                values[k] = last_good;
        }
        out.emplace(x, MteCurve::MaskedGrid{Grid(u_grid, std::move(values)), std::move(mask)});
    }
    return MteCurve::grid_curve(std::move(out));
}

// ---------------------------------------------------------------------------
// Concave regression learner

struct ConcaveFit {
    Grid curve;
    double arg_max = 0.0;
    std::size_t knots = 0;
};

/// Weighted least-squares fit over concave piecewise-linear functions on the
/// sorted regressor, solved by Dykstra's alternating projections onto the
/// second-difference half-spaces; the reported maximizer is the peak of the
/// fitted curve. Monotone-decreasing marginal effects make the regression
/// function concave, which is what this learner exploits.
inline ConcaveFit concave_policy_learn(std::vector<double> regressor, std::vector<double> y,
                                       std::size_t max_knots = 512) {
    if (regressor.size() != y.size())
        throw DomainError("concave_policy_learn: length mismatch");
    const std::size_t n = regressor.size();

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return regressor[a] < regressor[b]; });

    // aggregate to weighted knots (distinct values, then equal-count bins)
    std::vector<double> kx, ky, kw;
    for (std::size_t r = 0; r < n;) {
        std::size_t s = r;
        double sy = 0.0;
        while (s < n && regressor[order[s]] == regressor[order[r]]) sy += y[order[s++]];
        kx.push_back(regressor[order[r]]);
        ky.push_back(sy / (s - r));
        kw.push_back(static_cast<double>(s - r));
        r = s;
    }
    if (kx.size() < 3)
        throw DomainError("concave_policy_learn: needs at least 3 distinct regressor values");

    if (kx.size() > max_knots) {
        std::vector<double> bx, by, bw;
        const double per = static_cast<double>(n) / static_cast<double>(max_knots);
        double accx = 0.0, accy = 0.0, accw = 0.0;
        std::size_t emitted = 0;
        for (std::size_t i = 0; i < kx.size(); ++i) {
            accx += kx[i] * kw[i];
            accy += ky[i] * kw[i];
            accw += kw[i];
            const bool last = i + 1 == kx.size();
            if (accw >= per * (emitted + 1) - static_cast<double>(emitted) * 0.0 || last) {
                bx.push_back(accx / accw);
                by.push_back(accy / accw);
                bw.push_back(accw);
                accx = accy = accw = 0.0;
                ++emitted;
            }
        }
        kx = std::move(bx);
        ky = std::move(by);
        kw = std::move(bw);
    }

    const std::size_t K = kx.size();
    std::vector<double> q = ky;
    if (K >= 3) {
        // constraint rows: slope(i) - slope(i-1) <= 0 at interior knots
        struct Row {
            std::size_t i;   // centered at knot i
            double a0, a1, a2;
            double denom;    // a^T W^{-1} a
        };
        std::vector<Row> rows;
        rows.reserve(K - 2);
        for (std::size_t i = 1; i + 1 < K; ++i) {
            const double hl = kx[i] - kx[i - 1];
            const double hr = kx[i + 1] - kx[i];
            Row r{i, 1.0 / hl, -1.0 / hl - 1.0 / hr, 1.0 / hr, 0.0};
            r.denom = r.a0 * r.a0 / kw[i - 1] + r.a1 * r.a1 / kw[i] + r.a2 * r.a2 / kw[i + 1];
            rows.push_back(r);
        }
        std::vector<std::array<double, 3>> increments(rows.size(), {0.0, 0.0, 0.0});

        const double scale = [&] {
            double lo = ky[0], hi = ky[0];
            for (double v : ky) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            return std::max(hi - lo, 1e-12);
        }();

        const auto max_violation = [&] {
            double worst = 0.0;
            for (const Row& r : rows)
                worst = std::max(worst,
                                 r.a0 * q[r.i - 1] + r.a1 * q[r.i] + r.a2 * q[r.i + 1]);
            return worst;
        };

        // Dykstra sweeps with the per-constraint correction memory
        for (int sweep = 0; sweep < 200000; ++sweep) {
            for (std::size_t ci = 0; ci < rows.size(); ++ci) {
                const Row& r = rows[ci];
                auto& inc = increments[ci];
                q[r.i - 1] += inc[0];
                q[r.i] += inc[1];
                q[r.i + 1] += inc[2];
                const double viol = r.a0 * q[r.i - 1] + r.a1 * q[r.i] + r.a2 * q[r.i + 1];
                if (viol > 0.0) {
                    const double f = viol / r.denom;
                    inc[0] = f * r.a0 / kw[r.i - 1];
                    inc[1] = f * r.a1 / kw[r.i];
                    inc[2] = f * r.a2 / kw[r.i + 1];
                    q[r.i - 1] -= inc[0];
                    q[r.i] -= inc[1];
                    q[r.i + 1] -= inc[2];
                } else {
                    inc = {0.0, 0.0, 0.0};
                }
            }
            if (sweep % 16 == 15 && max_violation() <= 1e-10 * scale) break;
        }
        // plain projection passes drive the residual violation to the floor
        for (int sweep = 0; sweep < 10000 && max_violation() > 1e-12 * scale; ++sweep) {
            for (const Row& r : rows) {
                const double viol = r.a0 * q[r.i - 1] + r.a1 * q[r.i] + r.a2 * q[r.i + 1];
                if (viol > 0.0) {
                    const double f = viol / r.denom;
                    q[r.i - 1] -= f * r.a0 / kw[r.i - 1];
                    q[r.i] -= f * r.a1 / kw[r.i];
                    q[r.i + 1] -= f * r.a2 / kw[r.i + 1];
                }
            }
        }
    }

    ConcaveFit fit;
    fit.knots = K;
    fit.curve = Grid(kx, q);

    // peak of the piecewise-linear fit: midpoint of the maximal flat run
    std::size_t lo = 0, hi = 0;
    double best = q[0];
    for (std::size_t i = 1; i < K; ++i) {
        if (q[i] > best + 1e-12 * std::max(1.0, std::fabs(best))) {
            best = q[i];
            lo = hi = i;
        } else if (q[i] >= best - 1e-12 * std::max(1.0, std::fabs(best))) {
            hi = i;
        }
    }
    fit.arg_max = 0.5 * (kx[lo] + kx[hi]);
    return fit;
}

/// Dataset-level wrapper: regress the outcome on the fitted propensity when
/// one is supplied, otherwise on the observed subsidy.
inline ConcaveFit concave_policy_learn(const Dataset& data, const PropensityFn* g) {
    std::vector<double> reg(data.size());
    for (std::size_t i = 0; i < data.size(); ++i)
        reg[i] = g ? g->at(data.x_row(i), data.w_row(i), data.z[i]) : data.z[i];
    return concave_policy_learn(std::move(reg), data.y);
}

// ---------------------------------------------------------------------------
// Empirical welfare on the support

/// Welfare of an on-support rule straight from the data: per cell, the mean
/// outcome (and take-up, for the cost) over records whose observed subsidy
/// sits within match_tol of the assignment.
inline double empirical_welfare(const Dataset& data, const SubsidyRule& rule,
                                const CostSpec& cost, double match_tol) {
    rule.validate();
    data.validate();

    double total = 0.0;
    for (std::size_t c = 0; c < rule.cells.size(); ++c) {
        const Cell& cell = rule.cells[c];
        const double zpi = rule.assignment[c];
        double sy = 0.0, sd = 0.0;
        std::size_t cnt = 0;
        double nearest_dist = std::numeric_limits<double>::infinity();
        double nearest_z = 0.0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            if (data.x_row(i) != cell.x || data.w_row(i) != cell.w) continue;
            const double dist = std::fabs(data.z[i] - zpi);
            if (dist < nearest_dist) {
                nearest_dist = dist;
                nearest_z = data.z[i];
            }
            if (dist <= match_tol) {
                sy += data.y[i];
                sd += data.d[i];
                ++cnt;
            }
        }
        if (cnt == 0) {
            if (!std::isfinite(nearest_dist))
                throw DomainError("empirical_welfare: cell " + std::to_string(c) +
                                  " has no records");
            throw DomainError("empirical_welfare: cell " + std::to_string(c) +
                              " assignment off the observed support; nearest observed z is " +
                              std::to_string(nearest_z));
        }
        const double my = sy / cnt, md = sd / cnt;
        const double cc = cost.value(cell.x, cell.w, zpi, 1) * md +
                          cost.value(cell.x, cell.w, zpi, 0) * (1.0 - md);
        total += cell.weight * (my - cc);
    }
    return total;
}

}  // namespace mte
