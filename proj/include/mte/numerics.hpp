#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include "mte/common.hpp"

namespace mte {

inline constexpr double kInvSqrt2Pi = 0.3989422804014326779;
inline constexpr double kSqrt2Pi = 2.5066282746310005024;

inline double norm_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

/// Standard normal CDF. Hart-style rational approximation for the central
/// range with a continued-fraction tail; max absolute error below 1e-13,
/// self-contained so results are bit-stable across platforms.
inline double norm_cdf(double x) {
    const double xa = std::fabs(x);
    double cum;
    if (xa > 37.0) {
        cum = 0.0;
    } else {
        const double e = std::exp(-0.5 * xa * xa);
        if (xa < 7.07106781186547) {
            double num = 3.52624965998911e-02 * xa + 0.700383064443688;
            num = num * xa + 6.37396220353165;
            num = num * xa + 33.912866078383;
            num = num * xa + 112.079291497871;
            num = num * xa + 221.213596169931;
            num = num * xa + 220.206867912376;
            double den = 8.83883476483184e-02 * xa + 1.75566716318264;
            den = den * xa + 16.064177579207;
            den = den * xa + 86.7807322029461;
            den = den * xa + 296.564248779674;
            den = den * xa + 637.333633378831;
            den = den * xa + 793.826512519948;
            den = den * xa + 440.413735824752;
            cum = e * num / den;
        } else {
            double cf = xa + 0.65;
            cf = xa + 4.0 / cf;
            cf = xa + 3.0 / cf;
            cf = xa + 2.0 / cf;
            cf = xa + 1.0 / cf;
            cum = e / (cf * kSqrt2Pi);
        }
    }
    return x > 0.0 ? 1.0 - cum : cum;
}

/// Standard normal quantile. Rational initializer refined by two Halley
/// steps against norm_cdf; round-trips with norm_cdf to ~1e-15.
inline double norm_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw DomainError("norm_quantile: p must lie in (0,1)");

    static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                    -2.759285104469687e+02, 1.383577518672690e+02,
                                    -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                    -1.556989798598866e+02, 6.680131188771972e+01,
                                    -1.328068155288572e+01};
    static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                    -2.400758277161838e+00, -2.549732539343734e+00,
                                    4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                    2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double plow = 0.02425;

    double x;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    for (int i = 0; i < 2; ++i) {
        const double e = norm_cdf(x) - p;
        const double u = e * kSqrt2Pi * std::exp(0.5 * x * x);
        x -= u / (1.0 + 0.5 * x * u);  // Halley
    }
    return x;
}

namespace detail {

template <class F>
double simpson_rec(const F& f, double a, double b, double fa, double fm, double fb, double whole,
                   double tol, double width_floor, int depth, bool& failed) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double h = b - a;
    const double left = h / 12.0 * (fa + 4.0 * flm + fm);
    const double right = h / 12.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (std::fabs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    // intervals at resolvable width are accepted as-is (integrable endpoint
    // singularities never meet a pointwise tolerance)
    if (h <= width_floor) return left + right + delta / 15.0;
    if (depth <= 0) {
        failed = true;
        return left + right + delta / 15.0;
    }
    return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, width_floor, depth - 1, failed) +
           simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, width_floor, depth - 1, failed);
}

}  // namespace detail

/// Adaptive Simpson quadrature of f over [a,b] with absolute tolerance tol.
/// Throws QuadratureError when the recursion depth is exhausted before the
/// tolerance is met.
template <class F>
double quad_integrate(F&& f, double a, double b, double tol = 1e-9, int max_depth = 50) {
    if (a > b) throw DomainError("quad_integrate: requires a <= b");
    if (a == b) return 0.0;
    const double fa = f(a);
    const double fb = f(b);
    const double m = 0.5 * (a + b);
    const double fm = f(m);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    const double width_floor = 1e-13 * (std::fabs(a) + std::fabs(b) + 1.0);
    bool failed = false;
    const double value =
        detail::simpson_rec(f, a, b, fa, fm, fb, whole, tol, width_floor, max_depth, failed);
    if (failed) throw QuadratureError("quad_integrate: tolerance not met at max recursion depth");
    return value;
}

/// Brent root finder on a bracketing interval. tol is on the argument.
template <class F>
double find_root_bracketed(F&& f, double lo, double hi, double tol = 1e-9, int maxit = 200) {
    double a = lo, b = hi;
    double fa = f(a), fb = f(b);
    if (fa == 0.0) return a;
    if (fb == 0.0) return b;
    if (fa * fb > 0.0) throw BracketError("find_root_bracketed: signs agree at both endpoints");

    double c = a, fc = fa;
    double d = b - a, e = d;
    for (int it = 0; it < maxit; ++it) {
        if ((fb > 0.0) == (fc > 0.0)) {
            c = a;
            fc = fa;
            e = d = b - a;
        }
        if (std::fabs(fc) < std::fabs(fb)) {
            a = b; b = c; c = a;
            fa = fb; fb = fc; fc = fa;
        }
        const double tol1 = 2.0 * std::numeric_limits<double>::epsilon() * std::fabs(b) + 0.5 * tol;
        const double xm = 0.5 * (c - b);
        if (std::fabs(xm) <= tol1 || fb == 0.0) return b;
        if (std::fabs(e) >= tol1 && std::fabs(fa) > std::fabs(fb)) {
            double p, q;
            const double s = fb / fa;
            if (a == c) {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                const double qq = fa / fc, r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if (p > 0.0) q = -q;
            p = std::fabs(p);
            if (2.0 * p < std::min(3.0 * xm * q - std::fabs(tol1 * q), std::fabs(e * q))) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += (std::fabs(d) > tol1) ? d : (xm > 0.0 ? tol1 : -tol1);
        fb = f(b);
    }
    throw Error("find_root_bracketed: max iterations exceeded");
}

// ---------------------------------------------------------------------------
// Dense matrix, least squares, probit MLE

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
    double* row(std::size_t i) { return data_.data() + i * cols_; }
    const double* row(std::size_t i) const { return data_.data() + i * cols_; }

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> data_;
};

/// Least-squares coefficients via Householder QR. Throws RankDeficiencyError
/// with the first dependent column when the design loses full column rank.
inline std::vector<double> ols_fit(const Matrix& design, const std::vector<double>& response) {
    const std::size_t n = design.rows(), k = design.cols();
    if (n != response.size()) throw DomainError("ols_fit: row/response length mismatch");
    if (n < k) throw DomainError("ols_fit: fewer rows than columns");

    Matrix a = design;
    std::vector<double> y = response;
    std::vector<double> colscale(k, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += a(i, j) * a(i, j);
        colscale[j] = std::sqrt(s);
    }

    for (std::size_t j = 0; j < k; ++j) {
        double norm = 0.0;
        for (std::size_t i = j; i < n; ++i) norm += a(i, j) * a(i, j);
        norm = std::sqrt(norm);
        if (norm <= 1e-12 * std::max(colscale[j], 1.0))
            throw RankDeficiencyError(static_cast<int>(j));

        double alpha = a(j, j) >= 0.0 ? -norm : norm;
        std::vector<double> v(n - j);
        v[0] = a(j, j) - alpha;
        for (std::size_t i = j + 1; i < n; ++i) v[i - j] = a(i, j);
        double vnorm2 = 0.0;
        for (double t : v) vnorm2 += t * t;
        if (vnorm2 > 0.0) {
            for (std::size_t jj = j; jj < k; ++jj) {
                double dot = 0.0;
                for (std::size_t i = j; i < n; ++i) dot += v[i - j] * a(i, jj);
                const double f = 2.0 * dot / vnorm2;
                for (std::size_t i = j; i < n; ++i) a(i, jj) -= f * v[i - j];
            }
            double dot = 0.0;
            for (std::size_t i = j; i < n; ++i) dot += v[i - j] * y[i];
            const double f = 2.0 * dot / vnorm2;
            for (std::size_t i = j; i < n; ++i) y[i] -= f * v[i - j];
        }
        a(j, j) = alpha;
    }

    std::vector<double> beta(k, 0.0);
    for (std::size_t jj = k; jj-- > 0;) {
        double s = y[jj];
        for (std::size_t m = jj + 1; m < k; ++m) s -= a(jj, m) * beta[m];
        if (std::fabs(a(jj, jj)) <= 1e-14 * std::max(colscale[jj], 1.0))
            throw RankDeficiencyError(static_cast<int>(jj));
        beta[jj] = s / a(jj, jj);
    }
    return beta;
}

/// Symmetric positive-definite solve (Cholesky), for small normal equations.
inline std::vector<double> solve_spd(Matrix a, std::vector<double> b) {
    const std::size_t k = a.rows();
    for (std::size_t j = 0; j < k; ++j) {
        double d = a(j, j);
        for (std::size_t m = 0; m < j; ++m) d -= a(j, m) * a(j, m);
        if (d <= 0.0) throw Error("solve_spd: matrix not positive definite");
        d = std::sqrt(d);
        a(j, j) = d;
        for (std::size_t i = j + 1; i < k; ++i) {
            double s = a(i, j);
            for (std::size_t m = 0; m < j; ++m) s -= a(i, m) * a(j, m);
            a(i, j) = s / d;
        }
    }
    for (std::size_t i = 0; i < k; ++i) {
        double s = b[i];
        for (std::size_t m = 0; m < i; ++m) s -= a(i, m) * b[m];
        b[i] = s / a(i, i);
    }
    for (std::size_t i = k; i-- > 0;) {
        double s = b[i];
        for (std::size_t m = i + 1; m < k; ++m) s -= a(m, i) * b[m];
        b[i] = s / a(i, i);
    }
    return b;
}

inline double probit_loglik(const Matrix& design, const std::vector<int>& choices,
                            const std::vector<double>& beta) {
    const std::size_t n = design.rows(), k = design.cols();
    long double ll = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
        double idx = 0.0;
        for (std::size_t j = 0; j < k; ++j) idx += design(i, j) * beta[j];
        idx = std::clamp(idx, -37.0, 37.0);
        const double p = choices[i] ? norm_cdf(idx) : norm_cdf(-idx);
        ll += std::log(std::max(p, 1e-300));
    }
    return static_cast<double>(ll);
}

/// Probit MLE by Fisher scoring with step halving, started at zero.
/// Converges to score norm <= 1e-8; perfect separation is reported as
/// SeparationError carrying the gradient-norm trace.
inline std::vector<double> probit_fit(const Matrix& design, const std::vector<int>& choices,
                                      int maxit = 100) {
    const std::size_t n = design.rows(), k = design.cols();
    if (n != choices.size()) throw DomainError("probit_fit: row/choice length mismatch");
    bool has0 = false, has1 = false;
    for (int d : choices) (d ? has1 : has0) = true;
    if (!has0 || !has1) throw DomainError("probit_fit: both choice values must be present");

    std::vector<double> beta(k, 0.0);
    double ll = probit_loglik(design, choices, beta);
    std::vector<double> trace;

    for (int it = 0; it < maxit; ++it) {
        std::vector<long double> score(k, 0.0L);
        Matrix info(k, k, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double idx = 0.0;
            for (std::size_t j = 0; j < k; ++j) idx += design(i, j) * beta[j];
            idx = std::clamp(idx, -37.0, 37.0);
            const double pdf = norm_pdf(idx);
            const double cdf = norm_cdf(idx);
            const double p = std::clamp(cdf, 1e-12, 1.0 - 1e-12);
            const double resid = choices[i] ? pdf / p : -pdf / (1.0 - p);
            const double wgt = pdf * pdf / (p * (1.0 - p));
            for (std::size_t j = 0; j < k; ++j) {
                score[j] += resid * design(i, j);
                for (std::size_t m = 0; m <= j; ++m) info(j, m) += wgt * design(i, j) * design(i, m);
            }
        }
        for (std::size_t j = 0; j < k; ++j)
            for (std::size_t m = j + 1; m < k; ++m) info(j, m) = info(m, j);

        std::vector<double> g(k);
        double gnorm = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            g[j] = static_cast<double>(score[j]);
            gnorm += g[j] * g[j];
        }
        gnorm = std::sqrt(gnorm);
        trace.push_back(gnorm);
        if (gnorm <= 1e-8) {
            // A vanishing score can also mean the likelihood is maximized at
            // infinity: every point classified correctly with a wide margin.
            double min_margin = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < n; ++i) {
                double idx = 0.0;
                for (std::size_t j = 0; j < k; ++j) idx += design(i, j) * beta[j];
                min_margin = std::min(min_margin, choices[i] ? idx : -idx);
            }
            if (min_margin > 5.0)
                throw SeparationError("probit_fit: perfect separation detected",
                                      std::move(trace));
            return beta;
        }

        std::vector<double> step = solve_spd(info, g);
        double scale = 1.0;
        std::vector<double> cand(k);
        for (int half = 0; half < 40; ++half) {
            for (std::size_t j = 0; j < k; ++j) cand[j] = beta[j] + scale * step[j];
            const double llc = probit_loglik(design, choices, cand);
            if (llc >= ll - 1e-14) {
                beta = cand;
                ll = llc;
                break;
            }
            scale *= 0.5;
        }
    }

    // Did not converge: distinguish separation from plain non-convergence.
    bool separated = true;
    for (std::size_t i = 0; i < n && separated; ++i) {
        double idx = 0.0;
        for (std::size_t j = 0; j < k; ++j) idx += design(i, j) * beta[j];
        if ((choices[i] == 1 && idx < 0.0) || (choices[i] == 0 && idx > 0.0)) separated = false;
    }
    throw SeparationError(separated ? "probit_fit: perfect separation detected"
                                    : "probit_fit: did not converge",
                          std::move(trace));
}

// ---------------------------------------------------------------------------
// Linear programming (dense two-phase simplex, Bland's rule)

struct LinearConstraint {
    std::vector<double> a;
    double b = 0.0;
};

struct LpSolution {
    double value = 0.0;
    std::vector<double> x;
};

namespace detail {

struct SimplexTableau {
    // rows x (ncols + 1); last column is the rhs.
    std::size_t nrows, ncols;
    std::vector<double> t;
    std::vector<std::size_t> basis;

    double& at(std::size_t i, std::size_t j) { return t[i * (ncols + 1) + j]; }
    double at(std::size_t i, std::size_t j) const { return t[i * (ncols + 1) + j]; }

    void pivot(std::size_t pr, std::size_t pc) {
        const double pv = at(pr, pc);
        for (std::size_t j = 0; j <= ncols; ++j) at(pr, j) /= pv;
        for (std::size_t i = 0; i < nrows; ++i) {
            if (i == pr) continue;
            const double f = at(i, pc);
            if (f == 0.0) continue;
            for (std::size_t j = 0; j <= ncols; ++j) at(i, j) -= f * at(pr, j);
        }
        basis[pr] = pc;
    }

    // Minimizes cost over the current basic feasible solution. Bland's rule.
    // Only columns below enter_limit may enter the basis (phase 2 must keep
    // artificials out). Returns false when unbounded.
    bool run(const std::vector<double>& cost, std::size_t enter_limit, double eps = 1e-9) {
        for (;;) {
            std::vector<double> red = cost;
            for (std::size_t i = 0; i < nrows; ++i) {
                const double cb = cost[basis[i]];
                if (cb == 0.0) continue;
                for (std::size_t j = 0; j < ncols; ++j) red[j] -= cb * at(i, j);
            }
            std::size_t enter = ncols;
            for (std::size_t j = 0; j < enter_limit; ++j) {
                if (red[j] < -eps) {
                    enter = j;
                    break;  // Bland: smallest index
                }
            }
            if (enter == ncols) return true;  // optimal
            std::size_t leave = nrows;
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < nrows; ++i) {
                const double aij = at(i, enter);
                if (aij > eps) {
                    const double ratio = at(i, ncols) / aij;
                    if (ratio < best - 1e-12 ||
                        (ratio < best + 1e-12 && (leave == nrows || basis[i] < basis[leave]))) {
                        best = ratio;
                        leave = i;
                    }
                }
            }
            if (leave == nrows) return false;  // unbounded
            pivot(leave, enter);
        }
    }
};

}  // namespace detail

/// Minimizes objective . x subject to eq[i].a . x == eq[i].b and
/// ineq[i].a . x <= ineq[i].b, x free. Two-phase dense simplex with Bland's
/// anti-cycling rule; distinguishes infeasible from unbounded problems.
inline LpSolution lp_min_linear(const std::vector<double>& objective,
                                const std::vector<LinearConstraint>& eq,
                                const std::vector<LinearConstraint>& ineq) {
    const std::size_t n = objective.size();
    const std::size_t meq = eq.size(), min = ineq.size();
    const std::size_t m = meq + min;

    // Variables: x = p - q with p,q >= 0, one slack per inequality, one
    // artificial per row that needs it for the phase-1 basis.
    const std::size_t nslack = min;
    std::vector<std::vector<double>> rows(m, std::vector<double>(2 * n + nslack, 0.0));
    std::vector<double> rhs(m, 0.0);

    for (std::size_t i = 0; i < m; ++i) {
        const LinearConstraint& con = i < meq ? eq[i] : ineq[i - meq];
        if (con.a.size() != n) throw DomainError("lp_min_linear: constraint length mismatch");
        for (std::size_t j = 0; j < n; ++j) {
            rows[i][j] = con.a[j];
            rows[i][n + j] = -con.a[j];
        }
        if (i >= meq) rows[i][2 * n + (i - meq)] = 1.0;
        rhs[i] = con.b;
        if (rhs[i] < 0.0) {
            for (double& v : rows[i]) v = -v;
            rhs[i] = -rhs[i];
        }
    }

    // Artificial basis: slack column serves when it survived the sign flip.
    std::vector<std::size_t> art_of_row(m, SIZE_MAX);
    std::size_t nart = 0;
    for (std::size_t i = 0; i < m; ++i) {
        const bool slack_ok = i >= meq && rows[i][2 * n + (i - meq)] > 0.5;
        if (!slack_ok) art_of_row[i] = nart++;
    }

    detail::SimplexTableau tab;
    tab.nrows = m;
    tab.ncols = 2 * n + nslack + nart;
    tab.t.assign(m * (tab.ncols + 1), 0.0);
    tab.basis.assign(m, 0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < 2 * n + nslack; ++j) tab.at(i, j) = rows[i][j];
        if (art_of_row[i] != SIZE_MAX) {
            tab.at(i, 2 * n + nslack + art_of_row[i]) = 1.0;
            tab.basis[i] = 2 * n + nslack + art_of_row[i];
        } else {
            tab.basis[i] = 2 * n + (i - meq);
        }
        tab.at(i, tab.ncols) = rhs[i];
    }

    if (nart > 0) {
        std::vector<double> phase1(tab.ncols, 0.0);
        for (std::size_t j = 2 * n + nslack; j < tab.ncols; ++j) phase1[j] = 1.0;
        if (!tab.run(phase1, tab.ncols))
            throw Error("lp_min_linear: phase 1 unbounded (internal)");
        double infeas = 0.0;
        for (std::size_t i = 0; i < m; ++i)
            if (tab.basis[i] >= 2 * n + nslack) infeas += tab.at(i, tab.ncols);
        if (infeas > 1e-7) throw LpInfeasibleError("lp_min_linear: constraints are infeasible");
        // Drive leftover artificials out of the basis.
        for (std::size_t i = 0; i < m; ++i) {
            if (tab.basis[i] < 2 * n + nslack) continue;
            std::size_t pc = tab.ncols;
            for (std::size_t j = 0; j < 2 * n + nslack; ++j) {
                if (std::fabs(tab.at(i, j)) > 1e-9) {
                    pc = j;
                    break;
                }
            }
            if (pc == tab.ncols) {
                tab.at(i, tab.ncols) = 0.0;  // redundant row
                continue;
            }
            tab.pivot(i, pc);
        }
    }

    std::vector<double> cost(tab.ncols, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        cost[j] = objective[j];
        cost[n + j] = -objective[j];
    }
    if (!tab.run(cost, 2 * n + nslack))
        throw LpUnboundedError("lp_min_linear: objective unbounded below");

    std::vector<double> full(tab.ncols, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        if (tab.basis[i] < tab.ncols) full[tab.basis[i]] = tab.at(i, tab.ncols);
    LpSolution sol;
    sol.x.resize(n);
    for (std::size_t j = 0; j < n; ++j) sol.x[j] = full[j] - full[n + j];
    sol.value = std::inner_product(sol.x.begin(), sol.x.end(), objective.begin(), 0.0);
    return sol;
}

// ---------------------------------------------------------------------------
// One-dimensional grid with linear interpolation

struct Grid {
    std::vector<double> points;
    std::vector<double> values;

    Grid() = default;
    Grid(std::vector<double> pts, std::vector<double> vals)
        : points(std::move(pts)), values(std::move(vals)) {
        validate();
    }

    void validate() const {
        if (points.size() != values.size()) throw DomainError("Grid: length mismatch");
        if (points.size() < 2) throw DomainError("Grid: needs at least two points");
        for (std::size_t i = 1; i < points.size(); ++i)
            if (!(points[i] > points[i - 1]))
                throw DomainError("Grid: points must be strictly increasing");
    }

    std::size_t size() const { return points.size(); }
    double front() const { return points.front(); }
    double back() const { return points.back(); }

    // Index of the segment containing x (clamped).
    std::size_t segment(double x) const {
        if (x <= points.front()) return 0;
        if (x >= points.back()) return points.size() - 2;
        const auto it = std::upper_bound(points.begin(), points.end(), x);
        return static_cast<std::size_t>(it - points.begin()) - 1;
    }

    // Linear interpolation, clamped to the end values outside the range.
    double operator()(double x) const {
        if (x <= points.front()) return values.front();
        if (x >= points.back()) return values.back();
        const std::size_t i = segment(x);
        const double t = (x - points[i]) / (points[i + 1] - points[i]);
        return values[i] + t * (values[i + 1] - values[i]);
    }

    // Slope of the interpolant on the segment containing x.
    double slope(double x) const {
        const std::size_t i = segment(x);
        return (values[i + 1] - values[i]) / (points[i + 1] - points[i]);
    }
};

inline std::vector<double> linspace(double a, double b, std::size_t n) {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
    return out;
}

}  // namespace mte
