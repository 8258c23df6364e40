#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mte/common.hpp"
#include "mte/numerics.hpp"
#include "mte/rng.hpp"

namespace mte {

// ---------------------------------------------------------------------------
// Observational data

struct Dataset {
    std::vector<double> y;
    std::vector<int> d;
    Matrix x;  // n x kx (kx may be 0)
    Matrix w;  // n x kw (kw may be 0)
    std::vector<double> z;

    std::size_t size() const { return y.size(); }

    Key x_row(std::size_t i) const {
        Key k(x.cols());
        for (std::size_t j = 0; j < x.cols(); ++j) k[j] = x(i, j);
        return k;
    }
    Key w_row(std::size_t i) const {
        Key k(w.cols());
        for (std::size_t j = 0; j < w.cols(); ++j) k[j] = w(i, j);
        return k;
    }

    void validate() const {
        const std::size_t n = y.size();
        if (d.size() != n || z.size() != n || x.rows() != n || w.rows() != n)
            throw DomainError("Dataset: column lengths differ");
        for (int v : d)
            if (v != 0 && v != 1) throw DomainError("Dataset: d must be 0 or 1");
    }
};

// ---------------------------------------------------------------------------
// Normal selection model parameters

/// Coefficients and covariance of the normal selection model. Coefficient
/// vectors include the intercept as their first element.
///
/// Orientation: take-up is D = 1{x'betaD + z*gamma >= U_d} with a standard
/// normal choice shock U_d, and rho1/rho0 correlate the outcome errors with
/// the *negated* shock. Under this convention a positive rho1 means
/// high-gain individuals take up first, and the curve is
///   MTE(x,u) = x'(beta1 - beta0) - (rho1*sigma1 - rho0*sigma0) * Phi^{-1}(u).
struct SelectionParams {
    std::vector<double> beta1;
    std::vector<double> beta0;
    std::vector<double> betaD;
    double gamma = 0.0;
    double sigma1 = 1.0, sigma0 = 1.0;
    double rho1 = 0.0, rho0 = 0.0, rho01 = 0.0;

    double mte_slope() const { return rho1 * sigma1 - rho0 * sigma0; }

    // Covariance of (U1, U0, -U_d), row-major.
    std::array<double, 9> covariance() const {
        const double c01 = rho01 * sigma0 * sigma1;
        const double c1d = rho1 * sigma1;
        const double c0d = rho0 * sigma0;
        return {sigma1 * sigma1, c01, c1d, c01, sigma0 * sigma0, c0d, c1d, c0d, 1.0};
    }

    void validate() const {
        if (!(sigma1 > 0.0) || !(sigma0 > 0.0))
            throw DomainError("SelectionParams: sigma1, sigma0 must be positive");
        if (!(gamma > 0.0))
            throw DomainError("SelectionParams: gamma must be positive for an invertible propensity");
        if (beta1.size() != beta0.size())
            throw DomainError("SelectionParams: beta1/beta0 length mismatch");
        if (beta1.empty() || betaD.empty())
            throw DomainError("SelectionParams: coefficient vectors need an intercept");
        const auto cov = covariance();
        const double scale = std::max({cov[0], cov[4], cov[8]});
        if (min_eigenvalue_sym3(cov) < -1e-9 * scale)
            throw DomainError("SelectionParams: implied covariance is not positive semidefinite");
    }

    static double min_eigenvalue_sym3(const std::array<double, 9>& m) {
        const double q = (m[0] + m[4] + m[8]) / 3.0;
        const double p1 = m[1] * m[1] + m[2] * m[2] + m[5] * m[5];
        const double p2 = (m[0] - q) * (m[0] - q) + (m[4] - q) * (m[4] - q) +
                          (m[8] - q) * (m[8] - q) + 2.0 * p1;
        if (p2 <= 0.0) return q;  // already diagonal and equal
        const double p = std::sqrt(p2 / 6.0);
        std::array<double, 9> b;
        for (int i = 0; i < 9; ++i) b[i] = (m[i] - (i % 4 == 0 ? q : 0.0)) / p;
        const double detb = b[0] * (b[4] * b[8] - b[5] * b[7]) -
                            b[1] * (b[3] * b[8] - b[5] * b[6]) +
                            b[2] * (b[3] * b[7] - b[4] * b[6]);
        const double r = std::clamp(0.5 * detb, -1.0, 1.0);
        const double phi = std::acos(r) / 3.0;
        return q + 2.0 * p * std::cos(phi + 2.0 * M_PI / 3.0);
    }
};

inline double dot_with_intercept(const std::vector<double>& coef, const Key& x) {
    if (coef.size() != x.size() + 1)
        throw DomainError("coefficient vector does not match covariate length");
    double s = coef[0];
    for (std::size_t i = 0; i < x.size(); ++i) s += coef[i + 1] * x[i];
    return s;
}

// ---------------------------------------------------------------------------
// MTE curves

struct MteValue {
    double value = 0.0;
    bool extrapolated = false;
};

class MteCurve {
public:
    // MTE(x,u) = level(x) - slope * Phi^{-1}(u)
    struct NormalForm {
        std::vector<double> level_coef;
        double slope;
    };
    // MTE(x,u) = level(x) + dlambda(u), dlambda a polynomial in u
    struct PolyForm {
        std::vector<double> level_coef;
        std::vector<double> dlambda;
    };
    struct MaskedGrid {
        Grid grid;
        std::vector<bool> identified;  // per knot
    };
    struct GridForm {
        std::map<Key, MaskedGrid> cells;
    };

    MteCurve() = default;

    static MteCurve normal_parametric(std::vector<double> level_coef, double slope) {
        MteCurve c;
        c.form_ = NormalForm{std::move(level_coef), slope};
        c.declared_ = slope > 0.0   ? Monotonicity::Decreasing
                      : slope < 0.0 ? Monotonicity::Increasing
                                    : Monotonicity::None;
        return c;
    }

    static MteCurve poly_lambda_prime(std::vector<double> level_coef, std::vector<double> dlambda,
                                      Monotonicity declared = Monotonicity::None) {
        MteCurve c;
        c.form_ = PolyForm{std::move(level_coef), std::move(dlambda)};
        c.declared_ = declared;
        return c;
    }

    static MteCurve grid_curve(std::map<Key, MaskedGrid> cells,
                               Monotonicity declared = Monotonicity::None) {
        MteCurve c;
        for (auto& [key, mg] : cells) {
            mg.grid.validate();
            if (mg.identified.size() != mg.grid.size())
                throw DomainError("MteCurve: identified mask length mismatch");
        }
        c.form_ = GridForm{std::move(cells)};
        c.declared_ = declared;
        return c;
    }

    Monotonicity declared() const { return declared_; }
    void set_declared(Monotonicity m) { declared_ = m; }

    bool is_grid() const { return std::holds_alternative<GridForm>(form_); }
    const GridForm& grid_form() const { return std::get<GridForm>(form_); }

    MteValue at(const Key& x, double u) const {
        if (const auto* nf = std::get_if<NormalForm>(&form_)) {
            if (!(u > 0.0 && u < 1.0))
                throw DomainError("MteCurve: u must lie strictly inside (0,1)");
            return {dot_with_intercept(nf->level_coef, x) - nf->slope * norm_quantile(u), false};
        }
        if (const auto* pf = std::get_if<PolyForm>(&form_)) {
            double poly = 0.0;
            for (std::size_t i = pf->dlambda.size(); i-- > 0;) poly = poly * u + pf->dlambda[i];
            return {dot_with_intercept(pf->level_coef, x) + poly, false};
        }
        const auto& gf = std::get<GridForm>(form_);
        const auto it = gf.cells.find(x);
        if (it == gf.cells.end()) throw DomainError("MteCurve: unknown covariate cell");
        const MaskedGrid& mg = it->second;
        const double v = mg.grid(u);
        bool extrapolated = u < mg.grid.front() || u > mg.grid.back();
        if (!extrapolated) {
            const std::size_t s = mg.grid.segment(u);
            extrapolated = !(mg.identified[s] && mg.identified[s + 1]);
        }
        return {v, extrapolated};
    }

    double value(const Key& x, double u) const { return at(x, u).value; }

    // Evaluation clamped away from the parametric endpoints, for integrands.
    double value_clamped(const Key& x, double u) const {
        return at(x, std::clamp(u, 1e-15, 1.0 - 1e-15)).value;
    }

    /// Checks the declared monotonicity on a 1001-point interior grid.
    bool verify_monotone(const Key& x, int npoints = 1001, double tol = 1e-9) const {
        if (declared_ == Monotonicity::None) return true;
        double prev = value_clamped(x, 0.5 / npoints);
        for (int i = 1; i < npoints; ++i) {
            const double u = (i + 0.5) / npoints;
            const double v = value_clamped(x, u);
            if (declared_ == Monotonicity::Decreasing && v > prev + tol) return false;
            if (declared_ == Monotonicity::Increasing && v < prev - tol) return false;
            prev = v;
        }
        return true;
    }

    // Largest |MTE| over an interior grid; serves as the welfare scale.
    double scale(const Key& x, int npoints = 1001) const {
        double s = 0.0;
        for (int i = 0; i < npoints; ++i)
            s = std::max(s, std::fabs(value_clamped(x, (i + 0.5) / npoints)));
        return s;
    }

private:
    std::variant<NormalForm, PolyForm, GridForm> form_;
    Monotonicity declared_ = Monotonicity::None;
};

/// Closed-form MTE of the normal selection model.
inline double true_mte(const SelectionParams& params, const Key& x, double u) {
    if (!(u > 0.0 && u < 1.0)) throw DomainError("true_mte: u must lie strictly inside (0,1)");
    std::vector<double> diff(params.beta1.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = params.beta1[i] - params.beta0[i];
    return dot_with_intercept(diff, x) - params.mte_slope() * norm_quantile(u);
}

inline MteCurve mte_curve_of(const SelectionParams& params) {
    std::vector<double> diff(params.beta1.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = params.beta1[i] - params.beta0[i];
    return MteCurve::normal_parametric(std::move(diff), params.mte_slope());
}

/// Roy-model MTE: the gain quantile itself. Increasing in u under this
/// resistance orientation, so callers should label the curve accordingly.
inline double roy_mte(const std::function<double(double)>& delta_quantile, double u) {
    return delta_quantile(u);
}

// ---------------------------------------------------------------------------
// Propensity functions

struct CellKey {
    Key x;
    Key w;
    auto operator<=>(const CellKey&) const = default;
};

class PropensityFn {
public:
    // g(x,w,z) = Phi(betaD . [1,x] + gamma * z); w does not enter the index.
    struct Probit {
        std::vector<double> betaD;
        double gamma;
    };
    struct GridProp {
        std::map<CellKey, Grid> cells;
    };

    PropensityFn() = default;

    // A nonpositive gamma is tolerated at construction (a fit may land there)
    // but derivative and inversion queries will fail on it.
    static PropensityFn probit(std::vector<double> betaD, double gamma) {
        PropensityFn g;
        g.form_ = Probit{std::move(betaD), gamma};
        return g;
    }

    static PropensityFn from_grids(std::map<CellKey, Grid> cells) {
        PropensityFn g;
        for (const auto& [key, grid] : cells) {
            grid.validate();
            for (std::size_t i = 0; i < grid.size(); ++i) {
                if (grid.values[i] < 0.0 || grid.values[i] > 1.0)
                    throw DomainError("PropensityFn: grid values must lie in [0,1]");
                if (i > 0 && !(grid.values[i] > grid.values[i - 1]))
                    throw DomainError("PropensityFn: must be strictly increasing in z");
            }
        }
        g.form_ = GridProp{std::move(cells)};
        return g;
    }

    /// Tabulates an analytic propensity on a z-grid, one grid per cell.
    template <class F>
    static PropensityFn tabulate(const std::vector<CellKey>& cells, Interval z_range,
                                 std::size_t npoints, F&& fn) {
        std::map<CellKey, Grid> grids;
        const auto zs = linspace(z_range.lo, z_range.hi, npoints);
        for (const CellKey& c : cells) {
            std::vector<double> vals(zs.size());
            for (std::size_t i = 0; i < zs.size(); ++i) vals[i] = fn(c.x, c.w, zs[i]);
            grids.emplace(c, Grid(zs, std::move(vals)));
        }
        return from_grids(std::move(grids));
    }

    bool is_probit() const { return std::holds_alternative<Probit>(form_); }
    const Probit& probit_form() const { return std::get<Probit>(form_); }

    double at(const Key& x, const Key& w, double z) const {
        if (const auto* p = std::get_if<Probit>(&form_))
            return norm_cdf(dot_with_intercept(p->betaD, x) + p->gamma * z);
        const Grid& grid = cell_grid(x, w);
        if (z < grid.front() - 1e-12 || z > grid.back() + 1e-12)
            throw DomainError("PropensityFn: z outside the cell's tabulated range");
        return grid(z);
    }

    double dz(const Key& x, const Key& w, double z) const {
        if (const auto* p = std::get_if<Probit>(&form_)) {
            if (!(p->gamma > 0.0))
                throw DomainError("PropensityFn: nonpositive subsidy coefficient");
            const double idx = dot_with_intercept(p->betaD, x) + p->gamma * z;
            return p->gamma * norm_pdf(idx);
        }
        const Grid& grid = cell_grid(x, w);
        double h = grid.points[1] - grid.points[0];
        for (std::size_t i = 2; i < grid.size(); ++i)
            h = std::min(h, grid.points[i] - grid.points[i - 1]);
        const double zm = std::max(z - h, grid.front());
        const double zp = std::min(z + h, grid.back());
        const double d = (grid(zp) - grid(zm)) / (zp - zm);
        if (!(d > 0.0)) throw DomainError("PropensityFn: nonpositive derivative in z");
        return d;
    }

    /// z such that g(x,w,z) = u. Monotone inversion; throws when u is not
    /// attainable in the cell.
    double invert(const Key& x, const Key& w, double u) const {
        if (const auto* p = std::get_if<Probit>(&form_)) {
            if (!(p->gamma > 0.0))
                throw DomainError("PropensityFn: nonpositive subsidy coefficient");
            if (!(u > 0.0 && u < 1.0)) throw DomainError("PropensityFn: u not attainable");
            return (norm_quantile(u) - dot_with_intercept(p->betaD, x)) / p->gamma;
        }
        const Grid& grid = cell_grid(x, w);
        if (u < grid.values.front() - 1e-12 || u > grid.values.back() + 1e-12)
            throw DomainError("PropensityFn: u not attainable in this cell");
        const double uc = std::clamp(u, grid.values.front(), grid.values.back());
        const auto it = std::lower_bound(grid.values.begin(), grid.values.end(), uc);
        std::size_t i = static_cast<std::size_t>(it - grid.values.begin());
        if (i == 0) return grid.points.front();
        --i;
        const double t = (uc - grid.values[i]) / (grid.values[i + 1] - grid.values[i]);
        return grid.points[i] + t * (grid.points[i + 1] - grid.points[i]);
    }

    Interval z_domain(const Key& x, const Key& w) const {
        if (std::holds_alternative<Probit>(form_))
            return {-std::numeric_limits<double>::infinity(),
                    std::numeric_limits<double>::infinity()};
        const Grid& grid = cell_grid(x, w);
        return {grid.front(), grid.back()};
    }

private:
    const Grid& cell_grid(const Key& x, const Key& w) const {
        const auto& gp = std::get<GridProp>(form_);
        const auto it = gp.cells.find(CellKey{x, w});
        if (it == gp.cells.end()) throw DomainError("PropensityFn: unknown cell");
        return it->second;
    }

    std::variant<Probit, GridProp> form_;
};

// ---------------------------------------------------------------------------
// Simulators

/// i.i.d. draws from the normal selection model. Deterministic given seed.
inline Dataset simulate_normal(const SelectionParams& params, std::size_t n,
                               const std::vector<DistSpec>& x_dist,
                               const std::vector<DistSpec>& w_dist, const DistSpec& z_dist,
                               std::uint64_t seed) {
    if (n < 1) throw DomainError("simulate_normal: n must be at least 1");
    params.validate();
    if (params.betaD.size() != x_dist.size() + 1)
        throw DomainError("simulate_normal: betaD length must be 1 + #x covariates");
    if (params.beta1.size() != x_dist.size() + 1)
        throw DomainError("simulate_normal: beta1 length must be 1 + #x covariates");

    // Cholesky of the (U1, U0, -U_d) covariance, with a tiny jitter retry so
    // semidefinite corner cases (|rho| = 1) still factor.
    std::array<double, 9> c = params.covariance();
    std::array<double, 9> L{};
    for (int jitter = 0;; ++jitter) {
        bool ok = true;
        std::array<double, 9> a = c;
        if (jitter > 0)
            for (int i : {0, 4, 8}) a[i] += std::pow(10.0, jitter - 13) * (1.0 + a[i]);
        L = {};
        for (int i = 0; i < 3 && ok; ++i) {
            for (int j = 0; j <= i; ++j) {
                double s = a[i * 3 + j];
                for (int m = 0; m < j; ++m) s -= L[i * 3 + m] * L[j * 3 + m];
                if (i == j) {
                    if (s <= 0.0) {
                        ok = false;
                        break;
                    }
                    L[i * 3 + i] = std::sqrt(s);
                } else {
                    L[i * 3 + j] = s / L[j * 3 + j];
                }
            }
        }
        if (ok) break;
        if (jitter > 8) throw DomainError("simulate_normal: covariance failed to factor");
    }

    Dataset data;
    data.y.resize(n);
    data.d.resize(n);
    data.z.resize(n);
    data.x = Matrix(n, x_dist.size());
    data.w = Matrix(n, w_dist.size());

    Rng rng = Rng(seed).fork(1);
    Key xr(x_dist.size());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < x_dist.size(); ++j) {
            data.x(i, j) = x_dist[j].sample(rng);
            xr[j] = data.x(i, j);
        }
        for (std::size_t j = 0; j < w_dist.size(); ++j) data.w(i, j) = w_dist[j].sample(rng);
        data.z[i] = z_dist.sample(rng);

        const double n1 = rng.normal(), n2 = rng.normal(), n3 = rng.normal();
        const double u1 = L[0] * n1;
        const double u0 = L[3] * n1 + L[4] * n2;
        const double v = L[6] * n1 + L[7] * n2 + L[8] * n3;  // negated choice shock

        const double idx = dot_with_intercept(params.betaD, xr) + params.gamma * data.z[i];
        const int d = idx + v >= 0.0 ? 1 : 0;
        data.d[i] = d;
        data.y[i] = d ? dot_with_intercept(params.beta1, xr) + u1
                      : dot_with_intercept(params.beta0, xr) + u0;
    }
    return data;
}

// ---------------------------------------------------------------------------
// Generalized Roy simulator

/// Latent-utility take-up phi(x,w,z,delta,v) with selection on the gain delta.
struct GeneralizedRoySpec {
    std::function<double(const Key& x, const Key& w, double z, double delta, double v)> phi;
    DistSpec delta_dist;
    DistSpec v_dist;
    Monotonicity direction = Monotonicity::Increasing;  // of phi in delta
};

struct RoyBin {
    double u_center = 0.0;
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t count = 0;
};

struct RoySimulation {
    Dataset data;
    PropensityFn propensity;
    MteCurve mte;
    std::vector<RoyBin> bins;
    std::vector<double> resistance;  // constructed U_D per record
};

/// Simulates the generalized Roy model and constructs the uniform resistance,
/// the induced propensity on a z-grid, and the binned MTE. The construction
/// follows the threshold representation: each individual's indifference
/// level along the z-path is mapped through the empirical CDF of all
/// thresholds.
inline RoySimulation simulate_generalized_roy(const GeneralizedRoySpec& spec, std::size_t n,
                                              const std::vector<DistSpec>& w_dist,
                                              const DistSpec& z_dist, std::uint64_t seed) {
    if (n < 100) throw DomainError("simulate_generalized_roy: n too small");
    Rng root(seed);
    Rng draw = root.fork(1);
    Rng check = root.fork(2);

    const Key x0{};  // covariates held fixed in this simulator
    Key w0(w_dist.size());
    for (std::size_t j = 0; j < w_dist.size(); ++j) w0[j] = w_dist[j].range().lo;
    Rng ref = root.fork(3);
    const double delta0 = spec.delta_dist.sample(ref);
    const double v0 = spec.v_dist.sample(ref);

    // Monte-Carlo rank-invariance check: the ordering of instrument values by
    // utility must not depend on (delta, v).
    {
        Key wa(w_dist.size()), wb(w_dist.size());
        for (int rep = 0; rep < 200; ++rep) {
            for (std::size_t j = 0; j < w_dist.size(); ++j) {
                wa[j] = w_dist[j].sample(check);
                wb[j] = w_dist[j].sample(check);
            }
            const double za = z_dist.sample(check), zb = z_dist.sample(check);
            int sign = 0;
            for (int m = 0; m < 25; ++m) {
                const double dd = spec.delta_dist.sample(check);
                const double vv = spec.v_dist.sample(check);
                const double diff =
                    spec.phi(x0, wa, za, dd, vv) - spec.phi(x0, wb, zb, dd, vv);
                const int s = diff > 1e-12 ? 1 : diff < -1e-12 ? -1 : 0;
                if (s == 0) continue;
                if (sign == 0)
                    sign = s;
                else if (sign != s)
                    throw Error("simulate_generalized_roy: rank invariance violated");
            }
        }
    }

    // Indifference threshold along the z-path at the reference instrument.
    const auto threshold = [&](double delta, double v) {
        const auto f = [&](double z) { return spec.phi(x0, w0, z, delta, v); };
        double lo = -1.0, hi = 1.0;
        for (int k = 0; k < 80 && f(lo) * f(hi) > 0.0; ++k) {
            lo *= 2.0;
            hi *= 2.0;
        }
        if (f(lo) * f(hi) > 0.0)
            throw Error("simulate_generalized_roy: no take-up threshold along z");
        const double zstar = find_root_bracketed(f, lo, hi, 1e-10);
        return spec.phi(x0, w0, zstar, delta0, v0);  // phi1 at the threshold
    };

    Dataset data;
    data.y.resize(n);
    data.d.resize(n);
    data.z.resize(n);
    data.x = Matrix(n, 0);
    data.w = Matrix(n, w_dist.size());

    std::vector<double> deltas(n), thresholds(n);
    Key wr(w_dist.size());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < w_dist.size(); ++j) {
            data.w(i, j) = w_dist[j].sample(draw);
            wr[j] = data.w(i, j);
        }
        data.z[i] = z_dist.sample(draw);
        const double delta = spec.delta_dist.sample(draw);
        const double v = spec.v_dist.sample(draw);
        deltas[i] = delta;
        thresholds[i] = threshold(delta, v);
        data.d[i] = spec.phi(x0, wr, data.z[i], delta, v) >= 0.0 ? 1 : 0;
        data.y[i] = data.d[i] ? delta : 0.0;  // Y0 normalized to zero
    }

    // Empirical CDF of thresholds -> uniform resistance.
    std::vector<double> sorted = thresholds;
    std::sort(sorted.begin(), sorted.end());
    // Interpolated within steps so the tabulated propensity stays strictly
    // increasing in z.
    const auto ecdf = [&](double t) {
        const auto it = std::upper_bound(sorted.begin(), sorted.end(), t);
        double r = static_cast<double>(it - sorted.begin());
        if (it != sorted.begin() && it != sorted.end()) {
            const double tl = *(it - 1), tr = *it;
            if (tr > tl) r += (t - tl) / (tr - tl);
        }
        return std::clamp(r / static_cast<double>(n), 0.5 / n, 1.0 - 0.5 / n);
    };

    std::vector<double> ud(n);
    for (std::size_t i = 0; i < n; ++i) ud[i] = ecdf(thresholds[i]);

    // Propensity on a z-grid per distinct w value.
    std::map<Key, int> wcells;
    for (std::size_t i = 0; i < n; ++i) wcells[data.w_row(i)]++;
    if (wcells.size() > 64)
        throw DomainError("simulate_generalized_roy: w must be discrete to tabulate g");
    const Interval zr = z_dist.range();
    std::map<CellKey, Grid> grids;
    for (const auto& [wkey, cnt] : wcells) {
        const auto zs = linspace(zr.lo, zr.hi, 129);
        std::vector<double> vals(zs.size());
        for (std::size_t i = 0; i < zs.size(); ++i)
            vals[i] = ecdf(spec.phi(x0, wkey, zs[i], delta0, v0));
        for (std::size_t i = 1; i < vals.size(); ++i)  // break exact ties from ECDF steps
            if (vals[i] <= vals[i - 1]) vals[i] = vals[i - 1] + 1e-12;
        grids.emplace(CellKey{x0, wkey}, Grid(zs, std::move(vals)));
    }

    // Binned conditional mean of the gain given resistance.
    const std::size_t nbins = static_cast<std::size_t>(std::ceil(std::cbrt(double(n))));
    std::vector<double> sum(nbins, 0.0), sumsq(nbins, 0.0);
    std::vector<std::size_t> cnt(nbins, 0);
    for (std::size_t i = 0; i < n; ++i) {
        auto b = std::min(static_cast<std::size_t>(ud[i] * nbins), nbins - 1);
        sum[b] += deltas[i];
        sumsq[b] += deltas[i] * deltas[i];
        cnt[b]++;
    }
    std::vector<double> centers, means;
    std::vector<RoyBin> bins;
    for (std::size_t b = 0; b < nbins; ++b) {
        if (cnt[b] == 0) continue;
        const double m = sum[b] / cnt[b];
        const double var = std::max(sumsq[b] / cnt[b] - m * m, 0.0);
        centers.push_back((b + 0.5) / nbins);
        means.push_back(m);
        bins.push_back({(b + 0.5) / nbins, m, std::sqrt(var / cnt[b]), cnt[b]});
    }

    const Monotonicity mono = spec.direction == Monotonicity::Increasing
                                  ? Monotonicity::Decreasing
                                  : Monotonicity::Increasing;
    std::map<Key, MteCurve::MaskedGrid> mcells;
    mcells.emplace(x0, MteCurve::MaskedGrid{Grid(centers, means),
                                            std::vector<bool>(centers.size(), true)});

    RoySimulation out;
    out.data = std::move(data);
    out.propensity = PropensityFn::from_grids(std::move(grids));
    out.mte = MteCurve::grid_curve(std::move(mcells), mono);
    out.bins = std::move(bins);
    out.resistance = std::move(ud);
    return out;
}

}  // namespace mte
