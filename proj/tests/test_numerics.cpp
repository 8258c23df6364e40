#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "lp_oracle.hpp"
#include "mte/numerics.hpp"
#include "mte/rng.hpp"

using namespace mte;

namespace {

// Independent high-precision oracle for the normal CDF: Taylor series of the
// central integral in long double, valid to ~1e-17 for |x| <= 8.
long double norm_cdf_oracle(long double x) {
    const long double ax = std::fabs(x);
    long double term = ax;
    long double sum = ax;
    for (int k = 1; k < 300; ++k) {
        term *= ax * ax / (2.0L * k + 1.0L);
        sum += term;
        if (term < 1e-22L * sum) break;
    }
    const long double phi = std::exp(-0.5L * ax * ax) * 0.3989422804014326779399461L;
    const long double half = phi * sum;  // integral of the density over [0, ax]
    return x >= 0 ? 0.5L + half : 0.5L - half;
}

}  // namespace

TEST_CASE("norm_cdf matches the series oracle") {
    CHECK(norm_cdf(0.0) == 0.5);
    CHECK_THAT(norm_cdf(1.959964), Catch::Matchers::WithinAbs(0.975, 5e-7));
    CHECK_THAT(norm_cdf(-0.9359), Catch::Matchers::WithinAbs(0.17466, 5e-6));

    for (double x : {-8.0, -5.5, -3.0, -1.0, -0.9359, -0.25, 0.0, 0.4, 1.0, 1.959964, 2.5, 4.0,
                     6.5, 8.0}) {
        const double expect = static_cast<double>(norm_cdf_oracle(x));
        CHECK_THAT(norm_cdf(x), Catch::Matchers::WithinAbs(expect, 1e-12));
    }
}

TEST_CASE("norm_cdf is monotone and saturates") {
    Rng rng(101);
    for (int i = 0; i < 10000; ++i) {
        double a = rng.uniform(-40.0, 40.0);
        double b = rng.uniform(-40.0, 40.0);
        if (a > b) std::swap(a, b);
        CHECK(norm_cdf(a) <= norm_cdf(b));
    }
    CHECK(norm_cdf(-40.0) == 0.0);
    CHECK(norm_cdf(40.0) == 1.0);
}

TEST_CASE("norm_quantile inverts the CDF") {
    CHECK(norm_quantile(0.5) == 0.0);
    CHECK_THAT(norm_quantile(0.975), Catch::Matchers::WithinAbs(1.959964, 1e-6));
    CHECK_THAT(norm_quantile(0.17466), Catch::Matchers::WithinAbs(-0.9359, 5e-5));
    CHECK_THROWS_AS(norm_quantile(0.0), DomainError);
    CHECK_THROWS_AS(norm_quantile(1.0), DomainError);
    CHECK_THROWS_AS(norm_quantile(-0.2), DomainError);

    for (int i = 0; i <= 240; ++i) {
        const double x = -6.0 + 12.0 * i / 240.0;
        CHECK_THAT(norm_quantile(norm_cdf(x)), Catch::Matchers::WithinAbs(x, 1e-8));
    }
    for (double p : {1e-12, 1e-6, 0.3, 0.9, 1.0 - 1e-9}) {
        CHECK_THAT(norm_cdf(norm_quantile(p)), Catch::Matchers::WithinAbs(p, 1e-10));
    }
}

TEST_CASE("quad_integrate on closed forms") {
    CHECK_THAT(quad_integrate([](double) { return 1.0; }, 0.0, 1.0),
               Catch::Matchers::WithinAbs(1.0, 1e-12));
    CHECK_THAT(quad_integrate([](double u) { return 4.0 - 2.0 * u; }, 0.0, 0.5),
               Catch::Matchers::WithinAbs(1.75, 1e-10));
    CHECK_THAT(quad_integrate([](double u) { return std::cos(M_PI * u) + 0.25; }, 0.0, 1.0),
               Catch::Matchers::WithinAbs(0.25, 1e-10));
}

TEST_CASE("quad_integrate is additive on random polynomials") {
    Rng rng(77);
    for (int rep = 0; rep < 50; ++rep) {
        std::array<double, 5> coef;
        for (double& c : coef) c = rng.uniform(-3.0, 3.0);
        const auto f = [&](double u) {
            double v = 0.0;
            for (std::size_t k = coef.size(); k-- > 0;) v = v * u + coef[k];
            return v;
        };
        const double a = rng.uniform(-1.0, 0.0);
        const double b = rng.uniform(0.0, 1.0);
        const double c = rng.uniform(1.0, 2.0);
        const double tol = 1e-9;
        const double whole = quad_integrate(f, a, c, tol);
        const double split = quad_integrate(f, a, b, tol) + quad_integrate(f, b, c, tol);
        CHECK_THAT(whole, Catch::Matchers::WithinAbs(split, 2.0 * tol));
    }
}

TEST_CASE("find_root_bracketed") {
    CHECK_THAT(find_root_bracketed([](double z) { return z - 0.4; }, 0.0, 1.0),
               Catch::Matchers::WithinAbs(0.4, 1e-9));

    // marginal benefit of the single-constant toy problem at w = 1
    const auto lam = [](double z) {
        const double g = 0.25 * (1.0 + z + 1.0);
        return (4.0 - 2.0 * g) - z - g / 0.25;
    };
    CHECK_THAT(find_root_bracketed(lam, 0.0, 1.0), Catch::Matchers::WithinAbs(0.4, 1e-9));

    CHECK_THAT(find_root_bracketed([](double z) { return norm_cdf(z) - 0.975; }, 0.0, 4.0),
               Catch::Matchers::WithinAbs(1.959964, 1e-6));

    CHECK_THROWS_AS(find_root_bracketed([](double z) { return z + 2.0; }, 0.0, 1.0),
                    BracketError);
}

TEST_CASE("ols_fit recovers exact coefficients") {
    {
        Matrix a(2, 2);
        a(0, 0) = 1.0; a(0, 1) = 0.0;
        a(1, 0) = 1.0; a(1, 1) = 1.0;
        const auto beta = ols_fit(a, {1.0, 3.0});
        CHECK_THAT(beta[0], Catch::Matchers::WithinAbs(1.0, 1e-12));
        CHECK_THAT(beta[1], Catch::Matchers::WithinAbs(2.0, 1e-12));
    }
    {
        Matrix a(10, 2);
        std::vector<double> y(10);
        for (int i = 0; i < 10; ++i) {
            const double x = 0.3 * i - 1.0;
            a(i, 0) = 1.0;
            a(i, 1) = x;
            y[i] = 2.0 + 5.0 * x;
        }
        const auto beta = ols_fit(a, y);
        CHECK_THAT(beta[0], Catch::Matchers::WithinAbs(2.0, 1e-10));
        CHECK_THAT(beta[1], Catch::Matchers::WithinAbs(5.0, 1e-10));
    }
}

TEST_CASE("ols_fit reports the rank-deficient column") {
    Matrix a(6, 3);
    std::vector<double> y(6);
    for (int i = 0; i < 6; ++i) {
        a(i, 0) = 1.0;
        a(i, 1) = i;
        a(i, 2) = 2.0 * i;  // dependent on column 1
        y[i] = i;
    }
    try {
        ols_fit(a, y);
        FAIL("expected RankDeficiencyError");
    } catch (const RankDeficiencyError& e) {
        CHECK(e.column == 2);
    }
}

TEST_CASE("probit_fit intercept-only balanced sample") {
    const int n = 1000;
    Matrix a(n, 1, 1.0);
    std::vector<int> d(n);
    for (int i = 0; i < n; ++i) d[i] = i % 2;
    const auto beta = probit_fit(a, d);
    CHECK_THAT(beta[0], Catch::Matchers::WithinAbs(0.0, 1e-6));
}

TEST_CASE("probit_fit recovers a simulated index") {
    const std::size_t n = 200000;
    const double b0 = -0.9359, b1 = 0.2965, b2 = 0.0017;
    Rng rng(4242);
    Matrix a(n, 3);
    std::vector<int> d(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x1 = rng.bernoulli(0.5) ? 1.0 : 0.0;
        const double z = rng.uniform(0.0, 900.0);
        a(i, 0) = 1.0;
        a(i, 1) = x1;
        a(i, 2) = z;
        const double idx = b0 + b1 * x1 + b2 * z;
        d[i] = idx >= rng.normal() ? 1 : 0;
    }
    const auto beta = probit_fit(a, d);

    // MLE dominance on its own sample
    CHECK(probit_loglik(a, d, beta) >= probit_loglik(a, d, {b0, b1, b2}) - 1e-6);

    // Fisher information at the fit gives the standard errors.
    Matrix info(3, 3, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double idx = 0.0;
        for (int j = 0; j < 3; ++j) idx += a(i, j) * beta[j];
        const double p = std::clamp(norm_cdf(idx), 1e-12, 1.0 - 1e-12);
        const double wgt = norm_pdf(idx) * norm_pdf(idx) / (p * (1.0 - p));
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) info(j, k) += wgt * a(i, j) * a(i, k);
    }
    const double truth[3] = {b0, b1, b2};
    for (int j = 0; j < 3; ++j) {
        std::vector<double> e(3, 0.0);
        e[j] = 1.0;
        const double se = std::sqrt(solve_spd(info, e)[j]);
        CHECK(std::fabs(beta[j] - truth[j]) <= 3.0 * se);
    }
}

TEST_CASE("probit_fit flags perfect separation") {
    Matrix a(8, 2);
    std::vector<int> d(8);
    for (int i = 0; i < 8; ++i) {
        a(i, 0) = 1.0;
        a(i, 1) = i - 3.5;
        d[i] = i >= 4 ? 1 : 0;
    }
    CHECK_THROWS_AS(probit_fit(a, d), SeparationError);
    CHECK_THROWS_AS(probit_fit(a, std::vector<int>(8, 1)), DomainError);
}

TEST_CASE("lp_min_linear basics") {
    {
        // minimize m1 with 0 <= m1 <= 1
        const auto sol = lp_min_linear({1.0}, {}, {{{-1.0}, 0.0}, {{1.0}, 1.0}});
        CHECK_THAT(sol.value, Catch::Matchers::WithinAbs(0.0, 1e-9));
        CHECK_THAT(sol.x[0], Catch::Matchers::WithinAbs(0.0, 1e-9));
    }
    {
        // infeasible: m1 <= 0 and m1 >= 1
        CHECK_THROWS_AS(lp_min_linear({1.0}, {}, {{{1.0}, 0.0}, {{-1.0}, -1.0}}),
                        LpInfeasibleError);
    }
    {
        // unbounded: minimize m1 with m1 <= 0 only
        CHECK_THROWS_AS(lp_min_linear({1.0}, {}, {{{1.0}, 0.0}}), LpUnboundedError);
    }
}

namespace {

// monotone-decreasing box polytope helper: m in [0,1]^n, m_{i+1} <= m_i
void add_monotone_box(OracleLp& oracle, std::vector<LinearConstraint>& ineq, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> up(n, 0.0), dn(n, 0.0);
        up[i] = 1.0;
        dn[i] = -1.0;
        oracle.add_ineq(up, 1.0);
        oracle.add_ineq(dn, 0.0);
        ineq.push_back({up, 1.0});
        ineq.push_back({dn, 0.0});
    }
    for (std::size_t i = 0; i + 1 < n; ++i) {
        std::vector<double> a(n, 0.0);
        a[i + 1] = 1.0;
        a[i] = -1.0;
        oracle.add_ineq(a, 0.0);
        ineq.push_back({a, 0.0});
    }
}

}  // namespace

TEST_CASE("lp_min_linear matches vertex enumeration on monotone polytopes") {
    {
        // alternating objective, monotone decreasing in [0,1]^4
        const std::size_t n = 4;
        OracleLp oracle;
        std::vector<LinearConstraint> ineq;
        add_monotone_box(oracle, ineq, n);
        const std::vector<double> c = {1.0, -1.0, 1.0, -1.0};
        const auto sol = lp_min_linear(c, {}, ineq);
        CHECK_THAT(sol.value, Catch::Matchers::WithinAbs(oracle.minimize(c), 1e-8));
    }
    {
        // equality-pinned middle segment with free monotone tails, n = 6
        const std::size_t n = 6;
        OracleLp oracle;
        std::vector<LinearConstraint> ineq;
        std::vector<LinearConstraint> eq;
        add_monotone_box(oracle, ineq, n);
        for (std::size_t i : {2, 3}) {
            std::vector<double> a(n, 0.0);
            a[i] = 1.0;
            const double v = i == 2 ? 0.7 : 0.4;
            oracle.add_eq(a, v);
            eq.push_back({a, v});
        }
        const std::vector<double> c = {-1.0, 2.0, 0.5, -0.25, 1.5, -2.0};
        const auto sol = lp_min_linear(c, eq, ineq);
        CHECK_THAT(sol.value, Catch::Matchers::WithinAbs(oracle.minimize(c), 1e-8));
    }
}

TEST_CASE("lp_min_linear equals the oracle on random small instances") {
    Rng rng(909);
    for (int rep = 0; rep < 40; ++rep) {
        const std::size_t n = 2 + rng.index(7);  // up to 8 variables
        OracleLp oracle;
        std::vector<LinearConstraint> ineq;
        std::vector<LinearConstraint> eq;
        add_monotone_box(oracle, ineq, n);
        if (rng.bernoulli(0.5) && n >= 3) {
            std::vector<double> a(n, 0.0);
            const std::size_t j = rng.index(n);
            a[j] = 1.0;
            const double v = rng.uniform(0.2, 0.8);
            oracle.add_eq(a, v);
            eq.push_back({a, v});
        }
        std::vector<double> c(n);
        for (double& v : c) v = rng.uniform(-2.0, 2.0);
        const auto sol = lp_min_linear(c, eq, ineq);
        const double expect = oracle.minimize(c);
        CHECK_THAT(sol.value, Catch::Matchers::WithinAbs(expect, 1e-7));
        // returned point must be feasible
        for (const auto& con : ineq) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) s += con.a[k] * sol.x[k];
            CHECK(s <= con.b + 1e-8);
        }
    }
}

TEST_CASE("Grid validates and interpolates") {
    CHECK_THROWS_AS(Grid({0.0, 0.0}, {1.0, 2.0}), DomainError);
    CHECK_THROWS_AS(Grid({0.0}, {1.0}), DomainError);
    const Grid g({0.0, 0.5, 1.0}, {0.0, 2.0, 3.0});
    CHECK_THAT(g(0.25), Catch::Matchers::WithinAbs(1.0, 1e-12));
    CHECK_THAT(g(0.75), Catch::Matchers::WithinAbs(2.5, 1e-12));
    CHECK(g(-1.0) == 0.0);
    CHECK(g(2.0) == 3.0);
}

TEST_CASE("Rng streams are deterministic and independent") {
    Rng a(7), b(7);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng c = Rng(7).fork(1);
    Rng d = Rng(7).fork(2);
    int same = 0;
    for (int i = 0; i < 64; ++i) same += c.next_u64() == d.next_u64();
    CHECK(same == 0);

    // uniform01 stays strictly inside (0,1) and has roughly the right mean
    Rng e(99);
    double sum = 0.0;
    for (int i = 0; i < 100000; ++i) {
        const double u = e.uniform01();
        REQUIRE(u > 0.0);
        REQUIRE(u < 1.0);
        sum += u;
    }
    CHECK_THAT(sum / 100000.0, Catch::Matchers::WithinAbs(0.5, 0.01));
}
