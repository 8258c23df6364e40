#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "mte/model.hpp"

using namespace mte;

namespace {

SelectionParams table1_params() {
    SelectionParams p;
    p.beta1 = {660.1336, 2677.209};
    p.beta0 = {607.5856, 1743.904};
    p.betaD = {-0.9359, 0.2965};
    p.gamma = 0.0017;
    p.sigma1 = 3399.0894;
    p.sigma0 = 2596.7705;
    p.rho1 = 0.3802;
    p.rho0 = -0.0889;
    p.rho01 = 0.0;
    return p;
}

// Sample-analog MTE at u: central difference of local outcome means around
// the propensity value u, following the local-IV identification logic.
struct BinnedSlope {
    double value;
    double std_error;
};

BinnedSlope binned_mte(const Dataset& data, const std::vector<double>& pscore, double u,
                       double halfwidth) {
    double s_lo = 0.0, s2_lo = 0.0, s_hi = 0.0, s2_hi = 0.0;
    std::size_t n_lo = 0, n_hi = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double p = pscore[i];
        if (p >= u - halfwidth && p < u) {
            s_lo += data.y[i];
            s2_lo += data.y[i] * data.y[i];
            ++n_lo;
        } else if (p >= u && p < u + halfwidth) {
            s_hi += data.y[i];
            s2_hi += data.y[i] * data.y[i];
            ++n_hi;
        }
    }
    REQUIRE(n_lo > 100);
    REQUIRE(n_hi > 100);
    const double m_lo = s_lo / n_lo, m_hi = s_hi / n_hi;
    const double v_lo = s2_lo / n_lo - m_lo * m_lo;
    const double v_hi = s2_hi / n_hi - m_hi * m_hi;
    const double slope = (m_hi - m_lo) / halfwidth;
    const double se = std::sqrt(v_lo / n_lo + v_hi / n_hi) / halfwidth;
    return {slope, se};
}

}  // namespace

TEST_CASE("SelectionParams validates the implied covariance") {
    SelectionParams p = table1_params();
    CHECK_NOTHROW(p.validate());

    p.rho1 = 0.9;
    p.rho0 = 0.9;
    p.rho01 = -0.9;  // jointly inconsistent correlations
    CHECK_THROWS_AS(p.validate(), DomainError);

    p = table1_params();
    p.gamma = 0.0;
    CHECK_THROWS_AS(p.validate(), DomainError);
}

TEST_CASE("true_mte closed form") {
    const SelectionParams p = table1_params();
    const Key medical = {1.0};

    // u = 0.5 isolates the level
    CHECK_THAT(true_mte(p, medical, 0.5), Catch::Matchers::WithinAbs(985.853, 1e-9));
    CHECK_THAT(p.mte_slope(), Catch::Matchers::WithinAbs(1523.18668733, 1e-6));

    // decreasing in u
    CHECK(true_mte(p, medical, 0.2) > true_mte(p, medical, 0.5));
    CHECK(true_mte(p, medical, 0.5) > true_mte(p, medical, 0.8));

    CHECK_THROWS_AS(true_mte(p, medical, 0.0), DomainError);
    CHECK_THROWS_AS(true_mte(p, medical, 1.0), DomainError);

    const MteCurve curve = mte_curve_of(p);
    CHECK(curve.declared() == Monotonicity::Decreasing);
    CHECK(curve.verify_monotone(medical));
    CHECK_THAT(curve.value(medical, 0.31), Catch::Matchers::WithinAbs(true_mte(p, medical, 0.31), 1e-12));
}

TEST_CASE("roy_mte returns the gain quantile") {
    CHECK_THAT(roy_mte([](double u) { return u; }, 0.3), Catch::Matchers::WithinAbs(0.3, 1e-15));
    CHECK_THAT(roy_mte([](double u) { return norm_quantile(u); }, 0.975),
               Catch::Matchers::WithinAbs(1.959964, 1e-6));
    CHECK_THAT(roy_mte([](double) { return 2.5; }, 0.9), Catch::Matchers::WithinAbs(2.5, 1e-15));
}

TEST_CASE("simulate_normal take-up saturates under a dominant subsidy") {
    SelectionParams p = table1_params();
    p.gamma = 50.0;
    const Dataset data = simulate_normal(p, 20000, {DistSpec::bernoulli(0.5)}, {},
                                         DistSpec::uniform(1.0, 2.0), 11);
    double rate = 0.0;
    for (int d : data.d) rate += d;
    rate /= data.size();
    CHECK(rate > 0.999);
}

TEST_CASE("simulate_normal matches the probit take-up probability") {
    // at z = 900 the medical take-up is Phi(-0.9359 + 0.2965 + 0.0017*900)
    const SelectionParams p = table1_params();
    const Dataset data = simulate_normal(p, 200000, {DistSpec::bernoulli(0.5)}, {},
                                         DistSpec::constant(900.0), 12);
    double taken = 0.0, nmed = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data.x(i, 0) == 1.0) {
            nmed += 1.0;
            taken += data.d[i];
        }
    }
    const double expect = norm_cdf(0.8906);
    const double rate = taken / nmed;
    const double se = std::sqrt(expect * (1.0 - expect) / nmed);
    CHECK_THAT(expect, Catch::Matchers::WithinAbs(0.813, 5e-4));
    CHECK(std::fabs(rate - expect) <= 3.0 * se);
}

TEST_CASE("simulate_normal is deterministic given the seed") {
    const SelectionParams p = table1_params();
    const auto a = simulate_normal(p, 500, {DistSpec::bernoulli(0.5)}, {},
                                   DistSpec::uniform(0.0, 900.0), 42);
    const auto b = simulate_normal(p, 500, {DistSpec::bernoulli(0.5)}, {},
                                   DistSpec::uniform(0.0, 900.0), 42);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.y[i] == b.y[i]);
        CHECK(a.d[i] == b.d[i]);
        CHECK(a.z[i] == b.z[i]);
    }
}

TEST_CASE("zero treatment-effect parameters give a flat zero sample MTE") {
    SelectionParams p;
    p.beta1 = {1.0};
    p.beta0 = {1.0};
    p.betaD = {-1.3};
    p.gamma = 2.6;
    p.sigma1 = 1.0;
    p.sigma0 = 1.0;
    p.rho1 = 0.4;
    p.rho0 = 0.4;
    p.rho01 = 0.8;
    const Dataset data = simulate_normal(p, 400000, {}, {}, DistSpec::uniform(0.0, 1.0), 13);
    std::vector<double> ps(data.size());
    for (std::size_t i = 0; i < data.size(); ++i)
        ps[i] = norm_cdf(p.betaD[0] + p.gamma * data.z[i]);
    for (double u : {0.2, 0.5, 0.8}) {
        const auto est = binned_mte(data, ps, u, 0.02);
        CHECK(std::fabs(est.value) <= 3.0 * est.std_error);
    }
}

TEST_CASE("binned sample MTE matches the closed form") {
    SelectionParams p;
    p.beta1 = {2.0};
    p.beta0 = {0.5};
    p.betaD = {-1.3};
    p.gamma = 2.6;
    p.sigma1 = 1.0;
    p.sigma0 = 0.8;
    p.rho1 = 0.5;
    p.rho0 = -0.2;
    p.rho01 = 0.3;
    const std::size_t n = 1000000;
    const Dataset data = simulate_normal(p, n, {}, {}, DistSpec::uniform(0.0, 1.0), 14);
    std::vector<double> ps(data.size());
    for (std::size_t i = 0; i < data.size(); ++i)
        ps[i] = norm_cdf(p.betaD[0] + p.gamma * data.z[i]);
    for (double u : {0.2, 0.5, 0.8}) {
        const auto est = binned_mte(data, ps, u, 0.02);
        const double truth = true_mte(p, {}, u);
        // allow the central-difference discretization bias on top of noise
        const double bias = 0.02 * 0.02 / 6.0 * std::fabs(p.mte_slope()) * 40.0;
        CHECK(std::fabs(est.value - truth) <= 3.0 * est.std_error + bias);
    }
}

TEST_CASE("PropensityFn probit form") {
    const auto g = PropensityFn::probit({-0.9359, 0.2965}, 0.0017);
    const Key med = {1.0};
    const Key w{};
    CHECK_THAT(g.at(med, w, 900.0), Catch::Matchers::WithinAbs(norm_cdf(0.8906), 1e-12));
    CHECK_THAT(g.dz(med, w, 900.0),
               Catch::Matchers::WithinAbs(0.0017 * norm_pdf(0.8906), 1e-12));
    CHECK_THAT(g.invert(med, w, norm_cdf(0.8906)), Catch::Matchers::WithinAbs(900.0, 1e-6));
}

TEST_CASE("PropensityFn tabulated form is strictly increasing and invertible") {
    std::vector<CellKey> cells;
    for (double w : {0.0, 0.5, 1.0}) cells.push_back({{}, {w}});
    const auto g = PropensityFn::tabulate(cells, {0.0, 1.0}, 65, [](const Key&, const Key& w,
                                                                    double z) {
        return 0.25 * (1.0 + z + w[0]);
    });
    CHECK_THAT(g.at({}, {0.0}, 1.0), Catch::Matchers::WithinAbs(0.5, 1e-12));
    CHECK_THAT(g.at({}, {1.0}, 0.4), Catch::Matchers::WithinAbs(0.6, 1e-12));
    CHECK_THAT(g.dz({}, {1.0}, 0.4), Catch::Matchers::WithinAbs(0.25, 1e-9));
    CHECK_THAT(g.invert({}, {1.0}, 0.6), Catch::Matchers::WithinAbs(0.4, 1e-9));
    CHECK_THROWS_AS(g.at({}, {0.0}, 2.0), DomainError);
    CHECK_THROWS_AS(g.invert({}, {0.0}, 0.9), DomainError);

    Rng rng(21);
    for (int rep = 0; rep < 1000; ++rep) {
        const Key w = {rng.bernoulli(0.5) ? 1.0 : 0.0};
        double za = rng.uniform(0.0, 1.0), zb = rng.uniform(0.0, 1.0);
        if (za > zb) std::swap(za, zb);
        if (zb - za < 1e-9) continue;
        CHECK(g.at({}, w, za) < g.at({}, w, zb));
    }

    // non-monotone tabulation is rejected
    CHECK_THROWS_AS(PropensityFn::tabulate(cells, {0.0, 1.0}, 16,
                                           [](const Key&, const Key&, double z) {
                                               return 0.5 + 0.3 * std::sin(6.0 * z);
                                           }),
                    DomainError);
}

TEST_CASE("generalized Roy construction: selection on gains") {
    GeneralizedRoySpec spec;
    spec.phi = [](const Key&, const Key&, double z, double delta, double v) {
        return z + delta - v;
    };
    spec.delta_dist = DistSpec::normal(1.0, 1.0);
    spec.v_dist = DistSpec::normal(0.0, 1.0);
    spec.direction = Monotonicity::Increasing;

    const std::size_t n = 200000;
    const auto sim = simulate_generalized_roy(spec, n, {}, DistSpec::uniform(-2.0, 2.0), 31);

    CHECK(sim.mte.declared() == Monotonicity::Decreasing);
    // no adjacent-bin increase beyond twice the joint binned standard error
    for (std::size_t b = 1; b < sim.bins.size(); ++b) {
        const auto& lo = sim.bins[b - 1];
        const auto& hi = sim.bins[b];
        const double joint = std::hypot(lo.std_error, hi.std_error);
        CHECK(hi.mean - lo.mean <= 2.0 * joint);
    }

    // resistance is uniform: Kolmogorov-Smirnov against U[0,1]
    std::vector<double> ud = sim.resistance;
    std::sort(ud.begin(), ud.end());
    double ks = 0.0;
    for (std::size_t i = 0; i < ud.size(); ++i) {
        ks = std::max(ks, std::fabs(ud[i] - (i + 1.0) / ud.size()));
        ks = std::max(ks, std::fabs(ud[i] - static_cast<double>(i) / ud.size()));
    }
    CHECK(ks <= 2.0 / std::sqrt(static_cast<double>(n)));

    // resistance independent of the instrument: quartile table is flat
    std::array<std::array<double, 4>, 4> cnt{};
    for (std::size_t i = 0; i < n; ++i) {
        const int zq = std::min(3, static_cast<int>((sim.data.z[i] + 2.0) / 4.0 * 4.0));
        const int uq = std::min(3, static_cast<int>(sim.resistance[i] * 4.0));
        cnt[zq][uq] += 1.0;
    }
    for (int zq = 0; zq < 4; ++zq) {
        double row = cnt[zq][0] + cnt[zq][1] + cnt[zq][2] + cnt[zq][3];
        for (int uq = 0; uq < 4; ++uq) {
            const double frac = cnt[zq][uq] / row;
            CHECK_THAT(frac, Catch::Matchers::WithinAbs(0.25, 5.0 / std::sqrt(row)));
        }
    }

    // propensity is strictly increasing in z
    const Key none{};
    CHECK(sim.propensity.at(none, none, -1.0) < sim.propensity.at(none, none, 0.0));
    CHECK(sim.propensity.at(none, none, 0.0) < sim.propensity.at(none, none, 1.0));
}

TEST_CASE("generalized Roy: no selection on gains gives a flat curve") {
    GeneralizedRoySpec spec;
    spec.phi = [](const Key&, const Key&, double z, double, double v) { return z - v; };
    spec.delta_dist = DistSpec::normal(1.0, 1.0);
    spec.v_dist = DistSpec::normal(0.0, 1.0);

    const auto sim = simulate_generalized_roy(spec, 100000, {}, DistSpec::uniform(-2.0, 2.0), 32);
    for (const auto& bin : sim.bins) {
        CHECK(std::fabs(bin.mean - 1.0) <= 4.0 * bin.std_error);
    }
}

TEST_CASE("generalized Roy: selection against gains gives an increasing curve") {
    GeneralizedRoySpec spec;
    spec.phi = [](const Key&, const Key&, double z, double delta, double v) {
        return z - delta - 0.3 * v;
    };
    spec.delta_dist = DistSpec::normal(1.0, 1.0);
    spec.v_dist = DistSpec::normal(0.0, 1.0);
    spec.direction = Monotonicity::Decreasing;

    const auto sim = simulate_generalized_roy(spec, 200000, {}, DistSpec::uniform(-2.0, 2.0), 33);
    CHECK(sim.mte.declared() == Monotonicity::Increasing);
    for (std::size_t b = 1; b < sim.bins.size(); ++b) {
        const auto& lo = sim.bins[b - 1];
        const auto& hi = sim.bins[b];
        CHECK(lo.mean - hi.mean <= 2.0 * std::hypot(lo.std_error, hi.std_error));
    }
}

TEST_CASE("generalized Roy rejects rank-invariance violations") {
    GeneralizedRoySpec spec;
    // the instrument ordering flips with v: rank invariance fails
    spec.phi = [](const Key&, const Key&, double z, double delta, double v) {
        return z * v + delta;
    };
    spec.delta_dist = DistSpec::normal(0.0, 1.0);
    spec.v_dist = DistSpec::normal(0.0, 1.0);
    CHECK_THROWS_AS(simulate_generalized_roy(spec, 1000, {}, DistSpec::uniform(0.5, 2.0), 34),
                    Error);
}
