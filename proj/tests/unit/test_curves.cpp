#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "rollover/curves.hpp"

using namespace rollover;

namespace {

FactorModelSpec vasicek(CoefficientField phi) { return build_consistent_vasicek(VasicekParams{}, std::move(phi)); }

CurveOptions pde_options() {
    CurveOptions o;
    o.n_x = 401;
    o.levels_per_year = 400;
    return o;
}

const std::vector<double> kX{0.05};

}  // namespace

TEST_CASE("rate formulas on hand-computed inputs") {
    CHECK(term_rate(1.0, 1.0, 0.5) == 0.0);
    CHECK(term_rate(0.97, 0.97, 0.25) == 0.0);
    CHECK(term_rate(1.01, 0.99, 0.5) == doctest::Approx(0.0404040404040404).epsilon(1e-14));
    CHECK(simple_forward(0.9, 0.9, 0.5) == 0.0);
    CHECK(simple_forward(0.98, 0.95, 0.5) == doctest::Approx(0.0631578947368421).epsilon(1e-14));
    CHECK(simple_forward(1.0, 0.99, 0.25) == doctest::Approx(0.0404040404040404).epsilon(1e-14));
    CHECK(forward_term_rate(1.0, 0.037, 0.5) == doctest::Approx(0.037).epsilon(1e-15));
    CHECK(std::abs(forward_term_rate(1.005, 0.03, 0.5) - 0.04015) <= 1e-15);
    CHECK(std::abs(forward_term_rate(std::exp(0.005), 0.0, 0.5) - (std::exp(0.005) - 1.0) / 0.5) <= 1e-15);
    CHECK(sps_value(0.04, 0.04, 0.5, 0.95) == 0.0);
    CHECK(std::abs(sps_value(0.04, 0.03, 0.5, 0.95) - 0.00475) <= 1e-16);
}

TEST_CASE("swap value is affine in the fixed rate") {
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> u(-0.05, 0.1);
    for (int i = 0; i < 100; ++i) {
        const double L = u(gen), r1 = u(gen), r2 = u(gen), P = 0.8 + std::abs(u(gen));
        CHECK(std::abs((sps_value(L, r1, 0.5, P) - sps_value(L, r2, 0.5, P)) - 0.5 * P * (r2 - r1)) <= 1e-16);
    }
}

TEST_CASE("forward term rate round trip") {
    std::mt19937_64 gen(17);
    std::uniform_real_distribution<double> us(0.9, 1.2), uf(-0.02, 0.1);
    for (double delta : {0.25, 0.5, 1.0})
        for (int i = 0; i < 1000; ++i) {
            const double S = us(gen), F = uf(gen);
            CHECK(std::abs(fwd_spread(forward_term_rate(S, F, delta), F, delta) - S) <= 1e-14);
        }
}

TEST_CASE("formula input errors") {
    CHECK_THROWS_AS(term_rate(1.0, 0.0, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(term_rate(1.0, 0.9, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(simple_forward(-1.0, 0.9, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(simple_forward(1.0, 0.9, -0.5), std::invalid_argument);
    CHECK_THROWS_AS(forward_term_rate(1.0, 0.02, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(sps_value(0.04, 0.03, 0.5, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(sps_value(0.04, 0.03, 0.0, 0.9), std::invalid_argument);
    CHECK(curve_method_from_string("mc") == CurveMethod::mc);
    CHECK_THROWS(curve_method_from_string("lattice"));
}

TEST_CASE("zero roll-over risk collapses to a single curve") {
    const auto m = vasicek(CoefficientField::constant(0.0));
    const auto rep = term_structure_report(m, 0.0, kX, {0.0, 0.5, 1.0, 2.0, 3.0}, {0.25, 0.5, 1.0}, pde_options());
    CHECK(rep.flags.empty());
    for (const auto& row : rep.maturities) CHECK(std::abs(row.S - 1.0) <= 1e-8);
    for (const auto& row : rep.tenors) {
        CHECK(std::abs(row.S - 1.0) <= 1e-8);
        CHECK(std::abs(row.L - row.F) <= 1e-8);
        CHECK(std::abs(row.sps_value_par) <= 1e-15);
        CHECK(std::abs(row.sps_value_at_F) <= 1e-8);
    }
    CHECK(rep.maturities.front().P == 1.0);
}

TEST_CASE("constant roll-over risk closed forms") {
    const double phi0 = 0.02;
    const auto m = vasicek(CoefficientField::constant(phi0));
    const auto rep = term_structure_report(m, 0.0, kX, {0.0, 0.5, 1.0, 2.0}, {0.25, 0.5, 1.0}, pde_options());
    for (const auto& row : rep.maturities) CHECK(std::abs(row.S - std::exp(phi0 * row.T)) <= 1e-8);
    for (const auto& row : rep.tenors) CHECK(std::abs(row.S - std::exp(phi0 * row.delta)) <= 1e-8);
}

TEST_CASE("ZCB prices agree with the Vasicek closed form") {
    const auto m = vasicek(CoefficientField::constant(0.0));
    const auto rep = term_structure_report(m, 0.0, kX, {1.0, 2.0}, {}, pde_options());
    // Under the pricing measure the factor reverts to 0.05 - s theta / k; r = a + b x.
    const double k = 1.0, s = 0.1, theta = 0.2, a = 0.08, b = -2.0;
    const double mq = 0.05 - s * theta / k;
    for (const auto& row : rep.maturities) {
        const double T = row.T;
        const double B = (1.0 - std::exp(-k * T)) / k;
        const double mean_int = mq * T + (0.05 - mq) * B;
        const double var_int = s * s / (k * k) * (T - 2.0 * B + (1.0 - std::exp(-2.0 * k * T)) / (2.0 * k));
        const double P = std::exp(-a * T - b * mean_int + 0.5 * b * b * var_int);
        CHECK(std::abs(row.P / P - 1.0) <= 1e-4);
    }
}

TEST_CASE("spreads increase strictly with constant roll-over risk") {
    const auto lo = term_structure_report(vasicek(CoefficientField::constant(0.01)), 0.0, kX, {0.5, 1.0, 2.0},
                                          {0.25, 0.5}, pde_options());
    const auto hi = term_structure_report(vasicek(CoefficientField::constant(0.015)), 0.0, kX, {0.5, 1.0, 2.0},
                                          {0.25, 0.5}, pde_options());
    for (std::size_t i = 0; i < lo.maturities.size(); ++i) CHECK(hi.maturities[i].S > lo.maturities[i].S);
    for (std::size_t i = 0; i < lo.tenors.size(); ++i) CHECK(hi.tenors[i].S > lo.tenors[i].S);
}

TEST_CASE("tenor row at the valuation date equals the spot spread") {
    const auto m = vasicek(CoefficientField::quadratic(0.01, {0.05}, 0.001));
    const double t = 1.0;
    const auto rep = term_structure_report(m, t, kX, {1.0, 1.25, 1.5, 2.0}, {0.25, 0.5, 1.0}, pde_options());
    for (const auto& row : rep.tenors) {
        if (row.T != t) continue;
        CHECK(row.spot_case);
        for (const auto& mat : rep.maturities)
            if (std::abs(mat.T - (t + row.delta)) < 1e-12) CHECK(std::abs(row.S - mat.S) <= 1e-12);
    }
}

TEST_CASE("state-dependent spreads exceed one and agree with Monte Carlo") {
    const auto m = vasicek(CoefficientField::quadratic(0.01, {0.05}, 0.001));
    const auto pde = term_structure_report(m, 0.0, kX, {1.0}, {0.5}, pde_options());
    CHECK(pde.flags.empty());
    CHECK(pde.maturities[0].S > 1.0);
    CurveOptions mc;
    mc.method = CurveMethod::mc;
    mc.mc.n_paths = 20000;
    mc.mc.dt = 0.01;
    mc.mc.seed = 5;
    mc.mc.antithetic = true;
    const auto est = term_structure_report(m, 0.0, kX, {1.0}, {0.5}, mc);
    const auto& a = pde.maturities[0];
    const auto& b = est.maturities[0];
    CHECK(b.S_stderr > 0.0);
    CHECK(std::abs(a.S - b.S) <= 3.0 * b.S_stderr + 1e-4);
    CHECK(std::abs(pde.tenors[0].S - est.tenors[0].S) <= 3.0 * est.tenors[0].S_stderr + 1e-4);
}

TEST_CASE("report errors and export") {
    const auto m = vasicek(CoefficientField::constant(0.0));
    CHECK_THROWS_AS(term_structure_report(m, 0.0, kX, {2.0, 1.0}, {0.5}, pde_options()), std::invalid_argument);
    CHECK_THROWS_AS(term_structure_report(m, 0.0, kX, {m.horizon}, {0.5}, pde_options()), std::invalid_argument);
    CHECK_THROWS_AS(term_structure_report(m, 1.0, kX, {0.5}, {}, pde_options()), std::invalid_argument);

    const auto rep = term_structure_report(m, 0.0, kX, {0.0, 1.0}, {0.5}, pde_options());
    std::ostringstream out;
    write_csv(rep, out);
    const std::string s = out.str();
    CHECK(std::count(s.begin(), s.end(), '\n') == 1 + 2);
    const auto j = rep.to_json();
    CHECK(j["method"] == "pde");
    CHECK(j["tenors"].size() == 2);
}
