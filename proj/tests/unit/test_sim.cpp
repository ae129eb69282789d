#include <doctest.h>

#include <cmath>
#include <sstream>

#include "rollover/model.hpp"
#include "rollover/pde.hpp"
#include "rollover/sim.hpp"

using namespace rollover;

namespace {

FactorModelSpec vasicek(CoefficientField phi) {
    VasicekParams p;
    return build_consistent_vasicek(p, std::move(phi));
}

FactorModelSpec flat_rate(double r0, double g, CoefficientField phi = CoefficientField::constant(0.0)) {
    return build_constant_rate_model(r0, CoefficientField::constant_vector({0.0}),
                                     CoefficientField::constant_matrix(1, 1, {g}), std::move(phi), 0.0,
                                     Domain{{-10.0}, {10.0}}, 5.0);
}

SimConfig config(std::size_t paths, double dt = 1e-2, double T = 1.0) {
    SimConfig c;
    c.T = T;
    c.dt = dt;
    c.n_paths = paths;
    c.seed = 2024;
    c.workers = 1;
    return c;
}

}  // namespace

TEST_CASE("zero dynamics keep the factor constant") {
    const auto m = flat_rate(0.0, 0.0);
    const std::vector<double> x0{0.3};
    const auto b = simulate(m, config(10), x0, 1.0);
    for (std::size_t p = 0; p < b.n_paths; ++p)
        for (std::size_t k = 0; k < b.n_times(); ++k) CHECK(b.factor(p, k) == 0.3);
}

TEST_CASE("zero market price of risk makes V* equal S0") {
    auto m = vasicek(CoefficientField::constant(0.0));
    m.theta = CoefficientField::constant_vector({0.0});
    const auto b = simulate(m, config(20), m.x0, 1.0);
    for (std::size_t i = 0; i < b.v_star.size(); ++i) CHECK(b.v_star[i] == b.s0[i]);
}

TEST_CASE("constant rate accumulates exactly") {
    const auto m = flat_rate(0.02, 1.0);
    const auto b = simulate(m, config(10, 1e-3), m.x0, 1.0);
    for (std::size_t p = 0; p < b.n_paths; ++p) CHECK(std::abs(b.s0[b.at(p, b.n_times() - 1)] - std::exp(0.02)) < 1e-12);
}

TEST_CASE("accounts are positive and ordered when phi is non-negative") {
    const auto m = vasicek(CoefficientField::quadratic(0.01, {0.05}, 0.001));
    const auto b = simulate(m, config(200), m.x0, 1.0);
    CHECK(b.reliable);
    for (std::size_t i = 0; i < b.s0.size(); ++i) {
        CHECK(b.v_star[i] > 0.0);
        CHECK(b.s0[i] > 0.0);
        CHECK(b.y[i] > 0.0);
        CHECK(b.s0_tilde[i] >= b.s0[i]);
    }
    CHECK(b.v_star[0] == 1.0);
}

TEST_CASE("bundles do not depend on the worker count") {
    const auto m = vasicek(CoefficientField::quadratic(0.01, {0.05}, 0.001));
    auto c = config(301);
    c.record_stride = 7;
    const auto a = simulate(m, c, m.x0, 1.0);
    c.workers = 8;
    const auto b = simulate(m, c, m.x0, 1.0);
    CHECK(a.x == b.x);
    CHECK(a.v_star == b.v_star);
    CHECK(a.s0_tilde == b.s0_tilde);
    CHECK(a.time == b.time);
    CHECK(a.time.back() == 1.0);

    const auto e1 = mc_spot_spread(m, 1.0, 0.0, m.x0, c);
    c.workers = 1;
    const auto e2 = mc_spot_spread(m, 1.0, 0.0, m.x0, c);
    CHECK(e1.mean == e2.mean);
    CHECK(e1.std_error == e2.std_error);
}

TEST_CASE("antithetic pairs mirror each other") {
    const auto m = flat_rate(0.01, 1.0);
    auto c = config(10);
    c.antithetic = true;
    const auto b = simulate(m, c, m.x0, 1.0);
    for (std::size_t p = 0; p < 10; p += 2)
        for (std::size_t k = 0; k < b.n_times(); ++k) CHECK(std::abs(b.factor(p, k) + b.factor(p + 1, k)) < 1e-12);

    const auto still = flat_rate(0.01, 0.0);
    const auto s = simulate(still, c, still.x0, 1.0);
    for (std::size_t k = 0; k < s.n_times(); ++k) CHECK(s.factor(0, k) == s.factor(1, k));
}

TEST_CASE("spot spread estimator against closed forms") {
    const auto zero = vasicek(CoefficientField::constant(0.0));
    const auto e0 = mc_spot_spread(zero, 1.0, 0.0, zero.x0, config(20000));
    CHECK(std::abs(e0.mean - 1.0) <= 3.0 * e0.std_error);

    const auto flat = vasicek(CoefficientField::constant(0.02));
    const std::vector<double> x{0.1};
    const auto e = mc_spot_spread(flat, 1.5, 0.5, x, config(20000));
    CHECK(std::abs(e.mean - std::exp(0.02)) <= 3.0 * e.std_error);
    CHECK(e.std_error > 0.0);
}

TEST_CASE("spot spread estimator against the PDE") {
    const auto m = vasicek(CoefficientField::quadratic(0.01, {0.05}, 0.001));
    const auto u = solve_parabolic(spot_spread_problem(m, 1.0), model_grid(m, 0.0, 1.0, 401, 401));
    for (double x : {0.0, 0.05, 0.12}) {
        const std::vector<double> xs{x};
        const auto e = mc_spot_spread(m, 1.0, 0.0, xs, config(20000, 2e-3));
        CHECK(std::abs(e.mean - u.interpolate(0.0, x)) <= 3.0 * e.std_error);
    }
}

TEST_CASE("benchmarked bond estimator") {
    const auto flat = flat_rate(0.02, 1.0);
    const auto e = mc_benchmarked_zcb(flat, 2.0, 0.0, flat.x0, config(100, 1e-2, 2.0));
    CHECK(std::abs(e.mean - std::exp(-0.04)) < 1e-12);

    const auto m = vasicek(CoefficientField::constant(0.0));
    const auto u = solve_parabolic(zcb_problem(m, 1.0), model_grid(m, 0.0, 1.0, 401, 401));
    const auto mc = mc_benchmarked_zcb(m, 1.0, 0.0, m.x0, config(20000, 2e-3));
    CHECK(std::abs(mc.mean - u.interpolate(0.0, m.x0[0])) <= 3.0 * mc.std_error);
}

TEST_CASE("real-world prices") {
    const auto m = vasicek(CoefficientField::constant(0.02));
    const std::vector<double> x{0.08};
    const double t = 0.25, T = 1.25;
    auto c = config(20000);
    const auto self = real_world_price(m, [](const TerminalState& s) { return s.v_star; }, t, x, T, c);
    CHECK(std::abs(self.mean - m.v(t, x)) <= 1e-12 * m.v(t, x));

    const auto bond = real_world_price(m, [](const TerminalState&) { return 1.0; }, t, x, T, c);
    const auto p_hat = mc_benchmarked_zcb(m, T, t, x, c);
    CHECK(std::abs(bond.mean - m.v(t, x) * p_hat.mean) <= 1e-12);

    const auto loan = real_world_price(m, [](const TerminalState& s) { return s.s0_tilde; }, t, x, T, c);
    const auto spot = mc_spot_spread(m, T, t, x, c);
    CHECK(std::abs(loan.mean - spot.mean) <= 3.0 * std::hypot(loan.std_error, spot.std_error));

    CHECK_THROWS(real_world_price(m, [](const TerminalState&) { return NAN; }, t, x, T, c));
}

TEST_CASE("forward spread estimator against the PDE") {
    const auto m = vasicek(CoefficientField::quadratic(0.01, {0.05}, 0.001));
    const auto sol = solve_forward_spread(m, 0.0, 1.0, 0.5, 401, 401);
    const auto e = mc_forward_spread(m, 1.0, 0.5, 0.0, m.x0, config(20000, 2e-3));
    CHECK(std::abs(e.spread.mean - sol.s_fwd.interpolate(0.0, m.x0[0])) <= 3.0 * e.spread.std_error);
    CHECK(std::abs(e.p_hat.mean - sol.p_hat.interpolate(0.0, m.x0[0])) <= 3.0 * e.p_hat.std_error);

    const auto flat = vasicek(CoefficientField::constant(0.02));
    const auto f = mc_forward_spread(flat, 1.0, 0.5, 0.0, flat.x0, config(20000));
    CHECK(std::abs(f.spread.mean - std::exp(0.01)) <= 3.0 * f.spread.std_error);
}

TEST_CASE("drift tests detect the submartingale") {
    FactorModelSpec trivial = flat_rate(0.0, 1.0);
    const auto b0 = simulate(trivial, config(50), trivial.x0, 1.0);
    const auto z0 = empirical_drift_test(b0, "Y");
    CHECK(z0.mean_increment == 0.0);
    CHECK(z0.z == 0.0);

    const auto fair = vasicek(CoefficientField::constant(0.0));
    const auto bf = simulate(fair, config(100000, 0.02), fair.x0, 1.0);
    CHECK(std::abs(empirical_drift_test(bf, "S0tilde/V*").z) <= 3.0);

    const auto sub = vasicek(CoefficientField::constant(0.02));
    const auto bs = simulate(sub, config(100000, 0.02), sub.x0, 1.0);
    const auto zs = empirical_drift_test(bs, "S0tilde/V*");
    CHECK(zs.mean_increment > 0.0);
    CHECK(zs.z > 3.0);

    SeriesMatrix one;
    one.n_paths = 3;
    one.n_times = 1;
    one.values = {1.0, 1.0, 1.0};
    CHECK_THROWS(empirical_drift_test(one));
    CHECK_THROWS(bundle_series(b0, "nope"));
}

TEST_CASE("doubling the paths shrinks the standard error by sqrt 2") {
    const auto m = vasicek(CoefficientField::quadratic(0.01, {0.05}, 0.001));
    const auto a = mc_spot_spread(m, 1.0, 0.0, m.x0, config(5000));
    const auto b = mc_spot_spread(m, 1.0, 0.0, m.x0, config(10000));
    const double ratio = b.std_error / a.std_error;
    CHECK(ratio >= 0.8 / std::sqrt(2.0));
    CHECK(ratio <= 1.2 / std::sqrt(2.0));
}

TEST_CASE("configuration errors") {
    const auto m = vasicek(CoefficientField::constant(0.0));
    auto c = config(10, 1.0);
    CHECK_THROWS_AS(simulate(m, c, m.x0, 1.0), std::invalid_argument);
    c = config(10);
    CHECK_THROWS_AS(simulate(m, c, m.x0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(simulate(m, c, std::vector<double>{5.0}, 1.0), std::invalid_argument);
    auto nov = m;
    nov.v_star.reset();
    CHECK_THROWS_AS(mc_spot_spread(nov, 1.0, 0.0, m.x0, c), std::invalid_argument);
}

TEST_CASE("reflection is flagged") {
    auto m = flat_rate(0.0, 1.0);
    m.domain = Domain{{-0.05}, {0.05}};
    const auto b = simulate(m, config(100), m.x0, 1.0);
    CHECK(b.flagged_fraction > 0.01);
    CHECK_FALSE(b.reliable);
    for (double x : b.x) CHECK((x >= -0.05 && x <= 0.05));
}

TEST_CASE("exports") {
    const auto m = vasicek(CoefficientField::constant(0.01));
    auto c = config(3, 0.25);
    c.antithetic = false;
    const auto b = simulate(m, c, m.x0, 1.0);
    std::ostringstream csv;
    write_csv(b, csv);
    const std::string text = csv.str();
    CHECK(text.rfind("path,t,X_1,V_star,S0,S0_tilde,Y\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 3 * 5);

    std::stringstream bin;
    write_binary(b, bin);
    const auto back = read_binary(bin);
    CHECK(back.x == b.x);
    CHECK(back.y == b.y);
    CHECK(back.time == b.time);
    CHECK(back.n_paths == 3);

    const auto e = mc_spot_spread(m, 1.0, 0.0, m.x0, config(10));
    const auto j = e.to_json();
    CHECK(j.contains("mean"));
    CHECK(j.contains("stderr"));
    CHECK(j["n_paths"] == 10);
    CHECK(j["seed"] == 2024);
    CHECK(format_double(0.1) == "0.1");
}
