#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "rollover/curves.hpp"
#include "rollover/risk.hpp"

using namespace rollover;

namespace {

SimConfig mc(std::size_t paths, double dt, std::uint64_t seed = 21) {
    SimConfig c;
    c.n_paths = paths;
    c.dt = dt;
    c.seed = seed;
    return c;
}

// r = 0.02, theta = 0.3, sigma = 0.2, horizon 1.
ConstantMarket flat_market() { return build_constant_market(0.02, 0.3, 0.2, 1.0, CoefficientField::constant(0.0)); }

}  // namespace

TEST_CASE("market price of risk") {
    const std::vector<double> sig{0.2};
    CHECK(std::abs(market_price_of_risk(std::vector<double>{0.06}, sig, 1, 1, 0.02)[0] - 0.2) <= 1e-15);
    CHECK(market_price_of_risk(std::vector<double>{0.02}, sig, 1, 1, 0.02)[0] == 0.0);

    Eigen::Matrix3d s;
    s << 0.2, 0.05, 0.0, -0.03, 0.15, 0.02, 0.01, 0.0, 0.3;
    const Eigen::Vector3d mu(0.05, 0.04, 0.09);
    const double r = 0.01;
    const Eigen::Vector3d direct = s.inverse() * (mu.array() - r).matrix();
    std::vector<double> flat(9);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) flat[i * 3 + j] = s(i, j);
    const auto th = market_price_of_risk(std::vector<double>(mu.data(), mu.data() + 3), flat, 3, 3, r);
    for (int k = 0; k < 3; ++k) CHECK(std::abs(th[k] - direct[k]) <= 1e-12);

    // Two assets on three Brownian motions: theta is the minimum-norm solution.
    const std::vector<double> wide{0.2, 0.0, 0.1, 0.0, 0.3, 0.0};
    const auto tw = market_price_of_risk(std::vector<double>{0.05, 0.08}, wide, 2, 3, 0.02);
    CHECK(std::abs(0.2 * tw[0] + 0.1 * tw[2] - 0.03) <= 1e-14);
    CHECK(std::abs(0.3 * tw[1] - 0.06) <= 1e-14);
    CHECK(std::abs(tw[0] / tw[2] - 2.0) <= 1e-12);

    CHECK_THROWS_AS(market_price_of_risk(std::vector<double>{0.05}, std::vector<double>{0.0}, 1, 1, 0.02),
                    std::domain_error);
}

TEST_CASE("risk-sensitive strategy") {
    const std::vector<double> sig{0.2}, th{0.2}, g{0.1}, xi{0.5};
    const auto s = rs_strategy(th, sig, 1, g, 1, xi, -1.0);
    CHECK(std::abs(s.pi[0] - 0.375) <= 1e-15);
    CHECK(std::abs(s.pi[0] - (s.gop[0] + s.hedge[0])) <= 1e-14);
    CHECK(std::abs(s.pi_star[0] - 1.0) <= 1e-15);

    const std::vector<double> zero{0.0};
    const auto half = rs_strategy(th, sig, 1, g, 1, zero, -1.0);
    CHECK(std::abs(half.pi[0] - 0.5 * half.pi_star[0]) <= 1e-15);

    double previous = INFINITY;
    for (double gamma : {-1e-1, -1e-2, -1e-3, -1e-4, -1e-6}) {
        const auto sg = rs_strategy(th, sig, 1, g, 1, xi, gamma);
        const double err = std::abs(sg.pi[0] - sg.pi_star[0]);
        CHECK(err < previous);
        previous = err;
    }
    CHECK(previous <= 1e-5);
    CHECK(rs_strategy(th, sig, 1, g, 1, xi, 0.0).pi[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(rs_strategy(th, sig, 1, g, 1, xi, 0.5), std::invalid_argument);
}

TEST_CASE("decomposition holds for random two-asset markets") {
    std::mt19937_64 gen(8);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (int i = 0; i < 100; ++i) {
        const std::vector<double> sig{0.3 + u(gen) * 0.1, u(gen) * 0.1, u(gen) * 0.1, 0.25 + u(gen) * 0.1};
        const std::vector<double> th{u(gen), u(gen)}, g{u(gen), u(gen)}, xi{u(gen)};
        const double gamma = -3.0 * std::abs(u(gen)) - 0.01;
        const auto s = rs_strategy(th, sig, 2, g, 1, xi, gamma);
        for (int k = 0; k < 2; ++k) CHECK(std::abs(s.pi[k] - (s.gop[k] + s.hedge[k])) <= 1e-14 * (1 + std::abs(s.pi[k])));
    }
}

TEST_CASE("funding-liquidity spread formula") {
    const std::vector<double> th{0.3}, none{0.0};
    CHECK(funding_liquidity_spread(0.02, th, none, -1.0) == 0.0425);
    std::mt19937_64 gen(13);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (int i = 0; i < 100; ++i) {
        const double r = 0.1 * u(gen), gamma = -5.0 * std::abs(u(gen)) - 1e-3;
        const std::vector<double> t2{u(gen), u(gen)}, gx{u(gen), u(gen)};
        CHECK(funding_liquidity_spread(r, t2, gx, 0.0) == 0.0);
        const double n2 = t2[0] * t2[0] + t2[1] * t2[1];
        const double simplified = -gamma * (r + n2 / (2.0 * (1.0 - gamma)));
        const std::vector<double> zero2{0.0, 0.0};
        CHECK(std::abs(funding_liquidity_spread(r, t2, zero2, gamma) - simplified) <= 1e-14);
    }
}

TEST_CASE("endogenous spread on the constant market") {
    const auto cm = flat_market();
    RiskParams p;
    const auto m = rs_spread_pipeline(cm.model, cm.market, p);
    for (double x : {-1.0, 0.0, 2.0}) CHECK(m.phi.scalar(0.5, x) == 0.0425);

    CurveOptions o;
    o.n_x = 201;
    o.levels_per_year = 400;
    const std::vector<double> x0{0.0};
    const auto rep = term_structure_report(m, 0.0, x0, {0.5, 0.75}, {}, o);
    for (const auto& row : rep.maturities) CHECK(std::abs(row.S - std::exp(0.0425 * row.T)) <= 1e-8);

    p.gamma = 0.0;
    const auto m0 = rs_spread_pipeline(cm.model, cm.market, p);
    CHECK(m0.phi.scalar(0.3, 0.1) == 0.0);
    const auto rep0 = term_structure_report(m0, 0.0, x0, {0.5, 0.75}, {0.25}, o);
    for (const auto& row : rep0.tenors) CHECK(std::abs(row.L - row.F) <= 1e-8);
}

TEST_CASE("more risk aversion raises the spread") {
    for (double r = 0.0; r <= 0.1; r += 0.02)
        for (double theta = -0.5; theta <= 0.5; theta += 0.125) {
            if (r == 0.0 && theta == 0.0) continue;  // both spreads vanish
            const std::vector<double> th{theta}, none{0.0};
            CHECK(funding_liquidity_spread(r, th, none, -2.0) > funding_liquidity_spread(r, th, none, -1.0));
        }
    const auto a = build_constant_market(0.03, 0.25, 0.2, 1.0, CoefficientField::constant(0.0));
    RiskParams p1, p2;
    p2.gamma = -2.0;
    const auto m1 = rs_spread_pipeline(a.model, a.market, p1), m2 = rs_spread_pipeline(a.model, a.market, p2);
    CHECK(m2.phi.scalar(0.0, 0.0) > m1.phi.scalar(0.0, 0.0));
}

TEST_CASE("pipeline rejects inconsistent markets") {
    auto cm = flat_market();
    cm.market.mu = CoefficientField::constant_vector({0.09});
    CHECK_THROWS_AS(rs_spread_pipeline(cm.model, cm.market, RiskParams{}), std::invalid_argument);
    auto ok = flat_market();
    RiskParams p;
    p.gamma = 0.5;
    CHECK_THROWS_AS(rs_spread_pipeline(ok.model, ok.market, p), std::invalid_argument);
}

TEST_CASE("zero strategy keeps wealth in the savings account") {
    const auto cm = flat_market();
    const auto w = simulate_wealth(cm.model, cm.market, StrategyField::constant({0.0}), mc(200, 0.01));
    for (std::size_t p = 0; p < w.n_paths; ++p)
        for (std::size_t i = 0; i < w.n_times(); ++i)
            CHECK(std::abs(w.wealth[p * w.n_times() + i] / w.s0[p * w.n_times() + i] - 1.0) <= 1e-14);
}

TEST_CASE("constant strategy gives Gaussian log wealth") {
    const auto cm = flat_market();
    const double pi = 0.6, r = 0.02, mu = 0.08, sigma = 0.2;
    const auto w = simulate_wealth(cm.model, cm.market, StrategyField::constant({pi}), mc(20000, 0.05));
    const auto v = w.terminal();
    double s = 0.0, s2 = 0.0;
    for (double x : v) {
        s += std::log(x);
        s2 += std::log(x) * std::log(x);
    }
    const double n = static_cast<double>(v.size()), mean = s / n, se = std::sqrt((s2 / n - mean * mean) / (n - 1));
    CHECK(std::abs(mean - (r + pi * (mu - r) - 0.5 * pi * pi * sigma * sigma)) <= 3.0 * se);
}

TEST_CASE("growth-optimal strategy reproduces the benchmark pathwise") {
    const auto cm = flat_market();
    RiskParams p;
    p.gamma = 0.0;
    const auto cfg = mc(500, 0.01);
    const auto w = simulate_wealth(cm.model, cm.market, StrategyField::rs_optimal(cm.model, cm.market, p), cfg);
    const std::vector<double> x0{0.0};
    const auto b = simulate(cm.model, cfg, x0, 1.0);
    REQUIRE(b.time.size() == w.n_times());
    for (std::size_t i = 0; i < w.wealth.size(); ++i) CHECK(std::abs(w.wealth[i] / b.v_star[i] - 1.0) <= 1e-10);
}

TEST_CASE("power objective") {
    const std::vector<double> ones(10, 1.0);
    CHECK(rs_objective(ones, -1.0).mean == 1.0);
    const std::vector<double> det(10, std::exp(0.02));
    CHECK(std::abs(rs_objective(det, -1.0).mean - std::exp(-0.02)) <= 1e-15);
    CHECK_THROWS_AS(rs_objective(std::vector<double>{1.0, 0.0}, -1.0), std::domain_error);
}

TEST_CASE("optimal strategy minimizes the power objective") {
    const auto cm = flat_market();
    RiskParams p;
    const auto cfg = mc(20000, 0.02);
    const auto best = StrategyField::rs_optimal(cm.model, cm.market, p);
    double opt[1];
    best.eval(0.0, std::vector<double>{0.0}, opt);
    CHECK(std::abs(opt[0] - 0.75) <= 1e-15);
    const auto e0 = rs_objective(simulate_wealth(cm.model, cm.market, best, cfg).terminal(), p.gamma);
    for (double shift : {-0.25, 0.25}) {
        const auto e = rs_objective(
            simulate_wealth(cm.model, cm.market, StrategyField::constant({opt[0] + shift}), cfg).terminal(), p.gamma);
        CHECK(e0.mean <= e.mean + 3.0 * std::hypot(e0.std_error, e.std_error));
    }
}

TEST_CASE("deflated roll-over account is a martingale only at the endogenous spread") {
    const auto cm = flat_market();
    RiskParams p;
    const auto m = rs_spread_pipeline(cm.model, cm.market, p);
    const auto cfg = mc(20000, 0.01);
    const auto ok = verify_rs_martingale(m, cm.market, p, cfg);
    CHECK(ok.pass);
    CHECK(ok.phi_at_start == 0.0425);

    auto shifted = m;
    shifted.phi = CoefficientField::transform(m.phi, 1.0, 0.02);
    const auto bad = verify_rs_martingale(shifted, cm.market, p, cfg);
    CHECK_FALSE(bad.pass);
    CHECK(bad.drift.z > 3.0);
}

TEST_CASE("strategy tables") {
    const auto cm = flat_market();
    const auto table = StrategyField::grid({0.0, 0.5}, {-8.0, 8.0}, 1, {0.1, 0.3, 0.5, 0.7});
    double out[1];
    table.eval(0.25, std::vector<double>{0.0}, out);
    CHECK(std::abs(out[0] - 0.4) <= 1e-15);
    CHECK_THROWS_AS(table.eval(0.75, std::vector<double>{0.0}, out), std::out_of_range);
    CHECK_THROWS(simulate_wealth(cm.model, cm.market, table, mc(10, 0.01)));
    CHECK_FALSE(table.is_constant());
}

TEST_CASE("market JSON round trip and validation") {
    const auto cm = flat_market();
    const auto back = market_from_json(json::parse(to_json(cm.market).dump()));
    CHECK(back.mu.scalar(0.0, 0.0) == cm.market.mu.scalar(0.0, 0.0));
    CHECK(back.sigma.scalar(0.0, 0.0) == cm.market.sigma.scalar(0.0, 0.0));
    auto bad = cm.market;
    bad.s0 = {-1.0};
    CHECK_THROWS_AS(bad.validate(cm.model.domain, 1.0), std::invalid_argument);
}
