#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "rollover/model.hpp"
#include "rollover/pde.hpp"

using namespace rollover;

namespace {

ParabolicProblem canonical(ParabolicProblem::Coefficient b, ParabolicProblem::Coefficient a,
                           ParabolicProblem::Coefficient c, std::function<double(double)> h) {
    return {"test", std::move(b), std::move(a), std::move(c), std::move(h)};
}

double gauss(double x, double var) { return std::exp(-0.5 * x * x / var) / std::sqrt(2.0 * std::numbers::pi * var); }

/// Max error of the heat-kernel problem on [-8, 8] x [0, 1].
double heat_error(std::size_t nx, std::size_t nt) {
    const Grid1D grid{-8.0, 8.0, nx, 0.0, 1.0, nt};
    const auto u = solve_parabolic(canonical([](double, double) { return 0.0; }, [](double, double) { return 0.5; },
                                             [](double, double) { return 0.0; }, [](double x) { return gauss(x, 1.0); }),
                                   grid);
    double worst = 0.0;
    for (std::size_t j = 0; j < nx; ++j) worst = std::max(worst, std::abs(u.at(0, j) - gauss(grid.x(j), 2.0)));
    return worst;
}

FactorModelSpec vasicek(CoefficientField phi) {
    VasicekParams p;
    return build_consistent_vasicek(p, std::move(phi));
}

}  // namespace

TEST_CASE("constants are preserved for any drift and diffusion") {
    const Grid1D grid{-1.0, 2.0, 101, 0.0, 3.0, 151};
    for (double w : {0.5, 1.0}) {
        const auto u = solve_parabolic(canonical([](double t, double x) { return std::sin(3 * x) + t; },
                                                 [](double, double x) { return 0.1 + x * x; },
                                                 [](double, double) { return 0.0; }, [](double) { return 1.0; }),
                                       grid, SolverOptions{w});
        for (double v : u.values) CHECK(std::abs(v - 1.0) <= 1e-12);
    }
}

TEST_CASE("constant potential gives the exponential") {
    const Grid1D grid{-1.0, 1.0, 81, 0.0, 2.0, 1601};
    const double phi0 = 0.03;
    const auto u = solve_parabolic(canonical([](double, double x) { return -x; }, [](double, double) { return 0.02; },
                                             [phi0](double, double) { return phi0; }, [](double) { return 1.0; }),
                                   grid);
    for (std::size_t i = 0; i < grid.n_t; ++i)
        for (std::size_t j = 0; j < grid.n_x; ++j)
            CHECK(std::abs(u.at(i, j) - std::exp(phi0 * (grid.t_end - grid.t(i)))) <= 1e-10);
}

TEST_CASE("heat kernel on a 400 x 400 grid") { CHECK(heat_error(400, 400) <= 1e-4); }

TEST_CASE("Crank-Nicolson converges at second order") {
    const double coarse = heat_error(101, 101), fine = heat_error(201, 201);
    const double ratio = coarse / fine;
    CHECK(ratio >= 3.5);
    CHECK(ratio <= 4.5);
}

TEST_CASE("implicit scheme obeys the maximum principle") {
    const Grid1D grid{-2.0, 2.0, 101, 0.0, 1.0, 21};
    const auto u = solve_parabolic(canonical([](double, double x) { return 3.0 * x; }, [](double, double) { return 0.3; },
                                             [](double, double) { return 0.0; },
                                             [](double x) { return x > 0.0 ? 1.0 : -0.5; }),
                                   grid, SolverOptions{1.0, BoundaryRule::dirichlet_terminal});
    for (double v : u.values) {
        CHECK(v <= 1.0 + 1e-12);
        CHECK(v >= -0.5 - 1e-12);
    }
}

TEST_CASE("spot spreads stay above one for non-negative phi") {
    const auto m = vasicek(CoefficientField::quadratic(0.01, {0.05}, 0.001));
    const auto u = solve_parabolic(spot_spread_problem(m, 2.0), model_grid(m, 0.0, 2.0, 201, 201), SolverOptions{1.0});
    CHECK(u.min() >= 1.0 - 1e-8);
}

TEST_CASE("zcb problem") {
    auto trivial = vasicek(CoefficientField::constant(0.0));
    trivial.v_star = CoefficientField::constant(1.0);
    const auto one = solve_parabolic(zcb_problem(trivial, 1.0), model_grid(trivial, 0.0, 1.0, 51, 51));
    for (double v : one.values) CHECK(std::abs(v - 1.0) <= 1e-12);

    const auto m = vasicek(CoefficientField::constant(0.0));
    const auto p = zcb_problem(m, 1.0);
    for (double x : {-0.1, 0.05, 0.2}) CHECK(std::abs(p.h(x) - std::exp(-2.0 * (x - 0.05))) <= 1e-15);

    const auto flat = build_constant_rate_model(0.03, CoefficientField::constant_vector({0.0}),
                                                CoefficientField::constant_matrix(1, 1, {0.5}),
                                                CoefficientField::constant(0.0), 0.0, Domain{{-3.0}, {3.0}}, 5.0);
    const auto u = solve_parabolic(zcb_problem(flat, 2.0), model_grid(flat, 0.0, 2.0, 61, 81));
    for (double v : u.values) CHECK(std::abs(v - std::exp(-0.06)) <= 1e-12);
    const double P = flat.v(0.5, std::vector<double>{0.0}) * u.interpolate(0.5, 0.0);
    CHECK(std::abs(P - std::exp(-0.03 * 1.5)) <= 1e-12);
}

TEST_CASE("spot spread closed forms") {
    const auto zero = vasicek(CoefficientField::constant(0.0));
    const auto u0 = solve_parabolic(spot_spread_problem(zero, 1.0), model_grid(zero, 0.0, 1.0, 401, 400));
    for (double v : u0.values) CHECK(std::abs(v - 1.0) <= 1e-10);

    const auto flat = vasicek(CoefficientField::constant(0.02));
    const auto u = solve_parabolic(spot_spread_problem(flat, 1.0), model_grid(flat, 0.0, 1.0, 201, 401));
    for (std::size_t i = 0; i < u.grid.n_t; i += 50)
        CHECK(std::abs(u.at(i, 100) - std::exp(0.02 * (1.0 - u.grid.t(i)))) <= 1e-10);
}

TEST_CASE("forward spread closed forms and terminal condition") {
    const auto zero = vasicek(CoefficientField::constant(0.0));
    const auto s0 = solve_forward_spread(zero, 0.0, 1.0, 0.5, 201, 201);
    for (double v : s0.s_fwd.values) CHECK(std::abs(v - 1.0) <= 1e-10);

    const auto flat = vasicek(CoefficientField::constant(0.02));
    const auto s = solve_forward_spread(flat, 0.0, 1.0, 0.5, 201, 201);
    for (double v : s.s_fwd.values) CHECK(std::abs(v - std::exp(0.01)) <= 1e-10);

    const auto m = vasicek(CoefficientField::quadratic(0.01, {0.05}, 0.001));
    const auto f = solve_forward_spread(m, 0.0, 1.0, 0.5, 201, 201);
    const std::size_t last = f.s_fwd.grid.n_t - 1;
    for (std::size_t j = 0; j < 201; ++j) CHECK(std::abs(f.s_fwd.at(last, j) - f.s_long.at(0, j)) <= 1e-10);
    CHECK(f.s_long.grid.t_start == 1.0);
    CHECK(f.s_long.grid.t_end == 1.5);
}

TEST_CASE("forward problem input checks") {
    const auto m = vasicek(CoefficientField::constant(0.01));
    const auto sol = solve_forward_spread(m, 0.0, 1.0, 0.5, 101, 101);
    auto bad = sol.p_hat;
    bad.at(3, 4) = 0.0;
    CHECK_THROWS_AS(forward_spread_problem(m, 1.0, 0.5, bad, sol.s_long), std::invalid_argument);
    const auto other = solve_forward_spread(m, 0.0, 1.0, 0.5, 51, 101);
    CHECK_THROWS_AS(forward_spread_problem(m, 1.0, 0.5, sol.p_hat, other.s_long), std::invalid_argument);
}

TEST_CASE("grid gradient") {
    const Grid1D grid{0.0, 1.0, 101, 0.0, 1.0, 2};
    GridFunction lin{grid, std::vector<double>(2 * 101), "lin", "", 0.0};
    GridFunction sq = lin, ex = lin;
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 101; ++j) {
            const double x = grid.x(j);
            lin.at(i, j) = x;
            sq.at(i, j) = x * x;
            ex.at(i, j) = std::exp(2.0 * x);
        }
    const auto dl = grid_gradient(lin), ds = grid_gradient(sq), de = grid_gradient(ex);
    for (std::size_t j = 0; j < 101; ++j) {
        const double x = grid.x(j);
        CHECK(std::abs(dl.at(0, j) - 1.0) <= 1e-12);
        if (j > 0 && j < 100) {
            CHECK(std::abs(ds.at(0, j) - 2.0 * x) <= 1e-12);
            CHECK(std::abs(de.at(0, j) / (2.0 * std::exp(2.0 * x)) - 1.0) <= 1e-4);
        }
    }
}

TEST_CASE("grid and interpolation errors") {
    CHECK_THROWS_AS((Grid1D{1.0, 0.0, 11, 0.0, 1.0, 11}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((Grid1D{0.0, 1.0, 2, 0.0, 1.0, 11}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((Grid1D{0.0, 1.0, 11, 0.0, 1.0, 1}.validate()), std::invalid_argument);
    const auto m = vasicek(CoefficientField::constant(0.0));
    const auto u = solve_parabolic(zcb_problem(m, 1.0), model_grid(m, 0.0, 1.0, 21, 11));
    CHECK_THROWS(u.interpolate(0.5, m.domain.upper[0] + 1.0));
    CHECK_THROWS(u.interpolate(1.5, 0.05));
    CHECK_THROWS(u.level_index(0.05));
    CHECK(u.interpolate(1.0, u.grid.x(3)) == u.at(10, 3));

    auto nov = m;
    nov.v_star.reset();
    CHECK_THROWS_AS(zcb_problem(nov, 1.0), std::invalid_argument);
    CHECK_THROWS(solve_parabolic(canonical([](double, double) { return NAN; }, [](double, double) { return 0.1; },
                                           [](double, double) { return 0.0; }, [](double) { return 1.0; }),
                                 Grid1D{0.0, 1.0, 11, 0.0, 1.0, 11}));
}

TEST_CASE("grid function export") {
    const auto m = vasicek(CoefficientField::constant(0.0));
    const auto u = solve_parabolic(spot_spread_problem(m, 1.0), model_grid(m, 0.0, 1.0, 5, 3));
    std::ostringstream out;
    write_csv(u, out);
    const std::string s = out.str();
    CHECK(s.rfind("# ", 0) == 0);
    CHECK(std::count(s.begin(), s.end(), '\n') == 1 + 1 + 3);
    const auto meta = u.metadata();
    CHECK(meta["scheme"] == "crank-nicolson");
    CHECK(meta["n_x"] == 5);
}
