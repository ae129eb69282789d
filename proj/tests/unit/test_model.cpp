#include <doctest.h>

#include <cmath>
#include <random>

#include "rollover/model.hpp"

using namespace rollover;

namespace {

std::vector<std::pair<double, std::vector<double>>> interior_points(const FactorModelSpec& m, int count,
                                                                   unsigned seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> ut(0.05 * m.horizon, 0.95 * m.horizon);
    std::uniform_real_distribution<double> ux(m.domain.lower[0] + 0.05 * m.domain.width(0),
                                              m.domain.upper[0] - 0.05 * m.domain.width(0));
    std::vector<std::pair<double, std::vector<double>>> pts;
    for (int i = 0; i < count; ++i) pts.push_back({ut(gen), {ux(gen)}});
    return pts;
}

FactorModelSpec vasicek(double lambda = 2.0) {
    VasicekParams p;
    p.lambda = lambda;
    return build_consistent_vasicek(p, CoefficientField::constant(0.0));
}

}  // namespace

TEST_CASE("vasicek with zero slope is the trivial market") {
    const auto m = vasicek(0.0);
    for (double x : {-0.2, 0.05, 0.3}) {
        CHECK(m.theta.scalar(1.0, x) == 0.0);
        CHECK(m.r.scalar(1.0, x) == 0.0);
        CHECK(m.v_star->scalar(1.0, x) == 1.0);
    }
}

TEST_CASE("vasicek coefficients match hand substitution") {
    const auto m = vasicek();
    CHECK(m.theta.scalar(0.0, 0.05) == doctest::Approx(0.2).epsilon(1e-15));
    for (double x : {-0.1, 0.0, 0.05, 0.17}) CHECK(std::abs(m.r.scalar(0.3, x) - (0.08 - 2.0 * x)) < 1e-15);
    CHECK(m.v_star->scalar(0.0, 0.05) == 1.0);
    CHECK(std::abs(m.v_star->scalar(2.0, 0.15) - std::exp(0.2)) < 1e-14);
}

TEST_CASE("vasicek satisfies both GOP conditions at random interior points") {
    for (double lambda : {-1.0, 0.5, 2.0, 3.0}) {
        const auto m = vasicek(lambda);
        const auto res = gop_consistency_residuals(m, interior_points(m, 100, 7));
        CHECK(res.points.size() == 100);
        CHECK(res.max_relative() <= 1e-6);
    }
}

TEST_CASE("shifting r shows up in the second GOP condition only") {
    auto m = vasicek();
    m.r = CoefficientField::transform(m.r, 1.0, 0.01);
    const auto res = gop_consistency_residuals(m, interior_points(m, 20, 11));
    for (const auto& p : res.points) {
        CHECK(std::abs(p.cond2 + 0.01 * p.v) <= 1e-6 * p.v);
        CHECK(std::abs(p.cond1_relative[0]) <= 1e-6);
    }
}

TEST_CASE("constant market has zero residuals") {
    FactorModelSpec m;
    m.f = CoefficientField::constant_vector({0.0});
    m.g = CoefficientField::constant_matrix(1, 1, {1.0});
    m.r = CoefficientField::constant(0.0);
    m.theta = CoefficientField::constant_vector({0.0});
    m.phi = CoefficientField::constant(0.0);
    m.v_star = CoefficientField::constant(1.0);
    m.x0 = {0.0};
    m.domain = Domain{{-1.0}, {1.0}};
    m.validate();
    const auto res = gop_consistency_residuals(m, {{0.5, {0.1}}, {0.0, {-0.3}}});
    CHECK(res.max_abs() == 0.0);
}

TEST_CASE("relative cond1 residual is invariant under rescaling v*") {
    auto m = vasicek();
    m.v_star = CoefficientField::exp_affine(-2.0 * 0.05, {2.0});
    auto scaled = m;
    scaled.theta = CoefficientField::constant_vector({0.25});  // break the condition on purpose
    auto scaled2 = scaled;
    scaled2.v_star = CoefficientField::exp_affine(-2.0 * 0.05 + std::log(3.0), {2.0});
    const auto pts = interior_points(m, 10, 3);
    const auto a = gop_consistency_residuals(scaled, pts);
    const auto b = gop_consistency_residuals(scaled2, pts);
    for (std::size_t i = 0; i < pts.size(); ++i)
        CHECK(std::abs(a.points[i].cond1_relative[0] - b.points[i].cond1_relative[0]) <= 1e-9);
}

TEST_CASE("residual errors") {
    auto m = vasicek();
    CHECK_THROWS_AS(gop_consistency_residuals(m, {{0.5, {m.domain.upper[0]}}}), std::invalid_argument);
    m.v_star.reset();
    CHECK_THROWS_AS(gop_consistency_residuals(m, {{0.5, {0.05}}}), std::invalid_argument);
}

TEST_CASE("builder and validation errors") {
    VasicekParams p;
    p.sigma_x = 0.0;
    CHECK_THROWS_AS(build_consistent_vasicek(p, CoefficientField::constant(0.0)), std::invalid_argument);
    p.sigma_x = NAN;
    CHECK_THROWS_AS(build_consistent_vasicek(p, CoefficientField::constant(0.0)), std::invalid_argument);

    auto m = vasicek();
    m.x0 = {10.0};
    CHECK_THROWS_AS(m.validate(), std::invalid_argument);
    m = vasicek();
    m.v_star = CoefficientField::exp_affine(0.0, {2.0});
    CHECK_THROWS_AS(m.validate(), std::invalid_argument);
    m = vasicek();
    m.theta = CoefficientField::constant_vector({0.1, 0.2});
    CHECK_THROWS_AS(m.validate(), std::invalid_argument);
}

TEST_CASE("builder is deterministic") {
    const auto a = vasicek(), b = vasicek();
    for (double x : {-0.1, 0.05, 0.2})
        for (double t : {0.0, 1.3}) {
            CHECK(a.r.scalar(t, x) == b.r.scalar(t, x));
            CHECK(a.v_star->scalar(t, x) == b.v_star->scalar(t, x));
        }
}

TEST_CASE("model JSON round trip") {
    VasicekParams p;
    const auto m = build_consistent_vasicek(p, CoefficientField::quadratic(0.01, {0.05}, 0.001));
    const auto back = model_from_json(json::parse(to_json(m).dump()));
    for (double x : {-0.1, 0.05, 0.2})
        for (double t : {0.0, 2.5}) {
            CHECK(back.f.scalar(t, x) == m.f.scalar(t, x));
            CHECK(back.g.scalar(t, x) == m.g.scalar(t, x));
            CHECK(back.r.scalar(t, x) == m.r.scalar(t, x));
            CHECK(back.phi.scalar(t, x) == m.phi.scalar(t, x));
            CHECK(back.v_star->scalar(t, x) == m.v_star->scalar(t, x));
        }
    CHECK(back.domain.lower == m.domain.lower);
    CHECK(back.horizon == m.horizon);

    const json builder = {{"builder", "consistent_vasicek"}, {"lambda", 2.0}, {"phi", 0.02}};
    const auto built = model_from_json(builder);
    CHECK(built.phi.scalar(0.0, 0.05) == 0.02);
    CHECK_THROWS(model_from_json(json{{"builder", "nope"}}));
}

TEST_CASE("callable fields serialize as tables") {
    auto m = vasicek();
    m.phi = CoefficientField::callable(
        Arity::scalar, 1, 1, [](double, std::span<const double> x, std::span<double> out) { out[0] = x[0] * x[0]; },
        "square");
    const auto j = to_json(m);
    CHECK(j["phi"]["name"] == "tabulated");
    const auto back = model_from_json(j);
    const double x = m.domain.lower[0];
    CHECK(back.phi.scalar(0.0, x) == doctest::Approx(x * x).epsilon(1e-12));
}

TEST_CASE("closed scalar forms evaluate exactly like the fields") {
    std::vector<CoefficientField> fields{
        CoefficientField::constant(0.3),
        CoefficientField::affine(0.1, {-2.0}, 0.5),
        CoefficientField::affine_vector({0.05}, {-1.0}),
        CoefficientField::quadratic(0.01, {0.05}, 0.001),
        CoefficientField::transform(CoefficientField::quadratic(0.01, {0.05}, 0.001), -2.0, 0.3),
        CoefficientField::constant_matrix(1, 1, {0.1})};
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (const auto& f : fields) {
        const auto form = f.scalar_form();
        REQUIRE(form.has_value());
        for (int i = 0; i < 50; ++i) {
            const double t = std::abs(u(gen)), x = u(gen);
            CHECK((*form)(t, x) == f.scalar(t, x));
        }
    }
    CHECK_FALSE(CoefficientField::exp_affine(0.0, {1.0}).scalar_form().has_value());
    CHECK_FALSE(CoefficientField::constant_vector({1.0, 2.0}).scalar_form().has_value());
}
