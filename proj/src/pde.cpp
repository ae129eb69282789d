#include "rollover/pde.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "rollover/sim.hpp"

namespace rollover {

namespace {

constexpr double kTimeSnap = 1e-9;

void require_one_factor(const FactorModelSpec& model) {
    if (model.n != 1) throw std::invalid_argument("PDE solver supports one-factor models only");
}

struct Coefficients {
    std::vector<double> lo, di, up;  // L u_j = lo u_{j-1} + di u_j + up u_{j+1}, interior rows
};

/// Tridiagonal operator on the interior unknowns 1..n-2, boundary values
/// eliminated through the boundary rule.
Coefficients assemble(const ParabolicProblem& p, const Grid1D& g, double t, BoundaryRule rule, double& cfl) {
    const std::size_t m = g.n_x - 2;
    const double dx = g.dx();
    Coefficients k{std::vector<double>(m), std::vector<double>(m), std::vector<double>(m)};
    for (std::size_t j = 1; j + 1 < g.n_x; ++j) {
        const double x = g.x(j);
        const double b = p.b(t, x), a = p.a(t, x), c = p.c(t, x);
        if (!std::isfinite(b) || !std::isfinite(a) || !std::isfinite(c))
            throw std::runtime_error("non-finite coefficient in problem '" + p.id + "'");
        if (a < 0.0) throw std::runtime_error("negative diffusion in problem '" + p.id + "'");
        const double diff = a / (dx * dx), adv = b / (2.0 * dx);
        k.lo[j - 1] = diff - adv;
        k.di[j - 1] = -2.0 * diff + c;
        k.up[j - 1] = diff + adv;
        cfl = std::max(cfl, 2.0 * diff + std::abs(c));
    }
    if (rule == BoundaryRule::linear_extrapolation) {
        // u_0 = 2 u_1 - u_2 and u_{n-1} = 2 u_{n-2} - u_{n-3}.
        if (m == 1) {
            // Three nodes: both rules collapse to u_0 = u_1 = u_2.
            k.di[0] += k.lo[0] + k.up[0];
            k.lo[0] = k.up[0] = 0.0;
        } else {
            k.di[0] += 2.0 * k.lo[0];
            k.up[0] -= k.lo[0];
            k.di[m - 1] += 2.0 * k.up[m - 1];
            k.lo[m - 1] -= k.up[m - 1];
        }
    }
    return k;
}

/// Thomas algorithm; `diag` and `rhs` are overwritten.
void thomas(std::span<const double> lower, std::vector<double>& diag, std::span<const double> upper,
            std::vector<double>& rhs, const std::string& id) {
    const std::size_t m = diag.size();
    for (std::size_t j = 1; j < m; ++j) {
        if (diag[j - 1] == 0.0 || !std::isfinite(diag[j - 1]))
            throw std::runtime_error("singular tridiagonal system in problem '" + id + "'");
        const double w = lower[j] / diag[j - 1];
        diag[j] -= w * upper[j - 1];
        rhs[j] -= w * rhs[j - 1];
    }
    if (diag[m - 1] == 0.0 || !std::isfinite(diag[m - 1]))
        throw std::runtime_error("singular tridiagonal system in problem '" + id + "'");
    rhs[m - 1] /= diag[m - 1];
    for (std::size_t j = m - 1; j-- > 0;) rhs[j] = (rhs[j] - upper[j] * rhs[j + 1]) / diag[j];
}

std::string scheme_name(const SolverOptions& o) {
    if (o.theta_weight == 0.5) return "crank-nicolson";
    if (o.theta_weight == 1.0) return "implicit";
    if (o.theta_weight == 0.0) return "explicit";
    return "theta=" + format_double(o.theta_weight);
}

}  // namespace

void Grid1D::validate() const {
    if (!(x_min < x_max) || !std::isfinite(x_min) || !std::isfinite(x_max))
        throw std::invalid_argument("grid needs x_min < x_max");
    if (n_x < 3) throw std::invalid_argument("grid needs at least 3 space nodes");
    if (n_t < 2) throw std::invalid_argument("grid needs at least 2 time levels");
    if (!(t_start < t_end)) throw std::invalid_argument("grid needs t_start < t_end");
}

std::size_t GridFunction::level_index(double t) const {
    const double pos = (t - grid.t_start) / grid.dt();
    const double k = std::round(pos);
    if (std::abs(pos - k) > kTimeSnap * std::max(1.0, static_cast<double>(grid.n_t)) || k < 0 ||
        k > static_cast<double>(grid.n_t - 1))
        throw std::out_of_range("time " + format_double(t) + " is not a level of the grid");
    return static_cast<std::size_t>(k);
}

double GridFunction::interpolate(double t, double x) const {
    const double span_t = grid.t_end - grid.t_start, span_x = grid.x_max - grid.x_min;
    if (t < grid.t_start - kTimeSnap * span_t || t > grid.t_end + kTimeSnap * span_t || x < grid.x_min - 1e-12 * span_x ||
        x > grid.x_max + 1e-12 * span_x)
        throw std::out_of_range("interpolation point outside the grid");
    auto locate = [](double pos, std::size_t n, double& w) {
        const double snapped = std::round(pos);
        if (std::abs(pos - snapped) < 1e-9) pos = snapped;
        pos = std::clamp(pos, 0.0, static_cast<double>(n - 1));
        std::size_t i = static_cast<std::size_t>(std::floor(pos));
        if (i >= n - 1) i = n - 2;
        w = pos - static_cast<double>(i);
        return i;
    };
    double wt, wx;
    const std::size_t i = locate((t - grid.t_start) / grid.dt(), grid.n_t, wt);
    const std::size_t j = locate((x - grid.x_min) / grid.dx(), grid.n_x, wx);
    auto row = [&](std::size_t ti) {
        const double a = at(ti, j), b = at(ti, j + 1);
        return wx == 0.0 ? a : (wx == 1.0 ? b : (1.0 - wx) * a + wx * b);
    };
    if (wt == 0.0) return row(i);
    if (wt == 1.0) return row(i + 1);
    return (1.0 - wt) * row(i) + wt * row(i + 1);
}

std::vector<double> GridFunction::level(std::size_t i) const {
    return std::vector<double>(values.begin() + static_cast<std::ptrdiff_t>(i * grid.n_x),
                               values.begin() + static_cast<std::ptrdiff_t>((i + 1) * grid.n_x));
}

double GridFunction::min() const { return *std::min_element(values.begin(), values.end()); }
double GridFunction::max() const { return *std::max_element(values.begin(), values.end()); }

json GridFunction::metadata() const {
    return {{"problem", problem_id},
            {"scheme", scheme},
            {"x_min", grid.x_min},
            {"x_max", grid.x_max},
            {"n_x", grid.n_x},
            {"t_start", grid.t_start},
            {"t_end", grid.t_end},
            {"n_t", grid.n_t},
            {"cfl", cfl},
            {"min", min()},
            {"max", max()}};
}

GridFunction solve_parabolic(const ParabolicProblem& problem, const Grid1D& grid, const SolverOptions& options) {
    grid.validate();
    if (!(options.theta_weight >= 0.0 && options.theta_weight <= 1.0))
        throw std::invalid_argument("scheme weight must lie in [0, 1]");
    const std::size_t nx = grid.n_x, m = nx - 2;
    const double th = options.theta_weight, dt = grid.dt();

    GridFunction u;
    u.grid = grid;
    u.problem_id = problem.id;
    u.scheme = scheme_name(options);
    u.values.assign(grid.n_t * nx, 0.0);
    const std::size_t last = grid.n_t - 1;
    for (std::size_t j = 0; j < nx; ++j) {
        const double v = problem.h(grid.x(j));
        if (!std::isfinite(v)) throw std::runtime_error("non-finite terminal value in problem '" + problem.id + "'");
        u.at(last, j) = v;
    }

    double cfl = 0.0;
    Coefficients later = assemble(problem, grid, grid.t(last), options.boundary, cfl);
    std::vector<double> rhs(m), diag(m), lower(m), upper(m);
    for (std::size_t i = last; i-- > 0;) {
        Coefficients now = assemble(problem, grid, grid.t(i), options.boundary, cfl);
        // Explicit half from level i+1.
        for (std::size_t k = 0; k < m; ++k) {
            const std::size_t j = k + 1;
            double lu = later.di[k] * u.at(i + 1, j);
            if (options.boundary == BoundaryRule::linear_extrapolation) {
                if (k > 0) lu += later.lo[k] * u.at(i + 1, j - 1);
                if (k + 1 < m) lu += later.up[k] * u.at(i + 1, j + 1);
            } else {
                lu += later.lo[k] * u.at(i + 1, j - 1) + later.up[k] * u.at(i + 1, j + 1);
            }
            rhs[k] = u.at(i + 1, j) + (1.0 - th) * dt * lu;
        }
        if (options.boundary == BoundaryRule::dirichlet_terminal) {
            // Known boundary values enter the implicit side as sources.
            rhs[0] += th * dt * now.lo[0] * u.at(last, 0);
            rhs[m - 1] += th * dt * now.up[m - 1] * u.at(last, nx - 1);
        }
        for (std::size_t k = 0; k < m; ++k) {
            diag[k] = 1.0 - th * dt * now.di[k];
            lower[k] = k > 0 ? -th * dt * now.lo[k] : 0.0;
            upper[k] = k + 1 < m ? -th * dt * now.up[k] : 0.0;
        }
        thomas(lower, diag, upper, rhs, problem.id);
        for (std::size_t k = 0; k < m; ++k) u.at(i, k + 1) = rhs[k];
        if (options.boundary == BoundaryRule::linear_extrapolation) {
            if (m == 1) {
                u.at(i, 0) = u.at(i, 2) = u.at(i, 1);
            } else {
                u.at(i, 0) = 2.0 * u.at(i, 1) - u.at(i, 2);
                u.at(i, nx - 1) = 2.0 * u.at(i, nx - 2) - u.at(i, nx - 3);
            }
        } else {
            u.at(i, 0) = u.at(last, 0);
            u.at(i, nx - 1) = u.at(last, nx - 1);
        }
        later = std::move(now);
    }
    u.cfl = cfl * dt;
    for (double v : u.values)
        if (!std::isfinite(v)) throw std::runtime_error("solution of problem '" + problem.id + "' is not finite");
    return u;
}

GridFunction grid_gradient(const GridFunction& u) {
    u.grid.validate();
    GridFunction d = u;
    d.problem_id = "d/dx " + u.problem_id;
    const std::size_t nx = u.grid.n_x;
    const double dx = u.grid.dx();
    for (std::size_t i = 0; i < u.grid.n_t; ++i) {
        for (std::size_t j = 1; j + 1 < nx; ++j) d.at(i, j) = (u.at(i, j + 1) - u.at(i, j - 1)) / (2.0 * dx);
        d.at(i, 0) = (-3.0 * u.at(i, 0) + 4.0 * u.at(i, 1) - u.at(i, 2)) / (2.0 * dx);
        d.at(i, nx - 1) = (3.0 * u.at(i, nx - 1) - 4.0 * u.at(i, nx - 2) + u.at(i, nx - 3)) / (2.0 * dx);
    }
    return d;
}

Grid1D model_grid(const FactorModelSpec& model, double t_start, double t_end, std::size_t n_x, std::size_t n_t) {
    require_one_factor(model);
    Grid1D g{model.domain.lower[0], model.domain.upper[0], n_x, t_start, t_end, n_t};
    g.validate();
    return g;
}

ParabolicProblem zcb_problem(const FactorModelSpec& model, double T) {
    require_one_factor(model);
    if (!model.v_star) throw std::invalid_argument("ZCB problem needs v_star");
    ParabolicProblem p;
    p.id = "zcb T=" + format_double(T);
    p.b = [&model](double t, double x) { return model.f.scalar(t, x); };
    p.a = [&model](double t, double x) {
        const double g = model.g.scalar(t, x);
        return 0.5 * g * g;
    };
    p.c = [](double, double) { return 0.0; };
    p.h = [&model, T](double x) { return 1.0 / model.v(T, std::span<const double>(&x, 1)); };
    return p;
}

namespace {

/// g theta for a one-factor model with d Brownian drivers, and |g|^2.
void diffusion_terms(const FactorModelSpec& model, double t, double x, double& g_theta, double& g2) {
    double gbuf[16], tbuf[16];
    std::vector<double> gv, tv;
    std::span<double> gs(gbuf, model.d), ts(tbuf, model.d);
    if (model.d > 16) {
        gv.resize(model.d);
        tv.resize(model.d);
        gs = gv;
        ts = tv;
    }
    const std::span<const double> xs(&x, 1);
    model.g.eval(t, xs, gs);
    model.theta.eval(t, xs, ts);
    g_theta = 0.0;
    g2 = 0.0;
    for (std::size_t k = 0; k < model.d; ++k) {
        g_theta += gs[k] * ts[k];
        g2 += gs[k] * gs[k];
    }
}

}  // namespace

ParabolicProblem spot_spread_problem(const FactorModelSpec& model, double T) {
    require_one_factor(model);
    ParabolicProblem p;
    p.id = "spot spread T=" + format_double(T);
    p.b = [&model](double t, double x) {
        double gt, g2;
        diffusion_terms(model, t, x, gt, g2);
        return model.f.scalar(t, x) - gt;
    };
    p.a = [&model](double t, double x) {
        double gt, g2;
        diffusion_terms(model, t, x, gt, g2);
        return 0.5 * g2;
    };
    p.c = [&model](double t, double x) { return model.phi.scalar(t, x); };
    p.h = [](double) { return 1.0; };
    return p;
}

ParabolicProblem forward_spread_problem(const FactorModelSpec& model, double T, double delta,
                                        const GridFunction& p_hat, const GridFunction& s_long) {
    require_one_factor(model);
    if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");
    if (p_hat.min() <= 0.0) throw std::invalid_argument("p_hat must be strictly positive");
    const auto& a = p_hat.grid;
    const auto& b = s_long.grid;
    if (a.n_x != b.n_x || a.x_min != b.x_min || a.x_max != b.x_max)
        throw std::invalid_argument("p_hat and s_long must share the spatial grid");
    if (std::abs(a.t_end - T) > 1e-12) throw std::invalid_argument("p_hat must end at T");
    const std::size_t level = s_long.level_index(T);

    auto grad = std::make_shared<GridFunction>(grid_gradient(p_hat));
    auto p = std::make_shared<GridFunction>(p_hat);
    auto terminal = std::make_shared<std::vector<double>>(s_long.level(level));
    const double x_min = a.x_min, dx = a.dx();
    const std::size_t nx = a.n_x;

    ParabolicProblem prob;
    prob.id = "forward spread T=" + format_double(T) + " delta=" + format_double(delta);
    prob.b = [&model, grad, p](double t, double x) {
        double gt, g2;
        diffusion_terms(model, t, x, gt, g2);
        return model.f.scalar(t, x) + g2 * grad->interpolate(t, x) / p->interpolate(t, x);
    };
    prob.a = [&model](double t, double x) {
        double gt, g2;
        diffusion_terms(model, t, x, gt, g2);
        return 0.5 * g2;
    };
    prob.c = [](double, double) { return 0.0; };
    prob.h = [terminal, x_min, dx, nx](double x) {
        const double pos = (x - x_min) / dx;
        const std::size_t j = static_cast<std::size_t>(std::clamp(std::round(pos), 0.0, static_cast<double>(nx - 1)));
        if (std::abs(pos - static_cast<double>(j)) > 1e-6)
            throw std::invalid_argument("forward terminal requested off the shared grid");
        return (*terminal)[j];
    };
    return prob;
}

ForwardSolution solve_forward_spread(const FactorModelSpec& model, double t_start, double T, double delta,
                                     std::size_t n_x, std::size_t n_t, const SolverOptions& options) {
    const Grid1D short_grid = model_grid(model, t_start, T, n_x, n_t);
    const std::size_t long_steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(delta / short_grid.dt())));
    const Grid1D long_grid = model_grid(model, T, T + delta, n_x, long_steps + 1);
    ForwardSolution out;
    out.p_hat = solve_parabolic(zcb_problem(model, T), short_grid, options);
    out.s_long = solve_parabolic(spot_spread_problem(model, T + delta), long_grid, options);
    out.s_fwd = solve_parabolic(forward_spread_problem(model, T, delta, out.p_hat, out.s_long), short_grid, options);
    return out;
}

void write_csv(const GridFunction& u, std::ostream& out) {
    out << "# problem=" << u.problem_id << " scheme=" << u.scheme << " x_min=" << format_double(u.grid.x_min)
        << " x_max=" << format_double(u.grid.x_max) << " n_x=" << u.grid.n_x
        << " t_start=" << format_double(u.grid.t_start) << " t_end=" << format_double(u.grid.t_end)
        << " n_t=" << u.grid.n_t << '\n';
    out << "t";
    for (std::size_t j = 0; j < u.grid.n_x; ++j) out << ',' << format_double(u.grid.x(j));
    out << '\n';
    for (std::size_t i = 0; i < u.grid.n_t; ++i) {
        out << format_double(u.grid.t(i));
        for (std::size_t j = 0; j < u.grid.n_x; ++j) out << ',' << format_double(u.at(i, j));
        out << '\n';
    }
}

}  // namespace rollover
