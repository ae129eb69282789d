#pragma once

// Backward theta-scheme solver for one-dimensional linear pricing PDEs
//   du/dt + b du/dx + a d2u/dx2 + c u = 0,  u(t_end, x) = h(x).

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "rollover/model.hpp"

namespace rollover {

struct Grid1D {
    double x_min = 0.0;
    double x_max = 1.0;
    std::size_t n_x = 201;
    double t_start = 0.0;
    double t_end = 1.0;
    std::size_t n_t = 201;

    double dx() const { return (x_max - x_min) / static_cast<double>(n_x - 1); }
    double dt() const { return (t_end - t_start) / static_cast<double>(n_t - 1); }
    double x(std::size_t j) const { return j + 1 == n_x ? x_max : x_min + static_cast<double>(j) * dx(); }
    double t(std::size_t i) const { return i + 1 == n_t ? t_end : t_start + static_cast<double>(i) * dt(); }
    /// Throws std::invalid_argument unless x_min < x_max, n_x >= 3, n_t >= 2, t_start < t_end.
    void validate() const;
};

struct ParabolicProblem {
    using Coefficient = std::function<double(double t, double x)>;
    std::string id;
    Coefficient b;
    Coefficient a;
    Coefficient c;
    std::function<double(double x)> h;
};

enum class BoundaryRule {
    /// u_xx = 0 at both ends (linear extrapolation from the interior).
    linear_extrapolation,
    /// Boundary values held at their terminal values.
    dirichlet_terminal,
};

struct SolverOptions {
    /// 0 explicit, 0.5 Crank-Nicolson, 1 implicit.
    double theta_weight = 0.5;
    BoundaryRule boundary = BoundaryRule::linear_extrapolation;
};

/// Space-time table u(t_i, x_j), all time levels kept.
struct GridFunction {
    Grid1D grid;
    std::vector<double> values;  // [time][space]
    std::string problem_id;
    std::string scheme;
    /// Largest explicit-part ratio dt (2a/dx^2 + |c|) seen; > 1 hints at instability when theta < 1/2.
    double cfl = 0.0;

    double& at(std::size_t i, std::size_t j) { return values[i * grid.n_x + j]; }
    double at(std::size_t i, std::size_t j) const { return values[i * grid.n_x + j]; }
    /// Index of the time level at t (within 1e-9 of a node); throws otherwise.
    std::size_t level_index(double t) const;
    /// Bilinear in (t, x); exact at nodes. Throws outside the grid.
    double interpolate(double t, double x) const;
    std::vector<double> level(std::size_t i) const;
    double min() const;
    double max() const;

    json metadata() const;
};

GridFunction solve_parabolic(const ParabolicProblem& problem, const Grid1D& grid, const SolverOptions& options = {});

/// d/dx by central differences inside, second-order one-sided at the edges.
GridFunction grid_gradient(const GridFunction& u);

/// Spatial grid covering the model domain, time grid [t_start, t_end].
Grid1D model_grid(const FactorModelSpec& model, double t_start, double t_end, std::size_t n_x, std::size_t n_t);

/// Benchmarked ZCB p^T: b = f, a = g^2/2, c = 0, h = 1 / v*(T, x).
ParabolicProblem zcb_problem(const FactorModelSpec& model, double T);
/// Spot spread s^T: b = f - g theta, a = g^2/2, c = phi, h = 1.
ParabolicProblem spot_spread_problem(const FactorModelSpec& model, double T);
/// Forward spread s^{T,delta}: b = f + g^2 p_x / p, a = g^2/2, c = 0, h = s_long(T, .).
/// p_hat must be positive; both tables must share the spatial grid and cover T.
ParabolicProblem forward_spread_problem(const FactorModelSpec& model, double T, double delta,
                                        const GridFunction& p_hat, const GridFunction& s_long);

/// The three solves of a forward spread on aligned grids.
struct ForwardSolution {
    GridFunction p_hat;   // maturity T on [t_start, T]
    GridFunction s_long;  // spot spread to T + delta on [T, T + delta]
    GridFunction s_fwd;   // forward spread on [t_start, T]
};
/// `n_t` is the level count on [t_start, T]; the long solve reuses its step.
ForwardSolution solve_forward_spread(const FactorModelSpec& model, double t_start, double T, double delta,
                                     std::size_t n_x, std::size_t n_t, const SolverOptions& options = {});

/// Header line "# key=value ..." then one row per time level: t, u(x_0), ..., u(x_{n-1}).
void write_csv(const GridFunction& u, std::ostream& out);

}  // namespace rollover
