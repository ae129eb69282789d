#pragma once

// Euler-Maruyama simulation of the joint factor / GOP / account system and
// the Feynman-Kac estimators of fairly priced quantities.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rollover/model.hpp"

namespace rollover {

struct SimConfig {
    double t0 = 0.0;
    double T = 1.0;
    double dt = 1e-3;
    std::size_t n_paths = 100000;
    std::uint64_t seed = 42;
    bool antithetic = false;
    /// 0 selects std::thread::hardware_concurrency().
    unsigned workers = 0;
    /// Store every k-th time level in a PathBundle (the last level is always kept).
    std::size_t record_stride = 1;

    /// Throws std::invalid_argument unless 0 <= t0 < T <= horizon, dt > 0,
    /// dt < T - t0, n_paths >= 1 (even when antithetic).
    void validate(double horizon) const;
};

/// Jointly simulated trajectories, path-major.
struct PathBundle {
    std::size_t n = 1;
    std::size_t n_paths = 0;
    bool antithetic = false;
    std::vector<double> time;
    std::vector<double> x;         // [path][time][factor]
    std::vector<double> v_star;    // [path][time]
    std::vector<double> s0;        // savings account exp(int r)
    std::vector<double> s0_tilde;  // roll-over-adjusted account exp(int (r + phi))
    std::vector<double> y;         // deflator S0 / V*
    std::size_t flagged_steps = 0;
    double flagged_fraction = 0.0;
    std::size_t nonfinite = 0;
    bool reliable = true;

    std::size_t n_times() const { return time.size(); }
    std::size_t at(std::size_t path, std::size_t k) const { return path * time.size() + k; }
    double factor(std::size_t path, std::size_t k, std::size_t i = 0) const { return x[at(path, k) * n + i]; }
};

struct Estimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t n_paths = 0;
    std::uint64_t seed = 0;
    double flagged_fraction = 0.0;
    std::size_t nonfinite = 0;
    bool reliable = true;

    /// {mean, stderr, n_paths, seed}
    json to_json() const;
};

/// Euler-Maruyama for X, log-Euler for V*, left-point sums for S0 and the
/// roll-over account. Paths leaving D are reflected and flagged.
PathBundle simulate(const FactorModelSpec& model, const SimConfig& config, std::span<const double> x_start,
                    double v_start);

/// S(t,T) = v*(t,x) E[exp(int_t^T (r + phi)) / v*(T, X_T)].
/// The window [t, T] comes from the arguments; `config` supplies dt, paths, seed.
Estimate mc_spot_spread(const FactorModelSpec& model, double T, double t, std::span<const double> x,
                        const SimConfig& config);

/// p^T(t,x) = E[1 / v*(T, X_T) | X_t = x].
Estimate mc_benchmarked_zcb(const FactorModelSpec& model, double T, double t, std::span<const double> x,
                            const SimConfig& config);

struct ForwardSpreadEstimate {
    Estimate spread;     // S_t(T, T+delta), ratio estimator with delta-method error
    Estimate numerator;  // E[exp(int_T^{T+delta}(r+phi)) / v*(T+delta, X_{T+delta})]
    Estimate p_hat;      // E[1 / v*(T, X_T)]
};

/// Forward spread from a single simulation over [t, T+delta], using
/// S_t(T,T+delta) p^T(t,x) = E[s^{T+delta}(T, X_T) / v*(T, X_T)] and the tower property.
ForwardSpreadEstimate mc_forward_spread(const FactorModelSpec& model, double T, double delta, double t,
                                        std::span<const double> x, const SimConfig& config);

struct TerminalState {
    std::span<const double> x;
    double v_star = 0.0;
    double s0 = 0.0;        // S0_T / S0_t
    double s0_tilde = 0.0;  // roll-over account over [t, T]
};
using Payoff = std::function<double(const TerminalState&)>;

/// pi_t(H) = v*(t,x) E[H / V*_T], V* started at v*(t,x).
Estimate real_world_price(const FactorModelSpec& model, const Payoff& payoff, double t, std::span<const double> x,
                          double T, const SimConfig& config);

/// A per-path process sampled on a common time grid.
struct SeriesMatrix {
    std::size_t n_paths = 0;
    std::size_t n_times = 0;
    bool antithetic = false;
    std::vector<double> values;  // [path][time]
};

/// Named series derived from a bundle: "Y", "S0/V*", "S0tilde/V*", "V*", "S0", "S0tilde".
SeriesMatrix bundle_series(const PathBundle& bundle, const std::string& name);

struct DriftTest {
    double mean_increment = 0.0;
    double std_error = 0.0;
    double z = 0.0;
    std::size_t n_paths = 0;
    std::size_t n_increments = 0;
};

/// Pooled per-step increment mean with a path-clustered standard error.
DriftTest empirical_drift_test(const SeriesMatrix& series);
DriftTest empirical_drift_test(const PathBundle& bundle, const std::string& series);

/// One row per (path, time): t, X_1..X_n, V_star, S0, S0_tilde, Y.
void write_csv(const PathBundle& bundle, std::ostream& out);
/// Columnar little-endian dump: magic "RLPB", version, n, n_paths, n_times,
/// then time and each column as contiguous doubles.
void write_binary(const PathBundle& bundle, std::ostream& out);
PathBundle read_binary(std::istream& in);

/// Shortest round-trip decimal form.
std::string format_double(double v);

}  // namespace rollover
