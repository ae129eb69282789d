#pragma once

// Risk-sensitive representative investor: market price of risk, optimal
// strategy, wealth simulation, the power objective and the endogenous
// funding-liquidity spread.

#include <functional>
#include <string>
#include <vector>

#include "rollover/model.hpp"
#include "rollover/sim.hpp"

namespace rollover {

/// m risky assets driven by the model's d Brownian motions.
struct AssetMarketSpec {
    std::size_t m = 1;
    std::size_t d = 1;
    CoefficientField mu;     // m-vector
    CoefficientField sigma;  // m x d
    std::vector<double> s0;  // initial prices

    /// Sizes, positive prices, finite fields and full rank of sigma on a lattice of D.
    void validate(const Domain& domain, double horizon) const;
};

struct RiskParams {
    double gamma = -1.0;
    /// n-vector; defaults to the zero field.
    CoefficientField xi = CoefficientField::constant_vector({0.0});

    /// gamma <= 0 (0 only as the growth-optimal limit), xi of size n and finite on D.
    void validate(const FactorModelSpec& model) const;
};

/// theta = sigma^+ (mu - r 1) by SVD; sigma is m x d row-major.
/// Throws std::domain_error when the smallest singular value is <= 1e-10.
std::vector<double> market_price_of_risk(std::span<const double> mu, std::span<const double> sigma, std::size_t m,
                                         std::size_t d, double r);

struct StrategyDecomposition {
    std::vector<double> pi;       // pi^gamma
    std::vector<double> gop;      // pi* / (1 - gamma)
    std::vector<double> hedge;    // gamma / (1 - gamma) (sigma sigma^T)^-1 sigma g^T xi
    std::vector<double> pi_star;  // (sigma sigma^T)^-1 sigma theta
};

/// pi^gamma = (sigma sigma^T)^-1 sigma (theta + gamma g^T xi) / (1 - gamma).
/// sigma is m x d, g is n x d, both row-major.
StrategyDecomposition rs_strategy(std::span<const double> theta, std::span<const double> sigma, std::size_t m,
                                  std::span<const double> g, std::size_t n, std::span<const double> xi, double gamma);

/// phi = -gamma r + theta.(theta + gamma g^T xi) - (2 - gamma) / (2 (1 - gamma)) |theta + gamma g^T xi|^2.
double funding_liquidity_spread(double r, std::span<const double> theta, std::span<const double> g_xi, double gamma);

/// Proportions pi(t, x) in the m assets.
class StrategyField {
public:
    using Function = std::function<void(double t, std::span<const double> x, std::span<double> out)>;

    static StrategyField constant(std::vector<double> pi);
    /// One-factor table [time][space][asset], bilinear, no extrapolation.
    static StrategyField grid(std::vector<double> t_nodes, std::vector<double> x_nodes, std::size_t m,
                              std::vector<double> values);
    static StrategyField function(std::size_t m, Function fn);
    /// The risk-sensitive optimum evaluated pointwise.
    static StrategyField rs_optimal(const FactorModelSpec& model, const AssetMarketSpec& market,
                                    const RiskParams& params);

    std::size_t m() const { return m_; }
    bool is_constant() const { return fn_ == nullptr; }
    void eval(double t, std::span<const double> x, std::span<double> out) const;

private:
    std::size_t m_ = 1;
    std::vector<double> constant_;
    Function fn_;
};

struct WealthPaths {
    std::size_t n_paths = 0;
    std::vector<double> time;
    std::vector<double> wealth;  // [path][time]
    std::vector<double> s0;        // savings account on the same paths
    std::vector<double> s0_tilde;  // roll-over account exp(int (r + phi))
    bool antithetic = false;
    double flagged_fraction = 0.0;

    std::size_t n_times() const { return time.size(); }
    std::vector<double> terminal() const;
};

/// d log V = (r + pi.(mu - r 1) - |sigma^T pi|^2 / 2) dt + pi^T sigma dW, V_0 = 1,
/// on the model's Brownian increments (same streams as `simulate`). Levels are
/// kept every `record_stride` steps, plus the last.
WealthPaths simulate_wealth(const FactorModelSpec& model, const AssetMarketSpec& market,
                            const StrategyField& strategy, const SimConfig& config);

/// E[V_T^gamma].
Estimate rs_objective(std::span<const double> terminal_wealth, double gamma, std::uint64_t seed = 0,
                      bool antithetic = false);

/// The model with phi replaced by the endogenous spread. Throws when the
/// market's theta departs from the model's by more than 1e-8 at sampled points.
FactorModelSpec rs_spread_pipeline(const FactorModelSpec& model_without_phi, const AssetMarketSpec& market,
                                   const RiskParams& params);

struct RsMartingaleReport {
    DriftTest drift;
    double gamma = 0.0;
    double phi_at_start = 0.0;
    double threshold = 3.0;
    double flagged_fraction = 0.0;
    bool pass = false;  // |z| <= threshold

    json to_json() const;
};

/// Simulates the optimal portfolio V, forms Y S0tilde with Y = V^(gamma - 1)
/// and runs the drift test on it.
RsMartingaleReport verify_rs_martingale(const FactorModelSpec& model, const AssetMarketSpec& market,
                                        const RiskParams& params, const SimConfig& config);

/// One-factor market with constant r, one asset with volatility sigma and
/// mu = r + sigma theta, factor X = W (f = 0, g = 1, x0 = 0) on +-8 sqrt(horizon),
/// v*(t,x) = exp((r + theta^2/2) t + theta x).
struct ConstantMarket {
    FactorModelSpec model;
    AssetMarketSpec market;
};
ConstantMarket build_constant_market(double r, double theta, double sigma, double horizon, CoefficientField phi);

json to_json(const AssetMarketSpec& market);
AssetMarketSpec market_from_json(const json& j);

}  // namespace rollover
