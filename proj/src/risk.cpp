#include "rollover/risk.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include <Eigen/Dense>

#include "rollover/detail/engine.hpp"

namespace rollover {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr double kRankFloor = 1e-10;
constexpr double kThetaTolerance = 1e-8;

void require_finite(std::span<const double> v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + " must be finite");
}

Eigen::Map<const RowMatrix> as_matrix(std::span<const double> a, std::size_t rows, std::size_t cols) {
    if (a.size() != rows * cols) throw std::invalid_argument("matrix has the wrong size");
    return {a.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

double smallest_singular_value(const RowMatrix& s) {
    Eigen::JacobiSVD<RowMatrix> svd(s);
    const auto& sv = svd.singularValues();
    return sv.size() == 0 ? 0.0 : sv.minCoeff();
}

/// Time/space probe points spanning [0, horizon] x D.
std::vector<std::pair<double, std::vector<double>>> sample_points(const Domain& D, double horizon) {
    const std::size_t n = D.dim();
    const std::size_t per = n == 1 ? 11 : (n == 2 ? 5 : 3);
    std::size_t total = 1;
    for (std::size_t i = 0; i < n; ++i) total *= per;
    std::vector<std::pair<double, std::vector<double>>> out;
    for (double t : {0.0, 0.5 * horizon, horizon}) {
        for (std::size_t idx = 0; idx < total; ++idx) {
            std::vector<double> x(n);
            std::size_t rest = idx;
            for (std::size_t i = 0; i < n; ++i) {
                const double u = static_cast<double>(rest % per) / static_cast<double>(per - 1);
                rest /= per;
                x[i] = D.lower[i] + u * D.width(i);
            }
            out.emplace_back(t, std::move(x));
        }
    }
    return out;
}

/// g^T xi for g n x d row-major.
std::vector<double> g_transpose_xi(std::span<const double> g, std::size_t n, std::span<const double> xi) {
    if (xi.size() != n || g.size() % std::max<std::size_t>(n, 1) != 0)
        throw std::invalid_argument("g and xi sizes disagree");
    const std::size_t d = n == 0 ? 0 : g.size() / n;
    std::vector<double> out(d, 0.0);
    for (std::size_t k = 0; k < d; ++k)
        for (std::size_t i = 0; i < n; ++i) out[k] += g[i * d + k] * xi[i];
    return out;
}

/// Pointwise inputs of the investor problem at (t, x).
struct LocalMarket {
    double r = 0.0;
    std::vector<double> mu, sigma, theta_model, g, xi;
};

LocalMarket local_market(const FactorModelSpec& model, const AssetMarketSpec& market, const RiskParams& params,
                         double t, std::span<const double> x) {
    LocalMarket l;
    l.r = model.r.scalar(t, x);
    l.mu = market.mu.value(t, x);
    l.sigma = market.sigma.value(t, x);
    l.theta_model = model.theta.value(t, x);
    l.g = model.g.value(t, x);
    l.xi = params.xi.value(t, x);
    return l;
}

std::vector<double> optimal_proportions(const FactorModelSpec& model, const AssetMarketSpec& market,
                                        const RiskParams& params, double t, std::span<const double> x) {
    const LocalMarket l = local_market(model, market, params, t, x);
    const auto theta = market_price_of_risk(l.mu, l.sigma, market.m, market.d, l.r);
    return rs_strategy(theta, l.sigma, market.m, l.g, model.n, l.xi, params.gamma).pi;
}

double endogenous_spread(const FactorModelSpec& model, const RiskParams& params, double t,
                         std::span<const double> x) {
    const auto g = model.g.value(t, x);
    const auto xi = params.xi.value(t, x);
    const auto theta = model.theta.value(t, x);
    return funding_liquidity_spread(model.r.scalar(t, x), theta, g_transpose_xi(g, model.n, xi), params.gamma);
}

}  // namespace

void AssetMarketSpec::validate(const Domain& domain, double horizon) const {
    if (m < 1 || d < 1) throw std::invalid_argument("market needs m >= 1 and d >= 1");
    if (m > d) throw std::invalid_argument("sigma cannot have full row rank with more assets than Brownian motions");
    if (mu.size() != m) throw std::invalid_argument("mu must be an m-vector");
    if (sigma.size() != m * d) throw std::invalid_argument("sigma must be m x d");
    if (s0.size() != m) throw std::invalid_argument("s0 must be an m-vector");
    for (double p : s0)
        if (!(p > 0.0) || !std::isfinite(p)) throw std::invalid_argument("initial prices must be positive");
    for (const auto& [t, x] : sample_points(domain, horizon)) {
        const auto mv = mu.value(t, x);
        const auto sv = sigma.value(t, x);
        require_finite(mv, "mu");
        require_finite(sv, "sigma");
        if (!(smallest_singular_value(as_matrix(sv, m, d)) > kRankFloor))
            throw std::invalid_argument("sigma is rank deficient at a sampled point");
    }
}

void RiskParams::validate(const FactorModelSpec& model) const {
    if (!std::isfinite(gamma) || gamma > 0.0) throw std::invalid_argument("gamma must be negative (or 0 as a limit)");
    if (xi.size() != model.n) throw std::invalid_argument("xi must be an n-vector");
    for (const auto& [t, x] : sample_points(model.domain, model.horizon)) require_finite(xi.value(t, x), "xi");
}

std::vector<double> market_price_of_risk(std::span<const double> mu, std::span<const double> sigma, std::size_t m,
                                         std::size_t d, double r) {
    if (mu.size() != m) throw std::invalid_argument("mu must be an m-vector");
    require_finite(mu, "mu");
    require_finite(sigma, "sigma");
    if (!std::isfinite(r)) throw std::invalid_argument("r must be finite");
    const RowMatrix s = as_matrix(sigma, m, d);
    Eigen::JacobiSVD<RowMatrix> svd(s, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0 || !(sv.minCoeff() > kRankFloor))
        throw std::domain_error("sigma is rank deficient (smallest singular value <= 1e-10)");
    Eigen::VectorXd excess(static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i) excess[static_cast<Eigen::Index>(i)] = mu[i] - r;
    const Eigen::VectorXd theta =
        svd.matrixV() * (svd.matrixU().transpose() * excess).cwiseQuotient(sv);
    std::vector<double> out(theta.data(), theta.data() + theta.size());
    require_finite(out, "theta");
    return out;
}

StrategyDecomposition rs_strategy(std::span<const double> theta, std::span<const double> sigma, std::size_t m,
                                  std::span<const double> g, std::size_t n, std::span<const double> xi, double gamma) {
    if (!std::isfinite(gamma) || gamma > 0.0) throw std::invalid_argument("gamma must be negative (or 0 as a limit)");
    const std::size_t d = theta.size();
    require_finite(theta, "theta");
    require_finite(xi, "xi");
    const RowMatrix s = as_matrix(sigma, m, d);
    const auto g_xi = g_transpose_xi(g, n, xi);
    if (g_xi.size() != d) throw std::invalid_argument("g must be n x d");

    const RowMatrix ss = s * s.transpose();
    Eigen::FullPivLU<RowMatrix> lu(ss);
    if (!lu.isInvertible() || !(smallest_singular_value(s) > kRankFloor))
        throw std::domain_error("sigma sigma^T is singular");

    Eigen::VectorXd th(static_cast<Eigen::Index>(d)), h(static_cast<Eigen::Index>(d));
    for (std::size_t k = 0; k < d; ++k) {
        th[static_cast<Eigen::Index>(k)] = theta[k];
        h[static_cast<Eigen::Index>(k)] = g_xi[k];
    }
    const double scale = 1.0 / (1.0 - gamma);
    const Eigen::VectorXd pi = lu.solve(s * (th + gamma * h)) * scale;
    const Eigen::VectorXd pi_star = lu.solve(s * th);
    const Eigen::VectorXd hedge = lu.solve(s * h) * (gamma * scale);

    auto to_vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    StrategyDecomposition out;
    out.pi = to_vec(pi);
    out.pi_star = to_vec(pi_star);
    out.gop = to_vec(pi_star * scale);
    out.hedge = to_vec(hedge);
    return out;
}

double funding_liquidity_spread(double r, std::span<const double> theta, std::span<const double> g_xi, double gamma) {
    if (!std::isfinite(r) || !std::isfinite(gamma)) throw std::invalid_argument("r and gamma must be finite");
    if (gamma > 0.0) throw std::invalid_argument("gamma must be negative (or 0 as a limit)");
    if (theta.size() != g_xi.size()) throw std::invalid_argument("theta and g^T xi must have the same size");
    require_finite(theta, "theta");
    require_finite(g_xi, "g^T xi");
    const double c = (2.0 - gamma) / (2.0 * (1.0 - gamma));
    // theta.v - c |v|^2 accumulated as sum v_k (theta_k - c v_k)
    double acc = 0.0;
    for (std::size_t k = 0; k < theta.size(); ++k) {
        const double v = theta[k] + gamma * g_xi[k];
        acc += v * (theta[k] - c * v);
    }
    return -gamma * r + acc;
}

StrategyField StrategyField::constant(std::vector<double> pi) {
    if (pi.empty()) throw std::invalid_argument("strategy needs at least one asset");
    require_finite(pi, "strategy");
    StrategyField s;
    s.m_ = pi.size();
    s.constant_ = std::move(pi);
    return s;
}

StrategyField StrategyField::grid(std::vector<double> t_nodes, std::vector<double> x_nodes, std::size_t m,
                                  std::vector<double> values) {
    if (t_nodes.size() < 2 || x_nodes.size() < 2) throw std::invalid_argument("strategy grid needs two nodes per axis");
    if (!std::is_sorted(t_nodes.begin(), t_nodes.end()) || !std::is_sorted(x_nodes.begin(), x_nodes.end()))
        throw std::invalid_argument("strategy grid nodes must be increasing");
    if (m < 1 || values.size() != t_nodes.size() * x_nodes.size() * m)
        throw std::invalid_argument("strategy grid values have the wrong size");
    require_finite(values, "strategy");
    auto tn = std::make_shared<const std::vector<double>>(std::move(t_nodes));
    auto xn = std::make_shared<const std::vector<double>>(std::move(x_nodes));
    auto vals = std::make_shared<const std::vector<double>>(std::move(values));
    return function(m, [tn, xn, vals, m](double t, std::span<const double> x, std::span<double> out) {
        if (x.size() != 1) throw std::invalid_argument("grid strategies are one-factor");
        auto locate = [](const std::vector<double>& nodes, double v, const char* axis) {
            constexpr double slack = 1e-12;
            if (v < nodes.front() - slack || v > nodes.back() + slack)
                throw std::out_of_range(std::string("strategy grid extrapolation in ") + axis);
            v = std::clamp(v, nodes.front(), nodes.back());
            auto it = std::upper_bound(nodes.begin(), nodes.end(), v);
            std::size_t i = static_cast<std::size_t>(it - nodes.begin());
            i = std::clamp<std::size_t>(i, 1, nodes.size() - 1) - 1;
            const double w = (v - nodes[i]) / (nodes[i + 1] - nodes[i]);
            return std::pair{i, w};
        };
        const auto [i, wt] = locate(*tn, t, "t");
        const auto [j, wx] = locate(*xn, x[0], "x");
        const std::size_t nx = xn->size();
        auto at = [&](std::size_t a, std::size_t b, std::size_t k) { return (*vals)[(a * nx + b) * m + k]; };
        for (std::size_t k = 0; k < m; ++k) {
            const double lo = (1.0 - wx) * at(i, j, k) + wx * at(i, j + 1, k);
            const double hi = (1.0 - wx) * at(i + 1, j, k) + wx * at(i + 1, j + 1, k);
            out[k] = (1.0 - wt) * lo + wt * hi;
        }
    });
}

StrategyField StrategyField::function(std::size_t m, Function fn) {
    if (m < 1 || !fn) throw std::invalid_argument("strategy function needs m >= 1 and a callable");
    StrategyField s;
    s.m_ = m;
    s.fn_ = std::move(fn);
    return s;
}

StrategyField StrategyField::rs_optimal(const FactorModelSpec& model, const AssetMarketSpec& market,
                                        const RiskParams& params) {
    const bool constant = model.r.is_constant() && model.g.is_constant() && market.mu.is_constant() &&
                          market.sigma.is_constant() && params.xi.is_constant();
    if (constant) return StrategyField::constant(optimal_proportions(model, market, params, 0.0, model.x0));
    auto ctx = std::make_shared<const std::tuple<FactorModelSpec, AssetMarketSpec, RiskParams>>(model, market, params);
    return function(market.m, [ctx](double t, std::span<const double> x, std::span<double> out) {
        const auto& [mo, ma, pa] = *ctx;
        const auto pi = optimal_proportions(mo, ma, pa, t, x);
        std::copy(pi.begin(), pi.end(), out.begin());
    });
}

void StrategyField::eval(double t, std::span<const double> x, std::span<double> out) const {
    if (fn_)
        fn_(t, x, out);
    else
        std::copy(constant_.begin(), constant_.end(), out.begin());
}

std::vector<double> WealthPaths::terminal() const {
    const std::size_t nt = time.size();
    std::vector<double> out(n_paths);
    for (std::size_t p = 0; p < n_paths; ++p) out[p] = wealth[p * nt + nt - 1];
    return out;
}

WealthPaths simulate_wealth(const FactorModelSpec& model, const AssetMarketSpec& market,
                            const StrategyField& strategy, const SimConfig& config) {
    config.validate(model.horizon);
    if (market.d != model.d) throw std::invalid_argument("market and model disagree on the Brownian dimension");
    if (strategy.m() != market.m) throw std::invalid_argument("strategy and market disagree on the asset count");
    if (market.mu.size() != market.m || market.sigma.size() != market.m * market.d)
        throw std::invalid_argument("market fields have the wrong size");

    const detail::Lattice lat = detail::make_lattice(config.t0, config.T, config.dt);
    std::vector<std::size_t> recorded;
    for (std::size_t k = 0; k <= lat.steps; k += config.record_stride) recorded.push_back(k);
    if (recorded.back() != lat.steps) recorded.push_back(lat.steps);

    WealthPaths w;
    w.n_paths = config.n_paths;
    w.antithetic = config.antithetic;
    for (auto k : recorded) w.time.push_back(lat.time(k));
    const std::size_t nt = w.time.size();
    w.wealth.resize(config.n_paths * nt);
    w.s0.resize(config.n_paths * nt);
    w.s0_tilde.resize(config.n_paths * nt);

    const std::size_t m = market.m, d = model.d, n = model.n;
    std::vector<std::uint32_t> flagged(config.n_paths, 0);
    const double sqrt_h = std::sqrt(lat.h);

    detail::parallel_for(config.n_paths, config.workers, [&](std::size_t begin, std::size_t end) {
        const detail::ModelFields mf(model);
        const detail::FastField mu_field(market.mu), sigma_field(market.sigma);
        std::vector<double> x(n), f(n), g(n * d), dW(d), mu(m), sigma(m * d), pi(m), vol(d);
        for (std::size_t p = begin; p < end; ++p) {
            auto rng = detail::path_stream(config.seed, p, config.antithetic);
            std::copy(model.x0.begin(), model.x0.end(), x.begin());
            double log_v = 0.0, log_s0 = 0.0, log_st = 0.0;
            std::size_t next = 0;
            for (std::size_t k = 0; k <= lat.steps; ++k) {
                if (next < nt && recorded[next] == k) {
                    const std::size_t i = p * nt + next++;
                    w.wealth[i] = std::exp(log_v);
                    w.s0[i] = std::exp(log_s0);
                    w.s0_tilde[i] = std::exp(log_st);
                }
                if (k == lat.steps) break;
                const double t = lat.time(k);
                mf.f.eval(t, x, f);
                mf.g.eval(t, x, g);
                const double r = mf.r.scalar(t, x);
                const double phi = mf.phi.scalar(t, x);
                mu_field.eval(t, x, mu);
                sigma_field.eval(t, x, sigma);
                strategy.eval(t, x, pi);
                detail::draw(rng, dW, sqrt_h);
                double excess = 0.0;
                for (std::size_t a = 0; a < m; ++a) excess += pi[a] * (mu[a] - r);
                double vol2 = 0.0, vol_dw = 0.0;
                for (std::size_t j = 0; j < d; ++j) {
                    double v = 0.0;
                    for (std::size_t a = 0; a < m; ++a) v += pi[a] * sigma[a * d + j];
                    vol[j] = v;
                    vol2 += v * v;
                    vol_dw += v * dW[j];
                }
                log_v += (r + excess - 0.5 * vol2) * lat.h + vol_dw;
                log_s0 += r * lat.h;
                log_st += (r + phi) * lat.h;
                if (detail::advance(model.domain, x, f, g, dW, lat.h)) ++flagged[p];
            }
        }
    });

    std::size_t total = 0;
    for (auto v : flagged) total += v;
    w.flagged_fraction =
        static_cast<double>(total) / (static_cast<double>(config.n_paths) * static_cast<double>(lat.steps));
    return w;
}

Estimate rs_objective(std::span<const double> terminal_wealth, double gamma, std::uint64_t seed, bool antithetic) {
    if (!std::isfinite(gamma) || gamma > 0.0) throw std::invalid_argument("gamma must be negative (or 0 as a limit)");
    if (terminal_wealth.empty()) throw std::invalid_argument("no terminal wealth values");
    std::vector<double> values(terminal_wealth.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double v = terminal_wealth[i];
        if (!(v > 0.0) || !std::isfinite(v)) throw std::domain_error("terminal wealth must be positive");
        values[i] = std::pow(v, gamma);
    }
    return detail::summarize(values, seed, antithetic);
}

FactorModelSpec rs_spread_pipeline(const FactorModelSpec& model_without_phi, const AssetMarketSpec& market,
                                   const RiskParams& params) {
    const FactorModelSpec& base = model_without_phi;
    if (market.d != base.d) throw std::invalid_argument("market and model disagree on the Brownian dimension");
    market.validate(base.domain, base.horizon);
    params.validate(base);

    double worst = 0.0;
    for (const auto& [t, x] : sample_points(base.domain, base.horizon)) {
        const auto theta = market_price_of_risk(market.mu.value(t, x), market.sigma.value(t, x), market.m, market.d,
                                                base.r.scalar(t, x));
        const auto model_theta = base.theta.value(t, x);
        for (std::size_t k = 0; k < theta.size(); ++k) worst = std::max(worst, std::abs(theta[k] - model_theta[k]));
    }
    if (!(worst <= kThetaTolerance))
        throw std::invalid_argument("market price of risk disagrees with the model's theta by " +
                                    format_double(worst));

    FactorModelSpec out = base;
    const bool constant = base.r.is_constant() && base.theta.is_constant() && base.g.is_constant() &&
                          params.xi.is_constant();
    if (constant) {
        out.phi = CoefficientField::constant(endogenous_spread(base, params, 0.0, base.x0));
    } else {
        auto ctx = std::make_shared<const std::pair<FactorModelSpec, RiskParams>>(base, params);
        out.phi = CoefficientField::callable(
            Arity::scalar, 1, 1,
            [ctx](double t, std::span<const double> x, std::span<double> v) {
                v[0] = endogenous_spread(ctx->first, ctx->second, t, x);
            },
            "rs_spread");
    }
    out.validate();
    return out;
}

json RsMartingaleReport::to_json() const {
    return {{"series", "Y*S0tilde"},
            {"gamma", gamma},
            {"phi_at_start", phi_at_start},
            {"mean_increment", drift.mean_increment},
            {"stderr", drift.std_error},
            {"z", drift.z},
            {"n_paths", drift.n_paths},
            {"n_increments", drift.n_increments},
            {"threshold", threshold},
            {"flagged_fraction", flagged_fraction},
            {"pass", pass}};
}

RsMartingaleReport verify_rs_martingale(const FactorModelSpec& model, const AssetMarketSpec& market,
                                        const RiskParams& params, const SimConfig& config) {
    params.validate(model);
    const auto strategy = StrategyField::rs_optimal(model, market, params);
    const auto paths = simulate_wealth(model, market, strategy, config);

    SeriesMatrix series;
    series.n_paths = paths.n_paths;
    series.n_times = paths.n_times();
    series.antithetic = paths.antithetic;
    series.values.resize(paths.wealth.size());
    for (std::size_t i = 0; i < series.values.size(); ++i)
        series.values[i] = std::pow(paths.wealth[i], params.gamma - 1.0) * paths.s0_tilde[i];

    RsMartingaleReport rep;
    rep.drift = empirical_drift_test(series);
    rep.gamma = params.gamma;
    rep.phi_at_start = model.phi.scalar(config.t0, model.x0);
    rep.flagged_fraction = paths.flagged_fraction;
    rep.pass = std::isfinite(rep.drift.z) && std::abs(rep.drift.z) <= rep.threshold;
    return rep;
}

ConstantMarket build_constant_market(double r, double theta, double sigma, double horizon, CoefficientField phi) {
    for (double v : {r, theta, sigma, horizon})
        if (!std::isfinite(v)) throw std::invalid_argument("constant market parameters must be finite");
    if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
    if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");

    ConstantMarket cm;
    FactorModelSpec& model = cm.model;
    model.n = 1;
    model.d = 1;
    model.f = CoefficientField::constant_vector({0.0});
    model.g = CoefficientField::constant_matrix(1, 1, {1.0});
    model.r = CoefficientField::constant(r);
    model.theta = CoefficientField::constant_vector({theta});
    model.phi = std::move(phi);
    model.v_star = CoefficientField::exp_affine(0.0, {theta}, r + 0.5 * theta * theta);
    model.x0 = {0.0};
    const double half = 8.0 * std::sqrt(horizon);
    model.domain = Domain{{-half}, {half}};
    model.horizon = horizon;
    model.validate();

    AssetMarketSpec& market = cm.market;
    market.m = 1;
    market.d = 1;
    market.mu = CoefficientField::constant_vector({r + sigma * theta});
    market.sigma = CoefficientField::constant_matrix(1, 1, {sigma});
    market.s0 = {1.0};
    market.validate(model.domain, horizon);
    return cm;
}

json to_json(const AssetMarketSpec& market) {
    return {{"m", market.m},
            {"d", market.d},
            {"mu", market.mu.to_json()},
            {"sigma", market.sigma.to_json()},
            {"s0", market.s0}};
}

AssetMarketSpec market_from_json(const json& j) {
    AssetMarketSpec m;
    m.m = j.at("m").get<std::size_t>();
    m.d = j.at("d").get<std::size_t>();
    m.mu = CoefficientField::from_json(j.at("mu"));
    m.sigma = CoefficientField::from_json(j.at("sigma"));
    m.s0 = j.contains("s0") ? j.at("s0").get<std::vector<double>>() : std::vector<double>(m.m, 1.0);
    return m;
}

}  // namespace rollover
