#include "rollover/curves.hpp"

#include <cmath>
#include <map>
#include <ostream>
#include <stdexcept>

#include "rollover/pde.hpp"
#include "rollover/random.hpp"

namespace rollover {

namespace {

void require_positive(double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(what) + " must be positive");
}

constexpr double kSameTime = 1e-12;

}  // namespace

double term_rate(double A, double P, double tau) {
    require_positive(P, "P");
    require_positive(tau, "tau");
    return (A / P - 1.0) / tau;
}

double simple_forward(double P_T, double P_Td, double delta) {
    require_positive(P_T, "P_T");
    require_positive(P_Td, "P_Td");
    require_positive(delta, "delta");
    return (P_T / P_Td - 1.0) / delta;
}

double forward_term_rate(double spread, double F, double delta) {
    require_positive(spread, "spread");
    require_positive(delta, "delta");
    return ((1.0 + delta * F) * spread - 1.0) / delta;
}

double fwd_spread(double L, double F, double delta) {
    require_positive(delta, "delta");
    return (1.0 + delta * L) / (1.0 + delta * F);
}

double sps_value(double L, double R, double delta, double P_Td) {
    require_positive(delta, "delta");
    require_positive(P_Td, "P_Td");
    return delta * (L - R) * P_Td;
}

CurveMethod curve_method_from_string(const std::string& s) {
    if (s == "pde") return CurveMethod::pde;
    if (s == "mc") return CurveMethod::mc;
    throw std::invalid_argument("method must be pde or mc, got '" + s + "'");
}

std::string to_string(CurveMethod m) { return m == CurveMethod::pde ? "pde" : "mc"; }

namespace {

/// Lazily computed primitives at (t, x), keyed by maturity.
class Primitives {
public:
    Primitives(const FactorModelSpec& model, double t, std::span<const double> x, const CurveOptions& o)
        : model_(model), t_(t), x_(x.begin(), x.end()), o_(o), v_now_(model.v(t, x)) {}

    double v_now() const { return v_now_; }

    /// (p_hat, stderr)
    std::pair<double, double> p_hat(double T) {
        if (T - t_ <= kSameTime) return {1.0 / v_now_, 0.0};
        auto it = p_hat_.find(T);
        if (it != p_hat_.end()) return it->second;
        std::pair<double, double> out;
        if (o_.method == CurveMethod::pde) {
            const auto u = solve_parabolic(zcb_problem(model_, T), grid(T));
            out = {u.interpolate(t_, x_[0]), 0.0};
        } else {
            const auto e = mc_benchmarked_zcb(model_, T, t_, x_, mc(1, T));
            out = {e.mean, e.std_error};
        }
        return p_hat_[T] = out;
    }

    std::pair<double, double> spot(double T) {
        if (T - t_ <= kSameTime) return {1.0, 0.0};
        auto it = spot_.find(T);
        if (it != spot_.end()) return it->second;
        std::pair<double, double> out;
        if (o_.method == CurveMethod::pde) {
            const auto u = solve_parabolic(spot_spread_problem(model_, T), grid(T));
            out = {u.interpolate(t_, x_[0]), 0.0};
        } else {
            const auto e = mc_spot_spread(model_, T, t_, x_, mc(2, T));
            out = {e.mean, e.std_error};
        }
        return spot_[T] = out;
    }

    std::pair<double, double> forward(double T, double delta) {
        if (T - t_ <= kSameTime) return spot(T + delta);
        if (o_.method == CurveMethod::pde) {
            const auto sol = solve_forward_spread(model_, t_, T, delta, o_.n_x, levels(T));
            return {sol.s_fwd.interpolate(t_, x_[0]), 0.0};
        }
        const auto e = mc_forward_spread(model_, T, delta, t_, x_, mc(3, T, delta));
        return {e.spread.mean, e.spread.std_error};
    }

private:
    std::size_t levels(double T) const {
        return std::max<std::size_t>(2, static_cast<std::size_t>(std::llround((T - t_) * o_.levels_per_year)) + 1);
    }
    Grid1D grid(double T) const { return model_grid(model_, t_, T, o_.n_x, levels(T)); }
    SimConfig mc(std::uint64_t kind, double T, double delta = 0.0) const {
        SimConfig c = o_.mc;
        c.seed = derive_seed(o_.mc.seed, {kind, static_cast<std::uint64_t>(std::llround(T * 1e6)),
                                          static_cast<std::uint64_t>(std::llround(delta * 1e6))});
        return c;
    }

    const FactorModelSpec& model_;
    double t_;
    std::vector<double> x_;
    CurveOptions o_;
    double v_now_;
    std::map<double, std::pair<double, double>> p_hat_, spot_;
};

}  // namespace

TermStructureReport term_structure_report(const FactorModelSpec& model, double t, std::span<const double> x,
                                          const std::vector<double>& maturities, const std::vector<double>& tenors,
                                          const CurveOptions& options) {
    if (!model.v_star) throw std::invalid_argument("term structures need v_star");
    if (options.method == CurveMethod::pde && model.n != 1)
        throw std::invalid_argument("the PDE method needs a one-factor model");
    if (x.size() != model.n || !model.domain.contains(x)) throw std::invalid_argument("x must lie in the domain");
    for (std::size_t i = 0; i < maturities.size(); ++i) {
        if (maturities[i] < t - kSameTime) throw std::invalid_argument("maturities must not precede t");
        if (i > 0 && maturities[i] < maturities[i - 1]) throw std::invalid_argument("maturities must be sorted");
        if (maturities[i] > model.horizon + kSameTime) throw std::invalid_argument("maturity beyond the horizon");
        for (double d : tenors) {
            require_positive(d, "tenor");
            if (maturities[i] + d > model.horizon + kSameTime)
                throw std::invalid_argument("maturity + tenor beyond the horizon");
        }
    }

    TermStructureReport rep;
    rep.t = t;
    rep.x.assign(x.begin(), x.end());
    rep.method = to_string(options.method);
    if (options.method == CurveMethod::pde) {
        rep.solver = {{"scheme", "crank-nicolson"},
                      {"n_x", options.n_x},
                      {"levels_per_year", options.levels_per_year},
                      {"boundary", "linear extrapolation"}};
    } else {
        rep.solver = {{"dt", options.mc.dt},
                      {"n_paths", options.mc.n_paths},
                      {"seed", options.mc.seed},
                      {"antithetic", options.mc.antithetic}};
    }

    Primitives prim(model, t, x, options);
    const double v_now = prim.v_now();
    const bool declares_nonnegative = model.phi_nonnegative();
    auto check_spread = [&](double S, double se, const std::string& label) {
        const double tol = options.method == CurveMethod::pde ? 1e-8 : 3.0 * se;
        if (!(S > 0.0)) throw std::runtime_error("non-positive spread at " + label);
        if (declares_nonnegative && S < 1.0 - tol) rep.flags.push_back(label + ": S < 1 with phi >= 0");
    };

    for (double T : maturities) {
        MaturityRow row;
        row.T = T;
        row.p_hat = prim.p_hat(T).first;
        row.P = v_now * row.p_hat;
        const auto [S, se] = prim.spot(T);
        row.S = S;
        row.S_stderr = se;
        const double tau = T - t;
        if (tau > kSameTime) {
            row.F = (1.0 / row.P - 1.0) / tau;
            row.L = term_rate(row.S, row.P, tau);
        }
        check_spread(row.S, se, "S(t," + format_double(T) + ")");
        rep.maturities.push_back(row);
    }

    for (double T : maturities) {
        for (double delta : tenors) {
            TenorRow row;
            row.T = T;
            row.delta = delta;
            row.spot_case = T - t <= kSameTime;
            row.P_T = v_now * prim.p_hat(T).first;
            row.P_Td = v_now * prim.p_hat(T + delta).first;
            row.F = simple_forward(row.P_T, row.P_Td, delta);
            const auto [S, se] = prim.forward(T, delta);
            row.S = S;
            row.S_stderr = se;
            row.L = forward_term_rate(row.S, row.F, delta);
            row.sps_value_par = sps_value(row.L, row.L, delta, row.P_Td);
            row.sps_value_at_F = sps_value(row.L, row.F, delta, row.P_Td);
            check_spread(row.S, se, "S_t(" + format_double(T) + "," + format_double(T + delta) + ")");
            rep.tenors.push_back(row);
        }
    }
    return rep;
}

json TermStructureReport::to_json() const {
    json j;
    j["t"] = t;
    j["x"] = x;
    j["method"] = method;
    j["solver"] = solver;
    j["flags"] = flags;
    j["maturities"] = json::array();
    for (const auto& r : maturities)
        j["maturities"].push_back({{"T", r.T},
                                   {"P", r.P},
                                   {"p_hat", r.p_hat},
                                   {"F", r.F},
                                   {"S", r.S},
                                   {"L", r.L},
                                   {"S_stderr", r.S_stderr}});
    j["tenors"] = json::array();
    for (const auto& r : tenors)
        j["tenors"].push_back({{"T", r.T},
                               {"delta", r.delta},
                               {"P_T", r.P_T},
                               {"P_Td", r.P_Td},
                               {"F", r.F},
                               {"S", r.S},
                               {"L", r.L},
                               {"S_stderr", r.S_stderr},
                               {"spot_case", r.spot_case},
                               {"sps_value_par", r.sps_value_par},
                               {"sps_value_at_F", r.sps_value_at_F}});
    return j;
}

void write_csv(const TermStructureReport& report, std::ostream& out) {
    out << "T,delta,P_T,P_Td,F,S,S_stderr,L,sps_value_par,sps_value_at_F,spot_case\n";
    for (const auto& r : report.tenors) {
        out << format_double(r.T) << ',' << format_double(r.delta) << ',' << format_double(r.P_T) << ','
            << format_double(r.P_Td) << ',' << format_double(r.F) << ',' << format_double(r.S) << ','
            << format_double(r.S_stderr) << ',' << format_double(r.L) << ',' << format_double(r.sps_value_par) << ','
            << format_double(r.sps_value_at_F) << ',' << (r.spot_case ? 1 : 0) << '\n';
    }
}

}  // namespace rollover
