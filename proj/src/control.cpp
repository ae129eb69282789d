#include "rollover/control.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "rollover/detail/engine.hpp"
#include "rollover/random.hpp"

namespace rollover {

// ---------------------------------------------------------------------------
// Branches and feedback fields

ControlBranch ControlBranch::from_eta(double eta) {
    ControlBranch b;
    b.eta = eta;
    b.kind = (eta > 0.0 && eta < 1.0) ? BranchKind::lower : BranchKind::upper;
    b.validate();
    return b;
}

void ControlBranch::validate() const {
    if (!std::isfinite(eta) || eta == 0.0 || eta == 1.0) throw std::invalid_argument("eta must be finite, not 0 or 1");
    if (kind == BranchKind::lower && !(eta > 0.0 && eta < 1.0))
        throw std::invalid_argument("lower branch needs eta in (0, 1)");
    if (kind == BranchKind::upper && !(eta > 1.0 || eta < 0.0))
        throw std::invalid_argument("upper branch needs eta > 1 or eta < 0");
}

double ControlBranch::gain() const {
    return kind == BranchKind::lower ? std::sqrt((1.0 - eta) / eta) : std::sqrt((eta - 1.0) / eta);
}

std::string ControlBranch::label() const {
    return std::string(kind == BranchKind::lower ? "lower" : "upper") + " eta=" + format_double(eta);
}

FeedbackControl FeedbackControl::zero(const Grid1D& grid, std::size_t d) {
    grid.validate();
    FeedbackControl c;
    c.grid = grid;
    c.d = d;
    c.values.assign(grid.n_t * grid.n_x * d, 0.0);
    return c;
}

void FeedbackControl::eval(double t, double x, std::span<double> out) const {
    const double span_t = grid.t_end - grid.t_start, span_x = grid.x_max - grid.x_min;
    if (t < grid.t_start - 1e-9 * span_t || t > grid.t_end + 1e-9 * span_t || x < grid.x_min - 1e-12 * span_x ||
        x > grid.x_max + 1e-12 * span_x)
        throw std::out_of_range("control evaluated outside its grid");
    auto locate = [](double pos, std::size_t n, double& w) {
        pos = std::clamp(pos, 0.0, static_cast<double>(n - 1));
        std::size_t i = std::min(static_cast<std::size_t>(pos), n - 2);
        w = pos - static_cast<double>(i);
        return i;
    };
    double wt, wx;
    const std::size_t i = locate((t - grid.t_start) / grid.dt(), grid.n_t, wt);
    const std::size_t j = locate((x - grid.x_min) / grid.dx(), grid.n_x, wx);
    for (std::size_t k = 0; k < d; ++k) {
        const double lo = (1.0 - wx) * at(i, j, k) + wx * at(i, j + 1, k);
        const double hi = (1.0 - wx) * at(i + 1, j, k) + wx * at(i + 1, j + 1, k);
        out[k] = (1.0 - wt) * lo + wt * hi;
    }
}

bool FeedbackControl::finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

double FeedbackControl::max_norm() const {
    double m = 0.0;
    for (std::size_t node = 0; node * d < values.size(); ++node) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += values[node * d + k] * values[node * d + k];
        m = std::max(m, std::sqrt(s));
    }
    return m;
}

FeedbackControl FeedbackControl::shifted(double eps, const std::function<double(double x)>& shape) const {
    FeedbackControl c = *this;
    for (std::size_t i = 0; i < grid.n_t; ++i)
        for (std::size_t j = 0; j < grid.n_x; ++j) {
            const double s = eps * shape(grid.x(j));
            for (std::size_t k = 0; k < d; ++k) c.at(i, j, k) += s;
        }
    return c;
}

namespace {

void require_one_factor(const FactorModelSpec& model) {
    if (model.n != 1) throw std::invalid_argument("control verification supports one-factor models only");
}

/// g^T times a scalar field q at every node: out[i][j][k] = scale * g_k(t_i, x_j) * q(i, j).
FeedbackControl g_times(const FactorModelSpec& model, const Grid1D& grid,
                        const std::function<double(std::size_t, std::size_t)>& q, double scale) {
    FeedbackControl c = FeedbackControl::zero(grid, model.d);
    std::vector<double> g(model.d);
    for (std::size_t i = 0; i < grid.n_t; ++i)
        for (std::size_t j = 0; j < grid.n_x; ++j) {
            const double x = grid.x(j);
            model.g.eval(grid.t(i), std::span<const double>(&x, 1), g);
            const double v = q(i, j);
            for (std::size_t k = 0; k < model.d; ++k) c.at(i, j, k) = scale * g[k] * v;
        }
    return c;
}

CandidateControl power_candidate(const GridFunction& s, const FactorModelSpec& model, const ControlBranch& branch) {
    require_one_factor(model);
    branch.validate();
    if (s.min() <= 0.0) throw std::invalid_argument("spread table must be strictly positive");
    const double eta = branch.eta, k = branch.gain();
    GridFunction z = s;
    for (double& v : z.values) v = std::pow(v, eta);
    const GridFunction dz = grid_gradient(z);
    const GridFunction ds = grid_gradient(s);
    CandidateControl out;
    out.control = g_times(model, s.grid, [&](std::size_t i, std::size_t j) { return dz.at(i, j) / z.at(i, j); }, k);
    out.chain_rule =
        g_times(model, s.grid, [&](std::size_t i, std::size_t j) { return eta * ds.at(i, j) / s.at(i, j); }, k);
    for (std::size_t n = 0; n < out.control.values.size(); ++n)
        out.max_discrepancy = std::max(out.max_discrepancy, std::abs(out.control.values[n] - out.chain_rule.values[n]));
    return out;
}

/// Euler paths of dX = (base + sign gain g.u) dt + g dW with a running cost
/// and terminal term; returns per-path exp(J) or J.
template <class Base, class Running, class Terminal>
Estimate run_controlled(const FactorModelSpec& model, const FeedbackControl& control, double t, double x, double T,
                        const SimConfig& config, double control_gain, Base base, Running running, Terminal terminal,
                        bool exponentiate) {
    require_one_factor(model);
    if (control.d != model.d) throw std::invalid_argument("control dimension must equal the Brownian dimension");
    if (!(t >= 0.0 && t < T)) throw std::invalid_argument("need t < T");
    if (!(config.dt > 0.0) || config.dt >= T - t) throw std::invalid_argument("dt must lie in (0, T - t)");
    const double x_arr[1] = {x};
    if (!model.domain.contains(x_arr)) throw std::invalid_argument("start point outside the domain");
    const detail::Lattice lat = detail::make_lattice(t, T, config.dt);
    const double sqrt_h = std::sqrt(lat.h);
    std::vector<double> values(config.n_paths);
    detail::PathTally tally{std::vector<std::uint32_t>(config.n_paths, 0), lat.steps};
    const std::size_t d = model.d;

    detail::parallel_for(config.n_paths, config.workers, [&](std::size_t begin, std::size_t end) {
        const detail::FastField g_field(model.g);
        std::vector<double> g(d), u(d), dW(d);
        for (std::size_t p = begin; p < end; ++p) {
            auto rng = detail::path_stream(config.seed, p, config.antithetic);
            double xp = x, acc = 0.0;
            for (std::size_t k = 0; k < lat.steps; ++k) {
                const double tk = lat.time(k);
                const std::span<const double> xs(&xp, 1);
                g_field.eval(tk, xs, g);
                control.eval(tk, xp, u);
                double gu = 0.0, uu = 0.0;
                for (std::size_t c = 0; c < d; ++c) {
                    gu += g[c] * u[c];
                    uu += u[c] * u[c];
                }
                acc += running(tk, xp, uu) * lat.h;
                const double drift = base(tk, xp) + control_gain * gu;
                detail::draw(rng, dW, sqrt_h);
                if (detail::advance(model.domain, std::span<double>(&xp, 1), std::span<const double>(&drift, 1), g, dW,
                                    lat.h))
                    ++tally.flagged[p];
            }
            const double j = acc + terminal(xp);
            values[p] = exponentiate ? std::exp(j) : j;
        }
    });
    Estimate e = detail::summarize(values, config.seed, config.antithetic);
    detail::apply_tally(e, tally);
    return e;
}

double g_dot_theta(const FactorModelSpec& model, const detail::ModelFields& mf, double t, double x, double& g2) {
    const std::span<const double> xs(&x, 1);
    double gb[8], tb[8];
    std::vector<double> gv, tv;
    std::span<double> g(gb, model.d), th(tb, model.d);
    if (model.d > 8) {
        gv.resize(model.d);
        tv.resize(model.d);
        g = gv;
        th = tv;
    }
    mf.g.eval(t, xs, g);
    mf.theta.eval(t, xs, th);
    double s = 0.0;
    g2 = 0.0;
    for (std::size_t k = 0; k < model.d; ++k) {
        s += g[k] * th[k];
        g2 += g[k] * g[k];
    }
    return s;
}

}  // namespace

CandidateControl candidate_spot_control(const GridFunction& s, const FactorModelSpec& model,
                                        const ControlBranch& branch) {
    return power_candidate(s, model, branch);
}

CandidateControl candidate_fwd_control(const GridFunction& s_fwd, const FactorModelSpec& model,
                                       const ControlBranch& branch) {
    return power_candidate(s_fwd, model, branch);
}

FeedbackControl candidate_bond_control(const GridFunction& p_hat, const FactorModelSpec& model) {
    require_one_factor(model);
    if (p_hat.min() <= 0.0) throw std::invalid_argument("p_hat must be strictly positive");
    GridFunction w = p_hat;
    for (double& v : w.values) v = -std::log(v);
    const GridFunction dw = grid_gradient(w);
    return g_times(model, p_hat.grid, [&](std::size_t i, std::size_t j) { return dw.at(i, j); }, -1.0);
}

Estimate evaluate_spot_objective(const FactorModelSpec& model, const FeedbackControl& control,
                                 const ControlBranch& branch, double t, double x, double T, const SimConfig& config) {
    branch.validate();
    const detail::ModelFields mf(model);
    const double eta = branch.eta;
    const double sign = branch.maximize() ? 1.0 : -1.0;
    auto base = [&](double tk, double xk) {
        double g2;
        const std::span<const double> xs(&xk, 1);
        return mf.f.scalar(tk, xs) - g_dot_theta(model, mf, tk, xk, g2);
    };
    auto running = [&](double tk, double xk, double uu) {
        return eta * mf.phi.scalar(tk, std::span<const double>(&xk, 1)) - sign * 0.5 * uu;
    };
    return run_controlled(model, control, t, x, T, config, sign * branch.gain(), base, running,
                          [](double) { return 0.0; }, true);
}

Estimate evaluate_fwd_objective(const FactorModelSpec& model, const FeedbackControl& control,
                                const ControlBranch& branch, double t, double x, double T, double delta,
                                const std::function<double(double x)>& s_long_terminal, const GridFunction& p_hat,
                                const SimConfig& config) {
    branch.validate();
    if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");
    if (p_hat.min() <= 0.0) throw std::invalid_argument("p_hat must be strictly positive");
    const GridFunction dp = grid_gradient(p_hat);
    const detail::ModelFields mf(model);
    const double eta = branch.eta;
    const double sign = branch.maximize() ? 1.0 : -1.0;
    auto base = [&](double tk, double xk) {
        double g2;
        g_dot_theta(model, mf, tk, xk, g2);
        return mf.f.scalar(tk, std::span<const double>(&xk, 1)) + g2 * dp.interpolate(tk, xk) / p_hat.interpolate(tk, xk);
    };
    auto running = [&](double, double, double uu) { return -sign * 0.5 * uu; };
    auto terminal = [&](double xT) {
        const double s = s_long_terminal(xT);
        if (!(s > 0.0)) throw std::runtime_error("terminal spread must be positive");
        return eta * std::log(s);
    };
    return run_controlled(model, control, t, x, T, config, sign * branch.gain(), base, running, terminal, true);
}

Estimate evaluate_bond_objective(const FactorModelSpec& model, const FeedbackControl& control, double t, double x,
                                 double T, const SimConfig& config) {
    if (!model.v_star) throw std::invalid_argument("bond problem needs v_star");
    const detail::FastField f(model.f);
    auto base = [&](double tk, double xk) { return f.scalar(tk, std::span<const double>(&xk, 1)); };
    auto running = [](double, double, double uu) { return 0.5 * uu; };
    auto terminal = [&](double xT) { return std::log(model.v(T, std::span<const double>(&xT, 1))); };
    return run_controlled(model, control, t, x, T, config, 1.0, base, running, terminal, false);
}

// ---------------------------------------------------------------------------
// Reports

bool VerificationReport::passed() const {
    return std::all_of(clauses.begin(), clauses.end(), [](const Clause& c) { return c.pass; });
}

const Clause* VerificationReport::clause(const std::string& name) const {
    for (const auto& c : clauses)
        if (c.name == name) return &c;
    return nullptr;
}

json VerificationReport::to_json() const {
    json j;
    j["problem"] = problem;
    j["T"] = T;
    if (delta > 0.0) j["delta"] = delta;
    j["passed"] = passed();
    j["clauses"] = json::array();
    for (const auto& c : clauses) j["clauses"].push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    j["probes"] = json::array();
    for (const auto& r : probes)
        j["probes"].push_back({{"t", r.t},
                               {"x", r.x},
                               {"eta", r.eta},
                               {"reference", r.reference},
                               {"objective", r.objective},
                               {"objective_stderr", r.objective_stderr},
                               {"recovered", r.recovered},
                               {"recovered_stderr", r.recovered_stderr},
                               {"error", r.error},
                               {"tolerance", r.tolerance},
                               {"pass", r.pass}});
    j["perturbations"] = json::array();
    for (const auto& r : perturbations)
        j["perturbations"].push_back({{"branch", r.branch},
                                      {"eta", r.eta},
                                      {"probe", r.probe},
                                      {"shape", r.shape},
                                      {"epsilon", r.epsilon},
                                      {"candidate", r.candidate},
                                      {"perturbed", r.perturbed},
                                      {"delta", r.delta},
                                      {"pooled_stderr", r.pooled_stderr},
                                      {"expected", r.expected},
                                      {"pass", r.pass}});
    j["eta_limit"] = json::array();
    for (const auto& r : eta_limit)
        j["eta_limit"].push_back({{"sequence", r.sequence},
                                  {"eta", r.eta},
                                  {"max_error", r.max_error},
                                  {"stderr_at_max", r.stderr_at_max},
                                  {"pass", r.pass}});
    return j;
}

std::string VerificationReport::summary() const {
    std::ostringstream out;
    out << problem << " (T=" << format_double(T);
    if (delta > 0.0) out << ", delta=" << format_double(delta);
    out << "): " << (passed() ? "PASS" : "FAIL") << '\n';
    for (const auto& c : clauses) out << "  [" << (c.pass ? "pass" : "FAIL") << "] " << c.name << ": " << c.detail << '\n';
    for (const auto& r : probes)
        out << "    t=" << format_double(r.t) << " x=" << format_double(r.x) << " eta=" << format_double(r.eta)
            << " ref=" << format_double(r.reference) << " mc=" << format_double(r.recovered) << " err="
            << format_double(r.error) << " tol=" << format_double(r.tolerance) << '\n';
    return out.str();
}

// ---------------------------------------------------------------------------
// Verification drivers

namespace {

enum ProblemTag : std::uint64_t { spot_tag = 1, fwd_tag = 2, bond_tag = 3 };

struct Shape {
    std::string name;
    std::function<double(double)> fn;
};

std::vector<Shape> perturbation_shapes(const FactorModelSpec& model) {
    const double centre = 0.5 * (model.domain.lower[0] + model.domain.upper[0]);
    const double scale = model.domain.width(0) / 12.0;
    return {{"constant", [](double) { return 1.0; }},
            {"proportional", [centre, scale](double x) { return (x - centre) / scale; }}};
}

void check_probes(const FactorModelSpec& model, double T, const std::vector<Probe>& probes) {
    if (probes.empty()) throw std::invalid_argument("at least one probe is required");
    for (const auto& [t, x] : probes) {
        if (!(t >= 0.0 && t < T)) throw std::invalid_argument("probe time must lie in [0, T)");
        if (!(x > model.domain.lower[0] && x < model.domain.upper[0]))
            throw std::invalid_argument("probe must be interior to the domain");
    }
}

SimConfig seeded(const VerifyOptions& o, std::uint64_t tag, std::uint64_t probe, std::uint64_t eta_index) {
    SimConfig c = o.mc;
    c.seed = derive_seed(o.mc.seed, {tag, probe, eta_index});
    return c;
}

/// Identity, perturbation and limit rows for one power-transform problem.
struct PowerProblem {
    std::uint64_t tag;
    const GridFunction* spread;
    std::function<CandidateControl(const ControlBranch&)> candidate;
    std::function<Estimate(const FeedbackControl&, const ControlBranch&, const Probe&, const SimConfig&)> objective;
};

void run_power_problem(const FactorModelSpec& model, const PowerProblem& pb, const std::vector<double>& etas_lower,
                       const std::vector<double>& etas_upper, const std::vector<Probe>& probes,
                       const VerifyOptions& o, VerificationReport& rep) {
    for (double e : etas_lower)
        if (!(e > 0.0 && e < 1.0)) throw std::invalid_argument("lower exponents must lie in (0, 1)");
    for (double e : etas_upper)
        if (!(e > 1.0 || e < 0.0)) throw std::invalid_argument("upper exponents must be > 1 or < 0");

    std::vector<std::pair<ControlBranch, std::uint64_t>> branches;
    for (std::size_t i = 0; i < etas_lower.size(); ++i)
        branches.emplace_back(ControlBranch{BranchKind::lower, etas_lower[i]}, i);
    for (std::size_t i = 0; i < etas_upper.size(); ++i)
        branches.emplace_back(ControlBranch{BranchKind::upper, etas_upper[i]}, 100 + i);

    bool admissible = true, mc_finite = true;
    double worst_norm = 0.0, worst_chain = 0.0;
    const auto shapes = perturbation_shapes(model);
    std::size_t identity_fail = 0, perturb_fail = 0;

    for (const auto& [branch, eta_index] : branches) {
        const CandidateControl cand = pb.candidate(branch);
        worst_norm = std::max(worst_norm, cand.control.max_norm());
        worst_chain = std::max(worst_chain, cand.max_discrepancy);
        if (!cand.control.finite() || cand.control.max_norm() > o.control_bound) {
            admissible = false;
            continue;
        }
        for (std::size_t pi = 0; pi < probes.size(); ++pi) {
            const auto& probe = probes[pi];
            const SimConfig cfg = seeded(o, pb.tag, pi, eta_index);
            const Estimate est = pb.objective(cand.control, branch, probe, cfg);
            if (est.nonfinite > 0 || !std::isfinite(est.mean)) mc_finite = false;
            ProbeRow row;
            row.t = probe.first;
            row.x = probe.second;
            row.eta = branch.eta;
            row.reference = pb.spread->interpolate(probe.first, probe.second);
            row.objective = est.mean;
            row.objective_stderr = est.std_error;
            row.recovered = std::pow(est.mean, 1.0 / branch.eta);
            row.recovered_stderr =
                std::abs(1.0 / branch.eta) * std::pow(est.mean, 1.0 / branch.eta - 1.0) * est.std_error;
            row.error = std::abs(row.recovered - row.reference);
            row.tolerance = o.identity_sigmas * row.recovered_stderr + o.grid_tolerance;
            row.pass = row.error <= row.tolerance;
            if (!row.pass) ++identity_fail;
            rep.probes.push_back(row);

            if (pi > 0 && !o.perturb_every_probe) continue;
            for (const auto& shape : shapes) {
                for (double eps : o.epsilons) {
                    const FeedbackControl pert = cand.control.shifted(eps, shape.fn);
                    const Estimate pe = pb.objective(pert, branch, probe, cfg);
                    if (pe.nonfinite > 0 || !std::isfinite(pe.mean)) mc_finite = false;
                    PerturbationRow pr;
                    pr.branch = branch.kind == BranchKind::lower ? "lower" : "upper";
                    pr.eta = branch.eta;
                    pr.probe = pi;
                    pr.shape = shape.name;
                    pr.epsilon = eps;
                    pr.candidate = est.mean;
                    pr.perturbed = pe.mean;
                    pr.delta = pe.mean - est.mean;
                    pr.pooled_stderr = std::hypot(est.std_error, pe.std_error);
                    pr.expected = branch.maximize() ? "decrease" : "increase";
                    pr.pass = branch.maximize() ? pr.delta <= o.perturbation_sigmas * pr.pooled_stderr
                                                : pr.delta >= -o.perturbation_sigmas * pr.pooled_stderr;
                    if (!pr.pass) ++perturb_fail;
                    rep.perturbations.push_back(pr);
                }
            }
        }
    }

    rep.clauses.push_back({"admissibility", admissible && mc_finite,
                           "max |u| on grid " + format_double(worst_norm) + " (bound " +
                               format_double(o.control_bound) + "), MC finite: " + (mc_finite ? "yes" : "no")});
    rep.clauses.push_back({"chain_rule", worst_chain <= 1e-6,
                           "max |z-form - s-form| " + format_double(worst_chain)});
    rep.clauses.push_back({"identity", identity_fail == 0 && !rep.probes.empty(),
                           std::to_string(rep.probes.size() - identity_fail) + "/" +
                               std::to_string(rep.probes.size()) + " probe rows within 3 stderr + " +
                               format_double(o.grid_tolerance)});
    rep.clauses.push_back({"perturbation", perturb_fail == 0,
                           std::to_string(rep.perturbations.size() - perturb_fail) + "/" +
                               std::to_string(rep.perturbations.size()) + " perturbations in the predicted direction"});

    // Sandwich on the stored spread values where s >= 1.
    const GridFunction& s = *pb.spread;
    std::size_t checked = 0, below_one = 0, violations = 0;
    double margin_lower = INFINITY, margin_upper = INFINITY;
    for (double v : s.values) {
        if (v < 1.0) {
            ++below_one;
            continue;
        }
        ++checked;
        for (double e : etas_lower) {
            const double m = v - std::pow(v, e);
            margin_lower = std::min(margin_lower, m);
            if (m < 0.0) ++violations;
        }
        for (double e : etas_upper) {
            if (e < 0.0) continue;  // the right inequality is not claimed for negative exponents
            const double m = std::pow(v, e) - v;
            margin_upper = std::min(margin_upper, m);
            if (m < 0.0) ++violations;
        }
    }
    rep.clauses.push_back({"sandwich", violations == 0,
                           std::to_string(checked) + " nodes with s >= 1 (" + std::to_string(below_one) +
                               " below 1 skipped), min margins " + format_double(margin_lower) + " / " +
                               format_double(margin_upper) + ", violations " + std::to_string(violations)});
    if (model.phi_nonnegative()) {
        const double mn = s.min();
        rep.clauses.push_back({"grid_minimum", mn >= 1.0 - o.spread_floor_tolerance,
                               "min s on grid " + format_double(mn)});
    } else {
        rep.clauses.push_back({"grid_minimum", true, "not applicable: phi takes negative values"});
    }

    // Limit eta -> 1 along each sequence.
    auto limit_rows = [&](std::vector<double> seq, const std::string& name, bool ascending) {
        std::sort(seq.begin(), seq.end());
        if (!ascending) std::reverse(seq.begin(), seq.end());
        bool have_prev = false;
        EtaLimitRow prev;
        for (double e : seq) {
            EtaLimitRow row;
            row.sequence = name;
            row.eta = e;
            row.max_error = -1.0;
            for (const auto& p : rep.probes)
                if (p.eta == e && p.error > row.max_error) {
                    row.max_error = p.error;
                    row.stderr_at_max = p.recovered_stderr;
                }
            if (have_prev)
                row.pass = row.max_error <=
                           prev.max_error + o.limit_sigmas * std::hypot(prev.stderr_at_max, row.stderr_at_max);
            rep.eta_limit.push_back(row);
            prev = row;
            have_prev = true;
        }
    };
    limit_rows(etas_lower, "lower", true);
    std::vector<double> above;
    for (double e : etas_upper)
        if (e > 1.0) above.push_back(e);
    limit_rows(above, "upper", false);
    const bool limit_ok =
        std::all_of(rep.eta_limit.begin(), rep.eta_limit.end(), [](const EtaLimitRow& r) { return r.pass; });
    std::string detail;
    for (const auto& r : rep.eta_limit)
        detail += r.sequence + " eta=" + format_double(r.eta) + " err=" + format_double(r.max_error) + "; ";
    rep.clauses.push_back({"eta_limit", limit_ok, detail});
}

}  // namespace

VerificationReport verify_spot_representation(const FactorModelSpec& model, double T,
                                              const std::vector<double>& etas_lower,
                                              const std::vector<double>& etas_upper,
                                              const std::vector<Probe>& probes, const VerifyOptions& o) {
    require_one_factor(model);
    check_probes(model, T, probes);
    const GridFunction s = solve_parabolic(spot_spread_problem(model, T), model_grid(model, 0.0, T, o.n_x, o.n_t),
                                           o.solver);
    VerificationReport rep;
    rep.problem = "spot";
    rep.T = T;
    PowerProblem pb;
    pb.tag = spot_tag;
    pb.spread = &s;
    pb.candidate = [&](const ControlBranch& b) { return candidate_spot_control(s, model, b); };
    pb.objective = [&](const FeedbackControl& u, const ControlBranch& b, const Probe& p, const SimConfig& c) {
        return evaluate_spot_objective(model, u, b, p.first, p.second, T, c);
    };
    run_power_problem(model, pb, etas_lower, etas_upper, probes, o, rep);
    return rep;
}

VerificationReport verify_fwd_representation(const FactorModelSpec& model, double T, double delta,
                                             const std::vector<double>& etas_lower,
                                             const std::vector<double>& etas_upper,
                                             const std::vector<Probe>& probes, const VerifyOptions& o) {
    require_one_factor(model);
    check_probes(model, T, probes);
    const ForwardSolution sol = solve_forward_spread(model, 0.0, T, delta, o.n_x, o.n_t, o.solver);
    VerificationReport rep;
    rep.problem = "forward";
    rep.T = T;
    rep.delta = delta;

    const std::size_t level = sol.s_long.level_index(T);
    double worst = 0.0;
    for (std::size_t j = 0; j < sol.s_fwd.grid.n_x; ++j)
        worst = std::max(worst, std::abs(sol.s_fwd.at(sol.s_fwd.grid.n_t - 1, j) - sol.s_long.at(level, j)));
    rep.clauses.push_back({"terminal_condition", worst <= o.terminal_tolerance,
                           "max |s^{T,delta}(T,x) - s^{T+delta}(T,x)| " + format_double(worst)});

    const GridFunction& s_long = sol.s_long;
    auto terminal = [&s_long, T](double x) { return s_long.interpolate(T, x); };
    PowerProblem pb;
    pb.tag = fwd_tag;
    pb.spread = &sol.s_fwd;
    pb.candidate = [&](const ControlBranch& b) { return candidate_fwd_control(sol.s_fwd, model, b); };
    pb.objective = [&](const FeedbackControl& u, const ControlBranch& b, const Probe& p, const SimConfig& c) {
        return evaluate_fwd_objective(model, u, b, p.first, p.second, T, delta, terminal, sol.p_hat, c);
    };
    run_power_problem(model, pb, etas_lower, etas_upper, probes, o, rep);
    return rep;
}

double bond_hjb_residual(const GridFunction& w, const FactorModelSpec& model, double margin) {
    require_one_factor(model);
    const Grid1D& g = w.grid;
    const std::size_t skip = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(margin * (g.n_x - 1))));
    if (2 * skip + 1 > g.n_x || g.n_t < 3) throw std::invalid_argument("grid too small for the HJB residual");
    const double dx = g.dx(), dt = g.dt();
    double worst = 0.0;
    std::vector<double> gv(model.d);
    for (std::size_t i = 1; i + 1 < g.n_t; ++i) {
        const double t = g.t(i);
        for (std::size_t j = skip; j + skip < g.n_x; ++j) {
            const double x = g.x(j);
            const std::span<const double> xs(&x, 1);
            model.g.eval(t, xs, gv);
            double g2 = 0.0;
            for (double c : gv) g2 += c * c;
            const double wt = (w.at(i + 1, j) - w.at(i - 1, j)) / (2.0 * dt);
            const double wx = (w.at(i, j + 1) - w.at(i, j - 1)) / (2.0 * dx);
            const double wxx = (w.at(i, j + 1) - 2.0 * w.at(i, j) + w.at(i, j - 1)) / (dx * dx);
            const double res = wt + model.f.scalar(t, xs) * wx + 0.5 * g2 * wxx - 0.5 * g2 * wx * wx;
            worst = std::max(worst, std::abs(res));
        }
    }
    return worst;
}

VerificationReport verify_bond_representation(const FactorModelSpec& model, double T,
                                              const std::vector<Probe>& probes, const VerifyOptions& o) {
    require_one_factor(model);
    if (!model.v_star) throw std::invalid_argument("bond problem needs v_star");
    check_probes(model, T, probes);
    const GridFunction p_hat =
        solve_parabolic(zcb_problem(model, T), model_grid(model, 0.0, T, o.n_x, o.n_t), o.solver);
    if (p_hat.min() <= 0.0) throw std::runtime_error("p_hat is not strictly positive");
    VerificationReport rep;
    rep.problem = "bond";
    rep.T = T;

    GridFunction w = p_hat;
    w.problem_id = "w = -log p_hat";
    for (double& v : w.values) v = -std::log(v);
    const double hjb = bond_hjb_residual(w, model, o.hjb_margin);

    const FeedbackControl cand = candidate_bond_control(p_hat, model);
    const bool admissible = cand.finite() && cand.max_norm() <= o.control_bound;
    bool mc_finite = true;
    std::size_t identity_fail = 0, perturb_fail = 0;
    const auto shapes = perturbation_shapes(model);
    if (admissible) {
        for (std::size_t pi = 0; pi < probes.size(); ++pi) {
            const auto& probe = probes[pi];
            const SimConfig cfg = seeded(o, bond_tag, pi, 0);
            const Estimate est = evaluate_bond_objective(model, cand, probe.first, probe.second, T, cfg);
            if (est.nonfinite > 0 || !std::isfinite(est.mean)) mc_finite = false;
            ProbeRow row;
            row.t = probe.first;
            row.x = probe.second;
            row.reference = p_hat.interpolate(probe.first, probe.second);
            row.objective = est.mean;
            row.objective_stderr = est.std_error;
            row.recovered = std::exp(-est.mean);
            row.recovered_stderr = row.recovered * est.std_error;
            row.error = std::abs(row.recovered - row.reference);
            row.tolerance = o.identity_sigmas * row.recovered_stderr + o.grid_tolerance;
            row.pass = row.error <= row.tolerance;
            if (!row.pass) ++identity_fail;
            rep.probes.push_back(row);

            if (pi > 0 && !o.perturb_every_probe) continue;
            for (const auto& shape : shapes) {
                for (double eps : o.epsilons) {
                    const Estimate pe = evaluate_bond_objective(model, cand.shifted(eps, shape.fn), probe.first,
                                                                probe.second, T, cfg);
                    if (pe.nonfinite > 0 || !std::isfinite(pe.mean)) mc_finite = false;
                    PerturbationRow pr;
                    pr.branch = "bond";
                    pr.probe = pi;
                    pr.shape = shape.name;
                    pr.epsilon = eps;
                    pr.candidate = est.mean;
                    pr.perturbed = pe.mean;
                    pr.delta = pe.mean - est.mean;
                    pr.pooled_stderr = std::hypot(est.std_error, pe.std_error);
                    pr.expected = "increase";
                    pr.pass = pr.delta >= -o.perturbation_sigmas * pr.pooled_stderr;
                    if (!pr.pass) ++perturb_fail;
                    rep.perturbations.push_back(pr);
                }
            }
        }
    }
    rep.clauses.push_back({"admissibility", admissible && mc_finite,
                           "max |u| on grid " + format_double(cand.max_norm()) + " (bound " +
                               format_double(o.control_bound) + "), MC finite: " + (mc_finite ? "yes" : "no")});
    rep.clauses.push_back({"identity", admissible && identity_fail == 0,
                           std::to_string(rep.probes.size() - identity_fail) + "/" +
                               std::to_string(rep.probes.size()) + " probes with |exp(-w_MC) - p_hat| within 3 stderr + " +
                               format_double(o.grid_tolerance)});
    rep.clauses.push_back({"hjb_residual", hjb <= o.hjb_tolerance,
                           "max interior residual " + format_double(hjb) + " (margin " + format_double(o.hjb_margin) +
                               ")"});
    rep.clauses.push_back({"perturbation", admissible && perturb_fail == 0,
                           std::to_string(rep.perturbations.size() - perturb_fail) + "/" +
                               std::to_string(rep.perturbations.size()) + " perturbations in the predicted direction"});
    return rep;
}

}  // namespace rollover
