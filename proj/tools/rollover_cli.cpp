// rollover: command-line driver for the term-structure lab.
//
//   rollover <command> [--model PATH] [--out DIR] [--seed N] ...
//
// Every run writes DIR/manifest.json, also on failure. Exit status is 0 when
// all enabled checks pass, 1 when a check fails and 2 on configuration errors.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rollover/control.hpp"
#include "rollover/curves.hpp"
#include "rollover/model.hpp"
#include "rollover/pde.hpp"
#include "rollover/risk.hpp"
#include "rollover/sim.hpp"

namespace fs = std::filesystem;
using namespace rollover;

namespace {

constexpr const char* kVersion = "1.0.0";

/// A configuration problem; mapped to exit status 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Options {
    std::string command;
    std::string model_path;
    std::string market_path;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    double dt = 1e-3;
    std::size_t paths = 10000;
    std::string grid = "401,401";
    std::string etas = "0.25,0.5,0.75,1.5,2,4";
    std::string epsilons = "0.1,0.5";
    double gamma = -1.0;
    std::string gammas = "-4,-2,-1,-0.5,-0.1,0";
    std::string maturities = "0,0.5,1,2,3";
    std::string tenors = "0.25,0.5,1";
    std::string probes;
    std::string problems = "bond,spot,fwd";
    std::string method = "pde";
    double T = 1.0;
    double delta = 0.5;
    double t = 0.0;
    std::optional<double> x;
    double phi_offset = 0.0;
    unsigned workers = 0;
    std::size_t record_stride = 1;
    bool antithetic = false;
    bool binary = false;
};

std::vector<double> parse_list(const std::string& s, const char* what) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError(std::string("cannot parse ") + what + " entry '" + item + "'");
        }
    }
    return out;
}

/// "t:x,t:x,..."
std::vector<Probe> parse_probes(const std::string& s) {
    std::vector<Probe> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw ConfigError("probes are written t:x, got '" + item + "'");
        const auto t = parse_list(item.substr(0, colon), "probe time");
        const auto x = parse_list(item.substr(colon + 1), "probe point");
        if (t.size() != 1 || x.size() != 1) throw ConfigError("malformed probe '" + item + "'");
        out.emplace_back(t[0], x[0]);
    }
    return out;
}

/// Shared state of one invocation: output directory, checks, timings.
class Run {
public:
    explicit Run(Options o) : o_(std::move(o)) {}

    Options& options() { return o_; }
    const Options& options() const { return o_; }
    const fs::path& out() const { return out_; }

    void prepare_output() {
        out_ = o_.out_dir;
        std::error_code ec;
        fs::create_directories(out_, ec);
        if (ec || !fs::is_directory(out_)) throw ConfigError("cannot create output directory " + o_.out_dir);
    }

    std::uint64_t seed() const { return *o_.seed; }

    template <class Fn>
    auto stage(const std::string& name, Fn&& fn) {
        const auto start = std::chrono::steady_clock::now();
        struct Record {
            Run* run;
            std::string name;
            std::chrono::steady_clock::time_point start;
            ~Record() {
                run->timings_[name] =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            }
        } rec{this, name, start};
        return fn();
    }

    void check(const std::string& name, bool pass, const std::string& detail) {
        checks_.push_back({{"name", name}, {"pass", pass}, {"detail", detail}});
        std::cout << (pass ? "[pass] " : "[FAIL] ") << name << ": " << detail << "\n";
    }

    void write_json(const std::string& file, const json& j) const {
        std::ofstream f(out_ / file);
        if (!f) throw ConfigError("cannot write " + (out_ / file).string());
        f << j.dump(2) << "\n";
        if (!f) throw std::runtime_error("failed writing " + file);
    }

    std::ofstream open(const std::string& file) const {
        std::ofstream f(out_ / file, std::ios::binary);
        if (!f) throw ConfigError("cannot write " + (out_ / file).string());
        return f;
    }

    bool all_passed() const {
        for (const auto& c : checks_)
            if (!c.at("pass").get<bool>()) return false;
        return true;
    }

    json resolved_config() const {
        return {{"command", o_.command},
                {"model", o_.model_path},
                {"market", o_.market_path},
                {"out", o_.out_dir},
                {"seed", o_.seed ? json(*o_.seed) : json(nullptr)},
                {"dt", o_.dt},
                {"paths", o_.paths},
                {"grid", o_.grid},
                {"etas", o_.etas},
                {"epsilons", o_.epsilons},
                {"gamma", o_.gamma},
                {"gammas", o_.gammas},
                {"maturities", o_.maturities},
                {"tenors", o_.tenors},
                {"probes", o_.probes},
                {"problems", o_.problems},
                {"method", o_.method},
                {"T", o_.T},
                {"delta", o_.delta},
                {"t", o_.t},
                {"x", o_.x ? json(*o_.x) : json(nullptr)},
                {"phi_offset", o_.phi_offset},
                {"workers", o_.workers},
                {"record_stride", o_.record_stride},
                {"antithetic", o_.antithetic},
                {"binary", o_.binary}};
    }

    /// Always called; a failure to write the manifest is reported on stderr only.
    void write_manifest(const std::string& status, const std::string& error) const {
        json failures = json::array();
        for (const auto& c : checks_)
            if (!c.at("pass").get<bool>()) failures.push_back(c.at("name"));
        json m = {{"tool", "rollover"},
                  {"version", kVersion},
                  {"status", status},
                  {"config", resolved_config()},
                  {"timings_seconds", timings_},
                  {"checks", checks_},
                  {"failures", failures}};
        if (!error.empty()) m["error"] = error;
        try {
            fs::path dir = out_.empty() ? fs::path(o_.out_dir) : out_;
            std::error_code ec;
            fs::create_directories(dir, ec);
            std::ofstream f(dir / "manifest.json");
            f << m.dump(2) << "\n";
        } catch (const std::exception& e) {
            std::cerr << "could not write manifest: " << e.what() << "\n";
        }
    }

private:
    Options o_;
    fs::path out_;
    json checks_ = json::array();
    std::map<std::string, double> timings_;
};

// ---------------------------------------------------------------------------
// Inputs

struct Inputs {
    FactorModelSpec model;
    std::optional<AssetMarketSpec> market;
};

json read_json(const std::string& path, const char* what) {
    if (path.empty()) throw ConfigError(std::string("--") + what + " is required for this command");
    std::ifstream in(path);
    if (!in) throw ConfigError(std::string("cannot open ") + what + " file " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed ") + what + " file: " + e.what());
    }
}

/// Model files may also use {"builder": "constant_market", r, theta, sigma, horizon},
/// which supplies the matching asset market as well.
Inputs load_inputs(const Options& o) {
    const json j = read_json(o.model_path, "model");
    Inputs in;
    try {
        if (j.value("builder", std::string()) == "constant_market") {
            const CoefficientField phi =
                j.contains("phi") ? CoefficientField::from_json(j.at("phi")) : CoefficientField::constant(0.0);
            auto cm = build_constant_market(j.value("r", 0.02), j.value("theta", 0.3), j.value("sigma", 0.2),
                                            j.value("horizon", 1.0), phi);
            in.model = std::move(cm.model);
            in.market = std::move(cm.market);
        } else {
            in.model = model_from_json(j);
        }
        if (!o.market_path.empty()) {
            in.market = market_from_json(read_json(o.market_path, "market"));
            in.market->validate(in.model.domain, in.model.horizon);
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("invalid model or market: ") + e.what());
    }
    return in;
}

std::pair<std::size_t, std::size_t> parse_grid(const std::string& s) {
    const auto v = parse_list(s, "grid");
    if (v.size() != 2 || v[0] < 3 || v[1] < 2 || v[0] != std::floor(v[0]) || v[1] != std::floor(v[1]))
        throw ConfigError("--grid expects NX,NT with NX >= 3 and NT >= 2");
    return {static_cast<std::size_t>(v[0]), static_cast<std::size_t>(v[1])};
}

SimConfig sim_config(const Run& run, double T) {
    const auto& o = run.options();
    SimConfig c;
    c.t0 = o.t;
    c.T = T;
    c.dt = o.dt;
    c.n_paths = o.paths;
    c.seed = run.seed();
    c.antithetic = o.antithetic;
    c.workers = o.workers;
    c.record_stride = o.record_stride;
    return c;
}

double start_point(const Options& o, const FactorModelSpec& model) {
    if (model.n != 1) throw ConfigError("this command needs a one-factor model");
    return o.x ? *o.x : model.x0[0];
}

/// Five probes spread over the time window and the middle of the domain.
std::vector<Probe> default_probes(const FactorModelSpec& model, double T) {
    const double lo = model.domain.lower[0], w = model.domain.width(0);
    const double c = model.x0[0];
    return {{0.0, c},
            {0.2 * T, lo + 0.35 * w},
            {0.4 * T, lo + 0.65 * w},
            {0.6 * T, lo + 0.45 * w},
            {0.8 * T, lo + 0.55 * w}};
}

// ---------------------------------------------------------------------------
// Commands

void cmd_check_model(Run& run, const Inputs& in) {
    const auto& model = in.model;
    if (!model.v_star) throw ConfigError("check-model needs a model with v_star");
    // 10 x 10 interior lattice in (t, x_1); other coordinates at x0.
    std::vector<std::pair<double, std::vector<double>>> points;
    for (int i = 1; i <= 10; ++i)
        for (int k = 1; k <= 10; ++k) {
            std::vector<double> x = model.x0;
            x[0] = model.domain.lower[0] + model.domain.width(0) * k / 11.0;
            points.emplace_back(model.horizon * i / 11.0, x);
        }
    const auto res = run.stage("gop_residuals", [&] { return gop_consistency_residuals(model, points); });
    auto f = run.open("gop_residuals.csv");
    f << "t,x,v_star,cond1_relative,cond2_relative\n";
    for (const auto& p : res.points) {
        double c1 = 0.0;
        for (double v : p.cond1_relative) c1 = std::max(c1, std::abs(v));
        f << format_double(p.t) << ',' << format_double(p.x[0]) << ',' << format_double(p.v) << ','
          << format_double(c1) << ',' << format_double(std::abs(p.cond2_relative)) << '\n';
    }
    run.write_json("model.json", to_json(model));
    run.check("gop_consistency", res.max_relative() <= 1e-6,
              "max relative residual " + format_double(res.max_relative()) + " over " +
                  std::to_string(res.points.size()) + " points (tolerance 1e-6)");
}

void cmd_simulate(Run& run, const Inputs& in) {
    const auto& model = in.model;
    if (!model.v_star) throw ConfigError("simulate needs a model with v_star");
    const SimConfig cfg = sim_config(run, run.options().T);
    std::vector<double> x0 = model.x0;
    if (run.options().x) x0[0] = *run.options().x;
    const auto bundle = run.stage("simulate", [&] { return simulate(model, cfg, x0, model.v(cfg.t0, x0)); });
    run.stage("write_paths", [&] {
        auto f = run.open("paths.csv");
        write_csv(bundle, f);
        if (run.options().binary) {
            auto b = run.open("paths.bin");
            write_binary(bundle, b);
        }
        return 0;
    });
    json summary = {{"n_paths", bundle.n_paths},
                    {"n_times", bundle.n_times()},
                    {"flagged_fraction", bundle.flagged_fraction},
                    {"nonfinite", bundle.nonfinite},
                    {"reliable", bundle.reliable}};
    for (const char* name : {"Y", "S0tilde/V*"}) {
        const auto dt = empirical_drift_test(bundle, name);
        summary["drift"][name] = {{"mean_increment", dt.mean_increment}, {"stderr", dt.std_error}, {"z", dt.z}};
    }
    run.write_json("simulation.json", summary);
    run.check("simulation_reliable", bundle.reliable,
              "flagged fraction " + format_double(bundle.flagged_fraction) + ", non-finite " +
                  std::to_string(bundle.nonfinite));
    const auto y = empirical_drift_test(bundle, "Y");
    run.check("deflator_drift", std::abs(y.z) <= 3.0, "Y drift z = " + format_double(y.z));
}

void cmd_solve(Run& run, const Inputs& in) {
    const auto& o = run.options();
    const auto& model = in.model;
    if (!model.v_star) throw ConfigError("solve needs a model with v_star");
    if (model.n != 1) throw ConfigError("solve needs a one-factor model");
    const auto [nx, nt] = parse_grid(o.grid);
    if (!(o.T > o.t && o.T + o.delta <= model.horizon + 1e-12))
        throw ConfigError("need t < T and T + delta within the horizon");
    const Grid1D grid = model_grid(model, o.t, o.T, nx, nt);
    const auto zcb = run.stage("zcb", [&] { return solve_parabolic(zcb_problem(model, o.T), grid); });
    const auto spot = run.stage("spot", [&] { return solve_parabolic(spot_spread_problem(model, o.T), grid); });
    const auto fwd = run.stage("forward", [&] { return solve_forward_spread(model, o.t, o.T, o.delta, nx, nt); });
    for (const auto& [file, u] : std::vector<std::pair<std::string, const GridFunction*>>{
             {"pde_zcb.csv", &zcb}, {"pde_spot.csv", &spot}, {"pde_fwd.csv", &fwd.s_fwd}, {"pde_long.csv", &fwd.s_long}}) {
        auto f = run.open(file);
        write_csv(*u, f);
    }
    // s_fwd(T, .) against s_long(T, .) on the shared nodes.
    const std::size_t last = fwd.s_fwd.grid.n_t - 1;
    double worst = 0.0;
    for (std::size_t j = 0; j < nx; ++j)
        worst = std::max(worst, std::abs(fwd.s_fwd.at(last, j) - fwd.s_long.at(0, j)));
    const double x = start_point(o, model);
    run.write_json("solve.json", {{"zcb", zcb.metadata()},
                                  {"spot", spot.metadata()},
                                  {"forward", fwd.s_fwd.metadata()},
                                  {"at_start", {{"t", o.t},
                                                {"x", x},
                                                {"p_hat", zcb.interpolate(o.t, x)},
                                                {"spot_spread", spot.interpolate(o.t, x)},
                                                {"forward_spread", fwd.s_fwd.interpolate(o.t, x)}}}});
    run.check("forward_terminal_condition", worst <= 1e-10,
              "max |s_fwd(T,x) - s_long(T,x)| " + format_double(worst));
    if (model.phi_nonnegative())
        run.check("spread_floor", spot.min() >= 1.0 - 1e-8, "min spot spread " + format_double(spot.min()));
}

TermStructureReport curve_report(Run& run, const FactorModelSpec& model) {
    const auto& o = run.options();
    CurveOptions co;
    try {
        co.method = curve_method_from_string(o.method);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    const auto [nx, nt] = parse_grid(o.grid);
    co.n_x = nx;
    co.levels_per_year = nt;
    co.mc = sim_config(run, model.horizon);
    std::vector<double> x = model.x0;
    if (o.x) x[0] = *o.x;
    return term_structure_report(model, o.t, x, parse_list(o.maturities, "maturity"), parse_list(o.tenors, "tenor"),
                                 co);
}

TermStructureReport cmd_curve(Run& run, const Inputs& in) {
    const auto rep = run.stage("curve", [&] { return curve_report(run, in.model); });
    run.write_json("term_structure.json", rep.to_json());
    auto f = run.open("term_structure.csv");
    write_csv(rep, f);
    double worst_par = 0.0;
    for (const auto& r : rep.tenors) worst_par = std::max(worst_par, std::abs(r.sps_value_par));
    run.check("spread_flags", rep.flags.empty(), std::to_string(rep.flags.size()) + " spread flags");
    run.check("par_sps", worst_par == 0.0, "max |par SPS value| " + format_double(worst_par));
    return rep;
}

VerifyOptions verify_options(Run& run) {
    const auto& o = run.options();
    VerifyOptions vo;
    const auto [nx, nt] = parse_grid(o.grid);
    vo.n_x = nx;
    vo.n_t = nt;
    vo.mc = sim_config(run, o.T);
    vo.mc.t0 = 0.0;
    vo.epsilons = parse_list(o.epsilons, "epsilon");
    return vo;
}

std::vector<VerificationReport> run_control(Run& run, const FactorModelSpec& model) {
    const auto& o = run.options();
    if (model.n != 1) throw ConfigError("verify-control needs a one-factor model");
    std::vector<double> lower, upper;
    for (double e : parse_list(o.etas, "eta")) {
        if (e > 0.0 && e < 1.0)
            lower.push_back(e);
        else if (e > 1.0 || e < 0.0)
            upper.push_back(e);
        else
            throw ConfigError("eta must avoid 0 and 1");
    }
    const auto probes = o.probes.empty() ? default_probes(model, o.T) : parse_probes(o.probes);
    const VerifyOptions vo = verify_options(run);
    std::vector<VerificationReport> reports;
    std::stringstream ss(o.problems);
    std::string name;
    while (std::getline(ss, name, ',')) {
        if (name == "bond")
            reports.push_back(run.stage("control_bond", [&] { return verify_bond_representation(model, o.T, probes, vo); }));
        else if (name == "spot")
            reports.push_back(run.stage(
                "control_spot", [&] { return verify_spot_representation(model, o.T, lower, upper, probes, vo); }));
        else if (name == "fwd")
            reports.push_back(run.stage("control_fwd", [&] {
                return verify_fwd_representation(model, o.T, o.delta, lower, upper, probes, vo);
            }));
        else
            throw ConfigError("unknown control problem '" + name + "' (bond, spot, fwd)");
    }
    for (const auto& r : reports) {
        run.write_json("control_" + r.problem + ".json", r.to_json());
        for (const auto& c : r.clauses) run.check(r.problem + "." + c.name, c.pass, c.detail);
    }
    return reports;
}

void cmd_verify_control(Run& run, const Inputs& in) { run_control(run, in.model); }

FactorModelSpec run_rs_spread(Run& run, const Inputs& in) {
    const auto& o = run.options();
    if (!in.market) throw ConfigError("rs-spread needs --market or a constant_market model file");
    RiskParams params;
    params.gamma = o.gamma;
    params.xi = CoefficientField::constant_vector(std::vector<double>(in.model.n, 0.0));
    FactorModelSpec endo;
    try {
        endo = rs_spread_pipeline(in.model, *in.market, params);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    run.write_json("model_rs.json", to_json(endo));
    FactorModelSpec tested = endo;
    if (o.phi_offset != 0.0) tested.phi = CoefficientField::transform(endo.phi, 1.0, o.phi_offset);
    SimConfig cfg = sim_config(run, std::min(o.T, tested.horizon));
    cfg.t0 = 0.0;
    const auto rep = run.stage("martingale", [&] { return verify_rs_martingale(tested, *in.market, params, cfg); });
    json j = rep.to_json();
    j["phi_offset"] = o.phi_offset;
    run.write_json("martingale.json", j);
    const std::string detail = "z = " + format_double(rep.drift.z) + " for Y*S0tilde with phi(0,x0) = " +
                               format_double(rep.phi_at_start);
    if (o.phi_offset == 0.0)
        run.check("martingale_closure", rep.pass, detail);
    else
        run.check("offset_detected", !rep.pass, detail + " (offset " + format_double(o.phi_offset) + ")");
    return endo;
}

void cmd_rs_spread(Run& run, const Inputs& in) { run_rs_spread(run, in); }

void cmd_report(Run& run, const Inputs& in) {
    const auto& o = run.options();
    if (in.model.v_star) cmd_check_model(run, in);
    {
        const auto rep = cmd_curve(run, in);
        auto f = run.open("spread_vs_maturity.csv");
        f << "T,S,S_stderr,P,L,F\n";
        for (const auto& r : rep.maturities)
            f << format_double(r.T) << ',' << format_double(r.S) << ',' << format_double(r.S_stderr) << ','
              << format_double(r.P) << ',' << format_double(r.L) << ',' << format_double(r.F) << '\n';
    }
    const auto reports = run_control(run, in.model);
    {
        auto f = run.open("identity_vs_eta.csv");
        f << "problem,eta,t,x,reference,recovered,recovered_stderr,error\n";
        for (const auto& r : reports)
            for (const auto& p : r.probes)
                f << r.problem << ',' << format_double(p.eta) << ',' << format_double(p.t) << ','
                  << format_double(p.x) << ',' << format_double(p.reference) << ',' << format_double(p.recovered)
                  << ',' << format_double(p.recovered_stderr) << ',' << format_double(p.error) << '\n';
    }
    if (in.market) {
        run_rs_spread(run, in);
        auto f = run.open("phi_vs_gamma.csv");
        f << "gamma,phi\n";
        for (double g : parse_list(o.gammas, "gamma")) {
            RiskParams p;
            p.gamma = g;
            p.xi = CoefficientField::constant_vector(std::vector<double>(in.model.n, 0.0));
            const auto m = rs_spread_pipeline(in.model, *in.market, p);
            f << format_double(g) << ',' << format_double(m.phi.scalar(0.0, m.x0)) << '\n';
        }
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Roll-over risk term-structure lab"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    Options o;
    std::uint64_t seed_flag = 0;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--model", o.model_path, "Model JSON file");
        sub->add_option("--market", o.market_path, "Asset market JSON file");
        sub->add_option("--out", o.out_dir, "Output directory")->capture_default_str();
        sub->add_option("--seed", seed_flag, "Random seed (default: ROLLOVER_SEED or 42)");
        sub->add_option("--dt", o.dt, "Monte-Carlo time step")->capture_default_str()->check(CLI::PositiveNumber);
        sub->add_option("--paths", o.paths, "Monte-Carlo paths")->capture_default_str()->check(CLI::PositiveNumber);
        sub->add_option("--grid", o.grid, "PDE grid NX,NT")->capture_default_str();
        sub->add_option("--etas", o.etas, "Comma-separated exponents")->capture_default_str();
        sub->add_option("--eps", o.epsilons, "Comma-separated perturbation sizes")->capture_default_str();
        sub->add_option("--gamma", o.gamma, "Risk-aversion exponent")->capture_default_str();
        sub->add_option("--gammas", o.gammas, "Exponents for the phi-vs-gamma table")->capture_default_str();
        sub->add_option("--maturities", o.maturities, "Comma-separated maturities")->capture_default_str();
        sub->add_option("--tenors", o.tenors, "Comma-separated tenors")->capture_default_str();
        sub->add_option("--probes", o.probes, "Comma-separated t:x probes");
        sub->add_option("--problems", o.problems, "Control problems: bond,spot,fwd")->capture_default_str();
        sub->add_option("--method", o.method, "pde or mc")->capture_default_str();
        sub->add_option("--T", o.T, "Maturity / horizon of the run")->capture_default_str();
        sub->add_option("--delta", o.delta, "Tenor of the forward problem")->capture_default_str();
        sub->add_option("--t", o.t, "Valuation time")->capture_default_str();
        sub->add_option("--x", o.x, "Valuation point (default x0)");
        sub->add_option("--phi-offset", o.phi_offset, "Constant added to the endogenous spread")->capture_default_str();
        sub->add_option("--workers", o.workers, "Worker threads (0 = all cores)")->capture_default_str();
        sub->add_option("--record-stride", o.record_stride, "Keep every k-th time level")->capture_default_str();
        sub->add_flag("--antithetic", o.antithetic, "Antithetic path pairs");
        sub->add_flag("--binary", o.binary, "Also write the binary path dump");
    };

    const std::vector<std::pair<std::string, std::string>> commands{
        {"check-model", "GOP consistency residuals"},
        {"simulate", "Simulate paths and write them as CSV"},
        {"solve", "Solve the ZCB, spot and forward PDEs"},
        {"curve", "Term-structure report"},
        {"verify-control", "Verify the control representations"},
        {"rs-spread", "Endogenous spread and martingale test"},
        {"report", "All of the above plus plot-ready tables"}};
    for (const auto& [name, help] : commands) common(app.add_subcommand(name, help));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        if (code == 0) return 0;
        Run failed(o);
        failed.write_manifest("config_error", e.what());
        return 2;
    }
    o.command = app.get_subcommands().front()->get_name();
    const bool seed_given = app.get_subcommands().front()->count("--seed") > 0;

    Run run(o);
    try {
        if (seed_given) {
            run.options().seed = seed_flag;
        } else if (const char* env = std::getenv("ROLLOVER_SEED")) {
            try {
                std::size_t used = 0;
                run.options().seed = std::stoull(env, &used);
                if (used != std::string(env).size()) throw std::invalid_argument(env);
            } catch (const std::exception&) {
                throw ConfigError(std::string("ROLLOVER_SEED is not an integer: ") + env);
            }
        } else {
            run.options().seed = 42;
        }
        run.prepare_output();
        const Inputs in = load_inputs(run.options());
        const std::string& c = o.command;
        if (c == "check-model") cmd_check_model(run, in);
        else if (c == "simulate") cmd_simulate(run, in);
        else if (c == "solve") cmd_solve(run, in);
        else if (c == "curve") cmd_curve(run, in);
        else if (c == "verify-control") cmd_verify_control(run, in);
        else if (c == "rs-spread") cmd_rs_spread(run, in);
        else if (c == "report") cmd_report(run, in);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        run.write_manifest("config_error", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        run.write_manifest("config_error", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        run.write_manifest("error", e.what());
        return 1;
    }
    const bool ok = run.all_passed();
    run.write_manifest(ok ? "pass" : "fail", "");
    return ok ? 0 : 1;
}
