#include "rollover/sim.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "rollover/detail/engine.hpp"

namespace rollover {

namespace detail {

unsigned resolve_workers(unsigned requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 16) {
        double s = 0.0;
        for (double e : v) s += e;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

Lattice make_lattice(double t0, double t1, double dt) {
    if (!(t1 > t0)) throw std::invalid_argument("time window must have positive length");
    if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
    Lattice lat;
    lat.t0 = t0;
    lat.t_end = t1;
    lat.steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround((t1 - t0) / dt)));
    lat.h = (t1 - t0) / static_cast<double>(lat.steps);
    return lat;
}

Estimate summarize(std::span<const double> values, std::uint64_t seed, bool antithetic) {
    std::vector<double> units;
    Estimate e;
    e.seed = seed;
    e.n_paths = values.size();
    const std::size_t stride = antithetic ? 2 : 1;
    units.reserve(values.size() / stride + 1);
    for (std::size_t p = 0; p < values.size(); p += stride) {
        double v = values[p];
        if (antithetic && p + 1 < values.size()) v = 0.5 * (v + values[p + 1]);
        if (!std::isfinite(v)) {
            ++e.nonfinite;
            continue;
        }
        units.push_back(v);
    }
    if (units.empty()) {
        e.mean = std::nan("");
        e.std_error = std::nan("");
        e.reliable = false;
        return e;
    }
    const double m = pairwise_sum(units) / static_cast<double>(units.size());
    std::vector<double> sq(units.size());
    for (std::size_t i = 0; i < units.size(); ++i) sq[i] = (units[i] - m) * (units[i] - m);
    const double var = units.size() > 1 ? pairwise_sum(sq) / static_cast<double>(units.size() - 1) : 0.0;
    e.mean = m;
    e.std_error = std::sqrt(var / static_cast<double>(units.size()));
    if (e.nonfinite > 0) e.reliable = false;
    return e;
}

Estimate ratio_estimate(std::span<const double> num, std::span<const double> den, std::uint64_t seed,
                        bool antithetic) {
    const Estimate en = summarize(num, seed, antithetic);
    const Estimate ed = summarize(den, seed, antithetic);
    Estimate e;
    e.seed = seed;
    e.n_paths = num.size();
    e.nonfinite = std::max(en.nonfinite, ed.nonfinite);
    e.reliable = en.reliable && ed.reliable;
    e.mean = en.mean / ed.mean;
    // Delta method on (N, D) with the sample covariance of the sampling units.
    const std::size_t stride = antithetic ? 2 : 1;
    std::vector<double> resid;
    resid.reserve(num.size() / stride + 1);
    for (std::size_t p = 0; p < num.size(); p += stride) {
        double a = num[p], b = den[p];
        if (antithetic && p + 1 < num.size()) {
            a = 0.5 * (a + num[p + 1]);
            b = 0.5 * (b + den[p + 1]);
        }
        if (!std::isfinite(a) || !std::isfinite(b)) continue;
        const double z = (a - e.mean * b) / ed.mean;
        resid.push_back(z * z);
    }
    const double k = static_cast<double>(resid.size());
    e.std_error = k > 1 ? std::sqrt(pairwise_sum(resid) / (k - 1.0) / k) : 0.0;
    return e;
}

void apply_tally(Estimate& e, const PathTally& tally) {
    std::size_t flagged = 0;
    for (auto f : tally.flagged) flagged += f;
    const double total = static_cast<double>(tally.flagged.size()) * static_cast<double>(tally.steps);
    e.flagged_fraction = total > 0 ? static_cast<double>(flagged) / total : 0.0;
    if (e.flagged_fraction > 0.01) e.reliable = false;
}

}  // namespace detail

namespace {

using detail::Lattice;

struct Scratch {
    std::vector<double> f, g, theta, dW;
    explicit Scratch(const FactorModelSpec& m) : f(m.n), g(m.n * m.d), theta(m.d), dW(m.d) {}
};

/// One segment of the uncontrolled system started at x. Integrates r and phi
/// alongside the factor; returns true if the path was reflected.
struct SegmentResult {
    double int_r = 0.0;
    double int_phi = 0.0;
    std::uint32_t flagged = 0;
};

SegmentResult run_segment(const FactorModelSpec& model, const detail::ModelFields& mf, const Lattice& lat,
                          std::span<double> x, GaussianStream& rng, Scratch& s) {
    SegmentResult out;
    const double sqrt_h = std::sqrt(lat.h);
    for (std::size_t k = 0; k < lat.steps; ++k) {
        const double t = lat.time(k);
        mf.f.eval(t, x, s.f);
        mf.g.eval(t, x, s.g);
        out.int_r += mf.r.scalar(t, x) * lat.h;
        out.int_phi += mf.phi.scalar(t, x) * lat.h;
        detail::draw(rng, s.dW, sqrt_h);
        if (detail::advance(model.domain, x, s.f, s.g, s.dW, lat.h)) ++out.flagged;
    }
    return out;
}

void require_v_star(const FactorModelSpec& model) {
    if (!model.v_star) throw std::invalid_argument("model does not provide v_star");
}

void require_start(const FactorModelSpec& model, double t, double T, std::span<const double> x,
                   const SimConfig& config) {
    if (x.size() != model.n) throw std::invalid_argument("start point has the wrong dimension");
    if (!model.domain.contains(x)) throw std::invalid_argument("start point lies outside the domain");
    if (!(t >= 0.0 && t < T && T <= model.horizon + 1e-12))
        throw std::invalid_argument("need 0 <= t < T <= horizon");
    if (!(config.dt > 0.0) || config.dt >= T - t) throw std::invalid_argument("dt must lie in (0, T - t)");
    if (config.n_paths < 1) throw std::invalid_argument("n_paths must be at least 1");
}

}  // namespace

void SimConfig::validate(double horizon) const {
    if (!(t0 >= 0.0 && t0 < T && T <= horizon + 1e-12)) throw std::invalid_argument("need 0 <= t0 < T <= horizon");
    if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
    if (dt >= T - t0) throw std::invalid_argument("dt must be smaller than T - t0");
    if (n_paths < 1) throw std::invalid_argument("n_paths must be at least 1");
    if (record_stride < 1) throw std::invalid_argument("record_stride must be at least 1");
}

json Estimate::to_json() const {
    return {{"mean", mean}, {"stderr", std_error}, {"n_paths", n_paths}, {"seed", seed}};
}

PathBundle simulate(const FactorModelSpec& model, const SimConfig& config, std::span<const double> x_start,
                    double v_start) {
    config.validate(model.horizon);
    if (!(v_start > 0.0) || !std::isfinite(v_start)) throw std::invalid_argument("v_start must be positive");
    if (x_start.size() != model.n || !model.domain.contains(x_start))
        throw std::invalid_argument("x_start must lie in the domain");

    const Lattice lat = detail::make_lattice(config.t0, config.T, config.dt);
    std::vector<std::size_t> recorded;
    for (std::size_t k = 0; k <= lat.steps; k += config.record_stride) recorded.push_back(k);
    if (recorded.back() != lat.steps) recorded.push_back(lat.steps);

    PathBundle b;
    b.n = model.n;
    b.n_paths = config.n_paths;
    b.antithetic = config.antithetic;
    for (auto k : recorded) b.time.push_back(lat.time(k));
    const std::size_t nt = b.time.size();
    b.x.resize(config.n_paths * nt * model.n);
    b.v_star.resize(config.n_paths * nt);
    b.s0.resize(config.n_paths * nt);
    b.s0_tilde.resize(config.n_paths * nt);
    b.y.resize(config.n_paths * nt);

    detail::PathTally tally;
    tally.flagged.assign(config.n_paths, 0);
    tally.steps = lat.steps;
    std::vector<std::uint32_t> bad(config.n_paths, 0);
    const double sqrt_h = std::sqrt(lat.h);
    const double log_v0 = std::log(v_start);

    detail::parallel_for(config.n_paths, config.workers, [&](std::size_t begin, std::size_t end) {
        Scratch s(model);
        const detail::ModelFields mf(model);
        std::vector<double> x(model.n);
        for (std::size_t p = begin; p < end; ++p) {
            auto rng = detail::path_stream(config.seed, p, config.antithetic);
            std::copy(x_start.begin(), x_start.end(), x.begin());
            double log_v = log_v0, log_s0 = 0.0, log_st = 0.0;
            std::size_t next = 0;
            auto record = [&](std::size_t slot) {
                const std::size_t i = p * nt + slot;
                std::copy(x.begin(), x.end(), b.x.begin() + static_cast<std::ptrdiff_t>(i * model.n));
                b.v_star[i] = std::exp(log_v);
                b.s0[i] = std::exp(log_s0);
                b.s0_tilde[i] = std::exp(log_st);
                b.y[i] = std::exp(log_s0 - log_v);
                for (double* v : {&b.v_star[i], &b.s0[i], &b.s0_tilde[i], &b.y[i]})
                    if (!std::isfinite(*v) || !(*v > 0.0)) ++bad[p];
            };
            for (std::size_t k = 0; k <= lat.steps; ++k) {
                if (next < nt && recorded[next] == k) record(next++);
                if (k == lat.steps) break;
                const double t = lat.time(k);
                mf.f.eval(t, x, s.f);
                mf.g.eval(t, x, s.g);
                mf.theta.eval(t, x, s.theta);
                const double r = mf.r.scalar(t, x);
                const double phi = mf.phi.scalar(t, x);
                detail::draw(rng, s.dW, sqrt_h);
                double th2 = 0.0, th_dw = 0.0;
                for (std::size_t j = 0; j < model.d; ++j) {
                    th2 += s.theta[j] * s.theta[j];
                    th_dw += s.theta[j] * s.dW[j];
                }
                log_v += (r + 0.5 * th2) * lat.h + th_dw;
                log_s0 += r * lat.h;
                log_st += (r + phi) * lat.h;
                if (detail::advance(model.domain, x, s.f, s.g, s.dW, lat.h)) ++tally.flagged[p];
            }
        }
    });

    for (auto f : tally.flagged) b.flagged_steps += f;
    for (auto v : bad) b.nonfinite += v;
    b.flagged_fraction = static_cast<double>(b.flagged_steps) /
                         (static_cast<double>(config.n_paths) * static_cast<double>(lat.steps));
    b.reliable = b.flagged_fraction <= 0.01 && b.nonfinite == 0;
    return b;
}

Estimate mc_spot_spread(const FactorModelSpec& model, double T, double t, std::span<const double> x,
                        const SimConfig& config) {
    require_v_star(model);
    require_start(model, t, T, x, config);
    const Lattice lat = detail::make_lattice(t, T, config.dt);
    const double v_now = model.v(t, x);
    std::vector<double> values(config.n_paths);
    detail::PathTally tally{std::vector<std::uint32_t>(config.n_paths, 0), lat.steps};

    detail::parallel_for(config.n_paths, config.workers, [&](std::size_t begin, std::size_t end) {
        Scratch s(model);
        const detail::ModelFields mf(model);
        std::vector<double> xp(model.n);
        for (std::size_t p = begin; p < end; ++p) {
            auto rng = detail::path_stream(config.seed, p, config.antithetic);
            std::copy(x.begin(), x.end(), xp.begin());
            const auto seg = run_segment(model, mf, lat, xp, rng, s);
            tally.flagged[p] = seg.flagged;
            values[p] = v_now * std::exp(seg.int_r + seg.int_phi) / model.v(T, xp);
        }
    });
    Estimate e = detail::summarize(values, config.seed, config.antithetic);
    detail::apply_tally(e, tally);
    return e;
}

Estimate mc_benchmarked_zcb(const FactorModelSpec& model, double T, double t, std::span<const double> x,
                            const SimConfig& config) {
    require_v_star(model);
    require_start(model, t, T, x, config);
    const Lattice lat = detail::make_lattice(t, T, config.dt);
    std::vector<double> values(config.n_paths);
    detail::PathTally tally{std::vector<std::uint32_t>(config.n_paths, 0), lat.steps};

    detail::parallel_for(config.n_paths, config.workers, [&](std::size_t begin, std::size_t end) {
        Scratch s(model);
        const detail::ModelFields mf(model);
        std::vector<double> xp(model.n);
        for (std::size_t p = begin; p < end; ++p) {
            auto rng = detail::path_stream(config.seed, p, config.antithetic);
            std::copy(x.begin(), x.end(), xp.begin());
            const auto seg = run_segment(model, mf, lat, xp, rng, s);
            tally.flagged[p] = seg.flagged;
            values[p] = 1.0 / model.v(T, xp);
        }
    });
    Estimate e = detail::summarize(values, config.seed, config.antithetic);
    detail::apply_tally(e, tally);
    return e;
}

ForwardSpreadEstimate mc_forward_spread(const FactorModelSpec& model, double T, double delta, double t,
                                        std::span<const double> x, const SimConfig& config) {
    require_v_star(model);
    if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");
    if (T + delta > model.horizon + 1e-12) throw std::invalid_argument("T + delta exceeds the horizon");
    if (x.size() != model.n || !model.domain.contains(x)) throw std::invalid_argument("x must lie in the domain");
    if (!(t >= 0.0 && t <= T)) throw std::invalid_argument("need 0 <= t <= T");
    if (!(config.dt > 0.0) || config.dt >= delta) throw std::invalid_argument("dt must lie in (0, delta)");

    const bool has_first = T > t;
    const Lattice first = has_first ? detail::make_lattice(t, T, config.dt) : Lattice{t, 0.0, 0, t};
    const Lattice second = detail::make_lattice(T, T + delta, config.dt);
    std::vector<double> num(config.n_paths), den(config.n_paths);
    detail::PathTally tally{std::vector<std::uint32_t>(config.n_paths, 0), first.steps + second.steps};

    detail::parallel_for(config.n_paths, config.workers, [&](std::size_t begin, std::size_t end) {
        Scratch s(model);
        const detail::ModelFields mf(model);
        std::vector<double> xp(model.n);
        for (std::size_t p = begin; p < end; ++p) {
            auto rng = detail::path_stream(config.seed, p, config.antithetic);
            std::copy(x.begin(), x.end(), xp.begin());
            std::uint32_t flagged = 0;
            if (has_first) flagged += run_segment(model, mf, first, xp, rng, s).flagged;
            den[p] = 1.0 / model.v(T, xp);
            const auto seg = run_segment(model, mf, second, xp, rng, s);
            flagged += seg.flagged;
            tally.flagged[p] = flagged;
            num[p] = std::exp(seg.int_r + seg.int_phi) / model.v(T + delta, xp);
        }
    });

    ForwardSpreadEstimate out;
    out.numerator = detail::summarize(num, config.seed, config.antithetic);
    out.p_hat = detail::summarize(den, config.seed, config.antithetic);
    out.spread = detail::ratio_estimate(num, den, config.seed, config.antithetic);
    for (Estimate* e : {&out.numerator, &out.p_hat, &out.spread}) detail::apply_tally(*e, tally);
    return out;
}

Estimate real_world_price(const FactorModelSpec& model, const Payoff& payoff, double t, std::span<const double> x,
                          double T, const SimConfig& config) {
    require_v_star(model);
    require_start(model, t, T, x, config);
    const Lattice lat = detail::make_lattice(t, T, config.dt);
    const double v_now = model.v(t, x);
    std::vector<double> values(config.n_paths);
    detail::PathTally tally{std::vector<std::uint32_t>(config.n_paths, 0), lat.steps};
    const double sqrt_h = std::sqrt(lat.h);

    detail::parallel_for(config.n_paths, config.workers, [&](std::size_t begin, std::size_t end) {
        Scratch s(model);
        const detail::ModelFields mf(model);
        std::vector<double> xp(model.n);
        for (std::size_t p = begin; p < end; ++p) {
            auto rng = detail::path_stream(config.seed, p, config.antithetic);
            std::copy(x.begin(), x.end(), xp.begin());
            double log_v = std::log(v_now), int_r = 0.0, int_phi = 0.0;
            for (std::size_t k = 0; k < lat.steps; ++k) {
                const double tk = lat.time(k);
                mf.f.eval(tk, xp, s.f);
                mf.g.eval(tk, xp, s.g);
                mf.theta.eval(tk, xp, s.theta);
                const double r = mf.r.scalar(tk, xp);
                int_r += r * lat.h;
                int_phi += mf.phi.scalar(tk, xp) * lat.h;
                detail::draw(rng, s.dW, sqrt_h);
                double th2 = 0.0, th_dw = 0.0;
                for (std::size_t j = 0; j < model.d; ++j) {
                    th2 += s.theta[j] * s.theta[j];
                    th_dw += s.theta[j] * s.dW[j];
                }
                log_v += (r + 0.5 * th2) * lat.h + th_dw;
                if (detail::advance(model.domain, xp, s.f, s.g, s.dW, lat.h)) ++tally.flagged[p];
            }
            TerminalState state{xp, std::exp(log_v), std::exp(int_r), std::exp(int_r + int_phi)};
            const double h = payoff(state);
            if (!std::isfinite(h)) throw std::runtime_error("payoff evaluated to a non-finite value");
            values[p] = v_now * h / state.v_star;
        }
    });
    Estimate e = detail::summarize(values, config.seed, config.antithetic);
    detail::apply_tally(e, tally);
    return e;
}

SeriesMatrix bundle_series(const PathBundle& bundle, const std::string& name) {
    SeriesMatrix m;
    m.n_paths = bundle.n_paths;
    m.n_times = bundle.n_times();
    m.antithetic = bundle.antithetic;
    const std::size_t total = m.n_paths * m.n_times;
    m.values.resize(total);
    for (std::size_t i = 0; i < total; ++i) {
        double v;
        if (name == "Y" || name == "S0/V*")
            v = bundle.y[i];
        else if (name == "S0tilde/V*")
            v = bundle.s0_tilde[i] / bundle.v_star[i];
        else if (name == "V*")
            v = bundle.v_star[i];
        else if (name == "S0")
            v = bundle.s0[i];
        else if (name == "S0tilde")
            v = bundle.s0_tilde[i];
        else
            throw std::invalid_argument("unknown series '" + name + "'");
        m.values[i] = v;
    }
    return m;
}

DriftTest empirical_drift_test(const SeriesMatrix& series) {
    if (series.n_times < 2) throw std::invalid_argument("drift test needs at least two time levels");
    if (series.values.size() != series.n_paths * series.n_times) throw std::invalid_argument("series shape mismatch");
    const std::size_t steps = series.n_times - 1;
    // Per-path increment sums are independent across paths (or antithetic pairs).
    const std::size_t stride = series.antithetic ? 2 : 1;
    std::vector<double> clusters;
    clusters.reserve(series.n_paths / stride + 1);
    for (std::size_t p = 0; p < series.n_paths; p += stride) {
        double s = 0.0;
        const std::size_t last = std::min(series.n_paths, p + stride);
        for (std::size_t q = p; q < last; ++q) {
            const double* row = series.values.data() + q * series.n_times;
            std::vector<double> inc(steps);
            for (std::size_t k = 0; k < steps; ++k) inc[k] = row[k + 1] - row[k];
            s += detail::pairwise_sum(inc);
        }
        clusters.push_back(s / static_cast<double>(last - p));
    }
    DriftTest out;
    out.n_paths = series.n_paths;
    out.n_increments = series.n_paths * steps;
    const double k = static_cast<double>(clusters.size());
    const double mean_cluster = detail::pairwise_sum(clusters) / k;
    std::vector<double> sq(clusters.size());
    for (std::size_t i = 0; i < clusters.size(); ++i) sq[i] = (clusters[i] - mean_cluster) * (clusters[i] - mean_cluster);
    const double var = k > 1 ? detail::pairwise_sum(sq) / (k - 1.0) : 0.0;
    out.mean_increment = mean_cluster / static_cast<double>(steps);
    out.std_error = std::sqrt(var / k) / static_cast<double>(steps);
    if (out.std_error > 0.0)
        out.z = out.mean_increment / out.std_error;
    else
        out.z = out.mean_increment == 0.0 ? 0.0 : std::copysign(INFINITY, out.mean_increment);
    return out;
}

DriftTest empirical_drift_test(const PathBundle& bundle, const std::string& series) {
    return empirical_drift_test(bundle_series(bundle, series));
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void write_csv(const PathBundle& bundle, std::ostream& out) {
    out << "path,t";
    for (std::size_t i = 0; i < bundle.n; ++i) out << ",X_" << (i + 1);
    out << ",V_star,S0,S0_tilde,Y\n";
    const std::size_t nt = bundle.n_times();
    for (std::size_t p = 0; p < bundle.n_paths; ++p) {
        for (std::size_t k = 0; k < nt; ++k) {
            const std::size_t i = bundle.at(p, k);
            out << p << ',' << format_double(bundle.time[k]);
            for (std::size_t j = 0; j < bundle.n; ++j) out << ',' << format_double(bundle.x[i * bundle.n + j]);
            out << ',' << format_double(bundle.v_star[i]) << ',' << format_double(bundle.s0[i]) << ','
                << format_double(bundle.s0_tilde[i]) << ',' << format_double(bundle.y[i]) << '\n';
        }
    }
}

namespace {

constexpr std::uint32_t kBinaryVersion = 1;

template <class T>
void put(std::ostream& out, T v) {
    static_assert(std::endian::native == std::endian::little, "binary dump assumes a little-endian host");
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_doubles(std::ostream& out, const std::vector<double>& v) {
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

template <class T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw std::runtime_error("truncated path dump");
    return v;
}

void get_doubles(std::istream& in, std::vector<double>& v, std::size_t count) {
    v.resize(count);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw std::runtime_error("truncated path dump");
}

}  // namespace

void write_binary(const PathBundle& b, std::ostream& out) {
    out.write("RLPB", 4);
    put<std::uint32_t>(out, kBinaryVersion);
    put<std::uint64_t>(out, b.n);
    put<std::uint64_t>(out, b.n_paths);
    put<std::uint64_t>(out, b.n_times());
    put<std::uint8_t>(out, b.antithetic ? 1 : 0);
    put<std::uint64_t>(out, b.flagged_steps);
    put<double>(out, b.flagged_fraction);
    put<std::uint64_t>(out, b.nonfinite);
    put_doubles(out, b.time);
    put_doubles(out, b.x);
    put_doubles(out, b.v_star);
    put_doubles(out, b.s0);
    put_doubles(out, b.s0_tilde);
    put_doubles(out, b.y);
}

PathBundle read_binary(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "RLPB", 4) != 0) throw std::runtime_error("not a path dump");
    if (get<std::uint32_t>(in) != kBinaryVersion) throw std::runtime_error("unsupported path dump version");
    PathBundle b;
    b.n = get<std::uint64_t>(in);
    b.n_paths = get<std::uint64_t>(in);
    const std::size_t nt = get<std::uint64_t>(in);
    b.antithetic = get<std::uint8_t>(in) != 0;
    b.flagged_steps = get<std::uint64_t>(in);
    b.flagged_fraction = get<double>(in);
    b.nonfinite = get<std::uint64_t>(in);
    b.reliable = b.flagged_fraction <= 0.01 && b.nonfinite == 0;
    get_doubles(in, b.time, nt);
    get_doubles(in, b.x, b.n_paths * nt * b.n);
    for (auto* v : {&b.v_star, &b.s0, &b.s0_tilde, &b.y}) get_doubles(in, *v, b.n_paths * nt);
    return b;
}

}  // namespace rollover
