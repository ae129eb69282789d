#pragma once

// Shared Monte-Carlo machinery: path-parallel loops, time lattices, the Euler
// step with boundary reflection, and fixed-order reductions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "rollover/model.hpp"
#include "rollover/random.hpp"
#include "rollover/sim.hpp"

namespace rollover::detail {

unsigned resolve_workers(unsigned requested);

/// Calls fn(begin, end) on contiguous index blocks. Each index is handled by
/// exactly one call, so per-index outputs do not depend on the worker count.
template <class Fn>
void parallel_for(std::size_t n, unsigned workers, Fn&& fn) {
    const unsigned w = std::min<std::size_t>(resolve_workers(workers), std::max<std::size_t>(n, 1));
    if (w <= 1) {
        fn(std::size_t{0}, n);
        return;
    }
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mutex;
    const std::size_t chunk = (n + w - 1) / w;
    for (unsigned k = 0; k < w; ++k) {
        const std::size_t begin = k * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&, begin, end] {
            try {
                fn(begin, end);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

double pairwise_sum(std::span<const double> v);

/// Uniform time lattice with round((t1 - t0) / dt) steps (at least one).
struct Lattice {
    double t0 = 0.0;
    double h = 0.0;
    std::size_t steps = 0;
    double time(std::size_t k) const { return k == steps ? t_end : t0 + static_cast<double>(k) * h; }
    double t_end = 0.0;
};
Lattice make_lattice(double t0, double t1, double dt);

/// A coefficient field with the inlined polynomial path for single-valued fields.
class FastField {
public:
    explicit FastField(const CoefficientField& f) : field_(&f), form_(f.scalar_form()) {}

    void eval(double t, std::span<const double> x, std::span<double> out) const {
        if (form_)
            out[0] = (*form_)(t, x[0]);
        else
            field_->eval(t, x, out);
    }
    double scalar(double t, std::span<const double> x) const {
        return form_ ? (*form_)(t, x[0]) : field_->scalar(t, x);
    }

private:
    const CoefficientField* field_;
    std::optional<ScalarForm> form_;
};

/// The coefficient fields of a model, prepared for the path loops.
struct ModelFields {
    explicit ModelFields(const FactorModelSpec& m)
        : f(m.f), g(m.g), theta(m.theta), r(m.r), phi(m.phi) {}
    FastField f, g, theta, r, phi;
};

inline GaussianStream path_stream(std::uint64_t seed, std::size_t path, bool antithetic) {
    return antithetic ? GaussianStream(seed, path / 2, path % 2 == 1) : GaussianStream(seed, path, false);
}

inline void draw(GaussianStream& rng, std::span<double> dW, double sqrt_h) {
    for (double& w : dW) w = sqrt_h * rng.normal();
}

/// x += drift h + g dW (g is n x d row-major), reflected into D.
/// Returns true when a reflection happened.
inline bool advance(const Domain& D, std::span<double> x, std::span<const double> drift, std::span<const double> g,
                    std::span<const double> dW, double h) {
    const std::size_t n = x.size(), d = dW.size();
    bool flagged = false;
    for (std::size_t i = 0; i < n; ++i) {
        double v = x[i] + drift[i] * h;
        for (std::size_t k = 0; k < d; ++k) v += g[i * d + k] * dW[k];
        const double lo = D.lower[i], hi = D.upper[i];
        if (v < lo || v > hi) {
            flagged = true;
            if (v < lo) v = 2.0 * lo - v;
            if (v > hi) v = 2.0 * hi - v;
            v = std::clamp(v, lo, hi);
        }
        x[i] = v;
    }
    return flagged;
}

/// g^T-weighted product: out_i = sum_k g[i,k] w_k.
inline void mat_vec(std::span<const double> g, std::span<const double> w, std::span<double> out) {
    const std::size_t d = w.size();
    for (std::size_t i = 0; i < out.size(); ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += g[i * d + k] * w[k];
        out[i] = s;
    }
}

struct PathTally {
    std::vector<std::uint32_t> flagged;  // per path
    std::size_t steps = 0;
};

/// Mean and standard error of per-path values; antithetic pairs are averaged
/// first. Non-finite values are excluded and counted.
Estimate summarize(std::span<const double> values, std::uint64_t seed, bool antithetic);

/// N / D ratio of means with a delta-method standard error.
Estimate ratio_estimate(std::span<const double> num, std::span<const double> den, std::uint64_t seed,
                        bool antithetic);

void apply_tally(Estimate& e, const PathTally& tally);

}  // namespace rollover::detail
