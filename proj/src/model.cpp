#include "rollover/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace rollover {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::size_t locate(const std::vector<double>& nodes, double v, double& w) {
    if (nodes.size() == 1 || v <= nodes.front()) {
        w = 0.0;
        return 0;
    }
    if (v >= nodes.back()) {
        w = 1.0;
        return nodes.size() - 2;
    }
    auto it = std::upper_bound(nodes.begin(), nodes.end(), v);
    std::size_t i = static_cast<std::size_t>(it - nodes.begin()) - 1;
    w = (v - nodes[i]) / (nodes[i + 1] - nodes[i]);
    return i;
}

json value_to_json(Arity arity, std::size_t rows, std::size_t cols, const std::vector<double>& v) {
    switch (arity) {
        case Arity::scalar:
            return v.at(0);
        case Arity::vector:
            return v;
        case Arity::matrix: {
            json m = json::array();
            for (std::size_t i = 0; i < rows; ++i)
                m.push_back(std::vector<double>(v.begin() + i * cols, v.begin() + (i + 1) * cols));
            return m;
        }
    }
    return {};
}

std::vector<std::vector<double>> lattice(const Domain& d, std::size_t per_dim) {
    std::vector<std::vector<double>> pts{{}};
    for (std::size_t i = 0; i < d.dim(); ++i) {
        std::vector<std::vector<double>> next;
        for (const auto& p : pts) {
            for (std::size_t k = 0; k < per_dim; ++k) {
                auto q = p;
                q.push_back(d.lower[i] + d.width(i) * static_cast<double>(k) / static_cast<double>(per_dim - 1));
                next.push_back(std::move(q));
            }
        }
        pts = std::move(next);
    }
    return pts;
}

std::size_t lattice_density(std::size_t n) { return n == 1 ? 41 : (n == 2 ? 11 : 5); }

void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw std::invalid_argument(std::string("non-finite parameter: ") + what);
}

}  // namespace

bool Domain::contains(std::span<const double> x) const {
    if (x.size() != lower.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (!(x[i] >= lower[i] && x[i] <= upper[i])) return false;
    return true;
}

// ---------------------------------------------------------------------------
// CoefficientField

CoefficientField::CoefficientField() : CoefficientField(Constant{{0.0}}, Arity::scalar, 1, 1, 0) {}

CoefficientField::CoefficientField(Kind kind, Arity arity, std::size_t rows, std::size_t cols, std::size_t input_dim)
    : kind_(std::move(kind)), arity_(arity), rows_(rows), cols_(cols), input_dim_(input_dim) {}

CoefficientField CoefficientField::constant(double value) {
    return CoefficientField(Constant{{value}}, Arity::scalar, 1, 1, 0);
}

CoefficientField CoefficientField::constant_vector(std::vector<double> value) {
    if (value.empty()) throw std::invalid_argument("constant_vector: empty value");
    const std::size_t rows = value.size();
    return CoefficientField(Constant{std::move(value)}, Arity::vector, rows, 1, 0);
}

CoefficientField CoefficientField::constant_matrix(std::size_t rows, std::size_t cols, std::vector<double> row_major) {
    if (rows == 0 || cols == 0 || row_major.size() != rows * cols)
        throw std::invalid_argument("constant_matrix: shape does not match data");
    return CoefficientField(Constant{std::move(row_major)}, Arity::matrix, rows, cols, 0);
}

CoefficientField CoefficientField::affine(double a, std::vector<double> b, double c_t) {
    const std::size_t n = b.size();
    return CoefficientField(Affine{a, std::move(b), c_t}, Arity::scalar, 1, 1, n);
}

CoefficientField CoefficientField::affine_vector(std::vector<double> a, std::vector<double> B) {
    if (a.empty() || B.size() % a.size() != 0) throw std::invalid_argument("affine_vector: B must be rows x n");
    const std::size_t rows = a.size();
    const std::size_t n = B.size() / rows;
    return CoefficientField(AffineVector{std::move(a), std::move(B)}, Arity::vector, rows, 1, n);
}

CoefficientField CoefficientField::quadratic(double a, std::vector<double> center, double b) {
    const std::size_t n = center.size();
    return CoefficientField(Quadratic{a, std::move(center), b}, Arity::scalar, 1, 1, n);
}

CoefficientField CoefficientField::exp_affine(double a, std::vector<double> b, double c_t) {
    const std::size_t n = b.size();
    return CoefficientField(ExpAffine{a, std::move(b), c_t}, Arity::scalar, 1, 1, n);
}

CoefficientField CoefficientField::tabulated(std::vector<double> t_nodes, std::vector<double> x_nodes,
                                             std::vector<double> values_t_major) {
    if (t_nodes.empty() || x_nodes.size() < 2 || values_t_major.size() != t_nodes.size() * x_nodes.size())
        throw std::invalid_argument("tabulated: table shape does not match node counts");
    if (!std::is_sorted(t_nodes.begin(), t_nodes.end()) || !std::is_sorted(x_nodes.begin(), x_nodes.end()))
        throw std::invalid_argument("tabulated: nodes must be increasing");
    return CoefficientField(Tabulated{std::move(t_nodes), std::move(x_nodes), std::move(values_t_major)},
                            Arity::scalar, 1, 1, 1);
}

CoefficientField CoefficientField::transform(const CoefficientField& base, double scale, double offset) {
    return CoefficientField(Transform{std::make_shared<const CoefficientField>(base), scale, offset}, base.arity_,
                            base.rows_, base.cols_, base.input_dim_);
}

CoefficientField CoefficientField::callable(Arity arity, std::size_t rows, std::size_t cols, Function fn,
                                            std::string label, bool is_constant) {
    if (!fn) throw std::invalid_argument("callable: empty function");
    return CoefficientField(Callable{std::move(fn), std::move(label), is_constant}, arity, rows, cols, 0);
}

const std::string& CoefficientField::name() const {
    static const std::string names[] = {"constant", "affine",  "affine_vector", "quadratic",
                                        "exp_affine", "tabulated", "transform",   "callable"};
    return names[kind_.index()];
}

bool CoefficientField::is_constant() const {
    return std::visit(overloaded{
                          [](const Constant&) { return true; },
                          [](const Transform& k) { return k.base->is_constant(); },
                          [](const Callable& k) { return k.constant; },
                          [](const auto&) { return false; },
                      },
                      kind_);
}

std::optional<ScalarForm> CoefficientField::scalar_form() const {
    if (size() != 1) return std::nullopt;
    return std::visit(overloaded{
                          [](const Constant& k) -> std::optional<ScalarForm> { return ScalarForm{k.value[0]}; },
                          [](const Affine& k) -> std::optional<ScalarForm> {
                              if (k.b.size() > 1) return std::nullopt;
                              return ScalarForm{k.a, k.c_t, k.b.empty() ? 0.0 : k.b[0]};
                          },
                          [](const AffineVector& k) -> std::optional<ScalarForm> {
                              if (k.B.size() != 1) return std::nullopt;
                              return ScalarForm{k.a[0], 0.0, k.B[0]};
                          },
                          [](const Quadratic& k) -> std::optional<ScalarForm> {
                              if (k.center.size() != 1) return std::nullopt;
                              return ScalarForm{k.b, 0.0, 0.0, k.a, k.center[0]};
                          },
                          [](const Transform& k) -> std::optional<ScalarForm> {
                              auto f = k.base->scalar_form();
                              if (!f || f->transformed) return std::nullopt;
                              f->scale = k.scale;
                              f->offset = k.offset;
                              f->transformed = true;
                              return f;
                          },
                          [](const auto&) -> std::optional<ScalarForm> { return std::nullopt; },
                      },
                      kind_);
}

void CoefficientField::eval(double t, std::span<const double> x, std::span<double> out) const {
    std::visit(overloaded{
                   [&](const Constant& k) { std::copy(k.value.begin(), k.value.end(), out.begin()); },
                   [&](const Affine& k) {
                       double v = k.a + k.c_t * t;
                       for (std::size_t i = 0; i < k.b.size(); ++i) v += k.b[i] * x[i];
                       out[0] = v;
                   },
                   [&](const AffineVector& k) {
                       const std::size_t n = k.B.size() / k.a.size();
                       for (std::size_t r = 0; r < k.a.size(); ++r) {
                           double v = k.a[r];
                           for (std::size_t j = 0; j < n; ++j) v += k.B[r * n + j] * x[j];
                           out[r] = v;
                       }
                   },
                   [&](const Quadratic& k) {
                       double s = 0.0;
                       for (std::size_t i = 0; i < k.center.size(); ++i) {
                           const double e = x[i] - k.center[i];
                           s += e * e;
                       }
                       out[0] = k.b + k.a * s;
                   },
                   [&](const ExpAffine& k) {
                       double v = k.a + k.c_t * t;
                       for (std::size_t i = 0; i < k.b.size(); ++i) v += k.b[i] * x[i];
                       out[0] = std::exp(v);
                   },
                   [&](const Tabulated& k) {
                       double wt = 0.0, wx = 0.0;
                       const std::size_t nx = k.x.size();
                       const std::size_t i = locate(k.t, t, wt);
                       const std::size_t j = locate(k.x, x[0], wx);
                       const std::size_t i1 = k.t.size() == 1 ? i : i + 1;
                       const double lo = (1.0 - wx) * k.values[i * nx + j] + wx * k.values[i * nx + j + 1];
                       const double hi = (1.0 - wx) * k.values[i1 * nx + j] + wx * k.values[i1 * nx + j + 1];
                       out[0] = (1.0 - wt) * lo + wt * hi;
                   },
                   [&](const Transform& k) {
                       k.base->eval(t, x, out);
                       for (std::size_t i = 0; i < size(); ++i) out[i] = k.scale * out[i] + k.offset;
                   },
                   [&](const Callable& k) { k.fn(t, x, out); },
               },
               kind_);
}

double CoefficientField::scalar(double t, std::span<const double> x) const {
    double out = 0.0;
    eval(t, x, std::span<double>(&out, 1));
    return out;
}

std::vector<double> CoefficientField::value(double t, std::span<const double> x) const {
    std::vector<double> out(size());
    eval(t, x, out);
    return out;
}

json CoefficientField::to_json(const TabulationHint* hint) const {
    json params;
    std::visit(overloaded{
                   [&](const Constant& k) { params["value"] = value_to_json(arity_, rows_, cols_, k.value); },
                   [&](const Affine& k) { params = {{"a", k.a}, {"b", k.b}, {"c_t", k.c_t}}; },
                   [&](const AffineVector& k) {
                       params["a"] = k.a;
                       params["B"] = value_to_json(Arity::matrix, k.a.size(), k.B.size() / k.a.size(), k.B);
                   },
                   [&](const Quadratic& k) { params = {{"a", k.a}, {"center", k.center}, {"b", k.b}}; },
                   [&](const ExpAffine& k) { params = {{"a", k.a}, {"b", k.b}, {"c_t", k.c_t}}; },
                   [&](const Tabulated& k) {
                       params["t"] = k.t;
                       params["x"] = k.x;
                       params["values"] = value_to_json(Arity::matrix, k.t.size(), k.x.size(), k.values);
                   },
                   [&](const Transform& k) {
                       params = {{"base", k.base->to_json(hint)}, {"scale", k.scale}, {"offset", k.offset}};
                   },
                   [&](const Callable&) {},
               },
               kind_);
    if (!std::holds_alternative<Callable>(kind_)) return {{"name", name()}, {"params", params}};

    const auto& c = std::get<Callable>(kind_);
    if (c.constant) {
        const std::vector<double> x(hint ? hint->domain.dim() : 1, 0.0);
        std::vector<double> v(size());
        eval(0.0, x, v);
        return {{"name", "constant"}, {"params", {{"value", value_to_json(arity_, rows_, cols_, v)}}}};
    }
    if (hint == nullptr || hint->domain.dim() != 1 || size() != 1)
        throw std::invalid_argument("field '" + c.label + "' can only be written out as a one-factor scalar table");
    std::vector<double> ts(hint->n_t), xs(hint->n_x), vals(hint->n_t * hint->n_x);
    for (std::size_t i = 0; i < hint->n_t; ++i)
        ts[i] = hint->horizon * static_cast<double>(i) / static_cast<double>(hint->n_t - 1);
    for (std::size_t j = 0; j < hint->n_x; ++j)
        xs[j] = hint->domain.lower[0] + hint->domain.width(0) * static_cast<double>(j) / static_cast<double>(hint->n_x - 1);
    for (std::size_t i = 0; i < hint->n_t; ++i)
        for (std::size_t j = 0; j < hint->n_x; ++j) vals[i * hint->n_x + j] = scalar(ts[i], xs[j]);
    return tabulated(ts, xs, vals).to_json();
}

CoefficientField CoefficientField::from_json(const json& j) {
    if (j.is_number()) return constant(j.get<double>());
    const std::string name = j.at("name").get<std::string>();
    const json& p = j.contains("params") ? j.at("params") : json::object();
    if (name == "constant") {
        const json& v = p.at("value");
        if (v.is_number()) return constant(v.get<double>());
        if (v.is_array() && !v.empty() && v.front().is_array()) {
            const std::size_t rows = v.size();
            const std::size_t cols = v.front().size();
            std::vector<double> data;
            for (const auto& row : v) {
                if (row.size() != cols) throw std::invalid_argument("constant: ragged matrix");
                for (const auto& e : row) data.push_back(e.get<double>());
            }
            return constant_matrix(rows, cols, std::move(data));
        }
        return constant_vector(v.get<std::vector<double>>());
    }
    if (name == "affine")
        return affine(p.at("a").get<double>(), p.at("b").get<std::vector<double>>(), p.value("c_t", 0.0));
    if (name == "affine_vector") {
        std::vector<double> B;
        for (const auto& row : p.at("B"))
            for (const auto& e : row) B.push_back(e.get<double>());
        return affine_vector(p.at("a").get<std::vector<double>>(), std::move(B));
    }
    if (name == "quadratic")
        return quadratic(p.at("a").get<double>(), p.at("center").get<std::vector<double>>(), p.at("b").get<double>());
    if (name == "exp_affine")
        return exp_affine(p.at("a").get<double>(), p.at("b").get<std::vector<double>>(), p.value("c_t", 0.0));
    if (name == "tabulated") {
        std::vector<double> vals;
        for (const auto& row : p.at("values"))
            for (const auto& e : row) vals.push_back(e.get<double>());
        return tabulated(p.at("t").get<std::vector<double>>(), p.at("x").get<std::vector<double>>(), std::move(vals));
    }
    if (name == "transform")
        return transform(from_json(p.at("base")), p.value("scale", 1.0), p.value("offset", 0.0));
    throw std::invalid_argument("unknown coefficient field '" + name + "'");
}

// ---------------------------------------------------------------------------
// FactorModelSpec

double FactorModelSpec::v(double t, std::span<const double> x) const {
    if (!v_star) throw std::invalid_argument("model does not provide v_star");
    return v_star->scalar(t, x);
}

TabulationHint FactorModelSpec::tabulation_hint() const {
    TabulationHint h;
    h.domain = domain;
    h.horizon = horizon;
    return h;
}

void FactorModelSpec::validate() const {
    auto check_size = [&](const CoefficientField& c, std::size_t expected, const char* what) {
        if (c.size() != expected)
            throw std::invalid_argument(std::string("field ") + what + " has " + std::to_string(c.size()) +
                                        " components, expected " + std::to_string(expected));
        if (c.input_dim() != 0 && c.input_dim() != n)
            throw std::invalid_argument(std::string("field ") + what + " expects a " + std::to_string(c.input_dim()) +
                                        "-dimensional factor");
    };
    if (n == 0 || d == 0) throw std::invalid_argument("factor and Brownian dimensions must be positive");
    check_size(f, n, "f");
    check_size(g, n * d, "g");
    check_size(r, 1, "r");
    check_size(theta, d, "theta");
    check_size(phi, 1, "phi");
    if (v_star) check_size(*v_star, 1, "v_star");
    if (x0.size() != n || domain.lower.size() != n || domain.upper.size() != n)
        throw std::invalid_argument("x0 and domain must have the factor dimension");
    for (std::size_t i = 0; i < n; ++i)
        if (!(domain.lower[i] < domain.upper[i])) throw std::invalid_argument("domain must have lower < upper");
    if (!domain.contains(x0)) throw std::invalid_argument("x0 lies outside the domain");
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw std::invalid_argument("horizon must be positive");
    if (v_star) {
        const double v0 = v_star->scalar(0.0, x0);
        if (std::abs(v0 - 1.0) > 1e-12) throw std::invalid_argument("v_star(0, x0) must equal 1");
    }

    std::vector<double> buf(std::max({f.size(), g.size(), theta.size(), std::size_t{1}}));
    const auto pts = lattice(domain, lattice_density(n));
    for (int k = 0; k <= 4; ++k) {
        const double t = horizon * k / 4.0;
        for (const auto& x : pts) {
            for (const auto* c : {&f, &g, &r, &theta, &phi}) {
                c->eval(t, x, buf);
                for (std::size_t i = 0; i < c->size(); ++i)
                    if (!std::isfinite(buf[i])) throw std::invalid_argument("coefficient field is not finite on D");
            }
            if (v_star) {
                const double v = v_star->scalar(t, x);
                if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("v_star must be positive and finite on D");
            }
        }
    }
}

bool FactorModelSpec::phi_nonnegative() const {
    const auto pts = lattice(domain, lattice_density(n));
    for (int k = 0; k <= 4; ++k)
        for (const auto& x : pts)
            if (phi.scalar(horizon * k / 4.0, x) < 0.0) return false;
    return true;
}

FactorModelSpec build_consistent_vasicek(const VasicekParams& p, CoefficientField phi) {
    for (double v : {p.kappa, p.mu_bar, p.sigma_x, p.lambda, p.x0, p.horizon, p.width_sd}) require_finite(v, "vasicek");
    if (!(p.sigma_x > 0.0)) throw std::invalid_argument("sigma_x must be positive");
    if (p.kappa < 0.0) throw std::invalid_argument("kappa must be non-negative");
    if (!(p.horizon > 0.0)) throw std::invalid_argument("horizon must be positive");

    const double k = p.kappa, m = p.mu_bar, s = p.sigma_x, l = p.lambda;
    FactorModelSpec model;
    model.n = 1;
    model.d = 1;
    model.f = CoefficientField::affine_vector({k * m}, {-k});
    model.g = CoefficientField::constant_matrix(1, 1, {s});
    model.theta = CoefficientField::constant_vector({s * l});
    model.r = CoefficientField::affine(l * k * m - 0.5 * l * l * s * s, {-l * k});
    model.v_star = CoefficientField::exp_affine(-l * p.x0, {l});
    model.phi = std::move(phi);
    model.x0 = {p.x0};
    const double sd = k > 0.0 ? s / std::sqrt(2.0 * k) : s * std::sqrt(p.horizon);
    model.domain = Domain{{std::min(m, p.x0) - p.width_sd * sd}, {std::max(m, p.x0) + p.width_sd * sd}};
    model.horizon = p.horizon;
    model.validate();
    return model;
}

FactorModelSpec build_constant_rate_model(double r0, CoefficientField f, CoefficientField g, CoefficientField phi,
                                          double x0, Domain domain, double horizon) {
    FactorModelSpec model;
    model.n = 1;
    model.d = g.size();
    model.f = std::move(f);
    model.g = std::move(g);
    model.theta = CoefficientField::constant_vector(std::vector<double>(model.d, 0.0));
    model.r = CoefficientField::constant(r0);
    model.v_star = CoefficientField::exp_affine(0.0, {0.0}, r0);
    model.phi = std::move(phi);
    model.x0 = {x0};
    model.domain = std::move(domain);
    model.horizon = horizon;
    model.validate();
    return model;
}

// ---------------------------------------------------------------------------
// GOP consistency

double GopResiduals::max_abs() const {
    double m = 0.0;
    for (const auto& p : points) {
        for (double c : p.cond1) m = std::max(m, std::abs(c));
        m = std::max(m, std::abs(p.cond2));
    }
    return m;
}

double GopResiduals::max_relative() const {
    double m = 0.0;
    for (const auto& p : points) {
        for (double c : p.cond1_relative) m = std::max(m, std::abs(c));
        m = std::max(m, std::abs(p.cond2_relative));
    }
    return m;
}

GopResiduals gop_consistency_residuals(const FactorModelSpec& model,
                                       const std::vector<std::pair<double, std::vector<double>>>& points,
                                       double step) {
    if (!model.v_star) throw std::invalid_argument("gop_consistency_residuals: model has no v_star");
    if (!(step > 0.0)) throw std::invalid_argument("gop_consistency_residuals: step must be positive");
    const std::size_t n = model.n, d = model.d;
    const auto& vs = *model.v_star;

    GopResiduals out;
    out.step = step;
    std::vector<double> f(n), g(n * d), theta(d), grad(n), hess(n * n), xp(n), xq(n), h(n);
    for (const auto& [t, x] : points) {
        if (x.size() != n) throw std::invalid_argument("gop_consistency_residuals: point has wrong dimension");
        for (std::size_t i = 0; i < n; ++i) {
            h[i] = step * std::max(1.0, std::abs(x[i]));
            if (x[i] - h[i] < model.domain.lower[i] || x[i] + h[i] > model.domain.upper[i])
                throw std::invalid_argument("gop_consistency_residuals: point within one step of the domain boundary");
        }
        const double ht = step * std::max(1.0, std::abs(t));
        const double v = vs.scalar(t, x);

        double dt_v = 0.0;
        if (t - ht >= 0.0) {
            dt_v = (vs.scalar(t + ht, x) - vs.scalar(t - ht, x)) / (2.0 * ht);
        } else {
            dt_v = (-3.0 * v + 4.0 * vs.scalar(t + ht, x) - vs.scalar(t + 2.0 * ht, x)) / (2.0 * ht);
        }
        for (std::size_t i = 0; i < n; ++i) {
            xp = x;
            xq = x;
            xp[i] += h[i];
            xq[i] -= h[i];
            const double vp = vs.scalar(t, xp), vq = vs.scalar(t, xq);
            grad[i] = (vp - vq) / (2.0 * h[i]);
            hess[i * n + i] = (vp - 2.0 * v + vq) / (h[i] * h[i]);
            for (std::size_t j = i + 1; j < n; ++j) {
                auto shifted = [&](double si, double sj) {
                    std::vector<double> y = x;
                    y[i] += si * h[i];
                    y[j] += sj * h[j];
                    return vs.scalar(t, y);
                };
                const double hij =
                    (shifted(1, 1) - shifted(1, -1) - shifted(-1, 1) + shifted(-1, -1)) / (4.0 * h[i] * h[j]);
                hess[i * n + j] = hij;
                hess[j * n + i] = hij;
            }
        }
        model.f.eval(t, x, f);
        model.g.eval(t, x, g);
        model.theta.eval(t, x, theta);
        const double r = model.r.scalar(t, x);

        GopResidualPoint p;
        p.t = t;
        p.x = x;
        p.v = v;
        p.cond1.resize(d);
        p.cond1_relative.resize(d);
        for (std::size_t k = 0; k < d; ++k) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += g[i * d + k] * grad[i];
            p.cond1[k] = s - v * theta[k];
            p.cond1_relative[k] = p.cond1[k] / v;
        }
        double res = dt_v - v * r;
        for (std::size_t i = 0; i < n; ++i) {
            double gtheta = 0.0;
            for (std::size_t k = 0; k < d; ++k) gtheta += g[i * d + k] * theta[k];
            res += grad[i] * (f[i] - gtheta);
        }
        double tr = 0.0;
        for (std::size_t k = 0; k < d; ++k)
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) tr += g[i * d + k] * hess[i * n + j] * g[j * d + k];
        res += 0.5 * tr;
        p.cond2 = res;
        p.cond2_relative = res / v;
        out.points.push_back(std::move(p));
        out.x_steps.insert(out.x_steps.end(), h.begin(), h.end());
        out.t_steps.push_back(ht);
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON

json to_json(const Domain& d) { return {{"lower", d.lower}, {"upper", d.upper}}; }

Domain domain_from_json(const json& j) {
    return Domain{j.at("lower").get<std::vector<double>>(), j.at("upper").get<std::vector<double>>()};
}

json to_json(const FactorModelSpec& m) {
    const TabulationHint hint = m.tabulation_hint();
    json j;
    j["n"] = m.n;
    j["d"] = m.d;
    j["f"] = m.f.to_json(&hint);
    j["g"] = m.g.to_json(&hint);
    j["r"] = m.r.to_json(&hint);
    j["theta"] = m.theta.to_json(&hint);
    j["phi"] = m.phi.to_json(&hint);
    j["v_star"] = m.v_star ? m.v_star->to_json(&hint) : json(nullptr);
    j["x0"] = m.x0;
    j["domain"] = to_json(m.domain);
    j["horizon"] = m.horizon;
    return j;
}

FactorModelSpec model_from_json(const json& j) {
    if (j.contains("builder")) {
        const std::string b = j.at("builder").get<std::string>();
        const CoefficientField phi =
            j.contains("phi") ? CoefficientField::from_json(j.at("phi")) : CoefficientField::constant(0.0);
        if (b == "consistent_vasicek") {
            VasicekParams p;
            p.kappa = j.value("kappa", p.kappa);
            p.mu_bar = j.value("mu_bar", p.mu_bar);
            p.sigma_x = j.value("sigma_x", p.sigma_x);
            p.lambda = j.value("lambda", p.lambda);
            p.x0 = j.value("x0", p.x0);
            p.horizon = j.value("horizon", p.horizon);
            p.width_sd = j.value("width_sd", p.width_sd);
            return build_consistent_vasicek(p, phi);
        }
        if (b == "constant_rate") {
            return build_constant_rate_model(j.at("r0").get<double>(), CoefficientField::from_json(j.at("f")),
                                             CoefficientField::from_json(j.at("g")), phi, j.at("x0").get<double>(),
                                             domain_from_json(j.at("domain")), j.at("horizon").get<double>());
        }
        throw std::invalid_argument("unknown model builder '" + b + "'");
    }
    FactorModelSpec m;
    m.n = j.at("n").get<std::size_t>();
    m.d = j.at("d").get<std::size_t>();
    m.f = CoefficientField::from_json(j.at("f"));
    m.g = CoefficientField::from_json(j.at("g"));
    m.r = CoefficientField::from_json(j.at("r"));
    m.theta = CoefficientField::from_json(j.at("theta"));
    m.phi = CoefficientField::from_json(j.at("phi"));
    if (j.contains("v_star") && !j.at("v_star").is_null()) m.v_star = CoefficientField::from_json(j.at("v_star"));
    m.x0 = j.at("x0").get<std::vector<double>>();
    m.domain = domain_from_json(j.at("domain"));
    m.horizon = j.at("horizon").get<double>();
    m.validate();
    return m;
}

FactorModelSpec load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open model file " + path);
    return model_from_json(json::parse(in));
}

}  // namespace rollover
