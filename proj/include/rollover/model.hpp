#pragma once

// Markovian factor-market specifications: coefficient fields, the model
// record, the consistent-Vasicek builder and GOP consistency checks.

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace rollover {

using json = nlohmann::json;

enum class Arity { scalar, vector, matrix };

/// Axis-aligned box D in R^n.
struct Domain {
    std::vector<double> lower;
    std::vector<double> upper;

    std::size_t dim() const { return lower.size(); }
    bool contains(std::span<const double> x) const;
    double width(std::size_t i) const { return upper[i] - lower[i]; }
};

/// Where a non-builtin field gets tabulated when it has to be written out.
struct TabulationHint {
    Domain domain;
    double horizon = 0.0;
    std::size_t n_t = 101;
    std::size_t n_x = 201;
};

/// scale (c0 + ct t + c1 x + c2 (x - center)^2) + offset on a one-dimensional
/// factor, evaluated in the same operation order as the field itself.
struct ScalarForm {
    double c0 = 0.0, ct = 0.0, c1 = 0.0, c2 = 0.0, center = 0.0;
    double scale = 1.0, offset = 0.0;
    bool transformed = false;
    double operator()(double t, double x) const {
        const double e = x - center;
        const double v = c2 != 0.0 ? c0 + c2 * (e * e) : c0 + ct * t + c1 * x;
        return transformed ? scale * v + offset : v;
    }
};

/// A coefficient function (t, x) -> scalar | vector | matrix.
///
/// Builtin kinds are parametric and serialize by name + parameter map.
/// `callable` wraps an arbitrary function; it is written out as a
/// `tabulated` field (n = 1) or as a `constant` when flagged constant.
/// Values are returned row-major; evaluation never allocates.
class CoefficientField {
public:
    using Function = std::function<void(double t, std::span<const double> x, std::span<double> out)>;

    CoefficientField();

    static CoefficientField constant(double value);
    static CoefficientField constant_vector(std::vector<double> value);
    static CoefficientField constant_matrix(std::size_t rows, std::size_t cols, std::vector<double> row_major);
    /// a + c_t t + b.x
    static CoefficientField affine(double a, std::vector<double> b, double c_t = 0.0);
    /// a + B x, B is rows x n row-major.
    static CoefficientField affine_vector(std::vector<double> a, std::vector<double> B);
    /// b + a ||x - center||^2
    static CoefficientField quadratic(double a, std::vector<double> center, double b);
    /// exp(a + c_t t + b.x)
    static CoefficientField exp_affine(double a, std::vector<double> b, double c_t = 0.0);
    /// Scalar table over a (t, x) lattice, n = 1, bilinear; clamped outside.
    static CoefficientField tabulated(std::vector<double> t_nodes, std::vector<double> x_nodes,
                                      std::vector<double> values_t_major);
    /// scale * base + offset, elementwise.
    static CoefficientField transform(const CoefficientField& base, double scale, double offset);
    static CoefficientField callable(Arity arity, std::size_t rows, std::size_t cols, Function fn,
                                     std::string label, bool is_constant = false);

    Arity arity() const { return arity_; }
    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return rows_ * cols_; }
    /// Required input dimension, 0 when any dimension is accepted.
    std::size_t input_dim() const { return input_dim_; }
    const std::string& name() const;
    bool is_constant() const;

    /// Closed polynomial form of single-valued fields on a 1-D factor
    /// (constant, affine, quadratic and their transforms); empty otherwise.
    std::optional<ScalarForm> scalar_form() const;

    void eval(double t, std::span<const double> x, std::span<double> out) const;
    double scalar(double t, std::span<const double> x) const;
    double scalar(double t, double x) const { return scalar(t, std::span<const double>(&x, 1)); }
    std::vector<double> value(double t, std::span<const double> x) const;

    json to_json(const TabulationHint* hint = nullptr) const;
    static CoefficientField from_json(const json& j);

private:
    struct Constant { std::vector<double> value; };
    struct Affine { double a; std::vector<double> b; double c_t; };
    struct AffineVector { std::vector<double> a; std::vector<double> B; };
    struct Quadratic { double a; std::vector<double> center; double b; };
    struct ExpAffine { double a; std::vector<double> b; double c_t; };
    struct Tabulated { std::vector<double> t, x, values; };
    struct Transform { std::shared_ptr<const CoefficientField> base; double scale; double offset; };
    struct Callable { Function fn; std::string label; bool constant; };
    using Kind = std::variant<Constant, Affine, AffineVector, Quadratic, ExpAffine, Tabulated, Transform, Callable>;

    CoefficientField(Kind kind, Arity arity, std::size_t rows, std::size_t cols, std::size_t input_dim);

    Kind kind_;
    Arity arity_ = Arity::scalar;
    std::size_t rows_ = 1;
    std::size_t cols_ = 1;
    std::size_t input_dim_ = 0;
};

/// Full Markovian market specification.
///
/// f: n-vector drift, g: n x d diffusion, r: short rate, theta: d-vector
/// market price of risk, phi: funding-liquidity spread, v_star: optional GOP
/// value function with v_star(0, x0) = 1.
struct FactorModelSpec {
    std::size_t n = 1;
    std::size_t d = 1;
    CoefficientField f;
    CoefficientField g;
    CoefficientField r;
    CoefficientField theta;
    CoefficientField phi;
    std::optional<CoefficientField> v_star;
    std::vector<double> x0;
    Domain domain;
    double horizon = 1.0;

    /// Throws std::invalid_argument on arity mismatches, x0 outside D,
    /// v_star(0, x0) != 1, or non-finite / non-positive sampled values.
    void validate() const;

    double v(double t, std::span<const double> x) const;
    /// phi >= 0 at every sampled lattice point (the model "declares" phi >= 0).
    bool phi_nonnegative() const;
    TabulationHint tabulation_hint() const;
};

/// Parameters of the one-factor consistent-Vasicek family.
struct VasicekParams {
    double kappa = 1.0;
    double mu_bar = 0.05;
    double sigma_x = 0.1;
    double lambda = 2.0;
    double x0 = 0.05;
    double horizon = 5.0;
    /// Domain half-width in stationary standard deviations.
    double width_sd = 6.0;
};

/// f = kappa (mu_bar - x), g = sigma_x, v* = exp(lambda (x - x0)),
/// theta = sigma_x lambda, r = lambda kappa (mu_bar - x) - lambda^2 sigma_x^2 / 2.
/// Both GOP conditions hold identically.
FactorModelSpec build_consistent_vasicek(const VasicekParams& p, CoefficientField phi);

/// One-factor model with theta = 0, r = r0, v* = exp(r0 t) and the given
/// factor dynamics; the deterministic-discounting reference case.
FactorModelSpec build_constant_rate_model(double r0, CoefficientField f, CoefficientField g,
                                          CoefficientField phi, double x0, Domain domain,
                                          double horizon);

struct GopResidualPoint {
    double t = 0.0;
    std::vector<double> x;
    double v = 0.0;
    std::vector<double> cond1;           // g^T grad v* - v* theta
    double cond2 = 0.0;                  // PDE residual of v*
    std::vector<double> cond1_relative;  // cond1 / v*
    double cond2_relative = 0.0;
};

struct GopResiduals {
    std::vector<GopResidualPoint> points;
    std::vector<double> x_steps;  // per point, per coordinate, flattened
    std::vector<double> t_steps;
    double step = 1e-5;

    double max_abs() const;
    double max_relative() const;
};

/// Central finite-difference residuals of both GOP conditions.
/// `step` is relative to max(1, |coordinate|).
GopResiduals gop_consistency_residuals(const FactorModelSpec& model,
                                       const std::vector<std::pair<double, std::vector<double>>>& points,
                                       double step = 1e-5);

json to_json(const FactorModelSpec& model);
/// Accepts a full model document or {"builder": "consistent_vasicek", ...}.
FactorModelSpec model_from_json(const json& j);
FactorModelSpec load_model(const std::string& path);

json to_json(const Domain& d);
Domain domain_from_json(const json& j);

}  // namespace rollover
