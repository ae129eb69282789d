#pragma once

// Numerical checks of the control representations of bonds and spreads:
// candidate feedback controls from the linear PDE solutions, Monte-Carlo
// evaluation of the controlled objectives, value identities, the
// lender/borrower sandwich and perturbation tests.

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "rollover/model.hpp"
#include "rollover/pde.hpp"
#include "rollover/sim.hpp"

namespace rollover {

enum class BranchKind { lower, upper };

/// lower: eta in (0,1), maximize; upper: eta > 1 or eta < 0, minimize.
struct ControlBranch {
    BranchKind kind = BranchKind::lower;
    double eta = 0.5;

    /// Picks the branch from the exponent; throws for eta in {0, 1} or non-finite.
    static ControlBranch from_eta(double eta);
    void validate() const;
    bool maximize() const { return kind == BranchKind::lower; }
    /// sqrt((1 - eta) / eta) on the lower branch, sqrt((eta - 1) / eta) on the upper.
    double gain() const;
    std::string label() const;
};

/// Grid-sampled d-vector feedback u(t, x) on a one-factor grid, bilinear
/// between nodes. Evaluation outside the grid throws.
struct FeedbackControl {
    Grid1D grid;
    std::size_t d = 1;
    std::vector<double> values;  // [time][space][component]

    static FeedbackControl zero(const Grid1D& grid, std::size_t d);
    void eval(double t, double x, std::span<double> out) const;
    double& at(std::size_t i, std::size_t j, std::size_t k) { return values[(i * grid.n_x + j) * d + k]; }
    double at(std::size_t i, std::size_t j, std::size_t k) const { return values[(i * grid.n_x + j) * d + k]; }
    bool finite() const;
    /// Largest Euclidean norm over the nodes.
    double max_norm() const;
    /// this + eps * shape(x) in every component.
    FeedbackControl shifted(double eps, const std::function<double(double x)>& shape) const;
};

struct CandidateControl {
    FeedbackControl control;      // gain g^T dz/dx / z with z = s^eta
    FeedbackControl chain_rule;   // gain eta g^T ds/dx / s
    double max_discrepancy = 0.0; // between the two forms, over the nodes
};

/// Candidate for the spot problem from a tabulated spot spread s^T.
CandidateControl candidate_spot_control(const GridFunction& s, const FactorModelSpec& model,
                                        const ControlBranch& branch);
/// Same construction from the forward spread s^{T,delta}.
CandidateControl candidate_fwd_control(const GridFunction& s_fwd, const FactorModelSpec& model,
                                       const ControlBranch& branch);
/// u = -g^T dw/dx with w = -log p_hat.
FeedbackControl candidate_bond_control(const GridFunction& p_hat, const FactorModelSpec& model);

/// E[exp(int (eta phi -/+ |u|^2/2))] under dX = (f - g theta +/- gain g u) dt + g dW.
Estimate evaluate_spot_objective(const FactorModelSpec& model, const FeedbackControl& control,
                                 const ControlBranch& branch, double t, double x, double T, const SimConfig& config);

/// E[exp(eta log s_long(X_T) -/+ int |u|^2/2)] under dX = (f + g g^T p_x / p +/- gain g u) dt + g dW.
Estimate evaluate_fwd_objective(const FactorModelSpec& model, const FeedbackControl& control,
                                const ControlBranch& branch, double t, double x, double T, double delta,
                                const std::function<double(double x)>& s_long_terminal, const GridFunction& p_hat,
                                const SimConfig& config);

/// E[int |u|^2/2 + log v*(T, X_T)] under dX = (f + g u) dt + g dW.
Estimate evaluate_bond_objective(const FactorModelSpec& model, const FeedbackControl& control, double t, double x,
                                 double T, const SimConfig& config);

struct VerifyOptions {
    std::size_t n_x = 401;
    std::size_t n_t = 401;
    SolverOptions solver;
    SimConfig mc;
    std::vector<double> epsilons{0.1, 0.5};
    /// Perturb at every probe; by default only the first probe is perturbed.
    bool perturb_every_probe = false;
    double grid_tolerance = 2e-3;
    double identity_sigmas = 3.0;
    double perturbation_sigmas = 3.0;
    double limit_sigmas = 2.0;
    double control_bound = 50.0;
    double spread_floor_tolerance = 1e-8;
    double terminal_tolerance = 1e-10;
    double hjb_tolerance = 1e-3;
    /// Fraction of the spatial grid excluded at each end from the HJB check.
    double hjb_margin = 0.1;
};

struct ProbeRow {
    double t = 0.0;
    double x = 0.0;
    double eta = 1.0;          // 1 for the bond problem
    double reference = 0.0;    // PDE value: s, s^{T,delta} or p_hat
    double objective = 0.0;    // MC objective at the candidate
    double objective_stderr = 0.0;
    double recovered = 0.0;    // z^{1/eta} or exp(-w)
    double recovered_stderr = 0.0;
    double error = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct PerturbationRow {
    std::string branch;
    double eta = 1.0;
    std::size_t probe = 0;
    std::string shape;
    double epsilon = 0.0;
    double candidate = 0.0;
    double perturbed = 0.0;
    double delta = 0.0;
    double pooled_stderr = 0.0;
    std::string expected;  // "decrease" or "increase"
    bool pass = false;
};

struct EtaLimitRow {
    std::string sequence;  // "lower" or "upper"
    double eta = 1.0;
    double max_error = 0.0;
    double stderr_at_max = 0.0;
    bool pass = true;  // non-increasing against the previous row within the allowance
};

struct Clause {
    std::string name;
    bool pass = true;
    std::string detail;
};

struct VerificationReport {
    std::string problem;
    double T = 0.0;
    double delta = 0.0;
    std::vector<ProbeRow> probes;
    std::vector<PerturbationRow> perturbations;
    std::vector<EtaLimitRow> eta_limit;
    std::vector<Clause> clauses;

    bool passed() const;
    const Clause* clause(const std::string& name) const;
    json to_json() const;
    std::string summary() const;
};

using Probe = std::pair<double, double>;  // (t, x)

VerificationReport verify_spot_representation(const FactorModelSpec& model, double T,
                                              const std::vector<double>& etas_lower,
                                              const std::vector<double>& etas_upper,
                                              const std::vector<Probe>& probes, const VerifyOptions& options);

VerificationReport verify_fwd_representation(const FactorModelSpec& model, double T, double delta,
                                             const std::vector<double>& etas_lower,
                                             const std::vector<double>& etas_upper,
                                             const std::vector<Probe>& probes, const VerifyOptions& options);

VerificationReport verify_bond_representation(const FactorModelSpec& model, double T,
                                              const std::vector<Probe>& probes, const VerifyOptions& options);

/// Discrete residual of w_t + f w_x + g^2 w_xx / 2 - g^2 w_x^2 / 2 at interior
/// nodes (central differences in x, centred in t), skipping `margin` of the
/// spatial grid at each end and the two outermost time levels.
double bond_hjb_residual(const GridFunction& w, const FactorModelSpec& model, double margin);

}  // namespace rollover
