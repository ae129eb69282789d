#pragma once

// Term-structure assembly: simple and term rates, spreads and single-period
// swap values from PDE or Monte-Carlo primitives.

#include <iosfwd>
#include <string>
#include <vector>

#include "rollover/model.hpp"
#include "rollover/sim.hpp"

namespace rollover {

/// L(t,T) = (A / P - 1) / tau.
double term_rate(double A, double P, double tau);
/// F_t(T,T+delta) = (P_T / P_Td - 1) / delta.
double simple_forward(double P_T, double P_Td, double delta);
/// L_t(T,T+delta) = ((1 + delta F) S - 1) / delta.
double forward_term_rate(double spread, double F, double delta);
/// S_t(T,T+delta) = (1 + delta L) / (1 + delta F).
double fwd_spread(double L, double F, double delta);
/// Value of a single-period swap paying delta (L - R) at T + delta.
double sps_value(double L, double R, double delta, double P_Td);

enum class CurveMethod { pde, mc };
CurveMethod curve_method_from_string(const std::string& s);
std::string to_string(CurveMethod m);

struct CurveOptions {
    CurveMethod method = CurveMethod::pde;
    std::size_t n_x = 401;
    /// Time levels per year for the PDE path.
    std::size_t levels_per_year = 400;
    SimConfig mc;
};

struct MaturityRow {
    double T = 0.0;
    double P = 0.0;          // P(t,T)
    double p_hat = 0.0;      // P / v*(t,x)
    double F = 0.0;          // simple spot rate F(t,T); 0 at T = t
    double S = 1.0;          // spot spread S(t,T) = A(t,T)
    double L = 0.0;          // term rate L(t,T); 0 at T = t
    double S_stderr = 0.0;   // mc only
};

struct TenorRow {
    double T = 0.0;
    double delta = 0.0;
    double P_T = 0.0;
    double P_Td = 0.0;
    double F = 0.0;          // F_t(T,T+delta)
    double S = 1.0;          // S_t(T,T+delta)
    double L = 0.0;          // L_t(T,T+delta)
    double S_stderr = 0.0;   // mc only
    bool spot_case = false;  // T == t, reported S equals S(t, t+delta)
    double sps_value_par = 0.0;   // Pi at R = L
    double sps_value_at_F = 0.0;  // Pi at R = F
};

struct TermStructureReport {
    double t = 0.0;
    std::vector<double> x;
    std::string method;
    json solver;
    std::vector<MaturityRow> maturities;
    std::vector<TenorRow> tenors;
    /// Rows where S < 1 although the model declares phi >= 0.
    std::vector<std::string> flags;

    json to_json() const;
};

/// Rows for every maturity and every (maturity, tenor) pair; maturities must
/// be sorted, >= t, and T + delta within the horizon.
TermStructureReport term_structure_report(const FactorModelSpec& model, double t, std::span<const double> x,
                                          const std::vector<double>& maturities, const std::vector<double>& tenors,
                                          const CurveOptions& options);

/// One row per (T, delta).
void write_csv(const TermStructureReport& report, std::ostream& out);

}  // namespace rollover
