#pragma once

#include "scatter/scattering.hpp"

#include <json.hpp>

namespace scatter {

/// Raised when a curve cannot be wound: a sample too close to zero or a phase
/// step too large (the sample interval is reported for refinement).
class WindingError : public std::runtime_error {
 public:
  WindingError(const std::string& msg, Eigen::Index first, Eigen::Index second)
      : std::runtime_error(msg), first(first), second(second) {}
  Eigen::Index first, second;
};

/// phi(t) = 1 / (i e^{pi t} + 1)
cplx phi_symbol(double t);
/// psi(t) = 1 / (1 - i e^{-pi t})
cplx psi_symbol(double t);

/// Sampled edge curve with the analytic limits of its ends.
struct EdgeCurve {
  Eigen::VectorXd param;
  Eigen::VectorXcd values;
  cplx start_limit{1.0, 0.0};  ///< value at param = -inf
  cplx end_limit{1.0, 0.0};    ///< value at param = +inf
};

/// Gamma_1(beta) = s(e^beta), Gamma_2(alpha), Gamma_3 = Gamma_4 = 1.
struct BoundarySymbol {
  EdgeCurve gamma1, gamma2, gamma3, gamma4;
  bool resonance = false;
  double eta_span = 0.0;  ///< eta(inf) - eta(0) from the scattering data
  double delta = 0.0;
  /// |Gamma_1(beta_min) - Gamma_2(-inf)|, |Gamma_2(+inf) - Gamma_3|,
  /// |Gamma_3 - Gamma_4|, |Gamma_1(beta_max) - Gamma_4|.
  std::array<double, 4> corner_gaps{};
  bool near_resonant = false;
  int refinements = 0;
};

struct SymbolOptions {
  double alpha_min = -6.0, alpha_max = 6.0;
  Eigen::Index alpha_points = 1201;
  double beta_min = -9.0, beta_max = 7.0;
  Eigen::Index beta_points = 1601;
  double max_step = 0.7853981633974483;  ///< pi / 4
  int max_refinements = 5;
};

/// Symbol from existing scattering data; the data must cover k = e^beta on
/// the beta range (samples outside it are ignored).
BoundarySymbol boundary_symbol(const ScatteringData& sd, const SymbolOptions& opt = {});

/// Solves the scattering problem on a log grid over the beta window and
/// refines it until every phase step of Gamma_1 is below opt.max_step.
BoundarySymbol boundary_symbol(const Potential& p, const SymbolOptions& opt = {},
                               const SolverOptions& solver = {});

/// (1 / 2 pi) sum of principal arg(z_{j+1} / z_j).
double winding_of_curve(const Eigen::VectorXcd& curve);

/// Winding of an edge including the analytic closure from each end sample to
/// its limit value.
double edge_winding(const EdgeCurve& edge);

struct WindingReport {
  double wn1 = 0.0, wn2 = 0.0, wn3 = 0.0, wn4 = 0.0;
  double total = 0.0;
  int expected_index = 0;
  double residual_to_half_integer = 0.0;
  double classical_residual = 0.0;  ///< eta(inf) - eta(0) - pi (N + delta)
  bool resonance = false;
  bool pass = false;
};

/// total = -wn1 + wn2 + wn3 - wn4 (clockwise orientation); pass iff
/// |total - N| < 5e-3.
WindingReport levinson_verify(const BoundarySymbol& sym, const Spectrum& spec);

nlohmann::json to_json(const WindingReport& r);

/// CSV: param, re, im.
void write_csv(std::ostream& os, const EdgeCurve& edge);

/// SVG document with one polyline per edge curve in the complex plane.
void write_svg(std::ostream& os, const BoundarySymbol& sym);

}  // namespace scatter
