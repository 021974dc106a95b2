#pragma once

#include "scatter/volterra.hpp"

#include <json.hpp>

namespace scatter {

/// Raised when the phase cannot be unwrapped on the given k grid.
class PhaseError : public std::runtime_error {
 public:
  PhaseError(const std::string& msg, double k_lo, double k_hi)
      : std::runtime_error(msg), k_lo(k_lo), k_hi(k_hi) {}
  double k_lo, k_hi;
};

/// w(zeta) = theta(0, zeta).
cplx jost_function(const Potential& p, cplx zeta, const SolverOptions& opt = {});

struct ScatteringData {
  Eigen::VectorXd k;
  Eigen::VectorXcd w;
  Eigen::VectorXd amplitude;
  Eigen::VectorXd eta;  ///< continuous branch with eta(inf) = 0, w = A e^{i eta}
  Eigen::VectorXcd s;   ///< conj(w) / w = e^{-2 i eta}
  cplx w0;
  bool resonance = false;
  double delta = 0.0;
  double tol_res = 0.0;
  /// eta(0+): continued from the smallest k to w(0); in the resonant case the
  /// nearest odd multiple of pi/2 to the extrapolated value.
  double eta0 = 0.0;
  double eta0_extrapolated = 0.0;
  bool eta0_uncertain = false;
  double max_unitarity_error = 0.0;  ///< max ||s| - 1|

  Eigen::Index size() const { return k.size(); }
};

struct ResonanceInfo {
  cplx w0;
  bool resonance = false;
  double delta = 0.0;
  double tol_res = 0.0;
};

/// tol_res = 1e-6 median |w(k)| over ten log-spaced k in [k_min, 10 k_min].
ResonanceInfo resonance_probe(const Potential& p, double k_min = 0.01,
                              const SolverOptions& opt = {});

/// Jost function, scattering matrix and phase shift on an increasing k grid.
/// Requires |w(k_max) - 1| < 0.1 and |arg w(k_max)| < pi / 4.
ScatteringData smatrix_and_phase(const Potential& p, const Eigen::VectorXd& k_grid,
                                 const SolverOptions& opt = {});

/// Smallest k_start * 2^j (j >= 0) in the high-energy regime required by
/// smatrix_and_phase.
double high_energy_k(const Potential& p, double k_start = 40.0, const SolverOptions& opt = {});

/// Logarithmic grid of n points on [k_min, k_max].
Eigen::VectorXd log_k_grid(double k_min, double k_max, Eigen::Index n);

/// eta at an arbitrary k > 0: w(k) solved directly, branch fixed by the
/// nearest sample of sd.
double phase_at(const ScatteringData& sd, const Potential& p, double k,
                const SolverOptions& opt = {});

struct BoundState {
  double kappa = 0.0;
  double energy = 0.0;
  double norm = 0.0;            ///< L2 norm of theta(., i kappa)
  double derivative = 0.0;      ///< d w(i kappa) / d kappa at the root
  double residual = 0.0;        ///< ODE residual of the eigenfunction
  double decay_rate = 0.0;      ///< fitted -d log|theta| / dx beyond the support
  bool degenerate = false;      ///< derivative below threshold (double root suspected)
};

struct Spectrum {
  std::vector<BoundState> states;  ///< kappa descending
  double kappa_max = 0.0;
  double scan_step = 0.0;
  std::size_t count() const { return states.size(); }
};

/// Zeros of kappa -> w(i kappa) on (0, kappa_max] by sign-change bracketing and
/// root polishing. kappa_max <= 0 selects 1.05 sqrt(sup|v|) + 0.05.
Spectrum bound_states(const Potential& p, double kappa_max = 0.0, const SolverOptions& opt = {});

/// max over (x, k) of |phi - (theta(k) w(-k) - theta(-k) w(k)) / (2ik)| / (1 + |phi|),
/// with theta(., -k) solved independently.
double consistency_regular_by_jost(const Potential& p, const std::vector<double>& x_list,
                                   const std::vector<double>& k_list,
                                   const SolverOptions& opt = {});

/// CSV: k, re_w, im_w, amplitude, eta, re_s, im_s.
void write_csv(std::ostream& os, const ScatteringData& sd);

/// {kappa, energies, N, resonance, delta}.
nlohmann::json spectrum_json(const Spectrum& spec, const ResonanceInfo& res);

}  // namespace scatter
