#pragma once

#include "scatter/potentials.hpp"

#include <iosfwd>

namespace scatter {

/// Raised when the successive approximation fails to converge or produces
/// non-finite values.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SolutionKind { regular, jost };

struct SolverOptions {
  double tol = 1e-12;   ///< sup-norm update tolerance (relative to sup|u|)
  int max_iter = 200;
  int order = 16;       ///< Lobatto points per panel
  double max_width = 0.5;
  double jost_cap = 200.0;  ///< largest boundary point for non-compact potentials
};

/// Samples of a solution u(x; zeta) on a panel grid, with a closed-form
/// continuation past the grid end (where the potential is taken as zero).
struct WaveSolution {
  cplx zeta;
  SolutionKind kind = SolutionKind::regular;
  std::shared_ptr<const XGrid> grid;
  Eigen::VectorXcd values;
  Eigen::VectorXcd derivs;
  int iterations = 0;
  double residual = 0.0;  ///< max |-u'' + v u - zeta^2 u| / max |u| over panel interiors

  /// u(x) for any x >= 0.
  cplx value_at(double x) const;
  cplx deriv_at(double x) const;
  double x_max() const { return grid->x_max(); }

  // Integrals over the whole grid used by the continuation of the regular
  // solution: (1 + ic, is) in the cos/sin split or (jm, jp) in the
  // exponential split.
  bool exponential_split = false;
  cplx tail_a, tail_b;
};

/// Panel width that resolves oscillation at |zeta|.
double resolving_width(cplx zeta, const SolverOptions& opt = {});

/// Grid on [0, x_end] with the potential's breakpoints as panel edges.
std::shared_ptr<const XGrid> solver_grid(const Potential& p, cplx zeta, double x_end,
                                         const SolverOptions& opt = {});

/// Boundary point for the Jost problem: the support end if compact, else the
/// smallest X (step 5) with int_X^inf y |v| < 1e-10, capped at opt.jost_cap.
double jost_x_max(const Potential& p, const SolverOptions& opt = {});

WaveSolution solve_regular(const Potential& p, cplx zeta, std::shared_ptr<const XGrid> g,
                           const SolverOptions& opt = {});
/// Regular solution on a default grid reaching x_end.
WaveSolution solve_regular(const Potential& p, cplx zeta, double x_end,
                           const SolverOptions& opt = {});

WaveSolution solve_jost(const Potential& p, cplx zeta, std::shared_ptr<const XGrid> g,
                        const SolverOptions& opt = {});
/// Jost solution on the default grid [0, jost_x_max].
WaveSolution solve_jost(const Potential& p, cplx zeta, const SolverOptions& opt = {});

/// Independent classical RK4 march of -u'' + v u = zeta^2 u from (x0, u0, du0)
/// to each point of `targets` (any order relative to x0, monotone list).
/// Steps never straddle breakpoints of v. Returns (u, u') pairs.
std::vector<std::pair<cplx, cplx>> rk4_march(const Potential& p, cplx zeta, double x0, cplx u0,
                                             cplx du0, const std::vector<double>& targets,
                                             double h);

/// RK4 cross-check of a Volterra solution at the given points: the march
/// starts from the exact initial data (regular) or from e^{i zeta X} at the
/// grid end (Jost). Returns max |u_rk4 - u| / max(1, |u|).
double rk4_crosscheck(const Potential& p, const WaveSolution& sol, const std::vector<double>& xs,
                      double h = 0.0);

/// Row of the p = theta - e^{ikx} table.
struct PSample {
  double x = 0.0, k = 0.0;
  cplx p;
  double abs_tail = 0.0, first_moment = 0.0;
  bool within_estimate1 = true;  ///< only meaningful for k > k0
  bool within_estimate2 = true;
};

struct PKernelTable {
  double k0 = 1.0;
  double c1 = 0.0;  ///< fitted: max |p| k / abs_tail over k > k0
  double c2 = 0.0;  ///< fitted: max |p| / first_moment
  /// max of |p| k / abs_tail over the upper half of the k list divided by its
  /// max over the lower half (bounded if the k^{-1} form is right).
  double c1_growth = 0.0;
  std::vector<PSample> samples;
};

PKernelTable p_kernel_and_estimates(const Potential& p, const std::vector<double>& k_list,
                                    const std::vector<double>& x_list, double k0 = 1.0,
                                    const SolverOptions& opt = {});

/// CSV: x, Re u, Im u, Re u', Im u', residual (pointwise ODE residual).
void write_csv(std::ostream& os, const WaveSolution& sol, const Potential& p);

}  // namespace scatter
