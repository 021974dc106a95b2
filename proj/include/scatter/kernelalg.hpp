#pragma once

#include "scatter/waveop.hpp"

#include <json.hpp>

#include <iosfwd>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>

namespace scatter {

/// Out-of-scope order, mismatched grids, or an exceeded quadrature budget.
class KernelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// V with sup (1 + x)^e |V| < inf, e = exponent(). V_1 needs e > 1, V_2 needs e > 2.
using VSpaceElement = TailFunction;

inline bool in_v1(const VSpaceElement& v) { return v.exponent() > 1.0; }
inline bool in_v2(const VSpaceElement& v) { return v.exponent() > 2.0; }

/// Sampled kernel, rows x and columns k (or y).
struct Kernel2D {
  Eigen::VectorXd x, y;
  Eigen::MatrixXcd values;
  std::string label;
  /// |K| ~ (1 + x)^{-x_exponent} k^{-y_exponent} for large arguments.
  double x_exponent = std::numeric_limits<double>::quiet_NaN();
  double y_exponent = std::numeric_limits<double>::quiet_NaN();
  std::function<cplx(double, double)> exact;  ///< empty unless a closed form is known
};

/// Jost data at one k.
struct JostColumn {
  double k = 0.0;
  WaveSolution theta;
  cplx w;
  cplx phase;        ///< e^{-i eta(k)} = conj(w) / |w|
  double eta = 0.0;  ///< arg w in (-pi, pi]; kernels only see e^{-i eta}
  cplx p(double x) const { return theta.value_at(x) - std::exp(cplx(0.0, k * x)); }
};

/// Everything here is built for the potential cut at the horizon L (the support
/// end, or the Jost boundary point otherwise). This is the potential the Jost
/// solver actually sees, so every integral to infinity stops at L and every V
/// is restricted to [0, L].
class KernelContext {
 public:
  explicit KernelContext(Potential p, SolverOptions opt = {});

  const Potential& potential() const { return p_; }
  const SolverOptions& solver() const { return opt_; }
  double horizon() const { return horizon_; }
  /// Panel grid on [0, L] with the potential's breakpoints as edges.
  std::shared_ptr<const XGrid> base_grid() const { return base_; }
  /// V_v = int_x^L v.
  const VSpaceElement& vv() const { return vv_; }
  /// V resampled on the base grid and set to zero past L.
  VSpaceElement restrict(const VSpaceElement& v) const;
  /// V_u = int_x^L u for a continuous u.
  VSpaceElement antiderivative(const VSpaceElement& u) const;

  /// Cached Jost data.
  std::shared_ptr<const JostColumn> jost(double k) const;
  /// Uncached, for sweeps over many k.
  JostColumn solve(double k) const;
  /// Base grid refined to resolve e^{2ikx}.
  std::shared_ptr<const XGrid> column_grid(double k) const;
  /// |int_L^inf v| / k: integration-by-parts size of what the cut drops from
  /// the oscillatory integrals (0 for compact support).
  double truncation_bound(double k) const { return vv_beyond_ / k; }

 private:
  Potential p_;
  SolverOptions opt_;
  double horizon_ = 0.0;
  double vv_beyond_ = 0.0;
  std::shared_ptr<const XGrid> base_;
  VSpaceElement vv_;
  mutable std::mutex lock_;
  mutable std::map<double, std::shared_ptr<const JostColumn>> jost_;
};

/// x -> K(x, k) at fixed k, zero past the grid end.
struct KernelColumn {
  double k = 0.0;
  std::shared_ptr<const XGrid> grid;
  Eigen::VectorXcd values;
  cplx operator()(double x) const;
};

// F_1 / F_2 --------------------------------------------------------------

struct FKernels {
  Kernel2D f1;     ///< sqrt(2/pi) e^{ikx} (s - 1) / 2i
  Kernel2D f2;     ///< sqrt(2/pi) (p s - conj p) / 2i
  Kernel2D f2_im;  ///< sqrt(2/pi) Im(p e^{-i eta}) e^{-i eta}
  double max_form_gap = 0.0;
};

FKernels f_kernels(const KernelContext& ctx, const Eigen::VectorXd& xs, const Eigen::VectorXd& ks);

// columns on ctx.column_grid(k) -------------------------------------------

/// sqrt(2/pi) sin(kx - eta).
KernelColumn sine_seed(const KernelContext& ctx, double k);
/// sqrt(2/pi) Im(p e^{-i eta}) = e^{i eta} F_2.
KernelColumn p_seed(const KernelContext& ctx, double k);
/// [S_u W](x) = int_x^L sin(k(y - x)) / k u(y) W(y) dy, u continuous.
KernelColumn apply_s(const KernelContext& ctx, const VSpaceElement& u, const KernelColumn& w);
/// Same with u = v read from the potential (one-sided at jumps).
KernelColumn apply_s_v(const KernelContext& ctx, const KernelColumn& w);
/// W[V_1, ..., V_n](., k), any n >= 1, by n damped cumulative integrals.
KernelColumn w_bracket_column(const KernelContext& ctx, const std::vector<VSpaceElement>& vs,
                              double k);
/// r_1 .. r_n (element j is r_{j+1}), r_1 = S_v sine_seed.
std::vector<KernelColumn> rn_columns(const KernelContext& ctx, double k, int n);
/// p_N = S_v^N p_seed.
KernelColumn pn_column(const KernelContext& ctx, double k, int n);

/// values(i, j) = column(ks(j))(xs(i)); columns run in parallel.
Kernel2D sample_kernel(const std::function<KernelColumn(double)>& column, const Eigen::VectorXd& xs,
                       const Eigen::VectorXd& ks, std::string label);

// nested quadrature (independent of the column route) -----------------------

struct R1Forms {
  double substituted = 0.0;       ///< (1/2) sqrt(2/pi) int V_v((x+y)/2) sin(ky - eta) dy
  double pre_substitution = 0.0;  ///< sqrt(2/pi) int V_v(y) sin(k(2y - x) - eta) dy
  double definitional = 0.0;      ///< sqrt(2/pi) int sin(k(y-x))/k v(y) sin(ky - eta) dy
};
R1Forms r1_forms(const KernelContext& ctx, double x, double k);

struct R1Result {
  Kernel2D kernel;  ///< substituted form
  double max_substitution_gap = 0.0;
  double max_definition_gap = 0.0;
  double truncation_bound = 0.0;  ///< max over ks
};
/// Throws KernelError when the truncation bound exceeds `budget`.
R1Result r1_kernel(const KernelContext& ctx, const Eigen::VectorXd& xs, const Eigen::VectorXd& ks,
                   double budget = std::numeric_limits<double>::infinity());

/// S_v applied to r_prev(k) (resampled onto the column grid when needed).
/// Throws KernelError when the column grids together exceed max_nodes.
Kernel2D iterate_rn(const KernelContext& ctx, const std::function<KernelColumn(double)>& r_prev,
                    const Eigen::VectorXd& xs, const Eigen::VectorXd& ks,
                    Eigen::Index max_nodes = 20'000'000);

/// r_n and p_N as n-fold integrals, n <= 2.
double rn_direct(const KernelContext& ctx, int n, double x, double k);
double pn_direct(const KernelContext& ctx, int n, double x, double k);

/// W bracket in the original variables, n <= 3.
double w_bracket(const KernelContext& ctx, const std::vector<VSpaceElement>& vs, double x, double k);
/// W bracket after the changes of variables, V_j((y_j + y_{j-1}) / 2) factors, n <= 3.
double w_bracket_substituted(const KernelContext& ctx, const std::vector<VSpaceElement>& vs,
                             double x, double k);

// p_N ----------------------------------------------------------------------

struct PnKernel {
  Kernel2D kernel;
  int n = 1;
  double decomposition_residual = 0.0;  ///< max |F_2 - (p_N + R_N) e^{-i eta}|
  double fitted_slope = std::numeric_limits<double>::quiet_NaN();
  double predicted_slope = std::numeric_limits<double>::quiet_NaN();  ///< -(N+1)(rho-1)
};

/// N in {1, 2}. The slope is fitted at ks(0) over [xs.min, xs.max] when
/// 1 + x spans at least a factor 2.
PnKernel pN_kernel(const KernelContext& ctx, int n, const Eigen::VectorXd& xs,
                   const Eigen::VectorXd& ks);

/// Least-squares slope of log(max |c| over a window pi/k) against log(1 + x).
double fitted_envelope_slope(const KernelColumn& c, double x_lo, double x_hi, int points = 24);
/// Least-squares slope of log |V| against log(1 + x).
double fitted_tail_slope(const VSpaceElement& v, double x_lo, double x_hi, int points = 16);

// estimates ----------------------------------------------------------------

struct EnvelopeFit {
  double constant = 0.0;  ///< max |value| / bound over the panel
  /// max ratio over the outer half of the panel / max over the inner half.
  double growth = 0.0;
  std::size_t samples = 0;
};

/// F_2 against k^{-1}(1+x)^{-(rho-1)} (k > 1) and (1+x)^{-(rho-2)} (k <= 1).
EnvelopeFit estimate_k2(const KernelContext& ctx, double rho, const Eigen::VectorXd& xs,
                        const Eigen::VectorXd& ks);
/// prod_{j=1,2} |sin(k(x_j - x_{j-1}))/k v(x_j)| against k^{-2} prod (1+x_j)^{-rho}
/// (k > 1) and prod (1+x_j)^{-(rho-1)} (k <= 1) on a simplex panel in [0, x_end].
EnvelopeFit estimate_messy(const KernelContext& ctx, double rho, const Eigen::VectorXd& ks,
                           double x_end = 30.0, int points_per_axis = 12);

// U brackets ---------------------------------------------------------------

/// U[V_1](x, y) = V_1((x+y)/2) Y(y-x) / 2; U[V_1, V_2] by one quadrature. n <= 2.
double u_bracket(const KernelContext& ctx, const std::vector<VSpaceElement>& vs, double x,
                 double y);

struct FactorizationSample {
  double x = 0.0, k = 0.0;
  double w = 0.0;         ///< W bracket, column route
  double u_phi_fs = 0.0;  ///< int U(x, y) sqrt(2/pi) sin(ky - eta) dy
  double residual = 0.0;
};

struct FactorizationReport {
  int n = 1;
  std::vector<FactorizationSample> samples;
  double max_residual = 0.0;
  double frobenius = 0.0;  ///< of U on 0 <= x <= y, 2-D quadrature
  double epsilon = 0.0;    ///< min exponent - 1
  EnvelopeFit envelope;    ///< against (1+x)^{-(1+eps)/2-(n-1)eps} (1+y)^{-(1+eps)/2}
};

FactorizationReport u_bracket_factorization(const KernelContext& ctx,
                                            const std::vector<VSpaceElement>& vs,
                                            const Eigen::VectorXd& xs, const Eigen::VectorXd& ks);

/// ||U[V]||_HS^2 = (1/2) int m V(m)^2 dm, and the same on the triangle
/// 0 <= x <= y <= b, (1/2) int_0^b min(m, b - m) V(m)^2 dm.
double u1_frobenius_closed_form(const VSpaceElement& v);
double u1_frobenius_box_closed_form(const VSpaceElement& v, double b);
/// The triangle version by 2-D quadrature in (x, y).
double u1_frobenius_box_quadrature(const VSpaceElement& v, double b);

// identities ---------------------------------------------------------------

struct IdentityResult {
  std::string identity;
  double x = 0.0, k = 0.0;
  double lhs = 0.0, rhs = 0.0, residual = 0.0;  ///< residual relative to max |lhs|, |rhs|
  bool pass = false;
};

struct IdentityReport {
  std::vector<IdentityResult> results;
  double tolerance = 1e-6;
  double associativity_gap = 0.0;  ///< sup |(V_u * V_1) * V_2 - V_u * (V_1 * V_2)|
  bool pass = true;
  std::vector<std::string> failing() const;
};

/// "for 1": S_u W[V] = W[V_u, V] - W[V_u * V], V = V_v.
/// "for n+1" (n = 1): S_u W[V_1, V_2] = W[V_u, V_1, V_2] - S_{V_u V_1} W[V_2].
/// "for n" (n = 2): S_u W[V_1, V_2] = W[V_u, V_1, V_2] - W[V_u * V_1, V_2] + W[(V_u * V_1) * V_2].
/// V_1 = V_v, V_2 = V_v * V_v; u = v unless given.
IdentityReport identity_checks(const KernelContext& ctx,
                               const std::vector<std::pair<double, double>>& samples =
                                   {{0.0, 1.0}, {0.5, 2.0}, {1.0, 0.5}},
                               const std::optional<VSpaceElement>& u = std::nullopt,
                               double tolerance = 1e-6);

// operator level -----------------------------------------------------------

/// F_2 Fs on the operator grid (x -> x).
GridOperator kernel_remainder(const KernelContext& ctx, const Transforms& t);

struct OperatorDecomposition {
  double residual = 0.0;   ///< ||F_2 Fs - (p_N + R_N) e^{-i eta} Fs||_F
  double reference = 0.0;  ///< ||F_2 Fs||_F
};

OperatorDecomposition operator_decomposition(const KernelContext& ctx, const Transforms& t, int n);

struct RemainderComparison {
  double frobenius_gap = 0.0;  ///< ||K_kernel - K_operator||_F
  double probe_gap = 0.0;      ///< max over probes ||(K_kernel - K_operator) p|| / ||p||
  double kernel_frobenius = 0.0, operator_frobenius = 0.0;
};

RemainderComparison compare_remainders(const GridOperator& kernel_k, const GridOperator& operator_k,
                                       const std::vector<Eigen::VectorXcd>& probes);

// output -------------------------------------------------------------------

/// CSV rows: x, k, re, im.
void write_csv(std::ostream& os, const Kernel2D& k);
/// {identity, sample, lhs, rhs, residual} per row.
nlohmann::json to_json(const IdentityReport& r);
nlohmann::json to_json(const FactorizationReport& r);
nlohmann::json to_json(const PnKernel& r);
nlohmann::json to_json(const EnvelopeFit& r);

}  // namespace scatter
