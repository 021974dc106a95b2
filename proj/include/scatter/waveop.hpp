#pragma once

#include "scatter/scattering.hpp"

#include <json.hpp>

#include <iosfwd>
#include <memory>
#include <optional>

namespace scatter {

/// Raised for incompatible or under-resolved operator grids.
class GridError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Uniform x grid x_j = j h (j = 1..n_x, origin excluded) and midpoint k
/// lattice k_m = (m + 1/2) dk (m = 0..n_k - 1); both carry rectangle weights.
struct OperatorGrid {
  Eigen::VectorXd x, wx, k, wk;
  double h = 0.0, dk = 0.0;

  double x_max() const { return x(x.size() - 1); }
  double k_min() const { return k(0); }
  double k_max() const { return k(k.size() - 1) + 0.5 * dk; }

  /// Defaults: X = 40, h = 0.02, k in (0, 39] with dk = 0.02 (k_min = 0.01).
  static OperatorGrid uniform(double x_max = 40.0, double h = 0.02, double k_max = 39.0,
                              double dk = 0.02);
  /// Twice the points on each axis and 1.5 times the x extent, same k band.
  OperatorGrid refined() const;
  nlohmann::json to_json() const;
};

/// Matrix in sqrt-weight symmetrized form, stored as real and imaginary
/// parts (im empty for real operators). Vectors acting on it are
/// symmetrized samples sqrt(w_j) f(x_j).
struct GridOperator {
  Eigen::MatrixXd re, im;
  Eigen::VectorXd row_nodes, row_weights, col_nodes, col_weights;
  std::string label;

  bool is_real() const { return im.size() == 0; }
  Eigen::Index rows() const { return re.rows(); }
  Eigen::Index cols() const { return re.cols(); }
  Eigen::MatrixXcd dense() const;
  Eigen::VectorXcd apply(const Eigen::VectorXcd& v) const;
  GridOperator adjoint() const;
  double frobenius() const;
};

/// Symmetrized vector from samples and back.
Eigen::VectorXcd symmetrize(const Eigen::VectorXcd& samples, const Eigen::VectorXd& weights);
Eigen::VectorXcd desymmetrize(const Eigen::VectorXcd& v, const Eigen::VectorXd& weights);

/// a * b; throws GridError if the inner grids differ.
GridOperator compose(const GridOperator& a, const GridOperator& b, std::string label = {});
/// a + alpha * b on identical grids.
GridOperator add(const GridOperator& a, const GridOperator& b, cplx alpha = 1.0,
                 std::string label = {});

struct Transforms {
  OperatorGrid grid;
  GridOperator fs;  ///< x -> k, sqrt(2/pi) sin(k x)
  GridOperator fc;  ///< x -> k, sqrt(2/pi) cos(k x)
};

/// Requires k_max h < pi / 4 and dk < pi / X.
Transforms build_transforms(const OperatorGrid& g);

/// Fs^T Fs: the grid's identity on the band k < k_max.
GridOperator band_identity(const Transforms& t);
/// Fs^T diag(k^2) Fs.
GridOperator free_hamiltonian(const Transforms& t);

/// Modulated Gaussians e^{-(x - X/2)^2 / 2 sigma^2} sin(k0 (x - X/2)) with
/// carrier k0 = 0.4 k_max at three widths, as unit symmetrized vectors. Their
/// sine transforms are below 1e-12 outside [k_min, 0.8 k_max].
std::vector<Eigen::VectorXcd> band_limited_probes(const OperatorGrid& g);

/// max over probes of ||Fs^T Fs p - p|| / ||p||.
double calibrate_eps_disc(const Transforms& t, const std::vector<Eigen::VectorXcd>& probes);

/// max over probes of ||m p - target p|| / ||p||.
double probe_residual(const GridOperator& m, const GridOperator& target,
                      const std::vector<Eigen::VectorXcd>& probes);

struct GeneralizedFourier {
  GridOperator minus;  ///< x -> k, kernel sqrt(2/pi) conj(psi^-(x, k))
  GridOperator plus;   ///< x -> k, kernel sqrt(2/pi) conj(psi^+(x, k)), psi^+ = conj(psi^-)
  Eigen::VectorXcd w;  ///< Jost function on the k lattice
  Eigen::VectorXcd s;  ///< conj(w) / w
};

/// psi^-(x, k) = k phi(x, k) / w(k) from regular and Jost solutions on the
/// operator grid. Throws SolverError naming k if |w(k)| < 1e-10.
GeneralizedFourier build_generalized_fourier(const Potential& p, const Transforms& t,
                                             const SolverOptions& opt = {});

enum class DilationSymbol { phi, psi };

/// phi(t) = 1 / (i e^{pi t} + 1) or psi(t) = 1 / (1 - i e^{-pi t}).
cplx dilation_symbol(DilationSymbol id, double t);

/// f -> symbol(A) f through the Mellin substitution u(beta) = e^{beta/2} f(e^beta)
/// on a uniform periodic beta window [ln h, ln X], where A acts as -i d/dbeta
/// with reversed sign, [e^{-itA} f](x) = e^{t/2} f(e^t x).
class DilationMultiplier {
 public:
  DilationMultiplier(DilationSymbol id, const Transforms& t, Eigen::Index n_beta = 4096);

  cplx symbol(double t) const { return dilation_symbol(id_, t); }
  /// Acts on symmetrized x vectors; the input is read through its band-limited
  /// sine interpolant.
  Eigen::VectorXcd apply(const Eigen::VectorXcd& v) const;
  /// Fraction of the L2(d beta) mass of the log-substituted output within 5%
  /// of either window edge (edge faithfulness diagnostic).
  double edge_fraction(const Eigen::VectorXcd& v) const;
  double beta_min() const { return beta0_; }
  double beta_max() const { return beta0_ + span_; }

 private:
  Eigen::VectorXcd beta_coefficients(const Eigen::VectorXcd& v) const;

  DilationSymbol id_;
  OperatorGrid grid_;
  std::shared_ptr<const Transforms> t_;
  double beta0_ = 0.0, span_ = 0.0;
  Eigen::MatrixXd synth_;  ///< n_beta x n_k: e^{beta/2} sqrt(2/pi) sin(k e^beta) sqrt(dk)
  Eigen::VectorXd freq_;   ///< FFT-ordered angular frequencies
};

DilationMultiplier dilation_multiplier(DilationSymbol id, const Transforms& t,
                                       Eigen::Index n_beta = 4096);

/// (1/2i)(Fc^T Fs + i) for phi, 1 - phi(A) for psi.
GridOperator dilation_by_transforms(DilationSymbol id, const Transforms& t);

/// Fs^T diag(s) Fs.
GridOperator scattering_operator(const Eigen::VectorXcd& s, const Transforms& t);
GridOperator scattering_operator(const ScatteringData& sd, const Transforms& t);

struct HsReport {
  double frobenius = 0.0;
  std::vector<double> singular_values;  ///< leading 20
  double tail_fraction = 0.0;           ///< sum_{j > 20} sigma_j^2 / sum sigma_j^2
  nlohmann::json grid;
  double refined_frobenius = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> refined_singular_values;
  double relative_change = std::numeric_limits<double>::quiet_NaN();
};

/// Leading singular values by subspace iteration with a fixed seed.
std::vector<double> leading_singular_values(const GridOperator& m, int count = 20);

struct Remainder {
  GridOperator w_minus;  ///< Fminus^* Fs
  GridOperator k;        ///< W_- - P - phi(A)(S - P)
  HsReport hs;
};

/// The identity is the band identity P of the grid.
Remainder remainder_extract(const GeneralizedFourier& gf, const Transforms& t,
                            const GridOperator& phi_a, const GridOperator& s_op);

struct WplusReport {
  double wplus_vs_wminus_sstar = 0.0;  ///< ||W_+ - W_- S^*||_F / ||P||_F
  double wplus_probe_residual = 0.0;   ///< on probes
  double kprime_frobenius = 0.0;       ///< K' = W_+ - P - psi(A)(S^* - P)
};

WplusReport wplus_formula(const GeneralizedFourier& gf, const Transforms& t,
                          const GridOperator& w_minus, const GridOperator& s_op,
                          const GridOperator& psi_a, const std::vector<Eigen::VectorXcd>& probes);

/// Normalized bound-state vectors theta(x, i kappa) on the x grid.
std::vector<Eigen::VectorXcd> bound_state_vectors(const Potential& p, const Spectrum& spec,
                                                  const OperatorGrid& g,
                                                  const SolverOptions& opt = {});

struct IsometryReport {
  double wstar_w = 0.0;        ///< max over probes ||W^*W p - p|| / ||p||
  double w_wstar = 0.0;        ///< max over probes ||W W^* p - (1 - sum P_j) p|| / ||p||
  Eigen::VectorXd eigenvalues; ///< of W W^* compressed to span{probes, bound states}
  int rank_defect = 0;         ///< eigenvalues below 1/2
};

IsometryReport partial_isometry(const GridOperator& w_minus,
                                const std::vector<Eigen::VectorXcd>& probes,
                                const std::vector<Eigen::VectorXcd>& bound_states);

/// Everything waveop computes for one potential on one grid.
struct WaveOperatorStudy {
  OperatorGrid grid;
  double eps_disc = 0.0;
  double fminus_unitarity = 0.0;    ///< ||Fminus Fminus^* g - g|| on k-space probes Fs p
  double s_unitarity = 0.0;         ///< ||S^* S p - p|| on probes
  double s_commutes_h0 = 0.0;       ///< ||(S H0 - H0 S) p|| / ||H0 p||
  double intertwining = 0.0;        ///< ||(Fs H0 - k^2 Fs) p|| / ||k^2 Fs p||
  double dilation_log = 0.0;        ///< ||Fs B p - ln(k) Fs p|| / ||ln(k) Fs p||
  double phi_mellin_vs_transforms = 0.0;
  double psi_mellin_vs_transforms = 0.0;
  double mellin_edge_fraction = 0.0;
  IsometryReport isometry;
  std::optional<IsometryReport> refined_isometry;  ///< on grid.refined() when refining
  WplusReport wplus;
  HsReport hs;
  Remainder remainder;  ///< matrices kept for dumps and cross-checks
};

struct StudyOptions {
  bool refine = true;        ///< repeat the Frobenius norm on grid.refined()
  bool keep_matrices = true;
  Eigen::Index n_beta = 4096;
};

WaveOperatorStudy wave_operator_study(const Potential& p, const OperatorGrid& g,
                                      const StudyOptions& so = {}, const SolverOptions& opt = {});

/// {frobenius, singular_values[], tail_fraction, grid, refined_frobenius, relative_change}.
nlohmann::json to_json(const HsReport& r);
nlohmann::json to_json(const WaveOperatorStudy& s);

/// CSV rows: i, j, re, im.
void write_csv(std::ostream& os, const GridOperator& m);
/// CSV rows: index, sigma.
void write_singular_values_csv(std::ostream& os, const std::vector<double>& sv);

}  // namespace scatter
