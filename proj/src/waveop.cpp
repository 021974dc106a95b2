#include "scatter/waveop.hpp"

#include "scatter/parallel.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <unsupported/Eigen/FFT>

#include <cmath>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>

namespace scatter {

namespace {

constexpr double pi = std::numbers::pi;
constexpr long double two_pi_l = 6.283185307179586476925286766559L;

const cplx I(0.0, 1.0);

// sin of a long double argument reduced to [0, 2 pi) first.
double sin_reduced(long double arg) {
  arg -= two_pi_l * std::floor(arg / two_pi_l);
  return std::sin(static_cast<double>(arg));
}

void require_same(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const char* what) {
  if (a.size() != b.size() || (a - b).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + a.cwiseAbs().maxCoeff()))
    throw GridError(std::string("grid mismatch in ") + what);
}

GridOperator shell(const Eigen::VectorXd& rn, const Eigen::VectorXd& rw, const Eigen::VectorXd& cn,
                   const Eigen::VectorXd& cw, std::string label) {
  GridOperator m;
  m.row_nodes = rn;
  m.row_weights = rw;
  m.col_nodes = cn;
  m.col_weights = cw;
  m.label = std::move(label);
  return m;
}

double rel(const Eigen::VectorXcd& r, const Eigen::VectorXcd& ref) {
  const double n = ref.norm();
  return n > 0.0 ? r.norm() / n : r.norm();
}

// Fs^T (f .* (Fs v)) without forming the matrix.
Eigen::VectorXcd sandwich(const Transforms& t, const Eigen::VectorXcd& f, const Eigen::VectorXcd& v) {
  const Eigen::VectorXcd kv = t.fs.apply(v);
  return t.fs.adjoint().apply(f.cwiseProduct(kv));
}

// c if m == c I, otherwise nullopt.
std::optional<double> scaled_identity(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols() || m.size() == 0) return std::nullopt;
  const double c = m(0, 0);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      if (m(i, j) != (i == j ? c : 0.0)) return std::nullopt;
  return c;
}

// a.re * b for a square real part; skips the product when a.re = c I.
Eigen::MatrixXd times_re(const Eigen::MatrixXd& are, const Eigen::MatrixXd& b) {
  if (const auto c = scaled_identity(are)) return *c * b;
  return are * b;
}

Eigen::MatrixXcd orthonormal_columns(const Eigen::MatrixXcd& a) {
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(a);
  return qr.householderQ() * Eigen::MatrixXcd::Identity(a.rows(), a.cols());
}

}  // namespace

// ---------------------------------------------------------------------------
// grids and operators

OperatorGrid OperatorGrid::uniform(double x_max, double h, double k_max, double dk) {
  if (!(h > 0.0) || !(x_max > h) || !(dk > 0.0) || !(k_max > dk))
    throw GridError("operator grid needs 0 < h < X and 0 < dk < k_max");
  const double nx = x_max / h, nk = k_max / dk;
  if (std::abs(nx - std::round(nx)) > 1e-9 * nx || std::abs(nk - std::round(nk)) > 1e-9 * nk)
    throw GridError("X / h and k_max / dk must be integers");
  OperatorGrid g;
  g.h = h;
  g.dk = dk;
  const auto n_x = static_cast<Eigen::Index>(std::llround(nx));
  const auto n_k = static_cast<Eigen::Index>(std::llround(nk));
  g.x = Eigen::VectorXd::LinSpaced(n_x, 1.0, static_cast<double>(n_x)) * h;
  g.wx = Eigen::VectorXd::Constant(n_x, h);
  g.k = (Eigen::VectorXd::LinSpaced(n_k, 0.0, static_cast<double>(n_k - 1)).array() + 0.5) * dk;
  g.wk = Eigen::VectorXd::Constant(n_k, dk);
  return g;
}

OperatorGrid OperatorGrid::refined() const {
  const auto n_x = 2 * x.size();
  const double X = 1.5 * x_max();
  OperatorGrid g = uniform(X, X / static_cast<double>(n_x), k_max(), 0.5 * dk);
  return g;
}

nlohmann::json OperatorGrid::to_json() const {
  return {{"x_max", x_max()}, {"h", h},         {"n_x", x.size()}, {"k_min", k_min()},
          {"k_max", k_max()}, {"dk", dk},       {"n_k", k.size()}};
}

Eigen::MatrixXcd GridOperator::dense() const {
  Eigen::MatrixXcd m(re.rows(), re.cols());
  m.real() = re;
  if (is_real())
    m.imag().setZero();
  else
    m.imag() = im;
  return m;
}

Eigen::VectorXcd GridOperator::apply(const Eigen::VectorXcd& v) const {
  if (v.size() != cols()) throw GridError("vector size does not match operator " + label);
  const Eigen::VectorXd vr = v.real(), vi = v.imag();
  Eigen::VectorXcd out(rows());
  if (is_real()) {
    out.real() = re * vr;
    out.imag() = re * vi;
  } else {
    out.real() = re * vr - im * vi;
    out.imag() = re * vi + im * vr;
  }
  return out;
}

GridOperator GridOperator::adjoint() const {
  GridOperator a = shell(col_nodes, col_weights, row_nodes, row_weights, label + "*");
  a.re = re.transpose();
  if (!is_real()) a.im = -im.transpose();
  return a;
}

double GridOperator::frobenius() const {
  return std::sqrt(re.squaredNorm() + (is_real() ? 0.0 : im.squaredNorm()));
}

Eigen::VectorXcd symmetrize(const Eigen::VectorXcd& samples, const Eigen::VectorXd& weights) {
  return samples.cwiseProduct(weights.cwiseSqrt().cast<cplx>());
}

Eigen::VectorXcd desymmetrize(const Eigen::VectorXcd& v, const Eigen::VectorXd& weights) {
  return v.cwiseQuotient(weights.cwiseSqrt().cast<cplx>());
}

GridOperator compose(const GridOperator& a, const GridOperator& b, std::string label) {
  require_same(a.col_nodes, b.row_nodes, "compose");
  GridOperator c = shell(a.row_nodes, a.row_weights, b.col_nodes, b.col_weights,
                         label.empty() ? a.label + "." + b.label : std::move(label));
  if (a.is_real() && b.is_real()) {
    c.re.noalias() = a.re * b.re;
  } else if (a.is_real()) {
    c.re.noalias() = a.re * b.re;
    c.im.noalias() = a.re * b.im;
  } else if (b.is_real()) {
    c.re.noalias() = a.re * b.re;
    c.im.noalias() = a.im * b.re;
  } else {
    c.re = times_re(a.re, b.re);
    c.re.noalias() -= a.im * b.im;
    c.im = times_re(a.re, b.im);
    c.im.noalias() += a.im * b.re;
  }
  return c;
}

GridOperator add(const GridOperator& a, const GridOperator& b, cplx alpha, std::string label) {
  require_same(a.row_nodes, b.row_nodes, "add");
  require_same(a.col_nodes, b.col_nodes, "add");
  GridOperator c = shell(a.row_nodes, a.row_weights, a.col_nodes, a.col_weights,
                         label.empty() ? a.label : std::move(label));
  const double ar = alpha.real(), ai = alpha.imag();
  c.re = a.re + ar * b.re;
  if (!b.is_real()) c.re -= ai * b.im;
  const bool real = a.is_real() && b.is_real() && ai == 0.0;
  if (!real) {
    c.im = a.is_real() ? Eigen::MatrixXd::Zero(a.rows(), a.cols()) : a.im;
    c.im += ai * b.re;
    if (!b.is_real()) c.im += ar * b.im;
  }
  return c;
}

// ---------------------------------------------------------------------------
// transforms

Transforms build_transforms(const OperatorGrid& g) {
  if (g.k_max() * g.h >= pi / 4) {
    std::ostringstream msg;
    msg << "k_max h = " << g.k_max() * g.h << " does not resolve oscillation (needs < pi/4)";
    throw GridError(msg.str());
  }
  if (g.dk >= pi / g.x_max()) {
    std::ostringstream msg;
    msg << "dk = " << g.dk << " aliases the x window (needs < pi / X = " << pi / g.x_max() << ")";
    throw GridError(msg.str());
  }
  Transforms t;
  t.grid = g;
  t.fs = shell(g.k, g.wk, g.x, g.wx, "Fs");
  t.fc = shell(g.k, g.wk, g.x, g.wx, "Fc");
  const Eigen::Index nk = g.k.size(), nx = g.x.size();
  t.fs.re.resize(nk, nx);
  t.fc.re.resize(nk, nx);
  const double c = std::sqrt(2.0 / pi);
  parallel_for(static_cast<std::size_t>(nx), [&](std::size_t jj) {
    const auto j = static_cast<Eigen::Index>(jj);
    for (Eigen::Index m = 0; m < nk; ++m) {
      const double a = c * std::sqrt(g.wk(m) * g.wx(j));
      const double arg = g.k(m) * g.x(j);
      t.fs.re(m, j) = a * std::sin(arg);
      t.fc.re(m, j) = a * std::cos(arg);
    }
  });
  return t;
}

GridOperator band_identity(const Transforms& t) {
  return compose(t.fs.adjoint(), t.fs, "P");
}

GridOperator free_hamiltonian(const Transforms& t) {
  GridOperator scaled = t.fs;
  scaled.re = t.grid.k.array().square().matrix().asDiagonal() * t.fs.re;
  return compose(t.fs.adjoint(), scaled, "H0");
}

std::vector<Eigen::VectorXcd> band_limited_probes(const OperatorGrid& g) {
  const double k0 = 0.4 * g.k_max();
  // e^{-z^2/2} < 1e-12 for z > 7.43
  const double sigma_min = 7.5 / (k0 - g.k_min());
  const double centre = 0.5 * g.x_max();
  if (7.5 * 2.0 * sigma_min > centre)
    throw GridError("x window too short for the band-limited probe set");
  std::vector<Eigen::VectorXcd> out;
  for (double scale : {1.0, 1.5, 2.0}) {
    const double sigma = scale * sigma_min;
    Eigen::VectorXcd v(g.x.size());
    for (Eigen::Index j = 0; j < g.x.size(); ++j) {
      const double z = g.x(j) - centre;
      v(j) = std::exp(-0.5 * z * z / (sigma * sigma)) * std::sin(k0 * z) * std::sqrt(g.wx(j));
    }
    out.push_back(v / v.norm());
  }
  return out;
}

double calibrate_eps_disc(const Transforms& t, const std::vector<Eigen::VectorXcd>& probes) {
  double eps = 0.0;
  const Eigen::VectorXcd ones = Eigen::VectorXcd::Ones(t.grid.k.size());
  for (const auto& p : probes) eps = std::max(eps, rel(sandwich(t, ones, p) - p, p));
  return eps;
}

double probe_residual(const GridOperator& m, const GridOperator& target,
                      const std::vector<Eigen::VectorXcd>& probes) {
  double worst = 0.0;
  for (const auto& p : probes) worst = std::max(worst, rel(m.apply(p) - target.apply(p), p));
  return worst;
}

// ---------------------------------------------------------------------------
// generalized Fourier transforms

GeneralizedFourier build_generalized_fourier(const Potential& p, const Transforms& t,
                                             const SolverOptions& opt) {
  const OperatorGrid& g = t.grid;
  const Eigen::Index nk = g.k.size(), nx = g.x.size();
  GeneralizedFourier gf;
  gf.minus = shell(g.k, g.wk, g.x, g.wx, "Fminus");
  gf.minus.re.resize(nk, nx);
  gf.minus.im.resize(nk, nx);
  gf.w.resize(nk);
  // Past the support the regular solution continues in closed form.
  const double x_end =
      p.support_end() ? std::min(g.x_max(), std::max(*p.support_end(), 1.0)) : g.x_max();
  const double c = std::sqrt(2.0 / pi);
  parallel_for(static_cast<std::size_t>(nk), [&](std::size_t mm) {
    const auto m = static_cast<Eigen::Index>(mm);
    const double k = g.k(m);
    const cplx w = jost_function(p, k, opt);
    if (std::abs(w) < 1e-10) {
      std::ostringstream msg;
      msg << "Jost function vanishes to 1e-10 at k = " << k;
      throw SolverError(msg.str());
    }
    const WaveSolution sol = solve_regular(p, k, x_end, opt);
    gf.w(m) = w;
    for (Eigen::Index j = 0; j < nx; ++j) {
      const cplx psi = k * sol.value_at(g.x(j)) / w;
      const double a = c * std::sqrt(g.wk(m) * g.wx(j));
      gf.minus.re(m, j) = a * psi.real();
      gf.minus.im(m, j) = -a * psi.imag();
    }
  });
  gf.s = gf.w.conjugate().cwiseQuotient(gf.w);
  gf.plus = gf.minus;
  gf.plus.label = "Fplus";
  gf.plus.im = -gf.minus.im;
  return gf;
}

// ---------------------------------------------------------------------------
// dilation multipliers

cplx dilation_symbol(DilationSymbol id, double t) {
  // Written in the bounded form on each side to avoid overflow.
  if (id == DilationSymbol::phi) {
    if (t > 0.0) {
      const double e = std::exp(-pi * t);
      return e / (I + e);
    }
    return 1.0 / (I * std::exp(pi * t) + 1.0);
  }
  if (t < 0.0) {
    const double e = std::exp(pi * t);
    return e / (e - I);
  }
  return 1.0 / (1.0 - I * std::exp(-pi * t));
}

DilationMultiplier::DilationMultiplier(DilationSymbol id, const Transforms& t, Eigen::Index n_beta)
    : id_(id), grid_(t.grid), t_(std::make_shared<Transforms>(t)) {
  const OperatorGrid& g = grid_;
  if (n_beta < 16) throw GridError("Mellin window needs at least 16 points");
  if (!(g.x(0) > 0.0) || !(g.x_max() > g.x(0)))
    throw GridError("x grid is not log-coverable: need 0 < x_min < x_max");
  beta0_ = std::log(g.h);
  span_ = std::log(g.x_max()) - beta0_;
  const double db = span_ / static_cast<double>(n_beta);
  const Eigen::Index nk = g.k.size();
  synth_.resize(n_beta, nk);
  const double c = std::sqrt(2.0 / pi);
  parallel_for(static_cast<std::size_t>(n_beta), [&](std::size_t ii) {
    const auto i = static_cast<Eigen::Index>(ii);
    const long double beta = static_cast<long double>(beta0_) + static_cast<long double>(i) * db;
    const long double xb = std::exp(beta);
    const double env = static_cast<double>(std::exp(beta / 2));
    for (Eigen::Index m = 0; m < nk; ++m)
      synth_(i, m) = env * c * std::sqrt(g.wk(m)) * sin_reduced(g.k(m) * xb);
  });
  freq_.resize(n_beta);
  for (Eigen::Index n = 0; n < n_beta; ++n) {
    const Eigen::Index s = n < n_beta / 2 ? n : n - n_beta;
    freq_(n) = 2.0 * pi * static_cast<double>(s) / span_;
  }
}

Eigen::VectorXcd DilationMultiplier::beta_coefficients(const Eigen::VectorXcd& v) const {
  if (v.size() != grid_.x.size()) throw GridError("Mellin input does not match the x grid");
  const Eigen::VectorXcd u = synth_.cast<cplx>() * t_->fs.apply(v);
  Eigen::FFT<double> fft;
  std::vector<cplx> in(u.data(), u.data() + u.size()), out;
  fft.fwd(out, in);
  Eigen::VectorXcd c(u.size());
  const double n = static_cast<double>(u.size());
  // A acts as -d on e^{i nu beta}: symbol(A) multiplies by symbol(-nu).
  for (Eigen::Index i = 0; i < c.size(); ++i) c(i) = out[i] / n * symbol(-freq_(i));
  return c;
}

Eigen::VectorXcd DilationMultiplier::apply(const Eigen::VectorXcd& v) const {
  const Eigen::VectorXcd c = beta_coefficients(v);
  const OperatorGrid& g = grid_;
  const Eigen::Index nb = c.size();
  Eigen::VectorXcd out(g.x.size());
  parallel_for(static_cast<std::size_t>(g.x.size()), [&](std::size_t jj) {
    const auto j = static_cast<Eigen::Index>(jj);
    const long double frac =
        (std::log(static_cast<long double>(g.x(j))) - beta0_) / static_cast<long double>(span_);
    // e^{2 pi i s frac} for s = block * 64 + r from two short exact tables
    auto unit = [&](long double s) {
      long double ph = s * frac;
      ph -= std::floor(ph);
      const double a = static_cast<double>(two_pi_l * ph);
      return cplx(std::cos(a), std::sin(a));
    };
    constexpr Eigen::Index blk = 64;
    std::array<cplx, blk> fine;
    for (Eigen::Index r = 0; r < blk; ++r) fine[r] = unit(static_cast<long double>(r));
    cplx acc = 0.0;
    for (Eigen::Index n = 0; n < nb; n += blk) {
      const Eigen::Index s0 = n < nb / 2 ? n : n - nb;
      const cplx coarse = unit(static_cast<long double>(s0));
      cplx part = 0.0;
      for (Eigen::Index r = 0; r < blk && n + r < nb; ++r) part += c(n + r) * fine[r];
      acc += coarse * part;
    }
    out(j) = acc / std::sqrt(g.x(j)) * std::sqrt(g.wx(j));
  });
  return out;
}

double DilationMultiplier::edge_fraction(const Eigen::VectorXcd& v) const {
  const Eigen::VectorXcd c = beta_coefficients(v);
  Eigen::FFT<double> fft;
  std::vector<cplx> in(c.data(), c.data() + c.size()), out;
  fft.inv(out, in);
  const auto n = static_cast<Eigen::Index>(out.size());
  const Eigen::Index edge = std::max<Eigen::Index>(1, n / 20);
  double total = 0.0, near = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double a = std::norm(out[i]);
    total += a;
    if (i < edge || i >= n - edge) near += a;
  }
  return total > 0.0 ? near / total : 0.0;
}

DilationMultiplier dilation_multiplier(DilationSymbol id, const Transforms& t, Eigen::Index n_beta) {
  return DilationMultiplier(id, t, n_beta);
}

GridOperator dilation_by_transforms(DilationSymbol id, const Transforms& t) {
  // phi(A) = (1/2i)(Fc Fs + i) = 1/2 - (i/2) Fc Fs, psi(A) = 1 - phi(A)
  const GridOperator m = compose(t.fc.adjoint(), t.fs, "FcFs");
  GridOperator out = m;
  const auto n = m.rows();
  out.re = 0.5 * Eigen::MatrixXd::Identity(n, n);
  out.im = (id == DilationSymbol::phi ? -0.5 : 0.5) * m.re;
  out.label = id == DilationSymbol::phi ? "phi(A)" : "psi(A)";
  return out;
}

GridOperator scattering_operator(const Eigen::VectorXcd& s, const Transforms& t) {
  if (s.size() != t.grid.k.size()) throw GridError("s samples do not match the k grid");
  GridOperator scaled = t.fs;
  scaled.im = s.imag().asDiagonal() * t.fs.re;
  scaled.re = s.real().asDiagonal() * t.fs.re;
  return compose(t.fs.adjoint(), scaled, "S");
}

GridOperator scattering_operator(const ScatteringData& sd, const Transforms& t) {
  require_same(sd.k, t.grid.k, "scattering_operator");
  return scattering_operator(sd.s, t);
}

// ---------------------------------------------------------------------------
// remainder and reports

std::vector<double> leading_singular_values(const GridOperator& m, int count) {
  const Eigen::MatrixXcd a = m.dense();
  const Eigen::Index l = std::min<Eigen::Index>(count + 20, std::min(a.rows(), a.cols()));
  std::mt19937_64 rng(20240611);
  std::normal_distribution<double> nd;
  Eigen::MatrixXcd omega(a.cols(), l);
  for (Eigen::Index j = 0; j < l; ++j)
    for (Eigen::Index i = 0; i < a.cols(); ++i) omega(i, j) = cplx(nd(rng), nd(rng));
  Eigen::MatrixXcd q = orthonormal_columns(a * omega);
  for (int it = 0; it < 4; ++it) {
    const Eigen::MatrixXcd z = orthonormal_columns(a.adjoint() * q);
    q = orthonormal_columns(a * z);
  }
  const Eigen::MatrixXcd b = q.adjoint() * a;
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(b * b.adjoint());
  std::vector<double> sv;
  for (Eigen::Index i = 0; i < std::min<Eigen::Index>(count, l); ++i)
    sv.push_back(std::sqrt(std::max(0.0, svd.singularValues()(i))));
  return sv;
}

namespace {
HsReport hs_of(const GridOperator& k, const OperatorGrid& g) {
  HsReport r;
  r.frobenius = k.frobenius();
  r.singular_values = leading_singular_values(k, 20);
  double lead = 0.0;
  for (double s : r.singular_values) lead += s * s;
  const double f2 = r.frobenius * r.frobenius;
  r.tail_fraction = f2 > 0.0 ? std::max(0.0, f2 - lead) / f2 : 0.0;
  r.grid = g.to_json();
  return r;
}
}  // namespace

Remainder remainder_extract(const GeneralizedFourier& gf, const Transforms& t,
                            const GridOperator& phi_a, const GridOperator& s_op) {
  Remainder r;
  r.w_minus = compose(gf.minus.adjoint(), t.fs, "W-");
  const GridOperator p = band_identity(t);
  const GridOperator s_minus_p = add(s_op, p, -1.0, "S-P");
  const GridOperator corr = compose(phi_a, s_minus_p);
  r.k = add(add(r.w_minus, p, -1.0), corr, -1.0, "K");
  r.hs = hs_of(r.k, t.grid);
  return r;
}

WplusReport wplus_formula(const GeneralizedFourier& gf, const Transforms& t,
                          const GridOperator& w_minus, const GridOperator& s_op,
                          const GridOperator& psi_a, const std::vector<Eigen::VectorXcd>& probes) {
  WplusReport r;
  const GridOperator w_plus = compose(gf.plus.adjoint(), t.fs, "W+");
  const GridOperator s_star = s_op.adjoint();
  const GridOperator ws = compose(w_minus, s_star, "W-S*");
  const GridOperator p = band_identity(t);
  r.wplus_vs_wminus_sstar = add(w_plus, ws, -1.0).frobenius() / p.frobenius();
  r.wplus_probe_residual = probe_residual(w_plus, ws, probes);
  const GridOperator corr = compose(psi_a, add(s_star, p, -1.0));
  const GridOperator kprime = add(add(w_plus, p, -1.0), corr, -1.0, "K'");
  r.kprime_frobenius = kprime.frobenius();
  return r;
}

std::vector<Eigen::VectorXcd> bound_state_vectors(const Potential& p, const Spectrum& spec,
                                                  const OperatorGrid& g,
                                                  const SolverOptions& opt) {
  std::vector<Eigen::VectorXcd> out;
  for (const auto& st : spec.states) {
    const WaveSolution th = solve_jost(p, cplx(0.0, st.kappa), opt);
    Eigen::VectorXcd v(g.x.size());
    for (Eigen::Index j = 0; j < g.x.size(); ++j) v(j) = th.value_at(g.x(j)) * std::sqrt(g.wx(j));
    out.push_back(v / v.norm());
  }
  return out;
}

IsometryReport partial_isometry(const GridOperator& w_minus,
                                const std::vector<Eigen::VectorXcd>& probes,
                                const std::vector<Eigen::VectorXcd>& bound_states) {
  IsometryReport r;
  const GridOperator ws = w_minus.adjoint();
  auto wwstar = [&](const Eigen::VectorXcd& v) { return w_minus.apply(ws.apply(v)); };
  for (const auto& p : probes) {
    r.wstar_w = std::max(r.wstar_w, rel(ws.apply(w_minus.apply(p)) - p, p));
    Eigen::VectorXcd target = p;
    for (const auto& b : bound_states) target -= b * b.dot(p);
    r.w_wstar = std::max(r.w_wstar, rel(wwstar(p) - target, p));
  }
  Eigen::MatrixXcd basis(w_minus.rows(), static_cast<Eigen::Index>(probes.size() + bound_states.size()));
  Eigen::Index col = 0;
  for (const auto& p : probes) basis.col(col++) = p;
  for (const auto& b : bound_states) basis.col(col++) = b;
  const Eigen::MatrixXcd q = orthonormal_columns(basis);
  Eigen::MatrixXcd img(q.rows(), q.cols());
  for (Eigen::Index j = 0; j < q.cols(); ++j) img.col(j) = wwstar(q.col(j));
  const Eigen::MatrixXcd compressed = q.adjoint() * img;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (compressed + compressed.adjoint()));
  r.eigenvalues = es.eigenvalues();
  r.rank_defect = static_cast<int>((r.eigenvalues.array() < 0.5).count());
  return r;
}

// ---------------------------------------------------------------------------
// study

WaveOperatorStudy wave_operator_study(const Potential& p, const OperatorGrid& g,
                                      const StudyOptions& so, const SolverOptions& opt) {
  WaveOperatorStudy st;
  st.grid = g;
  const Transforms t = build_transforms(g);
  const auto probes = band_limited_probes(g);
  st.eps_disc = calibrate_eps_disc(t, probes);

  const GeneralizedFourier gf = build_generalized_fourier(p, t, opt);
  const GridOperator s_op = scattering_operator(gf.s, t);
  const GridOperator phi_a = dilation_by_transforms(DilationSymbol::phi, t);
  const GridOperator psi_a = dilation_by_transforms(DilationSymbol::psi, t);

  const Eigen::VectorXcd k2 = g.k.array().square().matrix().cast<cplx>();
  const Eigen::VectorXcd logk = g.k.array().log().matrix().cast<cplx>();
  const GridOperator fm_star = gf.minus.adjoint();
  const GridOperator s_star = s_op.adjoint();
  for (const auto& pr : probes) {
    const Eigen::VectorXcd kp = t.fs.apply(pr);
    st.fminus_unitarity = std::max(st.fminus_unitarity, rel(gf.minus.apply(fm_star.apply(kp)) - kp, kp));
    st.s_unitarity = std::max(st.s_unitarity, rel(s_star.apply(s_op.apply(pr)) - pr, pr));
    const Eigen::VectorXcd h0p = sandwich(t, k2, pr);
    st.s_commutes_h0 = std::max(
        st.s_commutes_h0, rel(s_op.apply(h0p) - sandwich(t, k2, s_op.apply(pr)), h0p));
    const Eigen::VectorXcd lk = k2.cwiseProduct(kp);
    st.intertwining = std::max(st.intertwining, rel(t.fs.apply(h0p) - lk, lk));
    const Eigen::VectorXcd bk = logk.cwiseProduct(kp);
    st.dilation_log = std::max(st.dilation_log, rel(t.fs.apply(sandwich(t, logk, pr)) - bk, bk));
  }

  const DilationMultiplier mphi(DilationSymbol::phi, t, so.n_beta);
  const DilationMultiplier mpsi(DilationSymbol::psi, t, so.n_beta);
  for (const auto& pr : probes) {
    st.phi_mellin_vs_transforms =
        std::max(st.phi_mellin_vs_transforms, rel(mphi.apply(pr) - phi_a.apply(pr), pr));
    st.psi_mellin_vs_transforms =
        std::max(st.psi_mellin_vs_transforms, rel(mpsi.apply(pr) - psi_a.apply(pr), pr));
    st.mellin_edge_fraction = std::max(st.mellin_edge_fraction, mphi.edge_fraction(pr));
  }

  st.remainder = remainder_extract(gf, t, phi_a, s_op);
  st.hs = st.remainder.hs;
  const Spectrum spec = bound_states(p, 0.0, opt);
  st.isometry = partial_isometry(st.remainder.w_minus, probes, bound_state_vectors(p, spec, g, opt));
  st.wplus = wplus_formula(gf, t, st.remainder.w_minus, s_op, psi_a, probes);

  if (so.refine) {
    const OperatorGrid gr = g.refined();
    const Transforms tr = build_transforms(gr);
    const GeneralizedFourier gfr = build_generalized_fourier(p, tr, opt);
    const Remainder rr = remainder_extract(gfr, tr, dilation_by_transforms(DilationSymbol::phi, tr),
                                           scattering_operator(gfr.s, tr));
    st.hs.refined_frobenius = rr.hs.frobenius;
    st.hs.refined_singular_values = rr.hs.singular_values;
    const double diff = std::abs(rr.hs.frobenius - st.hs.frobenius);
    st.hs.relative_change = st.hs.frobenius > 0.0 ? diff / st.hs.frobenius
                            : diff == 0.0             ? 0.0
                                                      : std::numeric_limits<double>::infinity();
    st.refined_isometry = partial_isometry(rr.w_minus, band_limited_probes(gr),
                                           bound_state_vectors(p, spec, gr, opt));
  }
  if (!so.keep_matrices) st.remainder = Remainder{};
  return st;
}

nlohmann::json to_json(const HsReport& r) {
  nlohmann::json j{{"frobenius", r.frobenius},
                   {"singular_values", r.singular_values},
                   {"tail_fraction", r.tail_fraction},
                   {"grid", r.grid}};
  if (std::isfinite(r.refined_frobenius)) {
    j["refined_frobenius"] = r.refined_frobenius;
    j["refined_singular_values"] = r.refined_singular_values;
    j["relative_change"] = r.relative_change;
  } else {
    j["refined_frobenius"] = nullptr;
    j["relative_change"] = nullptr;
  }
  return j;
}

nlohmann::json to_json(const WaveOperatorStudy& s) {
  return {{"grid", s.grid.to_json()},
          {"eps_disc", s.eps_disc},
          {"fminus_unitarity", s.fminus_unitarity},
          {"s_unitarity", s.s_unitarity},
          {"s_commutes_h0", s.s_commutes_h0},
          {"intertwining", s.intertwining},
          {"dilation_log", s.dilation_log},
          {"phi_mellin_vs_transforms", s.phi_mellin_vs_transforms},
          {"psi_mellin_vs_transforms", s.psi_mellin_vs_transforms},
          {"mellin_edge_fraction", s.mellin_edge_fraction},
          {"wstar_w", s.isometry.wstar_w},
          {"w_wstar", s.isometry.w_wstar},
          {"rank_defect", s.isometry.rank_defect},
          {"compressed_eigenvalues",
           std::vector<double>(s.isometry.eigenvalues.data(),
                               s.isometry.eigenvalues.data() + s.isometry.eigenvalues.size())},
          {"wplus_vs_wminus_sstar", s.wplus.wplus_vs_wminus_sstar},
          {"wplus_probe_residual", s.wplus.wplus_probe_residual},
          {"kprime_frobenius", s.wplus.kprime_frobenius},
          {"refined_rank_defect",
           s.refined_isometry ? nlohmann::json(s.refined_isometry->rank_defect) : nlohmann::json()},
          {"hs_report", to_json(s.hs)}};
}

void write_csv(std::ostream& os, const GridOperator& m) {
  os << "i,j,re,im\n";
  os.precision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      os << i << ',' << j << ',' << m.re(i, j) << ',' << (m.is_real() ? 0.0 : m.im(i, j)) << '\n';
}

void write_singular_values_csv(std::ostream& os, const std::vector<double>& sv) {
  os << "index,sigma\n";
  os.precision(17);
  for (std::size_t i = 0; i < sv.size(); ++i) os << i + 1 << ',' << sv[i] << '\n';
}

}  // namespace scatter
