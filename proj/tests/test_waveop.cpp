#include <doctest.h>

#include "oracles.hpp"
#include "scatter/waveop.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <sstream>

using namespace scatter;
using oracle::cplx;

namespace {
constexpr double pi = std::numbers::pi;

// 1000 x points, 580 k points; small enough for dense checks in a unit test.
OperatorGrid small_grid() { return OperatorGrid::uniform(25.0, 0.025, 29.0, 0.05); }

const Transforms& small_transforms() {
  static const Transforms t = build_transforms(small_grid());
  return t;
}

double rel(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) { return a.norm() / b.norm(); }

// psi^-(x, k) = k phi(x, k) / w(k) for the square well, in closed form.
cplx well_psi_minus(double d, double a, double k, double x) {
  const double q = std::sqrt(k * k + d);
  const cplx w = oracle::well_jost(d, a, k);
  cplx phi;
  if (x <= a) {
    phi = std::sin(q * x) / q;
  } else {
    const double u = std::sin(q * a) / q, du = std::cos(q * a);
    phi = u * std::cos(k * (x - a)) + du * std::sin(k * (x - a)) / k;
  }
  return k * phi / w;
}

StudyOptions quick(bool refine) {
  StudyOptions so;
  so.refine = refine;
  so.n_beta = 2048;
  return so;
}
}  // namespace

TEST_CASE("operator grid layout and preconditions") {
  const auto g = OperatorGrid::uniform();
  CHECK(g.x.size() == 2000);
  CHECK(g.k.size() == 1950);
  CHECK(std::abs(g.k_min() - 0.01) < 1e-15);
  CHECK(std::abs(g.k_max() - 39.0) < 1e-12);
  CHECK(g.k_max() * g.h < pi / 4);

  const auto r = g.refined();
  CHECK(r.x.size() == 4000);
  CHECK(r.k.size() == 3900);
  CHECK(std::abs(r.x_max() - 60.0) < 1e-12);
  CHECK(std::abs(r.k_max() - g.k_max()) < 1e-12);

  CHECK_THROWS_AS(build_transforms(OperatorGrid::uniform(40.0, 0.02, 40.0, 0.02)), GridError);
  CHECK_THROWS_AS(build_transforms(OperatorGrid::uniform(40.0, 0.02, 39.0, 0.08)), GridError);
  CHECK_THROWS_AS(OperatorGrid::uniform(40.0, -0.02, 39.0, 0.02), GridError);

  const auto& t = small_transforms();
  CHECK_THROWS_AS(compose(t.fs, t.fs), GridError);
}

TEST_CASE("sine transform entries and band identity") {
  const auto& t = small_transforms();
  const auto& g = t.grid;
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<Eigen::Index> km(0, g.k.size() - 1), xj(0, g.x.size() - 1);
  for (int i = 0; i < 50; ++i) {
    const Eigen::Index m = km(rng), j = xj(rng);
    const double ref =
        std::sqrt(2.0 / pi * g.wk(m) * g.wx(j)) * std::sin(g.k(m) * g.x(j));
    CHECK(std::abs(t.fs.re(m, j) - ref) < 1e-15);
  }

  const auto probes = band_limited_probes(g);
  REQUIRE(probes.size() == 3);
  const double eps = calibrate_eps_disc(t, probes);
  CHECK(eps < 1e-12);
  for (const auto& p : probes) {
    CHECK(std::abs(p.norm() - 1.0) < 1e-14);
    const Eigen::VectorXcd fp = t.fs.apply(p);
    double outside = 0.0;
    for (Eigen::Index m = 0; m < g.k.size(); ++m)
      if (g.k(m) > 0.8 * g.k_max()) outside = std::max(outside, std::abs(fp(m)));
    CHECK(outside < 1e-12);
  }

  // s = 1 makes S the band identity bit for bit, so phi(A)(S - P) vanishes.
  const auto s_one = scattering_operator(Eigen::VectorXcd::Ones(g.k.size()), t);
  const auto band = band_identity(t);
  CHECK((s_one.re - band.re).norm() == 0.0);
  const auto phi_a = dilation_by_transforms(DilationSymbol::phi, t);
  CHECK(compose(phi_a, add(s_one, band, -1.0)).frobenius() == 0.0);
}

TEST_CASE("free Hamiltonian intertwines with k^2") {
  const auto& t = small_transforms();
  const auto& g = t.grid;
  const auto h0 = free_hamiltonian(t);
  const Eigen::VectorXcd k2 = g.k.array().square().matrix().cast<cplx>();
  for (const auto& p : band_limited_probes(g)) {
    const Eigen::VectorXcd lhs = t.fs.apply(h0.apply(p));
    const Eigen::VectorXcd rhs = k2.cwiseProduct(t.fs.apply(p));
    CHECK(rel(lhs - rhs, rhs) < 1e-12);

    // Second differences agree with H0 up to the O((k h)^2) stencil error.
    const Eigen::VectorXcd f = desymmetrize(p, g.wx);
    const Eigen::VectorXcd hf = desymmetrize(h0.apply(p), g.wx);
    const Eigen::Index n = f.size();
    double num = 0.0, den = 0.0;
    for (Eigen::Index j = 1; j + 1 < n; ++j) {
      const cplx fd = -(f(j + 1) - 2.0 * f(j) + f(j - 1)) / (g.h * g.h);
      num += std::norm(fd - hf(j));
      den += std::norm(hf(j));
    }
    const double k0 = 0.4 * g.k_max();
    CHECK(std::sqrt(num / den) < std::pow(k0 * g.h, 2) / 6.0);
  }
}

TEST_CASE("dilation symbols") {
  CHECK(std::abs(dilation_symbol(DilationSymbol::phi, 0.0) - cplx(0.5, -0.5)) < 1e-15);
  CHECK(std::abs(dilation_symbol(DilationSymbol::phi, -20.0) - 1.0) < 1e-12);
  CHECK(std::abs(dilation_symbol(DilationSymbol::phi, 20.0)) < 1e-12);
  CHECK(std::abs(dilation_symbol(DilationSymbol::psi, -20.0)) < 1e-12);
  CHECK(std::abs(dilation_symbol(DilationSymbol::psi, 20.0) - 1.0) < 1e-12);
  CHECK(std::isfinite(std::abs(dilation_symbol(DilationSymbol::phi, 500.0))));
  CHECK(std::isfinite(std::abs(dilation_symbol(DilationSymbol::psi, -500.0))));
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-30.0, 30.0);
  for (int i = 0; i < 300; ++i) {
    const double s = u(rng);
    const cplx f = dilation_symbol(DilationSymbol::phi, s);
    const cplx g = dilation_symbol(DilationSymbol::psi, s);
    CHECK(std::abs(f + g - 1.0) < 1e-14);
    CHECK(std::abs(f) <= 1.0 + 1e-15);
    // phi(t) = 1 / (i e^{pi t} + 1) directly where that form is safe.
    if (std::abs(s) < 5.0) CHECK(std::abs(f - 1.0 / (cplx(0, 1) * std::exp(pi * s) + 1.0)) < 1e-14);
  }
}

TEST_CASE("Mellin route agrees with the transform formula") {
  const auto& t = small_transforms();
  const auto probes = band_limited_probes(t.grid);
  for (auto id : {DilationSymbol::phi, DilationSymbol::psi}) {
    const auto m = dilation_multiplier(id, t, 4096);
    const auto op = dilation_by_transforms(id, t);
    for (const auto& p : probes) {
      // both routes sit at roundoff (~3e-14 here); eps_disc of this small grid is lower
      CHECK(rel(m.apply(p) - op.apply(p), p) < 1e-13);
      CHECK(m.edge_fraction(p) < 1e-6);
    }
  }
}

TEST_CASE("free theory: F^- is the sine transform and K vanishes") {
  const auto& t = small_transforms();
  const auto gf = build_generalized_fourier(Potential::zero(), t);
  CHECK((gf.minus.re - t.fs.re).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(gf.minus.im.cwiseAbs().maxCoeff() < 1e-15);
  CHECK((gf.s.array() - 1.0).abs().maxCoeff() == 0.0);

  const auto st = wave_operator_study(Potential::zero(), t.grid, quick(false));
  CHECK(st.hs.frobenius < 3.0 * st.eps_disc);
  CHECK(st.isometry.rank_defect == 0);
  CHECK(st.isometry.wstar_w < 3.0 * st.eps_disc);
}

TEST_CASE("square well d=4: generalized Fourier matches closed form") {
  const auto& t = small_transforms();
  const auto& g = t.grid;
  const auto gf = build_generalized_fourier(Potential::square_well(4.0, 1.0), t);
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<Eigen::Index> km(0, g.k.size() - 1), xj(0, g.x.size() - 1);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Index m = km(rng), j = xj(rng);
    const cplx ref = std::conj(well_psi_minus(4.0, 1.0, g.k(m), g.x(j))) *
                     std::sqrt(2.0 / pi * g.wk(m) * g.wx(j));
    const cplx got(gf.minus.re(m, j), gf.minus.im(m, j));
    CHECK(std::abs(got - ref) < 1e-10 * std::sqrt(g.wk(m) * g.wx(j)));
  }
  for (Eigen::Index m = 0; m < g.k.size(); m += 37)
    CHECK(std::abs(gf.w(m) - oracle::well_jost(4.0, 1.0, g.k(m))) < 1e-8 * std::abs(gf.w(m)));
}

TEST_CASE("square well d=4: isometry, rank defect and remainder") {
  const auto well = Potential::square_well(4.0, 1.0);
  const auto st = wave_operator_study(well, small_grid(), quick(true));
  // eps_disc is pure roundoff on this grid; longer operator chains sit a few times above it
  const double gate = 1e-12;
  CHECK(st.eps_disc < 1e-13);
  CHECK(st.isometry.wstar_w < gate);
  CHECK(st.isometry.w_wstar < gate);
  CHECK(st.isometry.rank_defect == 1);
  CHECK(st.s_unitarity < gate);
  CHECK(st.s_commutes_h0 < 1e-12);
  CHECK(st.wplus.wplus_probe_residual < gate);
  // time reversal maps K to conj(K')
  CHECK(std::abs(st.wplus.kprime_frobenius - st.hs.frobenius) < 1e-12 * st.hs.frobenius);

  CHECK(st.hs.frobenius > 0.1);
  CHECK(st.hs.singular_values.size() == 20);
  for (std::size_t i = 1; i < st.hs.singular_values.size(); ++i)
    CHECK(st.hs.singular_values[i] <= st.hs.singular_values[i - 1] * (1.0 + 1e-12));
  CHECK(st.hs.tail_fraction < 0.1);
  REQUIRE(std::isfinite(st.hs.relative_change));
  CHECK(st.hs.relative_change < 0.1);
}

TEST_CASE("leading singular values match a dense SVD") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n01;
  GridOperator m;
  const Eigen::Index r = 70, c = 50;
  m.re = Eigen::MatrixXd::NullaryExpr(r, c, [&] { return n01(rng); });
  m.im = Eigen::MatrixXd::NullaryExpr(r, c, [&] { return n01(rng); });
  m.row_nodes = m.row_weights = Eigen::VectorXd::Ones(r);
  m.col_nodes = m.col_weights = Eigen::VectorXd::Ones(c);
  // Make the spectrum decay so 20 values are well separated.
  for (Eigen::Index j = 0; j < c; ++j) {
    m.re.col(j) *= std::pow(0.8, j);
    m.im.col(j) *= std::pow(0.8, j);
  }
  const Eigen::JacobiSVD<Eigen::MatrixXcd> svd(m.dense());
  const auto sv = leading_singular_values(m, 20);
  REQUIRE(sv.size() == 20);
  for (int i = 0; i < 20; ++i)
    CHECK(std::abs(sv[i] - svd.singularValues()(i)) < 1e-10 * svd.singularValues()(0));
  CHECK(std::abs(m.frobenius() - m.dense().norm()) < 1e-12 * m.frobenius());
}

TEST_CASE("JSON and CSV outputs") {
  const auto st = wave_operator_study(Potential::square_well(4.0, 1.0), small_grid(), quick(false));
  const auto j = to_json(st.hs);
  for (const char* key :
       {"frobenius", "singular_values", "tail_fraction", "grid", "refined_frobenius", "relative_change"})
    CHECK(j.contains(key));
  CHECK(j["grid"]["h"].get<double>() == 0.025);
  CHECK(to_json(st).contains("eps_disc"));

  std::ostringstream sv, mat;
  write_singular_values_csv(sv, st.hs.singular_values);
  CHECK(sv.str().rfind("index,sigma\n", 0) == 0);
  GridOperator tiny;
  tiny.re = Eigen::MatrixXd::Identity(2, 2);
  write_csv(mat, tiny);
  CHECK(mat.str().rfind("i,j,re,im\n", 0) == 0);
  const std::string text = mat.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 5);
}
