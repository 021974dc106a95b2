#include <doctest.h>

#include "oracles.hpp"
#include "scatter/levinson.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace scatter;
using oracle::cplx;

namespace {
constexpr double pi = std::numbers::pi;
const double resonant_depth = 0.25 * pi * pi;

// Gamma_1 winding of the closed-form well, densely sampled and closed to the
// limits s(0) and 1.
double oracle_wn1(double d, double a, double beta_lo, double beta_hi, bool resonant) {
  const int n = 200000;
  auto s = [&](double beta) {
    const cplx w = oracle::well_jost(d, a, std::exp(beta));
    return std::conj(w) / w;
  };
  cplx prev = resonant ? cplx(-1.0) : cplx(1.0);
  double total = 0.0;
  for (int i = 0; i <= n; ++i) {
    const cplx z = s(beta_lo + (beta_hi - beta_lo) * i / n);
    total += std::arg(z / prev);
    prev = z;
  }
  total += std::arg(1.0 / prev);
  return total / (2.0 * pi);
}

SymbolOptions light() {
  SymbolOptions o;
  o.beta_points = 801;
  o.alpha_points = 601;
  return o;
}
}  // namespace

TEST_CASE("phi and psi symbols") {
  CHECK(std::abs(phi_symbol(0.0) - cplx(0.5, -0.5)) < 1e-15);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-8.0, 8.0);
  for (int i = 0; i < 200; ++i) {
    const double t = u(rng);
    const cplx g = cplx(std::tanh(pi * t), 1.0 / std::cosh(pi * t));
    CHECK(std::abs(g - (1.0 - 2.0 * phi_symbol(t))) < 1e-12);
    CHECK(std::abs(phi_symbol(t) + psi_symbol(t) - 1.0) < 1e-12);
    CHECK(std::abs(std::abs(g) - 1.0) < 1e-14);
  }
}

TEST_CASE("winding of sampled curves") {
  const Eigen::Index n = 400;
  Eigen::VectorXcd circle(n + 1);
  for (Eigen::Index j = 0; j <= n; ++j) circle(j) = std::polar(2.0, 2.0 * pi * 3.0 * j / n);
  CHECK(std::abs(winding_of_curve(circle) - 3.0) < 1e-12);
  CHECK(std::abs(winding_of_curve(circle.reverse()) + 3.0) < 1e-12);

  Eigen::VectorXcd coarse(3);
  coarse << 1.0, cplx(0.0, 1.0), -1.0;
  CHECK_THROWS_AS(winding_of_curve(coarse), WindingError);
  Eigen::VectorXcd zero(2);
  zero << 1.0, 0.0;
  CHECK_THROWS_AS(winding_of_curve(zero), WindingError);

  EdgeCurve half;
  half.param = Eigen::VectorXd::LinSpaced(3, -1.0, 1.0);
  half.values.resize(3);
  half.values << cplx(-1.0, 1e-3), cplx(0.0, 1.0), cplx(1.0, 1e-3);
  half.start_limit = -1.0;
  CHECK(std::abs(edge_winding(half) + 0.5) < 1e-12);
}

TEST_CASE("zero potential has trivial winding") {
  const auto sym = boundary_symbol(Potential::zero(), light());
  const auto rep = levinson_verify(sym, bound_states(Potential::zero()));
  CHECK(std::abs(rep.total) < 1e-14);
  CHECK(std::abs(rep.wn1) < 1e-14);
  CHECK(rep.expected_index == 0);
  CHECK(rep.pass);
}

TEST_CASE("square well d=4: Gamma_1 winds -1") {
  const auto well = Potential::square_well(4.0, 1.0);
  const auto opt = light();
  const auto sym = boundary_symbol(well, opt);
  const auto rep = levinson_verify(sym, bound_states(well));
  const double ref = oracle_wn1(4.0, 1.0, opt.beta_min, opt.beta_max, false);
  CHECK(std::abs(ref + 1.0) < 2e-3);
  CHECK(std::abs(rep.wn1 - ref) < 1e-6);
  CHECK(std::abs(rep.wn1 + 1.0) < 2e-3);
  CHECK(rep.wn2 == 0.0);
  CHECK(rep.expected_index == 1);
  CHECK(std::abs(rep.total - 1.0) < 5e-3);
  CHECK(rep.pass);
  CHECK(std::abs(rep.classical_residual) < 5e-3 * pi);
  // |s - 1| ~ d / k at the top of the beta window
  CHECK(sym.corner_gaps[0] < 1e-3);
  CHECK(sym.corner_gaps[3] < 5e-3);
}

TEST_CASE("resonant well: half-integer contributions") {
  const auto well = Potential::square_well(resonant_depth, 1.0);
  const auto opt = light();
  const auto sym = boundary_symbol(well, opt);
  CHECK(sym.resonance);
  CHECK(std::abs(sym.gamma2.values(opt.alpha_points / 2) - cplx(0.0, 1.0)) < 1e-14);
  const auto rep = levinson_verify(sym, bound_states(well));
  CHECK(std::abs(rep.wn2 + 0.5) < 1e-4);
  CHECK(std::abs(rep.wn1 + 0.5) < 2e-3);
  CHECK(std::abs(rep.wn1 - oracle_wn1(resonant_depth, 1.0, opt.beta_min, opt.beta_max, true)) <
        1e-6);
  CHECK(rep.expected_index == 0);
  CHECK(std::abs(rep.total) < 5e-3);
  CHECK(rep.residual_to_half_integer < 5e-3);
  CHECK(std::abs(rep.classical_residual) < 5e-3 * pi);
}

TEST_CASE("topological and classical forms on the fixtures") {
  struct Fixture {
    Potential p;
    int n;
  };
  const std::vector<Fixture> fixtures{{Potential::square_well(25.0, 1.0), 2},
                                      {Potential::exponential(-1.0, 1.0), 0}};
  for (const auto& f : fixtures) {
    const auto spec = bound_states(f.p);
    REQUIRE(spec.count() == static_cast<std::size_t>(f.n));
    const auto rep = levinson_verify(boundary_symbol(f.p, light()), spec);
    CHECK(std::abs(rep.total - f.n) < 5e-3);
    CHECK(std::abs(rep.classical_residual) < 5e-3 * pi);
    CHECK(rep.pass);
  }
}

TEST_CASE("total winding is stable under range extension") {
  const auto well = Potential::square_well(4.0, 1.0);
  auto a = light();
  auto b = a;
  b.beta_min = -11.0;
  b.beta_max = 8.0;
  b.beta_points = 1001;
  b.alpha_min = -8.0;
  b.alpha_max = 8.0;
  const auto spec = bound_states(well);
  const auto ra = levinson_verify(boundary_symbol(well, a), spec);
  const auto rb = levinson_verify(boundary_symbol(well, b), spec);
  CHECK(std::abs(ra.total - rb.total) < 1e-3);
}

TEST_CASE("coverage, CSV, SVG and JSON outputs") {
  const auto well = Potential::square_well(4.0, 1.0);
  const auto sd = smatrix_and_phase(well, log_k_grid(0.1, 200.0, 100));
  CHECK_THROWS_AS(boundary_symbol(sd), std::out_of_range);

  const auto sym = boundary_symbol(well, light());
  std::ostringstream csv, svg;
  write_csv(csv, sym.gamma1);
  CHECK(csv.str().rfind("param,re,im\n", 0) == 0);
  write_svg(svg, sym);
  CHECK(svg.str().find("id=\"gamma4\"") != std::string::npos);
  const auto j = to_json(levinson_verify(sym, bound_states(well)));
  for (const char* key : {"wn1", "wn2", "wn3", "wn4", "total", "expected_index",
                          "residual_to_half_integer", "classical_residual", "pass"})
    CHECK(j.contains(key));
}
