#include <doctest.h>

#include "oracles.hpp"
#include "scatter/volterra.hpp"

#include <cmath>
#include <sstream>

using namespace scatter;
using oracle::cplx;

namespace {
const cplx I(0.0, 1.0);
}

TEST_CASE("free solutions") {
  const auto z = Potential::zero();
  for (double k : {0.0, 0.3, 7.0}) {
    const auto phi = solve_regular(z, k, 10.0);
    const auto th = solve_jost(z, k);
    for (double x : {0.0, 0.5, 3.3, 9.9, 15.0}) {
      const cplx free = k == 0.0 ? cplx(x) : cplx(std::sin(k * x) / k);
      CHECK(std::abs(phi.value_at(x) - free) < 1e-13);
      CHECK(std::abs(th.value_at(x) - std::exp(I * k * x)) < 1e-13);
    }
  }
}

TEST_CASE("square well regular and Jost solutions against closed forms") {
  const auto well = Potential::square_well(4.0, 1.0);
  const double q = std::sqrt(5.0);
  const auto phi = solve_regular(well, 1.0, 3.0);
  CHECK(phi.values(0) == cplx(0.0));
  CHECK(phi.derivs(0) == cplx(1.0));
  for (double x : {0.1, 0.5, 0.9, 1.0})
    CHECK(std::abs(phi.value_at(x) - std::sin(q * x) / q) < 1e-13);
  CHECK(phi.residual < 1e-6);

  const auto th = solve_jost(well, 1.0);
  const cplx w = std::exp(I) * (std::cos(q) - I / q * std::sin(q));
  CHECK(std::abs(th.value_at(0.0) - w) < 1e-13);
  for (double x : {1.0, 2.0, 5.0}) CHECK(std::abs(th.value_at(x) - std::exp(I * x)) < 1e-15);
  CHECK(th.residual < 1e-6);

  // Whole complex half-plane, including large imaginary part and zeta = 0.
  for (cplx zz : {cplx(0.0), cplx(0.0, 1.7), cplx(3.0, 2.0), cplx(40.0), cplx(0.001),
                  cplx(0.0, 6.0)}) {
    const auto t = solve_jost(well, zz);
    for (double x : {0.0, 0.25, 0.8})
      CHECK(std::abs(t.value_at(x) - oracle::well_theta(4.0, 1.0, zz, x)) <
            1e-12 * std::max(1.0, std::abs(oracle::well_theta(4.0, 1.0, zz, x))));
  }
}

TEST_CASE("bound-state arithmetic stays real") {
  const auto well = Potential::square_well(25.0, 1.0);
  const auto t = solve_jost(well, cplx(0.0, 2.5));
  CHECK(t.values.imag().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("symmetries and Wronskian") {
  const auto ex = Potential::exponential(-1.0, 1.0);
  for (double k : {0.2, 1.0, 4.0}) {
    const auto tp = solve_jost(ex, k), tm = solve_jost(ex, -k);
    for (double x : {0.0, 0.7, 3.0}) CHECK(std::abs(tm.value_at(x) - std::conj(tp.value_at(x))) < 1e-10);
    const auto pp = solve_regular(ex, k, 20.0), pm = solve_regular(ex, -k, 20.0);
    for (double x : {0.3, 2.0, 11.0}) {
      CHECK(std::abs(pp.value_at(x) - pm.value_at(x)) < 1e-10);
      CHECK(std::abs(pp.value_at(x).imag()) < 1e-12);
    }
    // W = phi' theta - phi theta' is constant and equals theta(0).
    const cplx w = tp.value_at(0.0);
    double worst = 0.0;
    for (double x = 0.0; x <= 20.0; x += 0.37) {
      const cplx W = pp.deriv_at(x) * tp.value_at(x) - pp.value_at(x) * tp.deriv_at(x);
      worst = std::max(worst, std::abs(W - w) / std::abs(w));
    }
    CHECK(worst < 1e-8);
    CHECK(tp.residual < 1e-6);
    CHECK(pp.residual < 1e-6);
  }
}

TEST_CASE("RK4 back-integration agrees with the fixed point") {
  const auto well = Potential::square_well(4.0, 1.0);
  const std::vector<double> xs{0.0, 0.3, 0.75, 1.0, 1.6};
  CHECK(rk4_crosscheck(well, solve_jost(well, 1.0), xs) < 1e-8);
  CHECK(rk4_crosscheck(well, solve_regular(well, 1.0, 3.0), xs) < 1e-8);
  const auto pw = Potential::power(-3.0, 2.2);
  CHECK(rk4_crosscheck(pw, solve_jost(pw, 2.0), {0.0, 1.0, 10.0}) < 1e-8);
  CHECK(rk4_crosscheck(pw, solve_regular(pw, 0.5, 20.0), {0.5, 5.0, 20.0}) < 1e-8);
}

TEST_CASE("iteration count decreases with k") {
  const auto ex = Potential::exponential(-1.0, 1.0);
  int prev = 1000;
  for (double k : {0.5, 2.0, 8.0, 32.0}) {
    const auto t = solve_jost(ex, k);
    CHECK(t.iterations <= prev);
    prev = t.iterations;
  }
}

TEST_CASE("p kernel and estimates") {
  const auto z = Potential::zero();
  const auto t0 = p_kernel_and_estimates(z, {0.5, 2.0}, {0.0, 1.0});
  CHECK(t0.c1 == 0.0);
  CHECK(t0.c2 == 0.0);
  for (const auto& s : t0.samples) CHECK(s.p == cplx(0.0));

  const auto well = Potential::square_well(4.0, 1.0);
  const auto t = p_kernel_and_estimates(well, {1.5, 3.0, 5.0, 9.0}, {0.0, 0.5, 1.0, 2.0});
  for (const auto& s : t.samples) {
    if (s.x >= 1.0) CHECK(std::abs(s.p) < 1e-14);
    CHECK(s.within_estimate1);
    CHECK(s.within_estimate2);
    if (s.x == 0.0 && s.k == 5.0) {
      CHECK(std::abs(std::abs(s.p) - std::abs(oracle::well_jost(4.0, 1.0, 5.0) - 1.0)) < 1e-12);
      CHECK(std::abs(s.p) <= t.c1 * 4.0 / 5.0 + 1e-15);
    }
  }
  CHECK(t.c1 > 0.0);
  CHECK(t.c1_growth < 2.0);
}

TEST_CASE("errors and CSV dump") {
  const auto well = Potential::square_well(4.0, 1.0);
  CHECK_THROWS_AS(solve_jost(well, cplx(1.0, -0.1)), SolverError);
  CHECK_THROWS_AS(solve_regular(well, cplx(NAN, 0.0), 2.0), SolverError);
  std::ostringstream os;
  write_csv(os, solve_jost(well, 1.0), well);
  CHECK(os.str().rfind("x,re_u,im_u,re_du,im_du,residual\n", 0) == 0);
}
