#include <doctest.h>

#include "scatter/grid.hpp"

#include <cmath>

using namespace scatter;

TEST_CASE("reference rules integrate polynomials of their degree") {
  const auto gl = gauss_legendre(16);
  const auto lob = gauss_lobatto(16);
  for (int deg = 0; deg <= 29; ++deg) {
    const double exact = (deg % 2 == 0) ? 2.0 / (deg + 1) : 0.0;
    double a = 0.0, b = 0.0;
    for (int i = 0; i < 16; ++i) {
      a += gl.weights(i) * std::pow(gl.nodes(i), deg);
      if (deg <= 29) b += lob.weights(i) * std::pow(lob.nodes(i), deg);
    }
    CHECK(a == doctest::Approx(exact).epsilon(1e-13));
    if (deg <= 29) CHECK(std::abs(b - exact) < 1e-13);
  }
  CHECK(lob.nodes(0) == -1.0);
  CHECK(lob.nodes(15) == 1.0);
}

TEST_CASE("adaptive integration with breakpoints") {
  const double v = integrate([](double x) { return x < 1.0 ? -4.0 : 0.0; }, 0.0, 10.0,
                             std::vector<double>{1.0});
  CHECK(std::abs(v + 4.0) < 1e-12);
  const double p = integrate([](double x) { return std::pow(1.0 + x, -3.0); }, 0.0, 1e6);
  CHECK(std::abs(p - 0.5 * (1.0 - std::pow(1.0 + 1e6, -2.0))) < 1e-11);
}

TEST_CASE("panel grid cumulative integrals and derivative") {
  const std::vector<double> breaks{1.0, 2.5};
  const XGrid g = XGrid::covering(7.0, 0.4, breaks);
  CHECK(g.points()(0) == 0.0);
  CHECK(g.x_max() == 7.0);
  for (double b : breaks) {
    bool found = false;
    for (double e : g.edges()) found = found || e == b;
    CHECK(found);
  }
  CHECK(g.max_panel_width() <= 0.4 + 1e-12);

  const Eigen::VectorXd x = g.points();
  const Eigen::VectorXd f = (3.0 * x).array().sin();
  const Eigen::VectorXd left = g.cumulative_from_left(g.to_panels(f));
  const Eigen::VectorXd right = g.cumulative_from_right(g.to_panels(f));
  const Eigen::VectorXd df = g.derivative(f);
  double e1 = 0, e2 = 0, e3 = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    e1 = std::max(e1, std::abs(left(i) - (1.0 - std::cos(3.0 * x(i))) / 3.0));
    e2 = std::max(e2, std::abs(right(i) - (std::cos(3.0 * x(i)) - std::cos(21.0)) / 3.0));
    e3 = std::max(e3, std::abs(df(i) - 3.0 * std::cos(3.0 * x(i))));
  }
  CHECK(e1 < 1e-13);
  CHECK(e2 < 1e-13);
  CHECK(e3 < 1e-9);
  CHECK(std::abs(g.weights().sum() - 7.0) < 1e-13);
  CHECK(std::abs(g.interpolate(f, 3.3) - std::sin(9.9)) < 1e-12);
}

TEST_CASE("one-sided panel sampling sees a jump from both sides") {
  const XGrid g = XGrid::covering(2.0, 0.5, std::vector<double>{1.0});
  const auto step = [](double x) { return x < 1.0 ? -4.0 : 0.0; };
  const Eigen::MatrixXd s = g.sample_panels(step);
  CHECK(std::abs(g.integrate_panels(s) + 4.0) < 1e-13);
  const Eigen::VectorXd c = g.cumulative_from_right(s);
  CHECK(std::abs(c(0) + 4.0) < 1e-13);
}
