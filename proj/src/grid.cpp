#include "scatter/grid.hpp"

#include <cmath>
#include <numbers>

namespace scatter {

namespace {

// Legendre P_n and P_n' at t by the three-term recurrence.
std::pair<double, double> legendre(int n, double t) {
  double p0 = 1.0, p1 = t;
  if (n == 0) return {1.0, 0.0};
  for (int k = 2; k <= n; ++k) {
    const double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  const double dp = (std::abs(t) == 1.0) ? 0.5 * n * (n + 1) * std::pow(t, n + 1)
                                         : n * (t * p1 - p0) / (t * t - 1.0);
  return {p1, dp};
}

double simpson_step(const std::function<double(double)>& f, double a, double b, double fa,
                    double fm, double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace

ReferenceRule gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: n must be positive");
  ReferenceRule r{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (int i = 0; i < n; ++i) {
    double t = -std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      const auto [p, dp] = legendre(n, t);
      const double dt = p / dp;
      t -= dt;
      if (std::abs(dt) < 1e-16) break;
    }
    const auto [p, dp] = legendre(n, t);
    r.nodes(i) = t;
    r.weights(i) = 2.0 / ((1.0 - t * t) * dp * dp);
  }
  return r;
}

ReferenceRule gauss_lobatto(int n) {
  if (n < 2) throw std::invalid_argument("gauss_lobatto: n must be at least 2");
  ReferenceRule r{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  const int m = n - 1;
  r.nodes(0) = -1.0;
  r.nodes(m) = 1.0;
  // Interior nodes: roots of P_m'. Newton on P_m' using
  // (1 - t^2) P_m'' = 2 t P_m' - m (m + 1) P_m.
  for (int i = 1; i < m; ++i) {
    double t = -std::cos(std::numbers::pi * i / m);
    for (int it = 0; it < 100; ++it) {
      const auto [p, dp] = legendre(m, t);
      const double d2p = (2.0 * t * dp - m * (m + 1.0) * p) / (1.0 - t * t);
      const double dt = dp / d2p;
      t -= dt;
      if (std::abs(dt) < 1e-16) break;
    }
    r.nodes(i) = t;
  }
  for (int i = 0; i < n; ++i) {
    const double p = legendre(m, r.nodes(i)).first;
    r.weights(i) = 2.0 / (m * (m + 1.0) * p * p);
  }
  return r;
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol,
                        int max_depth) {
  if (b <= a) return 0.0;
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson_step(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

double integrate(const std::function<double(double)>& f, double a, double b,
                 std::span<const double> breaks, double tol) {
  if (b <= a) return 0.0;
  std::vector<double> cuts{a};
  // Geometric panels a, a+1, a+3, a+7, ... capped at b.
  for (double w = 1.0, x = a + 1.0; x < b; w *= 2.0, x += w) cuts.push_back(x);
  for (double x : breaks)
    if (x > a && x < b) cuts.push_back(x);
  cuts.push_back(b);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  // Fixed left-to-right order keeps the sum deterministic.
  double total = 0.0;
  const double panel_tol = tol / static_cast<double>(cuts.size());
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
    total += adaptive_simpson(f, cuts[i], cuts[i + 1], panel_tol);
  return total;
}

XGrid::XGrid(std::vector<double> edges, int order) : edges_(std::move(edges)), order_(order) {
  if (edges_.size() < 2) throw std::invalid_argument("XGrid: need at least one panel");
  if (order_ < 3) throw std::invalid_argument("XGrid: order must be at least 3");
  for (std::size_t i = 0; i + 1 < edges_.size(); ++i)
    if (!(edges_[i + 1] > edges_[i])) throw std::invalid_argument("XGrid: edges must increase");
  build_operators();
}

XGrid XGrid::covering(double x_end, double max_width, std::span<const double> breakpoints,
                      int order) {
  if (!(x_end > 0.0) || !(max_width > 0.0))
    throw std::invalid_argument("XGrid::covering: x_end and max_width must be positive");
  std::vector<double> marks{0.0};
  for (double b : breakpoints)
    if (b > 0.0 && b < x_end) marks.push_back(b);
  marks.push_back(x_end);
  std::sort(marks.begin(), marks.end());
  marks.erase(std::unique(marks.begin(), marks.end()), marks.end());
  std::vector<double> edges{0.0};
  for (std::size_t i = 0; i + 1 < marks.size(); ++i) {
    const double len = marks[i + 1] - marks[i];
    const auto pieces = static_cast<long>(std::ceil(len / max_width - 1e-12));
    for (long j = 1; j <= pieces; ++j)
      edges.push_back(j == pieces ? marks[i + 1] : marks[i] + len * j / pieces);
  }
  return XGrid(std::move(edges), order);
}

double XGrid::max_panel_width() const {
  double w = 0.0;
  for (std::size_t i = 0; i + 1 < edges_.size(); ++i) w = std::max(w, edges_[i + 1] - edges_[i]);
  return w;
}

Eigen::Index XGrid::panel_of(double x) const {
  if (x <= edges_.front()) return 0;
  if (x >= edges_.back()) return panel_count() - 1;
  const auto it = std::upper_bound(edges_.begin(), edges_.end(), x);
  return static_cast<Eigen::Index>(it - edges_.begin()) - 1;
}

Eigen::MatrixXd XGrid::sample_panels(const std::function<double(double)>& f) const {
  Eigen::MatrixXd out(order_, panel_count());
  for (Eigen::Index p = 0; p < panel_count(); ++p) {
    const Eigen::Index s = first_node(p);
    for (int j = 0; j < order_; ++j) {
      double x = points_(s + j);
      if (j == 0) x = std::nextafter(x, edges_[p + 1]);
      if (j == order_ - 1) x = std::nextafter(x, edges_[p]);
      out(j, p) = f(x);
    }
  }
  return out;
}

Eigen::Index XGrid::interpolation_weights(double x, Eigen::Ref<Eigen::VectorXd> c) const {
  const Eigen::Index p = panel_of(x);
  const double a = edges_[p], b = edges_[p + 1];
  const double t = (2.0 * x - a - b) / (b - a);
  double den = 0.0;
  for (int j = 0; j < order_; ++j) {
    const double d = t - rule_.nodes(j);
    if (d == 0.0) {
      c.setZero();
      c(j) = 1.0;
      return first_node(p);
    }
    c(j) = bary_(j) / d;
    den += c(j);
  }
  c /= den;
  return first_node(p);
}

void XGrid::build_operators() {
  const int n = order_;
  rule_ = gauss_lobatto(n);
  const Eigen::VectorXd& t = rule_.nodes;

  bary_.resize(n);
  for (int j = 0; j < n; ++j) {
    double prod = 1.0;
    for (int k = 0; k < n; ++k)
      if (k != j) prod *= (t(j) - t(k));
    bary_(j) = 1.0 / prod;
  }

  // Lagrange basis value L_j(s) through the barycentric form.
  auto basis = [&](double s, Eigen::VectorXd& out) {
    double den = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = s - t(j);
      if (d == 0.0) {
        out.setZero();
        out(j) = 1.0;
        return;
      }
      out(j) = bary_(j) / d;
      den += out(j);
    }
    out /= den;
  };

  const ReferenceRule gl = gauss_legendre(n);
  left_integral_.setZero(n, n);
  Eigen::VectorXd lj(n);
  for (int i = 1; i < n; ++i) {
    const double lo = -1.0, hi = t(i);
    for (int q = 0; q < n; ++q) {
      const double s = 0.5 * (hi - lo) * gl.nodes(q) + 0.5 * (hi + lo);
      basis(s, lj);
      left_integral_.row(i) += 0.5 * (hi - lo) * gl.weights(q) * lj.transpose();
    }
  }
  right_integral_.setZero(n, n);
  for (int i = 0; i < n - 1; ++i) {
    const double lo = t(i), hi = 1.0;
    for (int q = 0; q < n; ++q) {
      const double s = 0.5 * (hi - lo) * gl.nodes(q) + 0.5 * (hi + lo);
      basis(s, lj);
      right_integral_.row(i) += 0.5 * (hi - lo) * gl.weights(q) * lj.transpose();
    }
  }

  diff_.setZero(n, n);
  for (int i = 0; i < n; ++i) {
    double diag = 0.0;
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      diff_(i, j) = (bary_(j) / bary_(i)) / (t(i) - t(j));
      diag -= diff_(i, j);
    }
    diff_(i, i) = diag;
  }

  const Eigen::Index panels = panel_count();
  points_.resize(panels * (n - 1) + 1);
  weights_.setZero(points_.size());
  for (Eigen::Index p = 0; p < panels; ++p) {
    const double a = edges_[p], b = edges_[p + 1];
    const Eigen::Index s = first_node(p);
    for (int j = 0; j < n; ++j) {
      points_(s + j) = 0.5 * (b - a) * t(j) + 0.5 * (a + b);
      weights_(s + j) += 0.5 * (b - a) * rule_.weights(j);
    }
    points_(s) = a;
    points_(s + n - 1) = b;
  }
}

QuadGrid QuadGrid::uniform(double h, Eigen::Index n) { return uniform_from(h, h, n); }

QuadGrid QuadGrid::uniform_from(double start, double step, Eigen::Index n) {
  if (!(step > 0.0) || n < 1) throw std::invalid_argument("QuadGrid: bad uniform grid");
  QuadGrid g;
  g.points.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) g.points(i) = start + step * static_cast<double>(i);
  g.weights = Eigen::VectorXd::Constant(n, step);
  return g;
}

}  // namespace scatter
