#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <complex>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace scatter {

using cplx = std::complex<double>;

/// Nodes and weights of a quadrature rule on [-1, 1].
struct ReferenceRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

ReferenceRule gauss_legendre(int n);
ReferenceRule gauss_lobatto(int n);

/// Integrates f over [a, b] by adaptive Simpson with the given absolute
/// tolerance per panel.
double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double tol = 1e-12, int max_depth = 48);

/// Integrates f over [a, b] with the points in `breaks` inserted as panel
/// boundaries. Long ranges are split into geometrically growing panels so a
/// power-law tail is resolved near a without wasting evaluations far away.
double integrate(const std::function<double(double)>& f, double a, double b,
                 std::span<const double> breaks = {}, double tol = 1e-12);

/// Composite Gauss-Lobatto grid on [0, X]. Panels share their end nodes, so
/// node 0 is x = 0 and the last node is X. Every panel carries the same
/// reference rule; spectral integration, differentiation and barycentric
/// interpolation all act panel by panel.
class XGrid {
 public:
  XGrid() = default;
  XGrid(std::vector<double> edges, int order = 16);

  /// Grid on [0, x_end] with the given breakpoints as panel edges and no
  /// panel wider than max_width.
  static XGrid covering(double x_end, double max_width, std::span<const double> breakpoints = {},
                        int order = 16);

  Eigen::Index size() const { return points_.size(); }
  Eigen::Index panel_count() const { return static_cast<Eigen::Index>(edges_.size()) - 1; }
  int order() const { return order_; }
  double x_max() const { return edges_.back(); }
  const std::vector<double>& edges() const { return edges_; }
  const Eigen::VectorXd& points() const { return points_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  double max_panel_width() const;
  /// Mean node spacing of the widest panel.
  double mean_spacing() const { return max_panel_width() / (order_ - 1); }

  Eigen::Index panel_of(double x) const;
  Eigen::Index first_node(Eigen::Index panel) const { return panel * (order_ - 1); }

  /// Nodal samples f(x_j) rearranged panel by panel (order x panels); shared
  /// edge nodes appear in both neighbouring columns.
  template <typename Derived>
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> to_panels(
      const Eigen::MatrixBase<Derived>& f) const {
    Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> out(order_,
                                                                               panel_count());
    for (Eigen::Index p = 0; p < panel_count(); ++p)
      out.col(p) = f.segment(first_node(p), order_);
    return out;
  }

  /// Samples f panel by panel, taking one-sided limits at panel edges so a
  /// jump at a breakpoint is seen from the correct side.
  Eigen::MatrixXd sample_panels(const std::function<double(double)>& f) const;

  /// out(j) = int_0^{x_j} f, with f given panel by panel (see to_panels).
  template <typename Derived>
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> cumulative_from_left(
      const Eigen::MatrixBase<Derived>& f) const {
    using Scalar = typename Derived::Scalar;
    const int n = order_;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(size());
    out(0) = Scalar(0);
    for (Eigen::Index p = 0; p < panel_count(); ++p) {
      const Eigen::Index s = first_node(p);
      const double half = 0.5 * (edges_[p + 1] - edges_[p]);
      const Scalar base = out(s);
      for (int i = 1; i < n; ++i) {
        Scalar acc(0);
        for (int j = 0; j < n; ++j) acc += left_integral_(i, j) * f(j, p);
        out(s + i) = base + half * acc;
      }
    }
    return out;
  }

  /// out(j) = int_{x_j}^X f, with f given panel by panel.
  template <typename Derived>
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> cumulative_from_right(
      const Eigen::MatrixBase<Derived>& f) const {
    using Scalar = typename Derived::Scalar;
    const int n = order_;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(size());
    out(size() - 1) = Scalar(0);
    for (Eigen::Index p = panel_count() - 1; p >= 0; --p) {
      const Eigen::Index s = first_node(p);
      const double half = 0.5 * (edges_[p + 1] - edges_[p]);
      const Scalar base = out(s + n - 1);
      for (int i = n - 2; i >= 0; --i) {
        Scalar acc(0);
        for (int j = 0; j < n; ++j) acc += right_integral_(i, j) * f(j, p);
        out(s + i) = base + half * acc;
      }
    }
    return out;
  }

  /// out(j) = int_{x_j}^X e^{rate (y - x_j)} f(y) dy for Re(rate) <= 0, without
  /// forming e^{-rate x} (which may overflow); f given panel by panel.
  template <typename Derived>
  Eigen::VectorXcd cumulative_from_right_damped(const Eigen::MatrixBase<Derived>& f,
                                                std::complex<double> rate) const {
    const int n = order_;
    Eigen::VectorXcd out(size()), e(n);
    out(size() - 1) = 0.0;
    for (Eigen::Index p = panel_count() - 1; p >= 0; --p) {
      const Eigen::Index s = first_node(p);
      const double a = edges_[p];
      const double half = 0.5 * (edges_[p + 1] - a);
      for (int j = 0; j < n; ++j) e(j) = std::exp(rate * (points_(s + j) - a));
      const std::complex<double> base = out(s + n - 1);
      for (int i = n - 2; i >= 0; --i) {
        std::complex<double> acc(0.0);
        for (int j = 0; j < n; ++j) acc += right_integral_(i, j) * e(j) * f(j, p);
        // e(n-1) / e(i) = e^{rate (b - x_i)}
        out(s + i) = (e(n - 1) * base + half * acc) / e(i);
      }
    }
    return out;
  }

  /// Panel-local spectral derivative of nodal samples. Shared edge nodes take
  /// the value from the panel on their left.
  template <typename Derived>
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> derivative(
      const Eigen::MatrixBase<Derived>& f) const {
    using Scalar = typename Derived::Scalar;
    const int n = order_;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(size());
    // Reverse sweep so the left panel wins at shared nodes.
    for (Eigen::Index p = panel_count() - 1; p >= 0; --p) {
      const Eigen::Index s = first_node(p);
      const double scale = 2.0 / (edges_[p + 1] - edges_[p]);
      for (int i = 0; i < n; ++i) {
        Scalar acc(0);
        for (int j = 0; j < n; ++j) acc += diff_(i, j) * f(s + j);
        out(s + i) = scale * acc;
      }
    }
    return out;
  }

  /// Barycentric interpolation of nodal samples at x in [0, X].
  template <typename Derived>
  typename Derived::Scalar interpolate(const Eigen::MatrixBase<Derived>& f, double x) const {
    using Scalar = typename Derived::Scalar;
    const Eigen::Index p = panel_of(x);
    const Eigen::Index s = first_node(p);
    const double a = edges_[p], b = edges_[p + 1];
    const double t = (2.0 * x - a - b) / (b - a);
    Scalar num(0);
    double den = 0.0;
    for (int j = 0; j < order_; ++j) {
      const double d = t - rule_.nodes(j);
      if (d == 0.0) return f(s + j);
      const double c = bary_(j) / d;
      num += c * f(s + j);
      den += c;
    }
    return num / den;
  }

  /// Integral of panel samples over the whole grid.
  template <typename Derived>
  typename Derived::Scalar integrate_panels(const Eigen::MatrixBase<Derived>& f) const {
    typename Derived::Scalar acc(0);
    for (Eigen::Index p = 0; p < panel_count(); ++p) {
      const double half = 0.5 * (edges_[p + 1] - edges_[p]);
      for (int j = 0; j < order_; ++j) acc += half * rule_.weights(j) * f(j, p);
    }
    return acc;
  }

  /// Lagrange weights for interpolation at x: value = sum_j c_j f(first + j).
  Eigen::Index interpolation_weights(double x, Eigen::Ref<Eigen::VectorXd> c) const;

 private:
  void build_operators();

  std::vector<double> edges_;
  int order_ = 0;
  ReferenceRule rule_;
  Eigen::VectorXd points_;
  Eigen::VectorXd weights_;
  Eigen::VectorXd bary_;
  Eigen::MatrixXd left_integral_;
  Eigen::MatrixXd right_integral_;
  Eigen::MatrixXd diff_;
};

/// Plain quadrature grid: nodes with positive weights, no panel structure.
/// Used for the uniform x and k grids of the operator discretization.
struct QuadGrid {
  Eigen::VectorXd points;
  Eigen::VectorXd weights;

  Eigen::Index size() const { return points.size(); }

  /// points h, 2h, ..., n h with weight h each (Dirichlet trapezoid).
  static QuadGrid uniform(double h, Eigen::Index n);
  /// n points start, start + step, ...; weight step each.
  static QuadGrid uniform_from(double start, double step, Eigen::Index n);
  bool same_as(const QuadGrid& other) const {
    return points.size() == other.points.size() && points == other.points &&
           weights == other.weights;
  }
};

}  // namespace scatter
