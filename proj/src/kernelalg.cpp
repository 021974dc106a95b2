#include "scatter/kernelalg.hpp"

#include "scatter/parallel.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>
#include <tuple>

namespace scatter {

namespace {

constexpr double pi = std::numbers::pi;
const double c2pi = std::sqrt(2.0 / pi);
constexpr cplx I(0.0, 1.0);

const ReferenceRule& gl16() {
  static const ReferenceRule r = gauss_legendre(16);
  return r;
}

// Composite Gauss-Legendre on [a, b] with cuts at `breaks`. Panels start at
// 0.25 (1 + x) wide and never exceed `width`.
template <typename F>
double gl_sum(F&& f, double a, double b, const std::vector<double>& breaks, double width) {
  if (!(b > a)) return 0.0;
  std::vector<double> marks{a};
  for (double c : breaks)
    if (c > a && c < b) marks.push_back(c);
  marks.push_back(b);
  std::sort(marks.begin(), marks.end());
  const ReferenceRule& r = gl16();
  double acc = 0.0;
  for (std::size_t s = 0; s + 1 < marks.size(); ++s) {
    double lo = marks[s];
    const double hi = marks[s + 1];
    while (lo < hi) {
      const double step = std::min(width, 0.25 * (1.0 + lo));
      const double up = (hi - lo < 1.05 * step) ? hi : lo + step;
      const double mid = 0.5 * (lo + up), half = 0.5 * (up - lo);
      double part = 0.0;
      for (Eigen::Index i = 0; i < r.nodes.size(); ++i) part += r.weights(i) * f(mid + half * r.nodes(i));
      acc += half * part;
      lo = up;
    }
  }
  return acc;
}

// Nodes gl_sum would use on [a, b] (for budget estimates).
double gl_node_count(double a, double b, double width) {
  double n = 0.0, lo = a;
  while (lo < b) {
    lo += std::min(width, 0.25 * (1.0 + lo));
    n += 16.0;
  }
  return n;
}

double osc_width(double k) { return std::min(0.5, 1.0 / k); }

// sin(ky - eta) from the stored phase e^{-i eta}.
double sin_shift(double y, double k, cplx phase) {
  return (std::exp(I * (k * y)) * phase).imag();
}

std::vector<double> interior_breaks(const KernelContext& ctx) {
  std::vector<double> b;
  for (double c : ctx.potential().breakpoints())
    if (c > 0.0 && c < ctx.horizon()) b.push_back(c);
  return b;
}

// y with (y + other) / 2 on a breakpoint.
std::vector<double> mirrored_breaks(const KernelContext& ctx, double other) {
  std::vector<double> b;
  for (double c : interior_breaks(ctx)) b.push_back(2.0 * c - other);
  return b;
}

bool same_grid(const XGrid& a, const XGrid& b) {
  return a.order() == b.order() && a.edges() == b.edges();
}

Eigen::VectorXcd nodal(const XGrid& g, const VSpaceElement& v) {
  Eigen::VectorXcd out(g.size());
  for (Eigen::Index i = 0; i < g.size(); ++i) out(i) = v(g.points()(i));
  return out;
}

KernelColumn s_map(const XGrid& g, std::shared_ptr<const XGrid> gp, const Eigen::MatrixXd& u_panels,
                   const KernelColumn& w) {
  const double k = w.k;
  const Eigen::MatrixXcd f = u_panels.cast<cplx>().cwiseProduct(g.to_panels(w.values));
  const Eigen::VectorXcd dp = g.cumulative_from_right_damped(f, I * k);
  const Eigen::VectorXcd dm = g.cumulative_from_right_damped(f, -I * k);
  KernelColumn out{k, std::move(gp), (dp - dm) / (2.0 * I * k)};
  return out;
}

KernelColumn sine_seed(const KernelContext& ctx, const JostColumn& j) {
  auto g = ctx.column_grid(j.k);
  Eigen::VectorXcd v(g->size());
  for (Eigen::Index i = 0; i < g->size(); ++i) v(i) = c2pi * sin_shift(g->points()(i), j.k, j.phase);
  return {j.k, g, v};
}

KernelColumn p_seed(const KernelContext& ctx, const JostColumn& j) {
  auto g = ctx.column_grid(j.k);
  Eigen::VectorXcd v(g->size());
  for (Eigen::Index i = 0; i < g->size(); ++i)
    v(i) = c2pi * (j.p(g->points()(i)) * j.phase).imag();
  return {j.k, g, v};
}

// p_seed - p_N - R_N = 0 per column; returns (p_N, R_N).
std::pair<KernelColumn, KernelColumn> pn_and_rn(const KernelContext& ctx, const JostColumn& j,
                                                int n) {
  KernelColumn pn = p_seed(ctx, j);
  KernelColumn r = sine_seed(ctx, j);
  KernelColumn rsum{j.k, pn.grid, Eigen::VectorXcd::Zero(pn.values.size())};
  for (int i = 0; i < n; ++i) {
    pn = apply_s_v(ctx, pn);
    r = apply_s_v(ctx, r);
    rsum.values += r.values;
  }
  return {pn, rsum};
}

void check_order(int n, int max_n, const char* what) {
  if (n < 1 || n > max_n) {
    std::ostringstream msg;
    msg << what << ": order " << n << " outside 1.." << max_n;
    throw KernelError(msg.str());
  }
}

double relative_gap(double a, double b) {
  const double s = std::max(std::abs(a), std::abs(b));
  return s > 0.0 ? std::abs(a - b) / s : 0.0;
}

EnvelopeFit split_fit(const std::vector<std::pair<double, double>>& key_ratio, double split) {
  EnvelopeFit f;
  double inner = 0.0, outer = 0.0;
  for (const auto& [key, ratio] : key_ratio) {
    f.constant = std::max(f.constant, ratio);
    (key <= split ? inner : outer) = std::max(key <= split ? inner : outer, ratio);
  }
  f.samples = key_ratio.size();
  f.growth = inner > 0.0 ? outer / inner : (outer > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
  return f;
}

double slope_fit(const std::vector<double>& lx, const std::vector<double>& ly) {
  const auto n = static_cast<double>(lx.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sx += lx[i];
    sy += ly[i];
    sxx += lx[i] * lx[i];
    sxy += lx[i] * ly[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

std::vector<double> geometric_points(double lo, double hi, int n) {
  std::vector<double> out;
  const double a = std::log1p(lo), b = std::log1p(hi);
  for (int i = 0; i < n; ++i) out.push_back(std::expm1(a + (b - a) * i / (n - 1)));
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// context

KernelContext::KernelContext(Potential p, SolverOptions opt) : p_(std::move(p)), opt_(opt) {
  horizon_ = jost_x_max(p_, opt_);
  base_ = std::make_shared<XGrid>(XGrid::covering(horizon_, 0.25, p_.breakpoints(), opt_.order));
  Eigen::VectorXd vals =
      base_->cumulative_from_right(base_->sample_panels([this](double y) { return p_(y); }));
  vv_ = TailFunction(base_, std::move(vals), p_.certificate().rho - 1.0, true);
  vv_beyond_ = p_.support_end() ? 0.0 : std::abs(tail_functionals(p_, horizon_).vv);
}

VSpaceElement KernelContext::restrict(const VSpaceElement& v) const {
  if (v.empty()) throw KernelError("restrict: element lacks decay metadata");
  if (v.grid_ptr() == base_ && v.vanishes_beyond()) return v;
  return TailFunction::sample([&](double x) { return v(x); }, v.exponent(), base_, true);
}

VSpaceElement KernelContext::antiderivative(const VSpaceElement& u) const {
  if (!(u.exponent() > 1.0)) throw KernelError("antiderivative: u must decay faster than (1+x)^-1");
  const VSpaceElement r = restrict(u);
  Eigen::VectorXd vals = base_->cumulative_from_right(base_->to_panels(r.values()));
  return TailFunction(base_, std::move(vals), u.exponent() - 1.0, true);
}

JostColumn KernelContext::solve(double k) const {
  if (!(k > 0.0)) throw KernelError("Jost data requested at k <= 0");
  JostColumn j;
  j.k = k;
  j.theta = solve_jost(p_, cplx(k, 0.0), opt_);
  j.w = j.theta.values(0);
  if (!(std::abs(j.w) > 0.0)) throw KernelError("Jost function vanishes");
  j.phase = std::conj(j.w) / std::abs(j.w);
  j.eta = std::arg(j.w);
  return j;
}

std::shared_ptr<const JostColumn> KernelContext::jost(double k) const {
  {
    std::lock_guard guard(lock_);
    const auto it = jost_.find(k);
    if (it != jost_.end()) return it->second;
  }
  auto j = std::make_shared<const JostColumn>(solve(k));
  std::lock_guard guard(lock_);
  return jost_.emplace(k, std::move(j)).first->second;
}

std::shared_ptr<const XGrid> KernelContext::column_grid(double k) const {
  return std::make_shared<XGrid>(
      XGrid::covering(horizon_, std::min(0.25, 1.0 / k), p_.breakpoints(), opt_.order));
}

cplx KernelColumn::operator()(double x) const {
  if (!(x >= 0.0)) throw KernelError("kernel column evaluated at negative x");
  if (x > grid->x_max()) return 0.0;
  return grid->interpolate(values, x);
}

// ---------------------------------------------------------------------------
// F kernels

FKernels f_kernels(const KernelContext& ctx, const Eigen::VectorXd& xs, const Eigen::VectorXd& ks) {
  FKernels out;
  const Eigen::Index nx = xs.size(), nk = ks.size();
  for (Kernel2D* k2 : {&out.f1, &out.f2, &out.f2_im}) {
    k2->x = xs;
    k2->y = ks;
    k2->values.resize(nx, nk);
  }
  out.f1.label = "F1";
  out.f2.label = "F2";
  out.f2_im.label = "F2_im";
  out.f1.x_exponent = 0.0;
  out.f1.y_exponent = 1.0;
  const double rho = ctx.potential().certificate().rho;
  for (Kernel2D* k2 : {&out.f2, &out.f2_im}) {
    k2->x_exponent = rho - 1.0;
    k2->y_exponent = 1.0;
  }
  out.f1.exact = [&ctx](double x, double k) {
    const auto j = ctx.jost(k);
    return c2pi * std::exp(I * (k * x)) * (j->phase * j->phase - 1.0) / (2.0 * I);
  };
  std::vector<double> gaps(static_cast<std::size_t>(nk), 0.0);
  parallel_for(static_cast<std::size_t>(nk), [&](std::size_t mm) {
    const auto m = static_cast<Eigen::Index>(mm);
    const double k = ks(m);
    const auto j = ctx.jost(k);
    const cplx s = j->phase * j->phase;
    for (Eigen::Index i = 0; i < nx; ++i) {
      const cplx p = j->p(xs(i));
      out.f1.values(i, m) = c2pi * std::exp(I * (k * xs(i))) * (s - 1.0) / (2.0 * I);
      out.f2.values(i, m) = c2pi * (p * s - std::conj(p)) / (2.0 * I);
      out.f2_im.values(i, m) = c2pi * (p * j->phase).imag() * j->phase;
      gaps[mm] = std::max(gaps[mm], std::abs(out.f2.values(i, m) - out.f2_im.values(i, m)));
    }
  });
  for (double g : gaps) out.max_form_gap = std::max(out.max_form_gap, g);
  return out;
}

// ---------------------------------------------------------------------------
// columns

KernelColumn sine_seed(const KernelContext& ctx, double k) { return sine_seed(ctx, *ctx.jost(k)); }

KernelColumn p_seed(const KernelContext& ctx, double k) { return p_seed(ctx, *ctx.jost(k)); }

KernelColumn apply_s(const KernelContext& ctx, const VSpaceElement& u, const KernelColumn& w) {
  (void)ctx;
  const XGrid& g = *w.grid;
  return s_map(g, w.grid, g.to_panels(nodal(g, u).real()), w);
}

KernelColumn apply_s_v(const KernelContext& ctx, const KernelColumn& w) {
  const XGrid& g = *w.grid;
  const Potential& p = ctx.potential();
  return s_map(g, w.grid, g.sample_panels([&p](double y) { return p(y); }), w);
}

KernelColumn w_bracket_column(const KernelContext& ctx, const std::vector<VSpaceElement>& vs,
                              double k) {
  if (vs.empty()) throw KernelError("W bracket needs at least one entry");
  auto gp = ctx.column_grid(k);
  const XGrid& g = *gp;
  Eigen::VectorXcd f = (I * k * g.points().cast<cplx>()).array().exp().matrix();
  const auto n = static_cast<int>(vs.size());
  // Innermost first; the level m steps from the inside carries e^{i(-1)^m k (y - x)}.
  for (int j = n - 1; j >= 0; --j) {
    const int m = n - 1 - j;
    const cplx rate = (m % 2 == 0 ? 1.0 : -1.0) * I * k;
    const Eigen::VectorXcd integrand = f.cwiseProduct(nodal(g, vs[static_cast<std::size_t>(j)]));
    f = g.cumulative_from_right_damped(g.to_panels(integrand), rate);
  }
  const cplx phase = ctx.jost(k)->phase;
  Eigen::VectorXcd vals = (c2pi * (f * phase).imag()).cast<cplx>();
  return {k, gp, std::move(vals)};
}

std::vector<KernelColumn> rn_columns(const KernelContext& ctx, double k, int n) {
  std::vector<KernelColumn> out;
  KernelColumn r = sine_seed(ctx, k);
  for (int i = 0; i < n; ++i) {
    r = apply_s_v(ctx, r);
    out.push_back(r);
  }
  return out;
}

KernelColumn pn_column(const KernelContext& ctx, double k, int n) {
  KernelColumn c = p_seed(ctx, k);
  for (int i = 0; i < n; ++i) c = apply_s_v(ctx, c);
  return c;
}

Kernel2D sample_kernel(const std::function<KernelColumn(double)>& column, const Eigen::VectorXd& xs,
                       const Eigen::VectorXd& ks, std::string label) {
  Kernel2D out;
  out.x = xs;
  out.y = ks;
  out.label = std::move(label);
  out.values.resize(xs.size(), ks.size());
  parallel_for(static_cast<std::size_t>(ks.size()), [&](std::size_t mm) {
    const auto m = static_cast<Eigen::Index>(mm);
    const KernelColumn c = column(ks(m));
    for (Eigen::Index i = 0; i < xs.size(); ++i) out.values(i, m) = c(xs(i));
  });
  return out;
}

// ---------------------------------------------------------------------------
// nested quadrature

R1Forms r1_forms(const KernelContext& ctx, double x, double k) {
  const auto j = ctx.jost(k);
  const cplx ph = j->phase;
  const double L = ctx.horizon(), wdt = osc_width(k);
  const VSpaceElement& V = ctx.vv();
  const Potential& p = ctx.potential();
  R1Forms f;
  if (x >= L) return f;
  f.substituted = 0.5 * c2pi * gl_sum([&](double y) { return V(0.5 * (x + y)) * sin_shift(y, k, ph); },
                                       x, 2.0 * L - x, mirrored_breaks(ctx, x), wdt);
  f.pre_substitution =
      c2pi * gl_sum([&](double y) { return V(y) * sin_shift(2.0 * y - x, k, ph); }, x, L,
                    interior_breaks(ctx), wdt);
  f.definitional = c2pi * gl_sum(
                              [&](double y) {
                                return std::sin(k * (y - x)) / k * p(y) * sin_shift(y, k, ph);
                              },
                              x, L, interior_breaks(ctx), wdt);
  return f;
}

R1Result r1_kernel(const KernelContext& ctx, const Eigen::VectorXd& xs, const Eigen::VectorXd& ks,
                   double budget) {
  R1Result out;
  for (Eigen::Index m = 0; m < ks.size(); ++m)
    out.truncation_bound = std::max(out.truncation_bound, ctx.truncation_bound(ks(m)));
  if (out.truncation_bound > budget) {
    std::ostringstream msg;
    msg << "r1: dropped oscillatory tail bound " << out.truncation_bound << " exceeds budget "
        << budget;
    throw KernelError(msg.str());
  }
  out.kernel.x = xs;
  out.kernel.y = ks;
  out.kernel.label = "r1";
  out.kernel.x_exponent = ctx.vv().exponent();
  out.kernel.y_exponent = 0.0;
  out.kernel.values.resize(xs.size(), ks.size());
  std::vector<double> sub(static_cast<std::size_t>(ks.size()), 0.0), def(sub);
  parallel_for(static_cast<std::size_t>(ks.size()), [&](std::size_t mm) {
    const auto m = static_cast<Eigen::Index>(mm);
    for (Eigen::Index i = 0; i < xs.size(); ++i) {
      const R1Forms f = r1_forms(ctx, xs(i), ks(m));
      out.kernel.values(i, m) = f.substituted;
      sub[mm] = std::max(sub[mm], std::abs(f.substituted - f.pre_substitution));
      def[mm] = std::max(def[mm], std::abs(f.substituted - f.definitional));
    }
  });
  for (std::size_t m = 0; m < sub.size(); ++m) {
    out.max_substitution_gap = std::max(out.max_substitution_gap, sub[m]);
    out.max_definition_gap = std::max(out.max_definition_gap, def[m]);
  }
  return out;
}

Kernel2D iterate_rn(const KernelContext& ctx, const std::function<KernelColumn(double)>& r_prev,
                    const Eigen::VectorXd& xs, const Eigen::VectorXd& ks, Eigen::Index max_nodes) {
  Eigen::Index total = 0;
  for (Eigen::Index m = 0; m < ks.size(); ++m) total += ctx.column_grid(ks(m))->size();
  if (total > max_nodes) {
    std::ostringstream msg;
    msg << "iterate_rn: " << total << " quadrature nodes exceed the budget " << max_nodes
        << "; use fewer k samples or a smaller order";
    throw KernelError(msg.str());
  }
  return sample_kernel(
      [&](double k) {
        KernelColumn c = r_prev(k);
        auto g = ctx.column_grid(k);
        if (!c.grid || !same_grid(*c.grid, *g)) {
          Eigen::VectorXcd v(g->size());
          for (Eigen::Index i = 0; i < g->size(); ++i) v(i) = c(g->points()(i));
          c = KernelColumn{k, g, std::move(v)};
        }
        return apply_s_v(ctx, c);
      },
      xs, ks, "S_v r");
}

namespace {

// n-fold integral with factors sin(k(x_j - x_{j-1}))/k v(x_j) and innermost weight.
double iterated(const KernelContext& ctx, int n, double x, double k,
                const std::function<double(double)>& innermost) {
  const double L = ctx.horizon(), wdt = osc_width(k);
  const Potential& p = ctx.potential();
  const auto br = interior_breaks(ctx);
  std::function<double(int, double)> level = [&](int depth, double lower) -> double {
    if (depth == n) return innermost(lower);
    return gl_sum(
        [&](double y) { return std::sin(k * (y - lower)) / k * p(y) * level(depth + 1, y); }, lower,
        L, br, wdt);
  };
  return c2pi * level(0, x);
}

}  // namespace

double rn_direct(const KernelContext& ctx, int n, double x, double k) {
  check_order(n, 2, "rn_direct");
  const cplx ph = ctx.jost(k)->phase;
  return iterated(ctx, n, x, k, [&](double y) { return sin_shift(y, k, ph); });
}

double pn_direct(const KernelContext& ctx, int n, double x, double k) {
  check_order(n, 2, "pn_direct");
  const auto j = ctx.jost(k);
  return iterated(ctx, n, x, k, [&](double y) { return (j->p(y) * j->phase).imag(); });
}

double w_bracket(const KernelContext& ctx, const std::vector<VSpaceElement>& vs, double x, double k) {
  const int n = static_cast<int>(vs.size());
  check_order(n, 3, "w_bracket");
  const double L = ctx.horizon(), wdt = osc_width(k);
  const double nodes = gl_node_count(x, L, wdt);
  if (std::pow(nodes, n) / std::tgamma(n + 1.0) > 5e8)
    throw KernelError("w_bracket: nested quadrature budget exceeded; lower n or use the column route");
  const cplx ph = ctx.jost(k)->phase;
  const auto br = interior_breaks(ctx);
  std::function<double(int, double, double)> level = [&](int j, double lower, double acc) -> double {
    if (j > n) return sin_shift(acc, k, ph);
    const double coef = ((n - j) % 2 == 0) ? 2.0 : -2.0;
    const VSpaceElement& V = vs[static_cast<std::size_t>(j - 1)];
    return gl_sum([&](double y) { return V(y) * level(j + 1, y, acc + coef * y); }, lower, L, br,
                  wdt);
  };
  return c2pi * level(1, x, (n % 2 == 0 ? 1.0 : -1.0) * x);
}

double w_bracket_substituted(const KernelContext& ctx, const std::vector<VSpaceElement>& vs,
                             double x, double k) {
  const int n = static_cast<int>(vs.size());
  check_order(n, 3, "w_bracket_substituted");
  const double L = ctx.horizon(), wdt = osc_width(k);
  const cplx ph = ctx.jost(k)->phase;
  const auto& V1 = vs[0];
  double total = 0.0;
  if (n == 1) {
    total = gl_sum([&](double y1) { return V1(0.5 * (y1 + x)) * sin_shift(y1, k, ph); }, x,
                   2.0 * L - x, mirrored_breaks(ctx, x), wdt);
  } else if (n == 2) {
    const auto& V2 = vs[1];
    total = gl_sum(
        [&](double y1) {
          return V1(0.5 * (y1 + x)) *
                 gl_sum([&](double y2) { return V2(0.5 * (y2 + y1)) * sin_shift(y2, k, ph); }, x,
                        2.0 * L - y1, mirrored_breaks(ctx, y1), wdt);
        },
        x, 2.0 * L - x, mirrored_breaks(ctx, x), wdt);
  } else {
    const auto &V2 = vs[1], &V3 = vs[2];
    total = gl_sum(
        [&](double y1) {
          return V1(0.5 * (y1 + x)) *
                 gl_sum(
                     [&](double y2) {
                       return V2(0.5 * (y2 + y1)) *
                              gl_sum([&](double y3) {
                                return V3(0.5 * (y3 + y2)) * sin_shift(y3, k, ph);
                              }, y1, 2.0 * L - y2, mirrored_breaks(ctx, y2), wdt);
                     },
                     x, 2.0 * L - y1, mirrored_breaks(ctx, y1), wdt);
        },
        x, 2.0 * L - x, mirrored_breaks(ctx, x), wdt);
  }
  return c2pi * total / std::pow(2.0, n);
}

// ---------------------------------------------------------------------------
// p_N

double fitted_envelope_slope(const KernelColumn& c, double x_lo, double x_hi, int points) {
  const double half = 0.5 * pi / c.k;
  std::vector<double> lx, ly;
  for (double xc : geometric_points(x_lo, x_hi, points)) {
    double env = 0.0;
    for (int i = 0; i <= 40; ++i) {
      const double x = std::max(0.0, xc - half + 2.0 * half * i / 40.0);
      env = std::max(env, std::abs(c(x)));
    }
    lx.push_back(std::log1p(xc));
    ly.push_back(std::log(std::max(env, 1e-300)));
  }
  return slope_fit(lx, ly);
}

double fitted_tail_slope(const VSpaceElement& v, double x_lo, double x_hi, int points) {
  std::vector<double> lx, ly;
  for (double x : geometric_points(x_lo, x_hi, points)) {
    lx.push_back(std::log1p(x));
    ly.push_back(std::log(std::max(std::abs(v(x)), 1e-300)));
  }
  return slope_fit(lx, ly);
}

PnKernel pN_kernel(const KernelContext& ctx, int n, const Eigen::VectorXd& xs,
                   const Eigen::VectorXd& ks) {
  check_order(n, 2, "pN_kernel");
  if (ks.size() == 0) throw KernelError("pN_kernel: empty k list");
  PnKernel out;
  out.n = n;
  const double rho = ctx.potential().certificate().rho;
  out.predicted_slope = -(n + 1) * (rho - 1.0);
  out.kernel.x = xs;
  out.kernel.y = ks;
  out.kernel.label = "p_" + std::to_string(n);
  out.kernel.x_exponent = (n + 1) * (rho - 1.0);
  out.kernel.y_exponent = n + 1.0;
  out.kernel.values.resize(xs.size(), ks.size());
  std::vector<double> res(static_cast<std::size_t>(ks.size()), 0.0);
  std::vector<double> slope(1, std::numeric_limits<double>::quiet_NaN());
  const double x_lo = xs.size() ? xs.minCoeff() : 0.0, x_hi = xs.size() ? xs.maxCoeff() : 0.0;
  parallel_for(static_cast<std::size_t>(ks.size()), [&](std::size_t mm) {
    const auto m = static_cast<Eigen::Index>(mm);
    const auto j = ctx.jost(ks(m));
    const auto [pn, rn] = pn_and_rn(ctx, *j, n);
    for (Eigen::Index i = 0; i < xs.size(); ++i) {
      const cplx v = pn(xs(i));
      out.kernel.values(i, m) = v;
      const cplx f2 = c2pi * (j->p(xs(i)) * j->phase).imag() * j->phase;
      res[mm] = std::max(res[mm], std::abs(f2 - (v + rn(xs(i))) * j->phase));
    }
    if (m == 0 && (1.0 + x_hi) >= 2.0 * (1.0 + x_lo)) slope[0] = fitted_envelope_slope(pn, x_lo, x_hi);
  });
  for (double r : res) out.decomposition_residual = std::max(out.decomposition_residual, r);
  out.fitted_slope = slope[0];
  return out;
}

// ---------------------------------------------------------------------------
// estimates

EnvelopeFit estimate_k2(const KernelContext& ctx, double rho, const Eigen::VectorXd& xs,
                        const Eigen::VectorXd& ks) {
  const FKernels f = f_kernels(ctx, xs, ks);
  std::vector<std::pair<double, double>> kr;
  for (Eigen::Index m = 0; m < ks.size(); ++m)
    for (Eigen::Index i = 0; i < xs.size(); ++i) {
      const double k = ks(m), x = xs(i);
      const double bound =
          k > 1.0 ? std::pow(1.0 + x, -(rho - 1.0)) / k : std::pow(1.0 + x, -(rho - 2.0));
      kr.emplace_back(x, std::abs(f.f2.values(i, m)) / bound);
    }
  const double split = xs.size() ? 0.5 * (xs.minCoeff() + xs.maxCoeff()) : 0.0;
  return split_fit(kr, split);
}

EnvelopeFit estimate_messy(const KernelContext& ctx, double rho, const Eigen::VectorXd& ks,
                           double x_end, int points_per_axis) {
  const Potential& p = ctx.potential();
  const auto axis = geometric_points(0.0, x_end, points_per_axis);
  std::vector<std::pair<double, double>> kr;
  for (Eigen::Index m = 0; m < ks.size(); ++m) {
    const double k = ks(m);
    for (std::size_t a = 0; a < axis.size(); ++a)
      for (std::size_t b = a; b < axis.size(); ++b)
        for (std::size_t c = b; c < axis.size(); ++c) {
          const double x0 = axis[a], x1 = axis[b], x2 = axis[c];
          const double prod = std::abs(std::sin(k * (x1 - x0)) / k * p(x1)) *
                              std::abs(std::sin(k * (x2 - x1)) / k * p(x2));
          const double bound = k > 1.0
                                   ? std::pow(k, -2.0) * std::pow((1.0 + x1) * (1.0 + x2), -rho)
                                   : std::pow((1.0 + x1) * (1.0 + x2), -(rho - 1.0));
          kr.emplace_back(x2, prod / bound);
        }
  }
  return split_fit(kr, 0.5 * x_end);
}

// ---------------------------------------------------------------------------
// U brackets

double u_bracket(const KernelContext& ctx, const std::vector<VSpaceElement>& vs, double x,
                 double y) {
  const int n = static_cast<int>(vs.size());
  check_order(n, 2, "u_bracket");
  if (y < x) return 0.0;
  if (n == 1) return 0.5 * vs[0](0.5 * (x + y));
  const double L = ctx.horizon();
  auto br = mirrored_breaks(ctx, x);
  const auto br2 = mirrored_breaks(ctx, y);
  br.insert(br.end(), br2.begin(), br2.end());
  return 0.25 * gl_sum(
                    [&](double x1) { return vs[0](0.5 * (x1 + x)) * vs[1](0.5 * (y + x1)); }, x,
                    std::min(2.0 * L - x, 2.0 * L - y), br, std::numeric_limits<double>::infinity());
}

FactorizationReport u_bracket_factorization(const KernelContext& ctx,
                                            const std::vector<VSpaceElement>& vs,
                                            const Eigen::VectorXd& xs, const Eigen::VectorXd& ks) {
  const int n = static_cast<int>(vs.size());
  check_order(n, 2, "u_bracket_factorization");
  FactorizationReport out;
  out.n = n;
  double e = std::numeric_limits<double>::infinity();
  for (const auto& v : vs) e = std::min(e, v.exponent());
  out.epsilon = e - 1.0;
  const double L = ctx.horizon();

  out.samples.resize(static_cast<std::size_t>(xs.size() * ks.size()));
  parallel_for(static_cast<std::size_t>(ks.size()), [&](std::size_t mm) {
    const auto m = static_cast<Eigen::Index>(mm);
    const double k = ks(m);
    const KernelColumn wc = w_bracket_column(ctx, vs, k);
    const cplx ph = ctx.jost(k)->phase;
    for (Eigen::Index i = 0; i < xs.size(); ++i) {
      FactorizationSample s;
      s.x = xs(i);
      s.k = k;
      s.w = wc(s.x).real();
      s.u_phi_fs = c2pi * gl_sum(
                              [&](double y) { return u_bracket(ctx, vs, s.x, y) * sin_shift(y, k, ph); },
                              s.x, 2.0 * L - s.x, mirrored_breaks(ctx, s.x), osc_width(k));
      s.residual = std::abs(s.w - s.u_phi_fs);
      out.samples[mm * static_cast<std::size_t>(xs.size()) + static_cast<std::size_t>(i)] = s;
    }
  });
  for (const auto& s : out.samples) out.max_residual = std::max(out.max_residual, s.residual);

  // |U|^2 over the triangle; U vanishes once x > L.
  const double inf = std::numeric_limits<double>::infinity();
  const double wide = n == 1 ? inf : std::max(0.5, L / 20.0);
  out.frobenius = std::sqrt(gl_sum(
      [&](double x) {
        return gl_sum([&](double y) { return std::pow(u_bracket(ctx, vs, x, y), 2); }, x,
                      2.0 * L - x, mirrored_breaks(ctx, x), wide);
      },
      0.0, L, interior_breaks(ctx), wide));

  const double a = 0.5 * (1.0 + out.epsilon);
  std::vector<std::pair<double, double>> kr;
  for (double x : geometric_points(0.0, 0.95 * L, 20))
    for (double t : geometric_points(0.0, 1.0, 20)) {
      const double y = x + t * (2.0 * L - 2.0 * x);
      const double bound = std::pow(1.0 + x, -a - (n - 1) * out.epsilon) * std::pow(1.0 + y, -a);
      kr.emplace_back(x, std::abs(u_bracket(ctx, vs, x, y)) / bound);
    }
  out.envelope = split_fit(kr, 0.5 * L);
  return out;
}

double u1_frobenius_closed_form(const VSpaceElement& v) {
  const XGrid& g = v.grid();
  const Eigen::VectorXd integrand =
      g.points().cwiseProduct(v.values().cwiseAbs2());
  double total = g.integrate_panels(g.to_panels(integrand));
  if (!v.vanishes_beyond()) {
    const double X = g.x_max(), e = v.exponent(), vx = v.values()(v.values().size() - 1);
    const double c = vx * vx * std::pow(1.0 + X, 2.0 * e);
    total += c * (std::pow(1.0 + X, 2.0 - 2.0 * e) / (2.0 * e - 2.0) -
                  std::pow(1.0 + X, 1.0 - 2.0 * e) / (2.0 * e - 1.0));
  }
  return std::sqrt(0.5 * total);
}

double u1_frobenius_box_closed_form(const VSpaceElement& v, double b) {
  std::vector<double> br{0.5 * b};
  for (double e : v.grid().edges()) br.push_back(e);
  const double s = gl_sum([&](double m) { return std::min(m, b - m) * std::pow(v(m), 2); }, 0.0, b,
                          br, std::numeric_limits<double>::infinity());
  return std::sqrt(0.5 * s);
}

double u1_frobenius_box_quadrature(const VSpaceElement& v, double b) {
  const double inf = std::numeric_limits<double>::infinity();
  const auto& edges = v.grid().edges();
  const double s = gl_sum(
      [&](double x) {
        std::vector<double> br;
        for (double e : edges) br.push_back(2.0 * e - x);
        return gl_sum([&](double y) { return 0.25 * std::pow(v(0.5 * (x + y)), 2); }, x, b, br, inf);
      },
      0.0, b, {}, inf);
  return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// identities

std::vector<std::string> IdentityReport::failing() const {
  std::vector<std::string> out;
  for (const auto& r : results)
    if (!r.pass &&
        std::find(out.begin(), out.end(), r.identity) == out.end())
      out.push_back(r.identity);
  return out;
}

IdentityReport identity_checks(const KernelContext& ctx,
                               const std::vector<std::pair<double, double>>& samples,
                               const std::optional<VSpaceElement>& u, double tolerance) {
  IdentityReport rep;
  rep.tolerance = tolerance;
  if (u && !in_v2(*u)) throw KernelError("identity_checks: u must lie in V_2");
  const VSpaceElement V1 = ctx.vv();
  if (!in_v1(V1)) throw KernelError("identity_checks: V_v must lie in V_1");
  const VSpaceElement V2 = star_product(V1, V1);
  const VSpaceElement Vu = u ? ctx.antiderivative(*u) : ctx.vv();
  const std::optional<VSpaceElement> ur = u ? std::optional(ctx.restrict(*u)) : std::nullopt;
  const VSpaceElement VuV1 = pointwise_product(Vu, V1);
  const VSpaceElement VuStarV1 = star_product(Vu, V1);
  const VSpaceElement left = star_product(VuStarV1, V2);
  const VSpaceElement right = star_product(Vu, star_product(V1, V2));
  rep.associativity_gap = (left.values() - right.values()).cwiseAbs().maxCoeff();

  auto s_u = [&](const KernelColumn& c) { return ur ? apply_s(ctx, *ur, c) : apply_s_v(ctx, c); };

  rep.results.resize(3 * samples.size());
  parallel_for(samples.size(), [&](std::size_t i) {
    const auto [x, k] = samples[i];
    const KernelColumn w12 = w_bracket_column(ctx, {V1, V2}, k);
    const KernelColumn wu12 = w_bracket_column(ctx, {Vu, V1, V2}, k);
    const KernelColumn l1 = s_u(w_bracket_column(ctx, {V1}, k));
    const double r1 = w_bracket_column(ctx, {Vu, V1}, k)(x).real() -
                      w_bracket_column(ctx, {VuStarV1}, k)(x).real();
    const double l2 = s_u(w12)(x).real();
    const double r2 = wu12(x).real() - apply_s(ctx, VuV1, w_bracket_column(ctx, {V2}, k))(x).real();
    const double r3 = wu12(x).real() - w_bracket_column(ctx, {VuStarV1, V2}, k)(x).real() +
                      w_bracket_column(ctx, {star_product(VuStarV1, V2)}, k)(x).real();
    const std::array<std::tuple<const char*, double, double>, 3> rows{
        {{"for 1", l1(x).real(), r1}, {"for n+1 (n=1)", l2, r2}, {"for n (n=2)", l2, r3}}};
    for (std::size_t q = 0; q < 3; ++q) {
      IdentityResult& r = rep.results[3 * i + q];
      r.identity = std::get<0>(rows[q]);
      r.x = x;
      r.k = k;
      r.lhs = std::get<1>(rows[q]);
      r.rhs = std::get<2>(rows[q]);
      r.residual = relative_gap(r.lhs, r.rhs);
      r.pass = r.residual < tolerance;
    }
  });
  for (const auto& r : rep.results) rep.pass = rep.pass && r.pass;
  return rep;
}

// ---------------------------------------------------------------------------
// operator level

namespace {

GridOperator x_by_k(const OperatorGrid& g, std::string label) {
  GridOperator m;
  m.row_nodes = g.x;
  m.row_weights = g.wx;
  m.col_nodes = g.k;
  m.col_weights = g.wk;
  m.label = std::move(label);
  m.re = Eigen::MatrixXd::Zero(g.x.size(), g.k.size());
  m.im = Eigen::MatrixXd::Zero(g.x.size(), g.k.size());
  return m;
}

void put(GridOperator& m, Eigen::Index i, Eigen::Index j, cplx v) {
  const double a = std::sqrt(m.row_weights(i) * m.col_weights(j));
  m.re(i, j) = a * v.real();
  m.im(i, j) = a * v.imag();
}

}  // namespace

GridOperator kernel_remainder(const KernelContext& ctx, const Transforms& t) {
  const OperatorGrid& g = t.grid;
  GridOperator f2 = x_by_k(g, "F2");
  const double L = ctx.horizon();
  parallel_for(static_cast<std::size_t>(g.k.size()), [&](std::size_t mm) {
    const auto m = static_cast<Eigen::Index>(mm);
    const JostColumn j = ctx.solve(g.k(m));
    for (Eigen::Index i = 0; i < g.x.size() && g.x(i) < L; ++i)
      put(f2, i, m, c2pi * (j.p(g.x(i)) * j.phase).imag() * j.phase);
  });
  return compose(f2, t.fs, "F2.Fs");
}

OperatorDecomposition operator_decomposition(const KernelContext& ctx, const Transforms& t, int n) {
  check_order(n, 3, "operator_decomposition");
  const OperatorGrid& g = t.grid;
  GridOperator f2 = x_by_k(g, "F2"), gap = x_by_k(g, "F2 - (pN + RN) e^{-i eta}");
  const double L = ctx.horizon();
  parallel_for(static_cast<std::size_t>(g.k.size()), [&](std::size_t mm) {
    const auto m = static_cast<Eigen::Index>(mm);
    const JostColumn j = ctx.solve(g.k(m));
    const auto [pn, rn] = pn_and_rn(ctx, j, n);
    for (Eigen::Index i = 0; i < g.x.size() && g.x(i) < L; ++i) {
      const cplx f = c2pi * (j.p(g.x(i)) * j.phase).imag() * j.phase;
      put(f2, i, m, f);
      put(gap, i, m, f - (pn(g.x(i)) + rn(g.x(i))) * j.phase);
    }
  });
  OperatorDecomposition out;
  out.reference = compose(f2, t.fs).frobenius();
  out.residual = compose(gap, t.fs).frobenius();
  return out;
}

RemainderComparison compare_remainders(const GridOperator& kernel_k, const GridOperator& operator_k,
                                       const std::vector<Eigen::VectorXcd>& probes) {
  RemainderComparison out;
  const GridOperator d = add(kernel_k, operator_k, -1.0, "K_kernel - K_operator");
  out.frobenius_gap = d.frobenius();
  out.kernel_frobenius = kernel_k.frobenius();
  out.operator_frobenius = operator_k.frobenius();
  for (const auto& p : probes)
    out.probe_gap = std::max(out.probe_gap, d.apply(p).norm() / p.norm());
  return out;
}

// ---------------------------------------------------------------------------
// output

void write_csv(std::ostream& os, const Kernel2D& k) {
  os << "x,k,re,im\n";
  os.precision(17);
  for (Eigen::Index i = 0; i < k.x.size(); ++i)
    for (Eigen::Index j = 0; j < k.y.size(); ++j)
      os << k.x(i) << ',' << k.y(j) << ',' << k.values(i, j).real() << ','
         << k.values(i, j).imag() << '\n';
}

nlohmann::json to_json(const IdentityReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& x : r.results)
    rows.push_back({{"identity", x.identity},
                    {"sample", {x.x, x.k}},
                    {"lhs", x.lhs},
                    {"rhs", x.rhs},
                    {"residual", x.residual},
                    {"pass", x.pass}});
  return {{"results", rows},
          {"tolerance", r.tolerance},
          {"associativity_gap", r.associativity_gap},
          {"pass", r.pass}};
}

nlohmann::json to_json(const EnvelopeFit& r) {
  return {{"constant", r.constant}, {"growth", r.growth}, {"samples", r.samples}};
}

nlohmann::json to_json(const FactorizationReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& s : r.samples)
    rows.push_back({{"sample", {s.x, s.k}},
                    {"w", s.w},
                    {"u_phi_fs", s.u_phi_fs},
                    {"residual", s.residual}});
  return {{"n", r.n},
          {"samples", rows},
          {"max_residual", r.max_residual},
          {"frobenius", r.frobenius},
          {"epsilon", r.epsilon},
          {"envelope", to_json(r.envelope)}};
}

nlohmann::json to_json(const PnKernel& r) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); };
  return {{"n", r.n},
          {"decomposition_residual", r.decomposition_residual},
          {"fitted_slope", num(r.fitted_slope)},
          {"predicted_slope", num(r.predicted_slope)}};
}

}  // namespace scatter
