#include "scatter/volterra.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

namespace scatter {

namespace {

const cplx I(0.0, 1.0);

// sin(zeta t) / zeta, with the series near zeta t = 0.
cplx sin_over(cplx zeta, double t) {
  const cplx z = zeta * t;
  if (std::abs(z) < 1e-2) {
    const cplx z2 = z * z;
    return t * (1.0 - z2 / 6.0 * (1.0 - z2 / 20.0 * (1.0 - z2 / 42.0 * (1.0 - z2 / 72.0))));
  }
  return std::sin(z) / zeta;
}

// (e^{2 i zeta t} - 1) / (2 i zeta), with the series near zeta t = 0.
cplx expm1_over(cplx zeta, double t) {
  const cplx z = 2.0 * I * zeta * t;
  if (std::abs(z) < 1e-2) {
    cplx term = 1.0, sum = 1.0;
    for (int n = 2; n <= 8; ++n) {
      term *= z / static_cast<double>(n);
      sum += term;
    }
    return t * sum;
  }
  return (std::exp(z) - 1.0) / (2.0 * I * zeta);
}

void check_finite(const Eigen::VectorXcd& u, const char* what) {
  if (!u.allFinite()) throw SolverError(std::string(what) + ": non-finite values");
}

double sup_abs(const Eigen::VectorXcd& u) { return u.cwiseAbs().maxCoeff(); }

// max |-u'' + v u - zeta^2 u| / max |u| over panel-interior nodes.
double ode_residual(const XGrid& g, const Potential& p, cplx zeta, const Eigen::VectorXcd& u,
                    const Eigen::VectorXcd& du) {
  const Eigen::VectorXcd d2 = g.derivative(du);
  const int n = g.order();
  double worst = 0.0;
  for (Eigen::Index q = 0; q < g.panel_count(); ++q)
    for (int j = 1; j < n - 1; ++j) {
      const Eigen::Index i = g.first_node(q) + j;
      const double x = g.points()(i);
      worst = std::max(worst, std::abs(-d2(i) + (p(x) - zeta * zeta) * u(i)));
    }
  const double scale = sup_abs(u);
  return scale > 0.0 ? worst / scale : worst;
}

bool converged(const Eigen::VectorXcd& next, const Eigen::VectorXcd& prev, double tol) {
  const double update = (next - prev).cwiseAbs().maxCoeff();
  // relative: the regular solution is O(1/|zeta|), so an absolute floor stops it early
  return update <= tol * sup_abs(next);
}

[[noreturn]] void fail_convergence(const char* what, cplx zeta, int iters) {
  std::ostringstream msg;
  msg << what << ": no convergence after " << iters << " iterations at zeta=" << zeta
      << " (grid too coarse for |zeta|?)";
  throw SolverError(msg.str());
}

}  // namespace

double resolving_width(cplx zeta, const SolverOptions& opt) {
  const double a = std::abs(zeta);
  return a > 0.0 ? std::min(opt.max_width, 2.0 / a) : opt.max_width;
}

std::shared_ptr<const XGrid> solver_grid(const Potential& p, cplx zeta, double x_end,
                                         const SolverOptions& opt) {
  return std::make_shared<XGrid>(
      XGrid::covering(x_end, resolving_width(zeta, opt), p.breakpoints(), opt.order));
}

double jost_x_max(const Potential& p, const SolverOptions& opt) {
  if (p.support_end()) return std::max(*p.support_end(), p.is_zero() ? 1.0 : 0.0);
  return p.memoized("jost_x_max:" + std::to_string(opt.jost_cap), [&] {
    for (double X = 5.0; X < opt.jost_cap; X += 5.0)
      if (tail_functionals(p, X).first_moment < 1e-10) return X;
    return opt.jost_cap;
  });
}

cplx WaveSolution::value_at(double x) const {
  if (!(x >= 0.0)) throw SolverError("WaveSolution evaluated at negative x");
  if (x <= grid->x_max()) return grid->interpolate(values, x);
  if (kind == SolutionKind::jost) return std::exp(I * zeta * x);
  if (exponential_split)
    return sin_over(zeta, x) +
           (std::exp(I * zeta * x) * tail_a - std::exp(-I * zeta * x) * tail_b) / (2.0 * I * zeta);
  return sin_over(zeta, x) * tail_a - std::cos(zeta * x) * tail_b;
}

cplx WaveSolution::deriv_at(double x) const {
  if (!(x >= 0.0)) throw SolverError("WaveSolution evaluated at negative x");
  if (x <= grid->x_max()) return grid->interpolate(derivs, x);
  if (kind == SolutionKind::jost) return I * zeta * std::exp(I * zeta * x);
  if (exponential_split)
    return std::cos(zeta * x) +
           0.5 * (std::exp(I * zeta * x) * tail_a + std::exp(-I * zeta * x) * tail_b);
  return std::cos(zeta * x) * tail_a + zeta * zeta * sin_over(zeta, x) * tail_b;
}

WaveSolution solve_regular(const Potential& p, cplx zeta, std::shared_ptr<const XGrid> g,
                           const SolverOptions& opt) {
  if (!std::isfinite(zeta.real()) || !std::isfinite(zeta.imag()))
    throw SolverError("solve_regular: non-finite zeta");
  const XGrid& grid = *g;
  const Eigen::VectorXd& x = grid.points();
  const Eigen::Index m = grid.size();
  const Eigen::MatrixXd vp = grid.sample_panels([&](double y) { return p(y); });

  WaveSolution sol;
  sol.zeta = zeta;
  sol.kind = SolutionKind::regular;
  sol.grid = g;
  sol.exponential_split = std::abs(zeta.imag()) * grid.x_max() > 2.0;

  Eigen::VectorXcd s(m), c(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    s(i) = sin_over(zeta, x(i));
    c(i) = std::cos(zeta * x(i));
  }
  Eigen::VectorXcd phi = s;
  if (p.is_zero()) {
    sol.values = s;
    sol.derivs = c;
    sol.tail_a = sol.exponential_split ? cplx(0) : cplx(1);
    sol.tail_b = 0.0;
    sol.residual = ode_residual(grid, p, zeta, sol.values, sol.derivs);
    return sol;
  }

  if (!sol.exponential_split) {
    const Eigen::MatrixXcd sp = grid.to_panels(s), cp = grid.to_panels(c);
    Eigen::VectorXcd ic, is;
    int it = 0;
    for (;;) {
      const Eigen::MatrixXcd f = vp.cwiseProduct(grid.to_panels(phi));
      ic = grid.cumulative_from_left(cp.cwiseProduct(f));
      is = grid.cumulative_from_left(sp.cwiseProduct(f));
      Eigen::VectorXcd next = s + s.cwiseProduct(ic) - c.cwiseProduct(is);
      check_finite(next, "solve_regular");
      ++it;
      const bool done = converged(next, phi, opt.tol);
      phi = std::move(next);
      if (done) break;
      if (it >= opt.max_iter) fail_convergence("solve_regular", zeta, it);
    }
    sol.iterations = it;
    sol.values = phi;
    sol.derivs = c + c.cwiseProduct(ic) + zeta * zeta * s.cwiseProduct(is);
    sol.tail_a = 1.0 + ic(m - 1);
    sol.tail_b = is(m - 1);
  } else {
    Eigen::VectorXcd ep(m), em(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      ep(i) = std::exp(I * zeta * x(i));
      em(i) = std::exp(-I * zeta * x(i));
    }
    const Eigen::MatrixXcd epp = grid.to_panels(ep), emp = grid.to_panels(em);
    Eigen::VectorXcd jm, jp;
    int it = 0;
    for (;;) {
      const Eigen::MatrixXcd f = vp.cwiseProduct(grid.to_panels(phi));
      jm = grid.cumulative_from_left(emp.cwiseProduct(f));
      jp = grid.cumulative_from_left(epp.cwiseProduct(f));
      Eigen::VectorXcd next = s + (ep.cwiseProduct(jm) - em.cwiseProduct(jp)) / (2.0 * I * zeta);
      check_finite(next, "solve_regular");
      ++it;
      const bool done = converged(next, phi, opt.tol);
      phi = std::move(next);
      if (done) break;
      if (it >= opt.max_iter) fail_convergence("solve_regular", zeta, it);
    }
    sol.iterations = it;
    sol.values = phi;
    sol.derivs = c + 0.5 * (ep.cwiseProduct(jm) + em.cwiseProduct(jp));
    sol.tail_a = jm(m - 1);
    sol.tail_b = jp(m - 1);
  }
  sol.values(0) = 0.0;
  sol.derivs(0) = 1.0;
  sol.residual = ode_residual(grid, p, zeta, sol.values, sol.derivs);
  return sol;
}

WaveSolution solve_regular(const Potential& p, cplx zeta, double x_end, const SolverOptions& opt) {
  const double end = std::max(x_end, p.support_end().value_or(0.0));
  return solve_regular(p, zeta, solver_grid(p, zeta, end > 0.0 ? end : 1.0, opt), opt);
}

WaveSolution solve_jost(const Potential& p, cplx zeta, std::shared_ptr<const XGrid> g,
                        const SolverOptions& opt) {
  if (!std::isfinite(zeta.real()) || !std::isfinite(zeta.imag()))
    throw SolverError("solve_jost: non-finite zeta");
  if (zeta.imag() < 0.0) throw SolverError("solve_jost: zeta in the lower half-plane");
  const XGrid& grid = *g;
  const Eigen::VectorXd& x = grid.points();
  const Eigen::Index n = grid.size();
  const double X = grid.x_max();
  const Eigen::MatrixXd vp = grid.sample_panels([&](double y) { return p(y); });

  WaveSolution sol;
  sol.zeta = zeta;
  sol.kind = SolutionKind::jost;
  sol.grid = g;
  const bool exp_split = std::abs(zeta) * X >= 2.0;

  // back = e^{-2 i zeta x} is only formed when |zeta| X < 2, where it stays below e^4.
  Eigen::VectorXcd back(n), theta0(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    back(i) = exp_split ? cplx(0.0) : std::exp(-2.0 * I * zeta * x(i));
    theta0(i) = std::exp(I * zeta * x(i));
  }
  Eigen::VectorXcd mm = Eigen::VectorXcd::Ones(n);
  Eigen::VectorXcd g2 = Eigen::VectorXcd::Zero(n);
  int it = 0;
  if (!p.is_zero()) {
    Eigen::VectorXcd ey(n), emx(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      ey(i) = expm1_over(zeta, x(i));
      emx(i) = expm1_over(zeta, -x(i));
    }
    const Eigen::MatrixXcd eyp = grid.to_panels(ey);
    for (;;) {
      const Eigen::MatrixXcd f = vp.cwiseProduct(grid.to_panels(mm));
      const Eigen::VectorXcd j0 = grid.cumulative_from_right(f);
      Eigen::VectorXcd next;
      if (exp_split) {
        // e^{-2 i zeta x} J2(x), formed without the growing factor
        const Eigen::VectorXcd d = grid.cumulative_from_right_damped(f, 2.0 * I * zeta);
        next = Eigen::VectorXcd::Ones(n) + (d - j0) / (2.0 * I * zeta);
      } else {
        const Eigen::VectorXcd a = grid.cumulative_from_right(eyp.cwiseProduct(f));
        next = Eigen::VectorXcd::Ones(n) + back.cwiseProduct(a) + emx.cwiseProduct(j0);
      }
      check_finite(next, "solve_jost");
      ++it;
      const bool done = converged(next, mm, opt.tol);
      mm = std::move(next);
      if (done) break;
      if (it >= opt.max_iter) fail_convergence("solve_jost", zeta, it);
    }
    g2 = grid.cumulative_from_right_damped(vp.cwiseProduct(grid.to_panels(mm)), 2.0 * I * zeta);
  }
  const Eigen::VectorXcd dm = -g2;
  sol.iterations = it;
  sol.values = theta0.cwiseProduct(mm);
  sol.derivs = theta0.cwiseProduct(I * zeta * mm + dm);
  sol.values(n - 1) = theta0(n - 1);
  sol.derivs(n - 1) = I * zeta * theta0(n - 1);
  sol.residual = ode_residual(grid, p, zeta, sol.values, sol.derivs);
  return sol;
}

WaveSolution solve_jost(const Potential& p, cplx zeta, const SolverOptions& opt) {
  return solve_jost(p, zeta, solver_grid(p, zeta, jost_x_max(p, opt), opt), opt);
}

std::vector<std::pair<cplx, cplx>> rk4_march(const Potential& p, cplx zeta, double x0, cplx u0,
                                             cplx du0, const std::vector<double>& targets,
                                             double h) {
  if (!(h > 0.0)) throw SolverError("rk4_march: step must be positive");
  std::vector<std::pair<cplx, cplx>> out;
  out.reserve(targets.size());
  const cplx z2 = zeta * zeta;
  double pos = x0;
  cplx u = u0, du = du0;
  for (double target : targets) {
    // Stops: breakpoints strictly between pos and target, then target.
    std::vector<double> stops;
    for (double b : p.breakpoints())
      if ((b - pos) * (b - target) < 0.0) stops.push_back(b);
    if (target < pos) std::sort(stops.rbegin(), stops.rend());
    stops.push_back(target);
    for (double stop : stops) {
      const double len = stop - pos;
      if (len == 0.0) continue;
      const long steps = std::max(1L, static_cast<long>(std::ceil(std::abs(len) / h)));
      const double dh = len / static_cast<double>(steps);
      const double lo = std::min(pos, stop), hi = std::max(pos, stop);
      // v seen from inside the current segment.
      const auto v = [&](double y) {
        return p(std::clamp(y, std::nextafter(lo, hi), std::nextafter(hi, lo)));
      };
      const auto rhs = [&](double y, cplx a, cplx b) {
        return std::pair<cplx, cplx>{b, (v(y) - z2) * a};
      };
      for (long s = 0; s < steps; ++s) {
        const double y = pos + dh * static_cast<double>(s);
        const auto [k1u, k1d] = rhs(y, u, du);
        const auto [k2u, k2d] = rhs(y + 0.5 * dh, u + 0.5 * dh * k1u, du + 0.5 * dh * k1d);
        const auto [k3u, k3d] = rhs(y + 0.5 * dh, u + 0.5 * dh * k2u, du + 0.5 * dh * k2d);
        const auto [k4u, k4d] = rhs(y + dh, u + dh * k3u, du + dh * k3d);
        u += dh / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
        du += dh / 6.0 * (k1d + 2.0 * k2d + 2.0 * k3d + k4d);
      }
      pos = stop;
    }
    out.emplace_back(u, du);
  }
  return out;
}

double rk4_crosscheck(const Potential& p, const WaveSolution& sol, const std::vector<double>& xs,
                      double h) {
  if (h <= 0.0) h = std::min(1e-3, 0.02 / std::max(1.0, std::abs(sol.zeta)));
  std::vector<double> pts = xs;
  std::vector<std::pair<cplx, cplx>> rk;
  if (sol.kind == SolutionKind::regular) {
    std::sort(pts.begin(), pts.end());
    rk = rk4_march(p, sol.zeta, 0.0, 0.0, 1.0, pts, h);
  } else {
    std::sort(pts.rbegin(), pts.rend());
    const double X = sol.x_max();
    const cplx e = std::exp(I * sol.zeta * X);
    rk = rk4_march(p, sol.zeta, X, e, I * sol.zeta * e, pts, h);
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const cplx u = sol.value_at(pts[i]);
    worst = std::max(worst, std::abs(rk[i].first - u) / std::max(1.0, std::abs(u)));
  }
  return worst;
}

PKernelTable p_kernel_and_estimates(const Potential& p, const std::vector<double>& k_list,
                                    const std::vector<double>& x_list, double k0,
                                    const SolverOptions& opt) {
  PKernelTable table;
  table.k0 = k0;
  std::vector<TailValues> tails;
  for (double x : x_list) tails.push_back(tail_functionals(p, x));
  std::vector<double> ks = k_list;
  std::sort(ks.begin(), ks.end());
  for (double k : ks) {
    const WaveSolution th = solve_jost(p, cplx(k, 0.0), opt);
    for (std::size_t j = 0; j < x_list.size(); ++j) {
      PSample s;
      s.x = x_list[j];
      s.k = k;
      s.p = th.value_at(s.x) - std::exp(I * k * s.x);
      s.abs_tail = tails[j].abs_tail;
      s.first_moment = tails[j].first_moment;
      table.samples.push_back(s);
    }
  }
  // Fit the constants, then flag each sample against them.
  const double median_k = ks.empty() ? 0.0 : ks[ks.size() / 2];
  double low = 0.0, high = 0.0;
  for (const auto& s : table.samples) {
    const double a = std::abs(s.p);
    if (s.k > k0 && s.abs_tail > 0.0) {
      const double r = a * s.k / s.abs_tail;
      table.c1 = std::max(table.c1, r);
      if (s.k < median_k)
        low = std::max(low, r);
      else
        high = std::max(high, r);
    }
    if (s.first_moment > 0.0) table.c2 = std::max(table.c2, a / s.first_moment);
  }
  table.c1_growth = low > 0.0 ? high / low : 0.0;
  for (auto& s : table.samples) {
    const double a = std::abs(s.p);
    const double slack = 1e-12;
    if (s.k > k0) s.within_estimate1 = a <= table.c1 * s.abs_tail / s.k * (1.0 + 1e-12) + slack;
    s.within_estimate2 = a <= table.c2 * s.first_moment * (1.0 + 1e-12) + slack;
  }
  return table;
}

void write_csv(std::ostream& os, const WaveSolution& sol, const Potential& p) {
  const XGrid& g = *sol.grid;
  const Eigen::VectorXcd d2 = g.derivative(sol.derivs);
  os << "x,re_u,im_u,re_du,im_du,residual\n";
  os.precision(17);
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    const double x = g.points()(i);
    const double r = std::abs(-d2(i) + (p(x) - sol.zeta * sol.zeta) * sol.values(i));
    os << x << ',' << sol.values(i).real() << ',' << sol.values(i).imag() << ','
       << sol.derivs(i).real() << ',' << sol.derivs(i).imag() << ',' << r << '\n';
  }
}

}  // namespace scatter
