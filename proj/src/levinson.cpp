#include "scatter/levinson.hpp"

#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>

namespace scatter {

namespace {

constexpr double pi = std::numbers::pi;

EdgeCurve constant_edge(double lo, double hi, Eigen::Index n) {
  EdgeCurve e;
  e.param = Eigen::VectorXd::LinSpaced(n, lo, hi);
  e.values = Eigen::VectorXcd::Ones(n);
  return e;
}

double max_phase_step(const Eigen::VectorXcd& z) {
  double m = 0.0;
  for (Eigen::Index i = 0; i + 1 < z.size(); ++i)
    m = std::max(m, std::abs(std::arg(z(i + 1) / z(i))));
  return m;
}

}  // namespace

cplx phi_symbol(double t) {
  const cplx I(0.0, 1.0);
  if (t > 300.0) return 0.0;
  return 1.0 / (I * std::exp(pi * t) + 1.0);
}

cplx psi_symbol(double t) {
  const cplx I(0.0, 1.0);
  if (t < -300.0) return 0.0;
  return 1.0 / (1.0 - I * std::exp(-pi * t));
}

BoundarySymbol boundary_symbol(const ScatteringData& sd, const SymbolOptions& opt) {
  const double k_lo = std::exp(opt.beta_min), k_hi = std::exp(opt.beta_max);
  if (sd.size() == 0 || sd.k(0) > k_lo * (1.0 + 1e-12) ||
      sd.k(sd.size() - 1) < k_hi * (1.0 - 1e-12)) {
    std::ostringstream msg;
    msg << "scattering data do not cover k in [" << k_lo << ", " << k_hi << "]";
    throw std::out_of_range(msg.str());
  }
  BoundarySymbol sym;
  sym.resonance = sd.resonance;
  sym.delta = sd.delta;
  sym.eta_span = -sd.eta0;  // eta(inf) = 0 by normalization
  sym.near_resonant = !sd.resonance && sd.eta0_uncertain;

  std::vector<double> beta;
  std::vector<cplx> vals;
  for (Eigen::Index i = 0; i < sd.size(); ++i)
    if (sd.k(i) >= k_lo * (1.0 - 1e-12) && sd.k(i) <= k_hi * (1.0 + 1e-12)) {
      beta.push_back(std::log(sd.k(i)));
      vals.push_back(sd.s(i));
    }
  sym.gamma1.param = Eigen::Map<Eigen::VectorXd>(beta.data(), static_cast<Eigen::Index>(beta.size()));
  sym.gamma1.values =
      Eigen::Map<Eigen::VectorXcd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
  sym.gamma1.start_limit = sd.resonance ? cplx(-1.0) : cplx(1.0);
  sym.gamma1.end_limit = 1.0;

  sym.gamma2.param = Eigen::VectorXd::LinSpaced(opt.alpha_points, opt.alpha_min, opt.alpha_max);
  sym.gamma2.values.resize(opt.alpha_points);
  for (Eigen::Index i = 0; i < opt.alpha_points; ++i) {
    const double a = sym.gamma2.param(i);
    sym.gamma2.values(i) =
        sd.resonance ? cplx(std::tanh(pi * a), 1.0 / std::cosh(pi * a)) : cplx(1.0);
  }
  sym.gamma2.start_limit = sd.resonance ? cplx(-1.0) : cplx(1.0);
  sym.gamma2.end_limit = 1.0;

  sym.gamma3 = constant_edge(opt.beta_min, opt.beta_max, 2);
  sym.gamma4 = constant_edge(opt.alpha_min, opt.alpha_max, 2);

  const auto& g1 = sym.gamma1.values;
  const auto& g2 = sym.gamma2.values;
  sym.corner_gaps = {std::abs(g1(0) - g2(0)), std::abs(g2(g2.size() - 1) - sym.gamma3.values(0)),
                     std::abs(sym.gamma3.values(sym.gamma3.values.size() - 1) -
                              sym.gamma4.values(sym.gamma4.values.size() - 1)),
                     std::abs(g1(g1.size() - 1) - sym.gamma4.values(0))};
  return sym;
}

BoundarySymbol boundary_symbol(const Potential& p, const SymbolOptions& opt,
                               const SolverOptions& solver) {
  Eigen::Index n = opt.beta_points;
  for (int r = 0;; ++r) {
    const ScatteringData sd =
        smatrix_and_phase(p, log_k_grid(std::exp(opt.beta_min), std::exp(opt.beta_max), n), solver);
    BoundarySymbol sym = boundary_symbol(sd, opt);
    sym.refinements = r;
    if (max_phase_step(sym.gamma1.values) < opt.max_step || r >= opt.max_refinements) return sym;
    n = 2 * n - 1;
  }
}

double winding_of_curve(const Eigen::VectorXcd& curve) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < curve.size(); ++i)
    if (std::abs(curve(i)) < 1e-12) {
      std::ostringstream msg;
      msg << "curve sample " << i << " has modulus below 1e-12";
      throw WindingError(msg.str(), i, i);
    }
  for (Eigen::Index i = 0; i + 1 < curve.size(); ++i) {
    const double step = std::arg(curve(i + 1) / curve(i));
    if (std::abs(step) >= pi / 2) {
      std::ostringstream msg;
      msg << "phase step " << step << " between samples " << i << " and " << i + 1
          << "; refine the curve";
      throw WindingError(msg.str(), i, i + 1);
    }
    total += step;
  }
  return total / (2.0 * pi);
}

double edge_winding(const EdgeCurve& edge) {
  const auto& z = edge.values;
  const double head = std::arg(z(0) / edge.start_limit);
  const double tail = std::arg(edge.end_limit / z(z.size() - 1));
  return winding_of_curve(z) + (head + tail) / (2.0 * pi);
}

WindingReport levinson_verify(const BoundarySymbol& sym, const Spectrum& spec) {
  WindingReport r;
  r.wn1 = edge_winding(sym.gamma1);
  r.wn2 = edge_winding(sym.gamma2);
  r.wn3 = edge_winding(sym.gamma3);
  r.wn4 = edge_winding(sym.gamma4);
  r.total = -r.wn1 + r.wn2 + r.wn3 - r.wn4;
  r.expected_index = static_cast<int>(spec.count());
  r.residual_to_half_integer = std::abs(r.total - std::round(2.0 * r.total) / 2.0);
  r.classical_residual = sym.eta_span - pi * (static_cast<double>(spec.count()) + sym.delta);
  r.resonance = sym.resonance;
  r.pass = std::abs(r.total - r.expected_index) < 5e-3;
  return r;
}

nlohmann::json to_json(const WindingReport& r) {
  return {{"wn1", r.wn1},
          {"wn2", r.wn2},
          {"wn3", r.wn3},
          {"wn4", r.wn4},
          {"total", r.total},
          {"expected_index", r.expected_index},
          {"residual_to_half_integer", r.residual_to_half_integer},
          {"classical_residual", r.classical_residual},
          {"resonance", r.resonance},
          {"pass", r.pass}};
}

void write_csv(std::ostream& os, const EdgeCurve& edge) {
  os << "param,re,im\n";
  os.precision(17);
  for (Eigen::Index i = 0; i < edge.values.size(); ++i)
    os << edge.param(i) << ',' << edge.values(i).real() << ',' << edge.values(i).imag() << '\n';
}

void write_svg(std::ostream& os, const BoundarySymbol& sym) {
  // Unit-circle scale: 100 px per unit, origin at the centre.
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"-150 -150 300 300\">\n";
  os << "<circle cx=\"0\" cy=\"0\" r=\"100\" fill=\"none\" stroke=\"#ccc\"/>\n";
  const std::array<std::pair<const EdgeCurve*, const char*>, 4> edges{
      {{&sym.gamma1, "gamma1"}, {&sym.gamma2, "gamma2"}, {&sym.gamma3, "gamma3"},
       {&sym.gamma4, "gamma4"}}};
  os.precision(6);
  for (const auto& [edge, name] : edges) {
    os << "<polyline id=\"" << name << "\" fill=\"none\" stroke=\"black\" points=\"";
    for (Eigen::Index i = 0; i < edge->values.size(); ++i)
      os << (i ? " " : "") << 100.0 * edge->values(i).real() << ','
         << -100.0 * edge->values(i).imag();
    os << "\"/>\n";
  }
  os << "</svg>\n";
}

}  // namespace scatter
