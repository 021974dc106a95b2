#include "scatter/scattering.hpp"

#include "scatter/parallel.hpp"

#include <boost/math/tools/toms748_solve.hpp>

#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>

namespace scatter {

namespace {

constexpr double pi = std::numbers::pi;

// Principal argument of a / b.
double arg_ratio(cplx a, cplx b) { return std::arg(a / b); }

}  // namespace

cplx jost_function(const Potential& p, cplx zeta, const SolverOptions& opt) {
  return solve_jost(p, zeta, opt).values(0);
}

Eigen::VectorXd log_k_grid(double k_min, double k_max, Eigen::Index n) {
  if (!(k_min > 0.0) || !(k_max > k_min) || n < 2)
    throw std::invalid_argument("log_k_grid: need 0 < k_min < k_max and n >= 2");
  Eigen::VectorXd k(n);
  const double a = std::log(k_min), b = std::log(k_max);
  for (Eigen::Index i = 0; i < n; ++i)
    k(i) = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
  k(0) = k_min;
  k(n - 1) = k_max;
  return k;
}

double high_energy_k(const Potential& p, double k_start, const SolverOptions& opt) {
  double k = k_start;
  for (int j = 0; j < 16; ++j, k *= 2.0) {
    const cplx w = jost_function(p, k, opt);
    if (std::abs(w - 1.0) < 0.1 && std::abs(std::arg(w)) < pi / 4) return k;
  }
  throw PhaseError("no high-energy regime found below 2^16 k_start", k_start, k);
}

ResonanceInfo resonance_probe(const Potential& p, double k_min, const SolverOptions& opt) {
  ResonanceInfo r;
  r.w0 = jost_function(p, 0.0, opt);
  const Eigen::VectorXd ks = log_k_grid(k_min, 10.0 * k_min, 10);
  std::vector<double> mags(static_cast<std::size_t>(ks.size()));
  parallel_for(mags.size(), [&](std::size_t i) {
    mags[i] = std::abs(jost_function(p, ks(static_cast<Eigen::Index>(i)), opt));
  });
  std::sort(mags.begin(), mags.end());
  const double median = 0.5 * (mags[4] + mags[5]);
  r.tol_res = 1e-6 * median;
  r.resonance = std::abs(r.w0) < r.tol_res;
  r.delta = r.resonance ? 0.5 : 0.0;
  return r;
}

ScatteringData smatrix_and_phase(const Potential& p, const Eigen::VectorXd& k_grid,
                                 const SolverOptions& opt) {
  const Eigen::Index n = k_grid.size();
  if (n < 2) throw std::invalid_argument("smatrix_and_phase: need at least two k values");
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(k_grid(i) > 0.0) || (i > 0 && !(k_grid(i) > k_grid(i - 1))))
      throw std::invalid_argument("smatrix_and_phase: k grid must be positive and increasing");

  ScatteringData sd;
  sd.k = k_grid;
  sd.w.resize(n);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    const auto j = static_cast<Eigen::Index>(i);
    sd.w(j) = jost_function(p, k_grid(j), opt);
  });
  for (Eigen::Index i = 0; i < n; ++i)
    if (std::abs(sd.w(i)) == 0.0 || !std::isfinite(std::abs(sd.w(i))))
      throw PhaseError("w(k) vanishes on the k grid", k_grid(i), k_grid(i));

  const cplx w_top = sd.w(n - 1);
  if (std::abs(w_top - 1.0) >= 0.1 || std::abs(std::arg(w_top)) >= pi / 4) {
    std::ostringstream msg;
    msg << "k_max = " << k_grid(n - 1) << " is not in the high-energy regime (|w - 1| = "
        << std::abs(w_top - 1.0) << ")";
    throw PhaseError(msg.str(), k_grid(n - 1), k_grid(n - 1));
  }

  sd.amplitude = sd.w.cwiseAbs();
  sd.eta.resize(n);
  sd.eta(n - 1) = std::arg(w_top);
  for (Eigen::Index i = n - 2; i >= 0; --i) {
    const double step = arg_ratio(sd.w(i), sd.w(i + 1));
    if (std::abs(step) >= pi / 2) {
      std::ostringstream msg;
      msg << "phase step " << step << " between k = " << k_grid(i) << " and " << k_grid(i + 1)
          << "; refine the k grid";
      throw PhaseError(msg.str(), k_grid(i), k_grid(i + 1));
    }
    sd.eta(i) = sd.eta(i + 1) + step;
  }
  sd.s.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    sd.s(i) = std::conj(sd.w(i)) / sd.w(i);
    sd.max_unitarity_error = std::max(sd.max_unitarity_error, std::abs(std::abs(sd.s(i)) - 1.0));
  }

  const ResonanceInfo res = resonance_probe(p, k_grid(0), opt);
  sd.w0 = res.w0;
  sd.resonance = res.resonance;
  sd.delta = res.delta;
  sd.tol_res = res.tol_res;

  const double k_lo = k_grid(0);
  if (!sd.resonance) {
    const double step = arg_ratio(sd.w0, sd.w(0));
    if (std::abs(step) >= pi / 2)
      throw PhaseError("phase step to k = 0 too large; lower k_min", 0.0, k_lo);
    sd.eta0 = sd.eta(0) + step;
    sd.eta0_extrapolated = sd.eta0;
    sd.eta0_uncertain = std::abs(sd.w0) < 1e3 * sd.tol_res;
  } else {
    // w(k) = w1 k + O(k^2): Richardson estimate of w1 from k_lo and k_lo / 2.
    const cplx g1 = sd.w(0) / k_lo;
    const cplx g2 = jost_function(p, 0.5 * k_lo, opt) / (0.5 * k_lo);
    const cplx w1 = 2.0 * g2 - g1;
    sd.eta0_extrapolated = sd.eta(0) + arg_ratio(w1, sd.w(0));
    const double half = pi / 2;
    sd.eta0 = half * (2.0 * std::round((sd.eta0_extrapolated / half - 1.0) / 2.0) + 1.0);
    sd.eta0_uncertain = true;
  }
  return sd;
}

double phase_at(const ScatteringData& sd, const Potential& p, double k, const SolverOptions& opt) {
  if (!(k > 0.0)) throw std::invalid_argument("phase_at: k must be positive");
  const cplx w = jost_function(p, k, opt);
  const double* begin = sd.k.data();
  const double* end = begin + sd.k.size();
  Eigen::Index j = std::lower_bound(begin, end, k) - begin;
  if (j == sd.k.size()) --j;
  if (j > 0 && std::abs(sd.k(j - 1) - k) < std::abs(sd.k(j) - k)) --j;
  return sd.eta(j) + arg_ratio(w, sd.w(j));
}

Spectrum bound_states(const Potential& p, double kappa_max, const SolverOptions& opt) {
  Spectrum spec;
  if (kappa_max <= 0.0) kappa_max = 1.05 * std::sqrt(p.sup_abs()) + 0.05;
  if (kappa_max * kappa_max <= p.sup_abs())
    throw std::invalid_argument("bound_states: kappa_max must exceed sqrt(sup |v|)");
  spec.kappa_max = kappa_max;
  if (p.is_zero()) return spec;

  const double X = jost_x_max(p, opt);
  const double step = std::min(0.01, 1.0 / (4.0 * X));
  spec.scan_step = step;
  const auto count = static_cast<std::size_t>(std::ceil(kappa_max / step));
  std::vector<double> kap(count + 1), val(count + 1);
  parallel_for(count + 1, [&](std::size_t j) {
    kap[j] = std::min(kappa_max, step * static_cast<double>(j));
    val[j] = jost_function(p, cplx(0.0, kap[j]), opt).real();
  });
  // A zero-energy resonance makes w(0) = 0, which is not a bound state.
  const ResonanceInfo res = resonance_probe(p, 0.01, opt);
  const std::size_t first = res.resonance ? 1 : 0;

  const auto f = [&](double kappa) { return jost_function(p, cplx(0.0, kappa), opt).real(); };
  for (std::size_t j = first; j < count; ++j) {
    if (val[j] == 0.0 && j > 0) {
      BoundState b;
      b.kappa = kap[j];
      spec.states.push_back(b);
      continue;
    }
    if ((val[j] > 0.0) == (val[j + 1] > 0.0) || val[j + 1] == 0.0) continue;
    boost::uintmax_t iters = 200;
    const auto [lo, hi] = boost::math::tools::toms748_solve(
        f, kap[j], kap[j + 1], val[j], val[j + 1],
        boost::math::tools::eps_tolerance<double>(48), iters);
    BoundState b;
    b.kappa = 0.5 * (lo + hi);
    spec.states.push_back(b);
  }

  for (auto& b : spec.states) {
    b.energy = -b.kappa * b.kappa;
    const double h = 1e-5 * std::max(1.0, b.kappa);
    b.derivative = (f(b.kappa + h) - f(b.kappa - h)) / (2.0 * h);
    b.degenerate = std::abs(b.derivative) < 1e-8;
    const WaveSolution th = solve_jost(p, cplx(0.0, b.kappa), opt);
    const Eigen::VectorXd mod2 = th.values.cwiseAbs2();
    const double Xg = th.x_max();
    const double tail = mod2(mod2.size() - 1) / (2.0 * b.kappa);
    b.norm = std::sqrt(th.grid->weights().dot(mod2) + tail);
    b.residual = th.residual;
    const double x1 = p.support_end() ? *p.support_end() : 0.5 * Xg;
    const double x2 = p.support_end() ? x1 + 1.0 : Xg;
    b.decay_rate =
        -(std::log(std::abs(th.value_at(x2))) - std::log(std::abs(th.value_at(x1)))) / (x2 - x1);
  }
  std::sort(spec.states.begin(), spec.states.end(),
            [](const BoundState& a, const BoundState& b) { return a.kappa > b.kappa; });
  return spec;
}

double consistency_regular_by_jost(const Potential& p, const std::vector<double>& x_list,
                                   const std::vector<double>& k_list, const SolverOptions& opt) {
  const double x_end = x_list.empty() ? 1.0 : *std::max_element(x_list.begin(), x_list.end());
  const cplx I(0.0, 1.0);
  double worst = 0.0;
  for (double k : k_list) {
    if (!(k > 0.0)) throw std::invalid_argument("consistency_regular_by_jost: k must be positive");
    const WaveSolution phi = solve_regular(p, k, std::max(x_end, 1.0), opt);
    const WaveSolution tp = solve_jost(p, k, opt), tm = solve_jost(p, -k, opt);
    const cplx wp = tp.values(0), wm = tm.values(0);
    for (double x : x_list) {
      const cplx lhs = phi.value_at(x);
      const cplx rhs = (tp.value_at(x) * wm - tm.value_at(x) * wp) / (2.0 * I * k);
      worst = std::max(worst, std::abs(lhs - rhs) / (1.0 + std::abs(lhs)));
    }
  }
  return worst;
}

void write_csv(std::ostream& os, const ScatteringData& sd) {
  os << "k,re_w,im_w,amplitude,eta,re_s,im_s\n";
  os.precision(17);
  for (Eigen::Index i = 0; i < sd.size(); ++i)
    os << sd.k(i) << ',' << sd.w(i).real() << ',' << sd.w(i).imag() << ',' << sd.amplitude(i)
       << ',' << sd.eta(i) << ',' << sd.s(i).real() << ',' << sd.s(i).imag() << '\n';
}

nlohmann::json spectrum_json(const Spectrum& spec, const ResonanceInfo& res) {
  nlohmann::json j;
  std::vector<double> kappa, energies;
  for (const auto& b : spec.states) {
    kappa.push_back(b.kappa);
    energies.push_back(b.energy);
  }
  j["kappa"] = kappa;
  j["energies"] = energies;
  j["N"] = spec.count();
  j["resonance"] = res.resonance;
  j["delta"] = res.delta;
  return j;
}

}  // namespace scatter
