#include "scatter/pipeline.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <future>
#include <iomanip>
#include <numbers>
#include <set>
#include <sstream>

namespace scatter {

namespace {

namespace pt = boost::property_tree;
namespace fs = std::filesystem;
using nlohmann::json;

constexpr double pi = std::numbers::pi;

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"potential", {"kind", "depth", "width", "c", "rho", "mu", "certificate_c", "certificate_rho"}},
      {"grid", {"x_max", "h", "k_min", "k_max", "mellin_points", "phase_points", "refine"}},
      {"tolerances",
       {"eps_factor", "unitarity", "consistency", "ode_residual", "growth", "levinson", "classical",
        "hs_stability", "identity", "decomposition", "factorization"}},
      {"tasks", {"run"}},
      {"output", {"dir", "dump_matrices"}}};
  return keys;
}

// Strips a trailing comment and surrounding quotes.
std::string clean(std::string v) {
  bool quoted = false;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] == '"') quoted = !quoted;
    if (!quoted && (v[i] == '#' || v[i] == ';')) {
      v.resize(i);
      break;
    }
  }
  auto trim = [](std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  trim(v);
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);
  return v;
}

std::string fmt(double v) {
  char buf[32];
  const auto end = std::to_chars(buf, buf + sizeof buf, v).ptr;
  return {buf, end};
}

std::string sha256_hex(const std::string& text) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i)
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return os.str();
}

class Section {
 public:
  Section(std::string name, const pt::ptree* tree) : name_(std::move(name)), tree_(tree) {}

  std::optional<std::string> raw(const std::string& key) const {
    if (!tree_) return std::nullopt;
    auto v = tree_->get_optional<std::string>(key);
    if (!v) return std::nullopt;
    return clean(*v);
  }

  double number(const std::string& key, double fallback) const {
    const auto v = raw(key);
    if (!v) return fallback;
    try {
      std::size_t used = 0;
      const double d = std::stod(*v, &used);
      if (used != v->size() || !std::isfinite(d)) throw std::invalid_argument("");
      return d;
    } catch (const std::exception&) {
      throw ConfigError(field(key), "expected a number, got '" + *v + "'");
    }
  }

  double positive(const std::string& key, double fallback) const {
    const double d = number(key, fallback);
    if (!(d > 0.0)) throw ConfigError(field(key), "must be positive, got " + fmt(d));
    return d;
  }

  Eigen::Index count(const std::string& key, Eigen::Index fallback) const {
    const double d = number(key, static_cast<double>(fallback));
    if (d < 2 || d != std::floor(d)) throw ConfigError(field(key), "must be an integer >= 2");
    return static_cast<Eigen::Index>(d);
  }

  bool flag(const std::string& key, bool fallback) const {
    const auto v = raw(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    throw ConfigError(field(key), "expected true or false, got '" + *v + "'");
  }

  std::string field(const std::string& key) const { return name_ + "." + key; }

 private:
  std::string name_;
  const pt::ptree* tree_;
};

Potential build_potential(const Section& s, std::map<std::string, std::string>& echo) {
  const auto kind = s.raw("kind");
  if (!kind) throw ConfigError("potential.kind", "missing (zero | square_well | power | exponential)");
  echo["kind"] = *kind;
  auto need = [&](const std::string& key) {
    if (!s.raw(key)) throw ConfigError(s.field(key), "required for kind " + *kind);
    echo[key] = *s.raw(key);
    return s.number(key, 0.0);
  };
  const std::map<std::string, std::set<std::string>> params{
      {"zero", {}}, {"square_well", {"depth", "width"}}, {"power", {"c", "rho"}},
      {"exponential", {"c", "mu"}}};
  const auto it = params.find(*kind);
  if (it == params.end())
    throw ConfigError("potential.kind", "unknown kind '" + *kind + "'");
  for (const char* key : {"depth", "width", "c", "rho", "mu"})
    if (s.raw(key) && !it->second.count(key))
      throw ConfigError(s.field(key), "not a parameter of kind " + *kind);

  Potential p = Potential::zero();
  try {
    if (*kind == "square_well") {
      const double d = need("depth"), a = need("width");
      p = Potential::square_well(d, a);
    } else if (*kind == "power") {
      const double c = need("c"), rho = need("rho");
      p = Potential::power(c, rho);
    } else if (*kind == "exponential") {
      const double c = need("c"), mu = need("mu");
      p = Potential::exponential(c, mu);
    }
  } catch (const PotentialError& e) {
    throw ConfigError("potential", e.what());
  }

  const auto oc = s.raw("certificate_c"), orho = s.raw("certificate_rho");
  if (!oc && !orho) return p;
  if (oc) echo["certificate_c"] = *oc;
  if (orho) echo["certificate_rho"] = *orho;
  DecayCertificate cert = p.certificate();
  try {
    cert = DecayCertificate(s.number("certificate_c", cert.c), s.number("certificate_rho", cert.rho));
  } catch (const PotentialError& e) {
    throw ConfigError("potential.certificate", e.what());
  }
  Potential q = Potential::custom([p](double x) { return p(x); }, cert, p.breakpoints(), p.support_end());
  if (q.certificate_ratio() > 1.0 + 1e-12)
    throw ConfigError("potential.certificate", "the override does not bound |v|");
  return q;
}

std::vector<Task> parse_tasks(std::string text) {
  std::replace_if(text.begin(), text.end(), [](char c) { return c == '[' || c == ']' || c == '"'; }, ' ');
  std::set<Task> picked;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    item = clean(item);
    if (item.empty()) continue;
    if (item == "all") {
      picked.insert(all_tasks().begin(), all_tasks().end());
      continue;
    }
    const auto it = std::find_if(all_tasks().begin(), all_tasks().end(),
                                 [&](Task t) { return to_string(t) == item; });
    if (it == all_tasks().end()) throw ConfigError("tasks.run", "unknown task '" + item + "'");
    picked.insert(*it);
  }
  if (picked.empty()) throw ConfigError("tasks.run", "task list is empty");
  return {picked.begin(), picked.end()};
}

// Canonical "section.key = value" lines of the effective config and their hash.
void seal(RunConfig& cfg) {
  cfg.canonical.clear();
  std::vector<std::string> lines;
  for (const auto& [k, v] : cfg.potential_block) lines.push_back("potential." + k + " = " + v);
  lines.push_back("grid.x_max = " + fmt(cfg.grid.x_max()));
  lines.push_back("grid.h = " + fmt(cfg.grid.h));
  lines.push_back("grid.k_min = " + fmt(cfg.k_min));
  lines.push_back("grid.k_max = " + fmt(cfg.k_max));
  lines.push_back("grid.mellin_points = " + std::to_string(cfg.mellin_points));
  lines.push_back("grid.phase_points = " + std::to_string(cfg.phase_points));
  lines.push_back(std::string("grid.refine = ") + (cfg.refine ? "true" : "false"));
  const Tolerances& tol = cfg.tol;
  const std::pair<const char*, double> tols[] = {
      {"eps_factor", tol.eps_factor}, {"unitarity", tol.unitarity},
      {"consistency", tol.consistency}, {"ode_residual", tol.ode_residual},
      {"growth", tol.growth},         {"levinson", tol.levinson},
      {"classical", tol.classical},   {"hs_stability", tol.hs_stability},
      {"identity", tol.identity},     {"decomposition", tol.decomposition},
      {"factorization", tol.factorization}};
  for (const auto& [k, v] : tols) lines.push_back(std::string("tolerances.") + k + " = " + fmt(v));
  std::string names;
  for (Task task : cfg.tasks) names += (names.empty() ? "" : ", ") + to_string(task);
  lines.push_back("tasks.run = " + names);
  lines.push_back(std::string("output.dump_matrices = ") + (cfg.dump_matrices ? "true" : "false"));
  std::sort(lines.begin(), lines.end());
  for (const auto& l : lines) cfg.canonical += l + "\n";
  cfg.hash = sha256_hex(cfg.canonical);
}

// --- artifacts ---------------------------------------------------------------

class Artifacts {
 public:
  Artifacts(fs::path dir, std::string hash, json potential)
      : dir_(std::move(dir)), hash_(std::move(hash)), potential_(std::move(potential)) {}

  template <class Fn>
  void csv(TaskReport& r, const std::string& name, Fn&& body) const {
    std::ostringstream os;
    os << "# config_hash=" << hash_ << " potential=" << potential_.dump() << '\n';
    body(os);
    write(r, name, os.str());
  }

  void json_file(TaskReport& r, const std::string& name, json j) const { json_file(&r, name, std::move(j)); }

  void json_file(TaskReport* r, const std::string& name, json j) const {
    j["config_hash"] = hash_;
    j["potential"] = potential_;
    write(r, name, j.dump(2) + "\n");
  }

  template <class Fn>
  void svg(TaskReport& r, const std::string& name, Fn&& body) const {
    std::ostringstream os;
    body(os);
    os << "<!-- config_hash=" << hash_ << " -->\n";
    write(r, name, os.str());
  }

 private:
  void write(TaskReport& r, const std::string& name, const std::string& text) const {
    write(&r, name, text);
  }

  void write(TaskReport* r, const std::string& name, const std::string& text) const {
    const fs::path path = dir_ / name;
    std::ofstream f(path, std::ios::binary);
    f << text;
    f.close();
    if (!f) throw std::runtime_error("cannot write " + path.string());
    if (r) r->artifacts.push_back(name);
  }

  fs::path dir_;
  std::string hash_;
  json potential_;
};

void check(TaskReport& r, std::string name, double measured, double tolerance, bool gating = true) {
  r.checks.push_back({std::move(name), measured, tolerance, measured <= tolerance, gating});
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// --- tasks -------------------------------------------------------------------

void phase_task(const RunConfig& cfg, const Artifacts& out, TaskReport& r) {
  const Potential& p = cfg.potential;
  const double k_hi = std::max(cfg.k_max, high_energy_k(p, cfg.k_max));
  const ScatteringData sd = smatrix_and_phase(p, log_k_grid(cfg.k_min, k_hi, cfg.phase_points));
  out.csv(r, "phase.csv", [&](std::ostream& os) { write_csv(os, sd); });

  check(r, "unitarity", sd.max_unitarity_error, cfg.tol.unitarity);
  check(r, "regular_by_jost", consistency_regular_by_jost(p, {0.1, 0.5, 1.0, 2.0}, {0.5, 1.0, 4.0}),
        cfg.tol.consistency);
  double residual = 0.0;
  for (double k : {0.5, 2.0, 10.0}) residual = std::max(residual, solve_jost(p, k).residual);
  check(r, "ode_residual", residual, cfg.tol.ode_residual);
  const WaveSolution theta = solve_jost(p, 1.0);
  out.csv(r, "jost_k1.csv", [&](std::ostream& os) { write_csv(os, theta, p); });

  const PKernelTable est =
      p_kernel_and_estimates(p, {0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0}, {0.0, 0.5, 1.0, 2.0, 5.0});
  check(r, "estimate1_growth", est.c1_growth, cfg.tol.growth);
  out.csv(r, "p_kernel.csv", [&](std::ostream& os) {
    os << "x,k,re,im,abs_tail,first_moment\n" << std::setprecision(17);
    for (const auto& s : est.samples)
      os << s.x << ',' << s.k << ',' << s.p.real() << ',' << s.p.imag() << ',' << s.abs_tail << ','
         << s.first_moment << '\n';
  });

  r.results = {{"k_range", {sd.k(0), sd.k(sd.size() - 1)}},
               {"points", sd.size()},
               {"w0", {sd.w0.real(), sd.w0.imag()}},
               {"eta0", sd.eta0},
               {"eta_at_k_max", sd.eta(sd.size() - 1)},
               {"resonance", sd.resonance},
               {"delta", sd.delta},
               {"estimates", {{"k0", est.k0}, {"c1", est.c1}, {"c2", est.c2}, {"c1_growth", est.c1_growth}}}};
}

void spectrum_task(const RunConfig& cfg, const Artifacts& out, TaskReport& r, Spectrum& spec) {
  const ResonanceInfo res = resonance_probe(cfg.potential, cfg.k_min);
  spec = bound_states(cfg.potential);
  double residual = 0.0;
  int degenerate = 0;
  for (const auto& b : spec.states) {
    residual = std::max(residual, b.residual);
    degenerate += b.degenerate ? 1 : 0;
  }
  check(r, "bound_state_residual", residual, cfg.tol.ode_residual);
  check(r, "degenerate_roots", degenerate, 0.0);
  r.results = spectrum_json(spec, res);
  out.json_file(r, "spectrum.json", r.results);
}

void levinson_task(const RunConfig& cfg, const Artifacts& out, TaskReport& r, const Spectrum& spec) {
  const BoundarySymbol sym = boundary_symbol(cfg.potential);
  const WindingReport wr = levinson_verify(sym, spec);
  check(r, "winding_total", std::abs(wr.total - wr.expected_index), cfg.tol.levinson);
  check(r, "classical_levinson", std::abs(wr.classical_residual), cfg.tol.classical);
  const std::pair<const char*, const EdgeCurve*> edges[] = {
      {"gamma1.csv", &sym.gamma1}, {"gamma2.csv", &sym.gamma2}, {"gamma3.csv", &sym.gamma3},
      {"gamma4.csv", &sym.gamma4}};
  for (const auto& [name, edge] : edges)
    out.csv(r, name, [&](std::ostream& os) { write_csv(os, *edge); });
  out.svg(r, "symbol.svg", [&](std::ostream& os) { write_svg(os, sym); });
  r.results = to_json(wr);
  r.results["corner_gaps"] = sym.corner_gaps;
  r.results["eta_span"] = sym.eta_span;
  out.json_file(r, "winding.json", r.results);
}

void waveop_task(const RunConfig& cfg, const Artifacts& out, TaskReport& r, const Spectrum& spec,
                 WaveOperatorStudy& study) {
  StudyOptions so;
  so.refine = cfg.refine;
  so.n_beta = cfg.mellin_points;
  study = wave_operator_study(cfg.potential, cfg.grid, so);
  const double gate = cfg.tol.eps_factor * study.eps_disc;
  const auto n = static_cast<double>(spec.count());

  check(r, "wstar_w", study.isometry.wstar_w, gate);
  check(r, "phi_mellin_vs_transforms", study.phi_mellin_vs_transforms, gate);
  // The refined grid reaches 1.5 X and resolves shallow bound states the
  // default box cuts off; it decides when present.
  check(r, "rank_defect_minus_N", std::abs(study.isometry.rank_defect - n), 0.5,
        !study.refined_isometry);
  if (study.refined_isometry)
    check(r, "refined_rank_defect_minus_N", std::abs(study.refined_isometry->rank_defect - n), 0.5);
  if (cfg.refine) check(r, "hs_relative_change", study.hs.relative_change, cfg.tol.hs_stability);

  r.results = to_json(study);
  out.json_file(r, "waveop.json", r.results);
  out.json_file(r, "hs_report.json", to_json(study.hs));
  out.csv(r, "singular_values.csv",
          [&](std::ostream& os) { write_singular_values_csv(os, study.hs.singular_values); });
  if (cfg.dump_matrices) {
    out.csv(r, "k_operator.csv", [&](std::ostream& os) { write_csv(os, study.remainder.k); });
    out.csv(r, "w_minus.csv", [&](std::ostream& os) { write_csv(os, study.remainder.w_minus); });
  }
}

void kernels_task(const RunConfig& cfg, const Artifacts& out, TaskReport& r,
                  const KernelContext& ctx) {
  const IdentityReport ids = identity_checks(ctx, {{0.0, 1.0}, {0.5, 2.0}, {1.0, 0.5}}, std::nullopt,
                                             cfg.tol.identity);
  double worst = 0.0;
  for (const auto& res : ids.results) worst = std::max(worst, res.residual);
  check(r, "identities", worst, cfg.tol.identity);
  out.json_file(r, "identities.json", to_json(ids));

  const auto xs = vec({0.0, 0.5, 1.0, 2.0});
  const auto ks = vec({0.5, 1.0, 2.0, 4.0});
  const PnKernel p1 = pN_kernel(ctx, 1, xs, ks);
  check(r, "decomposition_N1", p1.decomposition_residual, cfg.tol.decomposition);
  out.csv(r, "p1.csv", [&](std::ostream& os) { write_csv(os, p1.kernel); });

  Eigen::VectorXd panel = Eigen::VectorXd::LinSpaced(21, 0.0, 5.0);
  const auto panel_k = vec({0.5, 1.0, 2.0, 4.0, 8.0});
  const FKernels f = f_kernels(ctx, panel, panel_k);
  check(r, "f2_form_gap", f.max_form_gap, cfg.tol.decomposition);
  out.csv(r, "f1.csv", [&](std::ostream& os) { write_csv(os, f.f1); });
  out.csv(r, "f2.csv", [&](std::ostream& os) { write_csv(os, f.f2); });
  const R1Result r1 = r1_kernel(ctx, panel, panel_k);
  out.csv(r, "r1.csv", [&](std::ostream& os) { write_csv(os, r1.kernel); });

  const FactorizationReport fac = u_bracket_factorization(ctx, {ctx.vv()}, xs, ks);
  check(r, "u_factorization_n1", fac.max_residual, cfg.tol.factorization);
  out.json_file(r, "factorization.json", to_json(fac));

  const double rho = cfg.potential.certificate().rho;
  const auto est_x = vec({0.0, 1.0, 3.0, 7.0, 15.0, 30.0});
  const auto est_k = vec({0.3, 1.0, 3.0, 10.0});
  const EnvelopeFit k2 = estimate_k2(ctx, rho, est_x, est_k);
  const EnvelopeFit messy = estimate_messy(ctx, rho, est_k);
  check(r, "estimate_k2_growth", k2.growth, cfg.tol.growth);
  check(r, "estimate_messy_growth", messy.growth, cfg.tol.growth);

  json slope = nullptr;
  if (cfg.potential.kind() == PotentialKind::power) {
    const PnKernel tail = pN_kernel(ctx, 1, vec({5.0, 30.0}), vec({3.0}));
    // Decay at least 90% of the predicted rate.
    check(r, "p1_decay_slope", tail.fitted_slope, 0.9 * tail.predicted_slope);
    slope = to_json(tail);
  }

  r.results = {{"identities", to_json(ids)},
               {"p1", to_json(p1)},
               {"f2_form_gap", f.max_form_gap},
               {"r1_truncation_bound", r1.truncation_bound},
               {"factorization", to_json(fac)},
               {"estimate_k2", to_json(k2)},
               {"estimate_messy", to_json(messy)},
               {"p1_tail", slope},
               {"horizon", ctx.horizon()}};
}

// Kernel-built F_2 Fs against the operator-built K.
void cross_check(const RunConfig& cfg, const Artifacts& out, TaskReport& r, const KernelContext& ctx,
                 const WaveOperatorStudy& study) {
  const Transforms t = build_transforms(cfg.grid);
  const auto probes = band_limited_probes(cfg.grid);
  const double gate = cfg.tol.eps_factor * study.eps_disc;
  const GridOperator kk = kernel_remainder(ctx, t);
  const RemainderComparison cmp = compare_remainders(kk, study.remainder.k, probes);
  const OperatorDecomposition od = operator_decomposition(ctx, t, 1);
  check(r, "kernel_vs_operator_probe", cmp.probe_gap, gate);
  // The grid's F_1 Fs and phi(A)(S - P) differ off the band; reported only.
  check(r, "kernel_vs_operator_frobenius", cmp.frobenius_gap, gate, false);
  check(r, "operator_decomposition_N1", od.residual, gate);
  json j = {{"frobenius_gap", cmp.frobenius_gap},
            {"probe_gap", cmp.probe_gap},
            {"kernel_frobenius", cmp.kernel_frobenius},
            {"operator_frobenius", cmp.operator_frobenius},
            {"decomposition_residual", od.residual},
            {"decomposition_reference", od.reference},
            {"eps_disc", study.eps_disc}};
  r.results["cross_module"] = j;
  out.json_file(r, "cross_module.json", j);
}

void finish(TaskReport& r) {
  if (r.status == TaskStatus::error) return;
  r.status = std::all_of(r.checks.begin(), r.checks.end(),
                         [](const Check& c) { return c.pass || !c.gating; })
                 ? TaskStatus::pass
                 : TaskStatus::fail;
}

template <class Fn>
void guarded(TaskReport& r, Fn&& body) {
  const auto start = std::chrono::steady_clock::now();
  try {
    body();
  } catch (const std::exception& e) {
    r.status = TaskStatus::error;
    r.error = e.what();
  }
  finish(r);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

std::string to_string(Task t) {
  switch (t) {
    case Task::phase: return "phase";
    case Task::spectrum: return "spectrum";
    case Task::levinson: return "levinson";
    case Task::waveop: return "waveop";
    case Task::kernels: return "kernels";
  }
  return "?";
}

const std::vector<Task>& all_tasks() {
  static const std::vector<Task> t{Task::phase, Task::spectrum, Task::levinson, Task::waveop,
                                   Task::kernels};
  return t;
}

std::string to_string(TaskStatus s) {
  switch (s) {
    case TaskStatus::pass: return "pass";
    case TaskStatus::fail: return "fail";
    case TaskStatus::skipped: return "skipped";
    case TaskStatus::error: return "error";
  }
  return "?";
}

RunConfig load_config(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("line " + std::to_string(e.line()), e.message());
  }
  for (const auto& [name, sec] : tree) {
    const auto it = known_keys().find(name);
    if (it == known_keys().end()) {
      if (sec.empty()) throw ConfigError(name, "key outside any section");
      throw ConfigError(name, "unknown section");
    }
    for (const auto& [key, value] : sec)
      if (!it->second.count(key)) throw ConfigError(name + "." + key, "unknown key");
  }
  auto section = [&](const std::string& name) {
    const auto child = tree.get_child_optional(name);
    return Section(name, child ? &*child : nullptr);
  };
  if (!tree.get_child_optional("potential")) throw ConfigError("potential", "section missing");
  if (!tree.get_child_optional("tasks")) throw ConfigError("tasks", "section missing");

  RunConfig cfg;
  cfg.potential = build_potential(section("potential"), cfg.potential_block);

  const Section g = section("grid");
  const double x_max = g.positive("x_max", 40.0), h = g.positive("h", 0.02);
  cfg.k_min = g.positive("k_min", 0.01);
  cfg.k_max = g.positive("k_max", 39.0);
  cfg.mellin_points = g.count("mellin_points", 4096);
  cfg.phase_points = g.count("phase_points", 400);
  cfg.refine = g.flag("refine", true);
  const double dk = 2.0 * cfg.k_min;
  auto integral = [](double r) { return std::abs(r - std::round(r)) <= 1e-9 * r; };
  if (!(h < x_max) || !integral(x_max / h)) throw ConfigError("grid.h", "x_max / h must be an integer >= 2");
  if (!(dk < cfg.k_max) || !integral(cfg.k_max / dk))
    throw ConfigError("grid.k_min", "k_max / (2 k_min) must be an integer >= 2");
  if (!(cfg.k_max * h < pi / 4))
    throw ConfigError("grid.k_max", "k_max h = " + fmt(cfg.k_max * h) + " must be below pi/4");
  if (!(dk < pi / x_max))
    throw ConfigError("grid.k_min", "2 k_min = " + fmt(dk) + " must be below pi / x_max = " + fmt(pi / x_max));
  cfg.grid = OperatorGrid::uniform(x_max, h, cfg.k_max, dk);
  try {
    band_limited_probes(cfg.grid);
  } catch (const GridError& e) {
    throw ConfigError("grid.x_max", e.what());
  }

  const Section t = section("tolerances");
  Tolerances& tol = cfg.tol;
  tol.eps_factor = t.positive("eps_factor", tol.eps_factor);
  tol.unitarity = t.positive("unitarity", tol.unitarity);
  tol.consistency = t.positive("consistency", tol.consistency);
  tol.ode_residual = t.positive("ode_residual", tol.ode_residual);
  tol.growth = t.positive("growth", tol.growth);
  tol.levinson = t.positive("levinson", tol.levinson);
  tol.classical = t.positive("classical", tol.classical);
  tol.hs_stability = t.positive("hs_stability", tol.hs_stability);
  tol.identity = t.positive("identity", tol.identity);
  tol.decomposition = t.positive("decomposition", tol.decomposition);
  tol.factorization = t.positive("factorization", tol.factorization);

  const auto run = section("tasks").raw("run");
  if (!run) throw ConfigError("tasks.run", "missing; give a list such as all or phase, levinson");
  cfg.tasks = parse_tasks(*run);

  const Section o = section("output");
  if (auto dir = o.raw("dir")) {
    if (dir->empty()) throw ConfigError("output.dir", "empty path");
    cfg.out_dir = *dir;
  }
  cfg.dump_matrices = o.flag("dump_matrices", false);

  seal(cfg);
  return cfg;
}

void set_tasks(RunConfig& cfg, const std::vector<std::string>& names) {
  std::string list;
  for (const auto& n : names) list += n + ",";
  cfg.tasks = parse_tasks(list);
  seal(cfg);
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path.string());
  return load_config(in);
}

bool RunReport::any_failure() const {
  return std::any_of(tasks.begin(), tasks.end(),
                     [](const TaskReport& t) { return t.status == TaskStatus::fail; });
}

bool RunReport::any_breakdown() const {
  return std::any_of(tasks.begin(), tasks.end(),
                     [](const TaskReport& t) { return t.status == TaskStatus::error; });
}

int RunReport::exit_code() const {
  if (any_breakdown()) return 4;
  if (any_failure()) return 2;
  return 0;
}

const TaskReport* RunReport::find(Task t) const {
  for (const auto& r : tasks)
    if (r.task == t) return &r;
  return nullptr;
}

RunReport run_pipeline(const RunConfig& cfg, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir))
    throw std::runtime_error("output directory " + out_dir.string() + " is not writable");

  RunReport report;
  report.config_hash = cfg.hash;
  report.canonical_config = cfg.canonical;
  report.potential_block = cfg.potential_block;
  const Artifacts out(out_dir, cfg.hash, json(cfg.potential_block));

  auto requested = [&](Task t) {
    return std::find(cfg.tasks.begin(), cfg.tasks.end(), t) != cfg.tasks.end();
  };
  const bool need_spectrum =
      requested(Task::spectrum) || requested(Task::levinson) || requested(Task::waveop);
  std::map<Task, TaskReport> reports;
  for (Task t : all_tasks()) {
    if (!requested(t) && !(t == Task::spectrum && need_spectrum)) continue;
    reports[t].task = t;
    reports[t].requested = requested(t);
  }

  if (reports.count(Task::phase))
    guarded(reports[Task::phase], [&] { phase_task(cfg, out, reports[Task::phase]); });

  Spectrum spec;
  bool spectrum_ok = false;
  if (reports.count(Task::spectrum)) {
    guarded(reports[Task::spectrum], [&] { spectrum_task(cfg, out, reports[Task::spectrum], spec); });
    spectrum_ok = reports[Task::spectrum].status != TaskStatus::error;
  }
  auto blocked = [&](TaskReport& r) {
    r.status = TaskStatus::skipped;
    r.error = "spectrum task broke down";
  };

  // levinson, waveop and kernels share no data; run them side by side.
  WaveOperatorStudy study;
  std::optional<KernelContext> ctx;
  std::vector<std::future<void>> jobs;
  if (reports.count(Task::levinson)) {
    TaskReport& r = reports[Task::levinson];
    if (!spectrum_ok)
      blocked(r);
    else
      jobs.push_back(std::async(std::launch::async, [&] {
        guarded(r, [&] { levinson_task(cfg, out, r, spec); });
      }));
  }
  if (reports.count(Task::waveop)) {
    TaskReport& r = reports[Task::waveop];
    if (!spectrum_ok)
      blocked(r);
    else
      jobs.push_back(std::async(std::launch::async, [&] {
        guarded(r, [&] { waveop_task(cfg, out, r, spec, study); });
      }));
  }
  if (reports.count(Task::kernels)) {
    TaskReport& r = reports[Task::kernels];
    jobs.push_back(std::async(std::launch::async, [&] {
      guarded(r, [&] {
        ctx.emplace(cfg.potential);
        kernels_task(cfg, out, r, *ctx);
      });
    }));
  }
  for (auto& j : jobs) j.get();

  if (reports.count(Task::kernels) && reports.count(Task::waveop) && ctx &&
      reports[Task::kernels].status != TaskStatus::error &&
      reports[Task::waveop].status != TaskStatus::error &&
      reports[Task::waveop].status != TaskStatus::skipped) {
    TaskReport& r = reports[Task::kernels];
    const double before = r.seconds;
    guarded(r, [&] { cross_check(cfg, out, r, *ctx, study); });
    r.seconds += before;
  }
  if (reports.count(Task::waveop) && reports[Task::waveop].status != TaskStatus::error &&
      reports[Task::waveop].status != TaskStatus::skipped)
    report.eps_disc = study.eps_disc;

  for (Task t : all_tasks())
    if (reports.count(t)) report.tasks.push_back(std::move(reports[t]));
  json j = to_json(report);
  j.erase("metadata");
  out.json_file(nullptr, "report.json", j);
  return report;
}

json to_json(const RunReport& r) {
  json tasks = json::object();
  json timing = json::object();
  for (const auto& t : r.tasks) {
    json checks = json::array();
    for (const auto& c : t.checks)
      checks.push_back({{"name", c.name},
                        {"measured", c.measured},
                        {"tolerance", c.tolerance},
                        {"pass", c.pass},
                        {"gating", c.gating}});
    json entry = {{"status", to_string(t.status)},
                  {"requested", t.requested},
                  {"checks", checks},
                  {"results", t.results},
                  {"artifacts", t.artifacts}};
    if (!t.error.empty()) entry["error"] = t.error;
    tasks[to_string(t.task)] = entry;
    timing[to_string(t.task)] = t.seconds;
  }
  return {{"config_hash", r.config_hash},
          {"config", r.canonical_config},
          {"potential", r.potential_block},
          {"eps_disc", r.eps_disc ? json(*r.eps_disc) : json()},
          {"tasks", tasks},
          {"exit_code", r.exit_code()},
          {"metadata", {{"seconds", timing}}}};
}

void write_text(std::ostream& os, const RunReport& r) {
  os << "config " << r.config_hash.substr(0, 16) << '\n';
  if (r.eps_disc) os << "eps_disc " << std::setprecision(3) << std::scientific << *r.eps_disc << '\n';
  os << std::defaultfloat;
  for (const auto& t : r.tasks) {
    os << std::left << std::setw(9) << to_string(t.task) << ' ' << to_string(t.status)
       << (t.requested ? "" : " (prerequisite)") << '\n';
    if (!t.error.empty()) os << "  error: " << t.error << '\n';
    for (const auto& c : t.checks)
      os << "  " << (c.pass ? "PASS" : (c.gating ? "FAIL" : "info")) << "  " << std::setw(30) << c.name
         << std::setprecision(3) << std::scientific << c.measured << " <= " << c.tolerance
         << std::defaultfloat << '\n';
    if (t.task == Task::levinson && t.status != TaskStatus::error && t.results.contains("wn1")) {
      const char* names[] = {"wn(Γ₁)", "wn(Γ₂)", "wn(Γ₃)", "wn(Γ₄)"};
      const char* keys[] = {"wn1", "wn2", "wn3", "wn4"};
      for (int i = 0; i < 4; ++i)
        os << "  " << names[i] << " = " << std::fixed << std::setprecision(6)
           << t.results[keys[i]].get<double>() << std::defaultfloat << '\n';
      os << "  total = " << std::fixed << std::setprecision(6) << t.results["total"].get<double>()
         << ", N = " << t.results["expected_index"].get<int>() << std::defaultfloat << '\n';
    }
  }
  os << "exit " << r.exit_code() << '\n';
}

}  // namespace scatter
