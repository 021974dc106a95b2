#include "scatter/potentials.hpp"

#include <cmath>
#include <sstream>

namespace scatter {

DecayCertificate::DecayCertificate(double c_, double rho_) : c(c_), rho(rho_) {
  if (!(c > 0.0) || !std::isfinite(c))
    throw PotentialError("decay certificate: c must be positive and finite");
  if (!(rho > 2.0) || !std::isfinite(rho))
    throw PotentialError("decay certificate: rho must exceed 2");
}

std::string to_string(PotentialKind kind) {
  switch (kind) {
    case PotentialKind::zero: return "zero";
    case PotentialKind::square_well: return "square_well";
    case PotentialKind::power: return "power";
    case PotentialKind::exponential: return "exponential";
    case PotentialKind::custom: return "custom";
  }
  return "custom";
}

Potential Potential::zero() {
  Potential p;
  p.eval_ = [](double) { return 0.0; };
  p.kind_ = PotentialKind::zero;
  p.cert_ = DecayCertificate(1.0, 3.0);
  p.support_ = 0.0;
  return p;
}

Potential Potential::square_well(double depth, double width) {
  if (!std::isfinite(depth) || !(width > 0.0) || !std::isfinite(width))
    throw PotentialError("square_well: need finite depth and positive width");
  Potential p;
  p.eval_ = [depth, width](double x) { return x < width ? -depth : 0.0; };
  p.kind_ = PotentialKind::square_well;
  const double c = std::abs(depth) * std::pow(1.0 + width, 3.0);
  p.cert_ = DecayCertificate(c > 0.0 ? c : 1.0, 3.0);
  p.support_ = width;
  p.breaks_ = {width};
  p.params_ = {{"depth", depth}, {"width", width}};
  p.sup_abs_ = std::abs(depth);
  return p;
}

Potential Potential::power(double c, double rho) {
  if (!std::isfinite(c) || !(rho > 2.0))
    throw PotentialError("power: need finite c and rho > 2");
  Potential p;
  p.eval_ = [c, rho](double x) { return c * std::pow(1.0 + x, -rho); };
  p.kind_ = PotentialKind::power;
  p.cert_ = DecayCertificate(c != 0.0 ? std::abs(c) : 1.0, rho);
  p.params_ = {{"c", c}, {"rho", rho}};
  p.sup_abs_ = std::abs(c);
  return p;
}

Potential Potential::exponential(double c, double mu) {
  if (!std::isfinite(c) || !(mu > 0.0))
    throw PotentialError("exponential: need finite c and mu > 0");
  Potential p;
  p.eval_ = [c, mu](double x) { return c * std::exp(-mu * x); };
  p.kind_ = PotentialKind::exponential;
  // max_x (1 + x)^3 e^{-mu x} sits at 1 + x = 3 / mu when mu < 3.
  const double peak = mu < 3.0 ? std::pow(3.0 / mu, 3.0) * std::exp(mu - 3.0) : 1.0;
  p.cert_ = DecayCertificate(c != 0.0 ? std::abs(c) * peak : 1.0, 3.0);
  p.params_ = {{"c", c}, {"mu", mu}};
  p.sup_abs_ = std::abs(c);
  return p;
}

Potential Potential::custom(Fn v, DecayCertificate cert, std::vector<double> breakpoints,
                            std::optional<double> support_end) {
  if (!v) throw PotentialError("custom potential: evaluator missing");
  Potential p;
  p.eval_ = std::move(v);
  p.kind_ = PotentialKind::custom;
  p.cert_ = DecayCertificate(cert.c, cert.rho);
  std::sort(breakpoints.begin(), breakpoints.end());
  p.breaks_ = std::move(breakpoints);
  if (support_end && !(*support_end > 0.0))
    throw PotentialError("custom potential: support end must be positive");
  p.support_ = support_end;
  if (support_end) p.breaks_.push_back(*support_end);
  std::sort(p.breaks_.begin(), p.breaks_.end());
  p.breaks_.erase(std::unique(p.breaks_.begin(), p.breaks_.end()), p.breaks_.end());
  p.sup_abs_ = cert.c;
  return p;
}

double Potential::eval_checked(double x) const {
  if (!(x >= 0.0)) throw PotentialError("potential evaluated at negative or NaN x");
  const double v = eval_(x);
  if (!std::isfinite(v)) throw PotentialError("potential returned a non-finite value");
  const double bound = cert_.bound(x);
  if (std::abs(v) > bound * (1.0 + 1e-12)) {
    std::ostringstream msg;
    msg << "decay certificate violated at x=" << x << ": |v|=" << std::abs(v)
        << " > " << bound;
    throw PotentialError(msg.str());
  }
  return v;
}

double Potential::certificate_ratio(double x_end, int n) const {
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = x_end * i / (n - 1);
    worst = std::max(worst, std::abs(eval_(x)) / cert_.bound(x));
  }
  for (double b : breaks_) {
    worst = std::max(worst, std::abs(eval_(std::nextafter(b, 0.0))) / cert_.bound(b));
    worst = std::max(worst, std::abs(eval_(b)) / cert_.bound(b));
  }
  return worst;
}

double eval_with_certificate(const Potential& p, double x) { return p.eval_checked(x); }

double tail_cutoff(const Potential& p, double x) {
  if (p.support_end()) return std::max(x, *p.support_end());
  const auto& cert = p.certificate();
  // c / ((rho - 1)(1 + X)^{rho - 1}) < 1e-12 c
  const double one_plus = std::pow(1e12 / (cert.rho - 1.0), 1.0 / (cert.rho - 1.0));
  return std::max(x, one_plus - 1.0);
}

TailValues tail_functionals(const Potential& p, double x) {
  if (!(x >= 0.0)) throw PotentialError("tail_functionals: x must be nonnegative");
  TailValues t;
  t.x_cut = tail_cutoff(p, x);
  if (p.is_zero()) return t;
  const auto& br = p.breakpoints();
  t.vv = integrate([&](double y) { return p(y); }, x, t.x_cut, br);
  t.abs_tail = integrate([&](double y) { return std::abs(p(y)); }, x, t.x_cut, br);
  t.first_moment = integrate([&](double y) { return y * std::abs(p(y)); }, x, t.x_cut, br);
  if (!p.support_end()) {
    t.abs_remainder = p.certificate().abs_tail_bound(t.x_cut);
    t.moment_remainder = p.certificate().first_moment_bound(t.x_cut);
  }
  return t;
}

TailFunction::TailFunction(std::shared_ptr<const XGrid> grid, Eigen::VectorXd values,
                           double exponent, bool vanishes_beyond)
    : grid_(std::move(grid)), values_(std::move(values)), exponent_(exponent),
      vanishes_(vanishes_beyond) {
  if (!grid_) throw PotentialError("TailFunction: grid missing");
  if (values_.size() != grid_->size())
    throw PotentialError("TailFunction: values do not match the grid");
  if (!(exponent_ > 0.0)) throw PotentialError("TailFunction: decay exponent must be positive");
}

double TailFunction::operator()(double x) const {
  if (!grid_) return 0.0;
  if (!(x >= 0.0)) throw PotentialError("TailFunction evaluated at negative x");
  const double X = grid_->x_max();
  if (x <= X) return grid_->interpolate(values_, x);
  if (vanishes_) return 0.0;
  return values_(values_.size() - 1) * std::pow((1.0 + X) / (1.0 + x), exponent_);
}

double TailFunction::sup_constant() const {
  double s = 0.0;
  const auto& x = grid_->points();
  for (Eigen::Index i = 0; i < x.size(); ++i)
    s = std::max(s, std::pow(1.0 + x(i), exponent_) * std::abs(values_(i)));
  return s;
}

std::shared_ptr<const XGrid> tail_grid(const Potential& p) {
  const auto& br = p.breakpoints();
  switch (p.kind()) {
    case PotentialKind::zero: return std::make_shared<XGrid>(XGrid::covering(1.0, 1.0));
    case PotentialKind::square_well:
      return std::make_shared<XGrid>(XGrid::covering(*p.support_end(), 0.25, br));
    case PotentialKind::power: return std::make_shared<XGrid>(XGrid::covering(60.0, 0.5, br));
    case PotentialKind::exponential: {
      const double mu = p.parameters().at("mu");
      return std::make_shared<XGrid>(XGrid::covering(40.0 / mu, 0.5 / mu, br));
    }
    case PotentialKind::custom:
      if (p.support_end())
        return std::make_shared<XGrid>(XGrid::covering(*p.support_end(), 0.25, br));
      return std::make_shared<XGrid>(XGrid::covering(100.0, 0.5, br));
  }
  throw PotentialError("tail_grid: unknown potential kind");
}

TailFunction TailFunction::of_potential(const Potential& p) {
  auto grid = tail_grid(p);
  const double X = grid->x_max();
  double beyond = 0.0;  // int_X^inf v
  switch (p.kind()) {
    case PotentialKind::zero:
    case PotentialKind::square_well: break;
    case PotentialKind::power: {
      const double c = p.parameters().at("c"), rho = p.parameters().at("rho");
      beyond = c * std::pow(1.0 + X, 1.0 - rho) / (rho - 1.0);
      break;
    }
    case PotentialKind::exponential: {
      const double c = p.parameters().at("c"), mu = p.parameters().at("mu");
      beyond = c * std::exp(-mu * X) / mu;
      break;
    }
    case PotentialKind::custom:
      if (!p.support_end()) beyond = tail_functionals(p, X).vv;
      break;
  }
  Eigen::VectorXd vals = grid->cumulative_from_right(grid->sample_panels([&](double y) {
    return p(y);
  }));
  vals.array() += beyond;
  return TailFunction(grid, std::move(vals), p.certificate().rho - 1.0,
                      p.support_end().has_value());
}

TailFunction TailFunction::sample(const std::function<double(double)>& f, double exponent,
                                  std::shared_ptr<const XGrid> grid, bool vanishes_beyond) {
  if (!grid) throw PotentialError("TailFunction::sample: grid missing");
  Eigen::VectorXd vals(grid->size());
  for (Eigen::Index i = 0; i < vals.size(); ++i) vals(i) = f(grid->points()(i));
  return TailFunction(std::move(grid), std::move(vals), exponent, vanishes_beyond);
}

namespace {

// Common grid for two tail functions: the union of their panel edges.
std::shared_ptr<const XGrid> merged_grid(const TailFunction& a, const TailFunction& b) {
  if (a.grid_ptr() == b.grid_ptr()) return a.grid_ptr();
  std::vector<double> edges = a.grid().edges();
  edges.insert(edges.end(), b.grid().edges().begin(), b.grid().edges().end());
  std::sort(edges.begin(), edges.end());
  std::vector<double> merged;
  for (double e : edges)
    if (merged.empty() || e - merged.back() > 1e-12) merged.push_back(e);
  return std::make_shared<XGrid>(std::move(merged), a.grid().order());
}

Eigen::VectorXd resample(const TailFunction& f, const XGrid& g) {
  if (&f.grid() == &g) return f.values();
  Eigen::VectorXd out(g.size());
  for (Eigen::Index i = 0; i < out.size(); ++i) out(i) = f(g.points()(i));
  return out;
}

void require_metadata(const TailFunction& v, const char* what) {
  if (v.empty()) throw PotentialError(std::string(what) + ": input lacks decay metadata");
}

}  // namespace

TailFunction star_product(const TailFunction& v1, const TailFunction& v2) {
  require_metadata(v1, "star_product");
  require_metadata(v2, "star_product");
  if (!(v1.exponent() > 1.0) || !(v2.exponent() > 1.0))
    throw PotentialError("star_product: inputs must decay faster than (1+x)^{-1}");
  auto grid = merged_grid(v1, v2);
  const Eigen::VectorXd a = resample(v1, *grid), b = resample(v2, *grid);
  const Eigen::VectorXd prod = a.cwiseProduct(b);
  const double e = v1.exponent() + v2.exponent();
  const bool vanishes = v1.vanishes_beyond() || v2.vanishes_beyond();
  const double X = grid->x_max();
  const double beyond = vanishes ? 0.0 : prod(prod.size() - 1) * (1.0 + X) / (e - 1.0);
  Eigen::VectorXd vals = grid->cumulative_from_right(grid->to_panels(prod));
  vals.array() += beyond;
  return TailFunction(grid, std::move(vals), e - 1.0, vanishes);
}

TailFunction pointwise_product(const TailFunction& v1, const TailFunction& v2) {
  require_metadata(v1, "pointwise_product");
  require_metadata(v2, "pointwise_product");
  auto grid = merged_grid(v1, v2);
  Eigen::VectorXd vals = resample(v1, *grid).cwiseProduct(resample(v2, *grid));
  return TailFunction(grid, std::move(vals), v1.exponent() + v2.exponent(),
                      v1.vanishes_beyond() || v2.vanishes_beyond());
}

double Potential::memoized(const std::string& key, const std::function<double()>& compute) const {
  std::lock_guard guard(memo_->lock);
  const auto it = memo_->values.find(key);
  if (it != memo_->values.end()) return it->second;
  const double v = compute();
  memo_->values.emplace(key, v);
  return v;
}

}  // namespace scatter
