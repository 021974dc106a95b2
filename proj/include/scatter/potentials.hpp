#pragma once

#include "scatter/grid.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

namespace scatter {

/// Raised when a potential breaks its decay bound or is evaluated off the half-line.
class PotentialError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// |v(x)| <= c (1 + x)^{-rho} for all x >= 0, with c > 0 and rho > 2.
struct DecayCertificate {
  double c = 1.0;
  double rho = 3.0;

  DecayCertificate() = default;
  DecayCertificate(double c_, double rho_);

  double bound(double x) const { return c * std::pow(1.0 + x, -rho); }
  /// Certificate bound on int_x^inf |v|.
  double abs_tail_bound(double x) const { return c / ((rho - 1.0) * std::pow(1.0 + x, rho - 1.0)); }
  /// Certificate bound on int_x^inf y |v(y)| dy.
  double first_moment_bound(double x) const {
    return c * (std::pow(1.0 + x, 2.0 - rho) / (rho - 2.0));
  }
};

enum class PotentialKind { zero, square_well, power, exponential, custom };

std::string to_string(PotentialKind kind);

/// Real potential on the half-line together with its decay certificate.
class Potential {
 public:
  using Fn = std::function<double(double)>;

  static Potential zero();
  /// v = -depth on [0, width), 0 beyond.
  static Potential square_well(double depth, double width);
  /// v = c (1 + x)^{-rho}.
  static Potential power(double c, double rho);
  /// v = c exp(-mu x).
  static Potential exponential(double c, double mu);
  /// User-supplied v; the certificate is mandatory.
  static Potential custom(Fn v, DecayCertificate cert, std::vector<double> breakpoints = {},
                          std::optional<double> support_end = std::nullopt);

  /// Plain evaluation, x >= 0 assumed.
  double operator()(double x) const { return eval_(x); }
  /// Rejects x < 0 and certificate violations.
  double eval_checked(double x) const;

  PotentialKind kind() const { return kind_; }
  const DecayCertificate& certificate() const { return cert_; }
  std::optional<double> support_end() const { return support_; }
  const std::vector<double>& breakpoints() const { return breaks_; }
  const std::map<std::string, double>& parameters() const { return params_; }
  /// Upper bound on sup |v|.
  double sup_abs() const { return sup_abs_; }
  bool is_zero() const { return kind_ == PotentialKind::zero; }

  /// Checks the certificate on n points of [0, x_end]; returns the worst ratio |v| / bound.
  double certificate_ratio(double x_end = 100.0, int n = 20001) const;

  /// Value cached under `key` on this potential and its copies; compute() runs
  /// at most once per key.
  double memoized(const std::string& key, const std::function<double()>& compute) const;

 private:
  Potential() = default;
  Fn eval_;
  PotentialKind kind_ = PotentialKind::custom;
  DecayCertificate cert_;
  std::optional<double> support_;
  std::vector<double> breaks_;
  std::map<std::string, double> params_;
  double sup_abs_ = 0.0;
  struct Memo {
    std::mutex lock;
    std::map<std::string, double> values;
  };
  std::shared_ptr<Memo> memo_ = std::make_shared<Memo>();
};

/// v(x) with the asserting check of the decay bound.
double eval_with_certificate(const Potential& p, double x);

/// Truncation point where the certificate bound on int_X^inf |v| falls below
/// 1e-12 * c, or the support end for compactly supported potentials.
double tail_cutoff(const Potential& p, double x);

struct TailValues {
  double vv = 0.0;            ///< int_x^inf v
  double abs_tail = 0.0;      ///< int_x^inf |v|
  double first_moment = 0.0;  ///< int_x^inf y |v(y)| dy
  double x_cut = 0.0;
  /// Certificate bounds on what was left out beyond x_cut (not added to the values).
  double abs_remainder = 0.0;
  double moment_remainder = 0.0;
};

TailValues tail_functionals(const Potential& p, double x);

/// A function V on [0, inf) sampled on a panel grid, with a power-law model
/// (1 + x)^{-exponent} continuing it beyond the grid. `exponent` is the decay
/// exponent e with sup (1 + x)^e |V| < inf; 0 for compactly supported data
/// that vanishes past the grid.
class TailFunction {
 public:
  TailFunction() = default;
  TailFunction(std::shared_ptr<const XGrid> grid, Eigen::VectorXd values, double exponent,
               bool vanishes_beyond);

  /// V_v(x) = int_x^inf v for a potential.
  static TailFunction of_potential(const Potential& p);
  /// Samples an evaluator on a grid.
  static TailFunction sample(const std::function<double(double)>& f, double exponent,
                             std::shared_ptr<const XGrid> grid, bool vanishes_beyond = false);

  double operator()(double x) const;
  double exponent() const { return exponent_; }
  bool vanishes_beyond() const { return vanishes_; }
  const XGrid& grid() const { return *grid_; }
  std::shared_ptr<const XGrid> grid_ptr() const { return grid_; }
  const Eigen::VectorXd& values() const { return values_; }
  bool empty() const { return !grid_; }
  /// sup (1 + x)^e |V| over the grid.
  double sup_constant() const;

 private:
  std::shared_ptr<const XGrid> grid_;
  Eigen::VectorXd values_;
  double exponent_ = 0.0;
  bool vanishes_ = false;
};

/// Panel grid used for tail functions of p: breakpoints as panel edges,
/// reaching past the support or far enough for the power-law model.
std::shared_ptr<const XGrid> tail_grid(const Potential& p);

/// (V1 * V2)(x) = int_x^inf V1 V2. Output exponent is e1 + e2 - 1.
TailFunction star_product(const TailFunction& v1, const TailFunction& v2);

/// Pointwise product; exponent e1 + e2.
TailFunction pointwise_product(const TailFunction& v1, const TailFunction& v2);

}  // namespace scatter
