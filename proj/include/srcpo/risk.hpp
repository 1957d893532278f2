#pragma once

#include <Eigen/Dense>

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace srcpo::risk {

enum class Family { CVaR, Pow, Wang, Table };

/// Spectrum sigma(u) of a spectral risk measure on [0, 1].
///
/// Every family carries its antiderivative `cumulative(u)` in closed form
/// (the Wang antiderivative is its distortion function), which is what the
/// exact risk integrals and the discretization objective are built on.
class Spectrum {
 public:
  static Spectrum cvar(double alpha);
  static Spectrum pow(double alpha);
  static Spectrum wang(double alpha);
  /// Piecewise-linear spectrum through (u, sigma) samples. The samples must
  /// start at u = 0, end at u = 1, be non-decreasing and integrate to one.
  static Spectrum table(std::vector<double> u, std::vector<double> sigma);
  /// `cvar:0.75`, `pow:0.5`, `wang:1.0` or `table:<path>`.
  static Spectrum parse(std::string_view descriptor);

  Family family() const { return family_; }
  double alpha() const { return alpha_; }
  bool is_constant() const;

  /// sigma(u). Throws std::domain_error outside [0, 1] and for Wang at u = 1.
  double operator()(double u) const;
  /// Integral of sigma over [0, u].
  double cumulative(double u) const;
  /// inf{u in [0, 1] : sigma(u) >= y}; returns 1 when no such u exists.
  double level_inverse(double y) const;
  /// sigma(1). Throws std::domain_error for Wang, which is unbounded there.
  double at_one() const;

  std::string descriptor() const;

 private:
  Spectrum(Family family, double alpha) : family_(family), alpha_(alpha) {}

  Family family_;
  double alpha_ = 0.0;
  std::vector<double> u_;
  std::vector<double> sigma_;
  std::vector<double> cum_;
  std::string source_;
};

/// Step spectrum eta_1 + sum_i (eta_{i+1} - eta_i) 1{u >= alpha_i}.
class DiscretizedSpectrum {
 public:
  DiscretizedSpectrum() = default;
  /// Validates ordering, non-negativity and the unit integral (1e-8).
  DiscretizedSpectrum(Eigen::VectorXd levels, Eigen::VectorXd breakpoints);

  /// Two comma-separated lists: levels on the first line, breakpoints on the second.
  static DiscretizedSpectrum parse(std::string_view text);
  std::string serialize() const;

  const Eigen::VectorXd& levels() const { return levels_; }
  const Eigen::VectorXd& breakpoints() const { return breakpoints_; }
  int size() const { return static_cast<int>(levels_.size()); }

  double operator()(double u) const;
  double cumulative(double u) const;
  double integral() const { return cumulative(1.0); }
  double at_one() const { return levels_(levels_.size() - 1); }

 private:
  Eigen::VectorXd levels_;
  Eigen::VectorXd breakpoints_;
};

/// Breakpoints of g_beta, in units of discounted return.
using BetaParam = Eigen::VectorXd;

struct Atom {
  double value;
  double probability;
};

/// Finite discrete law, stored sorted by value with coincident atoms merged.
class ReturnDistribution {
 public:
  ReturnDistribution() = default;
  /// Atoms closer than `merge_tolerance` are fused into their probability-weighted
  /// mean. Probabilities must be non-negative and sum to one within 1e-10.
  explicit ReturnDistribution(std::vector<Atom> atoms, double merge_tolerance = 0.0);

  static ReturnDistribution point(double value);
  static ReturnDistribution uniform(std::span<const double> values);

  std::span<const Atom> atoms() const { return atoms_; }
  std::size_t size() const { return atoms_.size(); }
  bool empty() const { return atoms_.empty(); }
  double min() const;
  double max() const;
  double mean() const;
  double cdf(double x) const;
  /// Left-continuous generalized inverse inf{x : F(x) >= u}; u = 0 maps to the minimum.
  double quantile(double u) const;

  template <typename F>
  double expect(F&& f) const {
    double acc = 0.0;
    for (const auto& a : atoms_) acc += a.probability * f(a.value);
    return acc;
  }

 private:
  std::vector<Atom> atoms_;
};

/// The increasing convex piecewise-linear g_beta(x) = eta_1 x + sum_i (eta_{i+1} - eta_i)(x - beta_i)_+.
class HingeFunction {
 public:
  HingeFunction(const DiscretizedSpectrum& disc, BetaParam beta);

  double operator()(double x) const;
  /// Right derivative.
  double slope(double x) const;
  double conjugate_integral() const;

  const DiscretizedSpectrum& spectrum() const { return disc_; }
  const BetaParam& beta() const { return beta_; }

 private:
  DiscretizedSpectrum disc_;
  BetaParam beta_;
};

double eval_spectrum(const Spectrum& spec, double u);

double spectral_risk(const Spectrum& spec, const ReturnDistribution& dist);
double spectral_risk(const DiscretizedSpectrum& disc, const ReturnDistribution& dist);

/// E[(X - beta)_+] / (1 - alpha) + beta.
double cvar_dual(const ReturnDistribution& dist, double alpha, double beta);

/// Step-function projection of `spec` with M levels minimising the L1 distance
/// under the unit-integral constraint. CVaR is represented exactly. M = 1 yields
/// the risk-neutral spectrum eta = [1].
DiscretizedSpectrum discretize(const Spectrum& spec, int M);

/// Exact integral of |sigma - sigma_tilde| over [0, 1].
double l1_distance(const Spectrum& spec, const DiscretizedSpectrum& disc);

/// C_max sigma(1) / ((1 - gamma) M).
double discretization_error_bound(const Spectrum& spec, int M, double cost_max, double gamma);

double g_beta(const DiscretizedSpectrum& disc, const BetaParam& beta, double x);
/// sum_i (eta_{i+1} - eta_i)(1 - alpha_i) beta_i.
double conjugate_integral(const DiscretizedSpectrum& disc, const BetaParam& beta);
double sub_risk(const DiscretizedSpectrum& disc, const BetaParam& beta,
                const ReturnDistribution& dist);
/// beta_i = F^{-1}(alpha_i), the infimising breakpoints.
BetaParam minimizing_beta(const DiscretizedSpectrum& disc, const ReturnDistribution& dist);

/// Throws std::invalid_argument unless beta has M-1 non-decreasing entries.
void check_beta(const DiscretizedSpectrum& disc, const BetaParam& beta);

}  // namespace srcpo::risk
