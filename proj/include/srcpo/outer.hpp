#pragma once

#include "srcpo/risk.hpp"

#include <Eigen/Dense>

#include <random>
#include <span>
#include <vector>

namespace srcpo::outer {

/// Per-constraint beta lists; joint points enumerate their Cartesian product
/// with the last constraint varying fastest.
class BetaGrid {
 public:
  BetaGrid() = default;
  explicit BetaGrid(std::vector<std::vector<risk::BetaParam>> per_constraint);

  /// Same evenly spaced scalar values for every breakpoint of every constraint,
  /// keeping only non-decreasing combinations.
  static BetaGrid uniform(int num_constraints, int num_breakpoints, std::span<const double> values);

  int num_constraints() const { return static_cast<int>(lists_.size()); }
  int size() const { return size_; }
  const std::vector<risk::BetaParam>& list(int i) const { return lists_[static_cast<std::size_t>(i)]; }
  std::vector<risk::BetaParam> point(int flat) const;
  /// Joint point whose entries are nearest (L1) to `betas`.
  int nearest(const std::vector<risk::BetaParam>& betas) const;

 private:
  std::vector<std::vector<risk::BetaParam>> lists_;
  int size_ = 0;
};

/// J_R - K sum_i (J_Ci - d_i)_+.
double target_score(double J_R, const Eigen::VectorXd& J_C, const Eigen::VectorXd& d, double K = 10.0);

/// Softmax sampler over joint grid points.
struct FiniteSampler {
  Eigen::VectorXd phi;

  static FiniteSampler uniform(int size) { return {Eigen::VectorXd::Zero(size)}; }
  Eigen::VectorXd probabilities() const;
  int mode() const;
  /// With probability `epsilon` a uniform grid point, otherwise a draw from xi.
  int sample(std::mt19937_64& rng, double epsilon = 0.0) const;
};

/// phi += alpha * scores.
void finite_sampler_step(FiniteSampler& sampler, const Eigen::VectorXd& scores, double alpha);
double sampler_entropy(const FiniteSampler& sampler);

/// Draw from N(mu, sd^2) restricted to [lo, hi] by inversion; the far tails use
/// survival functions and an exponential approximation.
double truncated_normal_sample(double mu, double sd, double lo, double hi, double u);
double truncated_normal_log_pdf(double x, double mu, double sd, double lo, double hi);
/// d/dmu of the log density.
double truncated_normal_dlog_dmu(double x, double mu, double sd, double lo, double hi);

struct StickSample {
  std::vector<risk::BetaParam> betas;  // per constraint, partial sums clamped at the upper bound
  Eigen::MatrixXd increments;          // [i, j]
  double log_density = 0.0;
  Eigen::MatrixXd grad_log_density;    // d/dphi, [i, j]
};

/// Truncated-normal stick breaking with means mu = exp(phi).
class StickSampler {
 public:
  StickSampler() = default;
  StickSampler(int num_constraints, int num_breakpoints, double upper, double sd = 0.05, double init_mean = 0.0);

  Eigen::MatrixXd& phi() { return phi_; }
  const Eigen::MatrixXd& phi() const { return phi_; }
  Eigen::MatrixXd means() const { return phi_.array().exp(); }
  double upper() const { return upper_; }
  double sd() const { return sd_; }

  StickSample sample(std::mt19937_64& rng) const;
  /// Log density and gradient of given increments.
  StickSample evaluate(const Eigen::MatrixXd& increments) const;
  /// Betas obtained from the increment means.
  std::vector<risk::BetaParam> mean_betas() const;

 private:
  std::vector<risk::BetaParam> stack(const Eigen::MatrixXd& increments) const;

  Eigen::MatrixXd phi_;
  double upper_ = 1.0;
  double sd_ = 0.05;
};

struct ScoredSample {
  Eigen::MatrixXd grad_log_density;
  double score;
};

/// Baseline-subtracted score-function ascent with a diagonal empirical Fisher
/// preconditioner. Batches of fewer than two samples leave phi unchanged.
void stick_sampler_step(StickSampler& sampler, std::span<const ScoredSample> batch, double lr);

}  // namespace srcpo::outer
