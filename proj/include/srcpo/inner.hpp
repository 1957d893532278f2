#pragma once

#include "srcpo/distribution.hpp"
#include "srcpo/env.hpp"
#include "srcpo/risk.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace srcpo::inner {

/// Logits theta(id, a); pi = row-wise softmax.
struct SoftmaxPolicy {
  Eigen::MatrixXd theta;

  static SoftmaxPolicy uniform(const env::AugmentedIndex& index);
  env::PolicyTable probabilities() const;
};

/// Per-(id, a) table with the shape of the logits.
using GradientVector = Eigen::MatrixXd;

/// Spectrum discretization and dual variable of one cost channel.
struct ConstraintSpec {
  risk::DiscretizedSpectrum disc;
  risk::BetaParam beta;
};

/// Everything the update rule needs, computed exactly from one policy.
struct Evaluation {
  env::PolicyTable pi;
  Eigen::VectorXd d;                    // unnormalised occupancy
  dist::ValueTables reward;
  std::vector<dist::ValueTables> risk;  // per channel, advantages already divided by b
  double J_R = 0.0;
  Eigen::VectorXd J_C;                  // sub-risk constraint values
};

Evaluation evaluate(const env::AugmentedIndex& index, const env::PolicyTable& pi,
                    const std::vector<ConstraintSpec>& constraints);

double constraint_value(const env::AugmentedIndex& index, const env::PolicyTable& pi,
                        const risk::DiscretizedSpectrum& disc, const risk::BetaParam& beta, int channel);

/// d(s) pi(a|s) A(s, a) / (1 - gamma).
GradientVector gradient_from_advantage(const Eigen::VectorXd& d, const env::PolicyTable& pi,
                                       const Eigen::MatrixXd& advantage, double gamma);
GradientVector policy_gradient_risk(const env::AugmentedIndex& index, const env::PolicyTable& pi,
                                    const risk::DiscretizedSpectrum& disc, const risk::BetaParam& beta,
                                    int channel);
GradientVector policy_gradient_reward(const env::AugmentedIndex& index, const env::PolicyTable& pi);

/// g^T F g = sum_s d(s) Var_{a ~ pi}[g(s, a)] with the unnormalised occupancy.
double fisher_quadratic(const Eigen::VectorXd& d, const env::PolicyTable& pi, const GradientVector& dir);

enum class Case { Satisfied, Violated };
enum class Strategy { Proposed, CRPO, SDACQP };

Strategy parse_strategy(std::string_view name);
std::string to_string(Strategy s);
std::string to_string(Case c);

struct WeightDecision {
  Case kase = Case::Satisfied;
  Eigen::VectorXd lambda;
  double nu = 0.0;
  double alpha = 0.0;
  bool fallback = false;  // QP had no KKT point; recovery weights were used
};

/// (A_R - alpha sum_i lambda_i A_i) / (1 - gamma) when satisfied,
/// (alpha nu A_R - sum_i lambda_i A_i) / (1 - gamma) when violated.
GradientVector npg_direction(const Evaluation& ev, const WeightDecision& w, double gamma);

/// maximise -x^T H x / 2 + c^T x over x >= 0 by enumerating active sets.
/// Returns nullopt when no KKT point exists (unbounded dual, infeasible primal).
std::optional<Eigen::VectorXd> solve_nonnegative_dual(const Eigen::MatrixXd& H, const Eigen::VectorXd& c);

/// E_{d, pi}[A_j A_k] / (1 - gamma)^2 over [A_R, A_1, ..., A_N].
Eigen::MatrixXd advantage_gram(const Evaluation& ev, double gamma);

struct TrustRegion {
  double lambda_max = 100.0;
  double g_min = 0.1;
  double g_max = 10.0;
};

WeightDecision weight_strategy_proposed(const Evaluation& ev, const Eigen::VectorXd& threshold, double eps,
                                        double gamma, const TrustRegion& tr);
WeightDecision weight_strategy_violated(const Evaluation& ev, const Eigen::VectorXd& threshold, double eps,
                                        double gamma, const TrustRegion& tr);
WeightDecision weight_strategy_crpo(const Eigen::VectorXd& J_C, const Eigen::VectorXd& threshold);

struct StepReport {
  double J_R = 0.0;
  Eigen::VectorXd J_C;
  WeightDecision weights;
  bool skipped = false;
};

/// Picks the case and weights for `ev` and applies the NPG step to `policy`.
StepReport apply_update(const Evaluation& ev, SoftmaxPolicy& policy, const Eigen::VectorXd& threshold,
                        Strategy strategy, double eps, const TrustRegion& tr, double gamma);

/// One exact NPG update of `policy` in place.
StepReport inner_step(const env::AugmentedIndex& index, SoftmaxPolicy& policy,
                      const std::vector<ConstraintSpec>& constraints, const Eigen::VectorXd& threshold,
                      Strategy strategy, double eps, const TrustRegion& tr);

/// eps0 / sqrt(t + 1) when `decay`, otherwise eps0.
double trust_region_size(double eps0, int t, bool decay);

}  // namespace srcpo::inner
