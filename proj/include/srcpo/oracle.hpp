#pragma once

#include "srcpo/env.hpp"
#include "srcpo/inner.hpp"
#include "srcpo/risk.hpp"

#include <Eigen/Dense>

#include <optional>
#include <random>
#include <vector>

// Brute-force reference computations. None of these share code paths with the
// quantities they check beyond the environment tables themselves.
namespace srcpo::oracle {

/// sup_x (x y - g(x)) by a dense grid over the breakpoint span plus ternary refinement.
double conjugate_point(const risk::DiscretizedSpectrum& disc, const risk::BetaParam& beta, double y);
/// Integral over u of the grid conjugate evaluated at the step spectrum.
double conjugate_integral(const risk::DiscretizedSpectrum& disc, const risk::BetaParam& beta);

/// Central differences of `f` over every logit, step h.
template <typename F>
Eigen::MatrixXd finite_difference(const Eigen::MatrixXd& theta, F&& f, double h = 1e-5) {
  Eigen::MatrixXd grad(theta.rows(), theta.cols());
  Eigen::MatrixXd probe = theta;
  for (Eigen::Index s = 0; s < theta.rows(); ++s)
    for (Eigen::Index a = 0; a < theta.cols(); ++a) {
      probe(s, a) = theta(s, a) + h;
      const double up = f(probe);
      probe(s, a) = theta(s, a) - h;
      const double down = f(probe);
      probe(s, a) = theta(s, a);
      grad(s, a) = (up - down) / (2.0 * h);
    }
  return grad;
}

/// Constraint value as a plain function of the logits, built on exact_returns.
double constraint_value_from_atoms(const env::AugmentedIndex& index, const Eigen::MatrixXd& theta,
                                   const risk::DiscretizedSpectrum& disc, const risk::BetaParam& beta, int channel);

/// Full block-diagonal Fisher matrix over flattened (id, a) logits.
Eigen::MatrixXd fisher_matrix(const env::AugmentedIndex& index, const env::PolicyTable& pi);
/// F^+ grad, reshaped to the logit table.
Eigen::MatrixXd natural_gradient(const env::AugmentedIndex& index, const env::PolicyTable& pi,
                                 const Eigen::MatrixXd& grad);

/// Empirical (1 - gamma) gamma^t visit frequencies from `episodes` rollouts.
Eigen::VectorXd monte_carlo_occupancy(const env::TabularCMDP& cmdp, const env::AugmentedIndex& index,
                                      const env::PolicyTable& pi, int episodes, std::uint64_t seed);

/// Expected discounted return by time-indexed DP over base states for a
/// policy that depends on the base state only (rows of `base_pi`).
double expected_return_base(const env::TabularCMDP& cmdp, const Eigen::MatrixXd& base_pi, int channel);

/// Best J_R of the sub-risk constrained problem at fixed beta, via the
/// Lagrangian dual of the occupancy LP with DP inner maximisation and nested
/// golden-section search over the multipliers. nullopt when infeasible.
struct InnerOptimum {
  double J_R;
  Eigen::VectorXd lambda;
};
std::optional<InnerOptimum> inner_optimum(const env::AugmentedIndex& index,
                                          const std::vector<inner::ConstraintSpec>& constraints,
                                          const Eigen::VectorXd& threshold);

struct GridOptimum {
  double J_R = 0.0;
  int best = -1;                    // index into the grid, -1 when nothing is feasible
  std::vector<std::optional<double>> per_point;
};
/// inner_optimum at every joint grid point; the grid is a list of per-constraint betas.
GridOptimum exhaustive_grid(const env::AugmentedIndex& index, const std::vector<risk::DiscretizedSpectrum>& discs,
                            const std::vector<std::vector<risk::BetaParam>>& grid, const Eigen::VectorXd& threshold);

/// Every distinct discounted single-channel cost return reachable at the horizon.
std::vector<double> attainable_cost_returns(const env::AugmentedIndex& index, int channel);

/// Maximise -x'Hx/2 + c'x over x >= 0 by projected gradient ascent.
Eigen::VectorXd projected_gradient_dual(const Eigen::MatrixXd& H, const Eigen::VectorXd& c, int iterations = 200000);

/// Mean of N(mu, sd^2) truncated to [lo, hi].
double truncated_normal_mean(double mu, double sd, double lo, double hi);

}  // namespace srcpo::oracle
