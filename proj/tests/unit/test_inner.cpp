#include "srcpo/distribution.hpp"
#include "srcpo/env.hpp"
#include "srcpo/inner.hpp"
#include "srcpo/oracle.hpp"

#include <doctest.h>

#include <random>

using namespace srcpo;

namespace {

inner::SoftmaxPolicy random_policy(const env::AugmentedIndex& index, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  inner::SoftmaxPolicy p{Eigen::MatrixXd(index.size(), index.num_actions())};
  for (Eigen::Index k = 0; k < p.theta.size(); ++k) p.theta.data()[k] = n(rng);
  return p;
}

std::vector<inner::ConstraintSpec> cvar_constraint(double beta) {
  return {{risk::discretize(risk::Spectrum::cvar(0.75), 2), (Eigen::VectorXd(1) << beta).finished()}};
}

}  // namespace

TEST_CASE("softmax rows are distributions") {
  const auto cmdp = env::make_env("hazard-chain(5)", 0);
  const env::AugmentedIndex index(cmdp);
  const auto pi = random_policy(index, 1).probabilities();
  CHECK((pi.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK((inner::SoftmaxPolicy::uniform(index).probabilities().array() - 0.5).abs().maxCoeff() < 1e-15);
}

TEST_CASE("reward gradient matches finite differences") {
  const auto cmdp = env::random_cmdp(3, 2, 1, 4, 3, 0.9);
  const env::AugmentedIndex index(cmdp);
  const auto p = random_policy(index, 2);
  const auto grad = inner::policy_gradient_reward(index, p.probabilities());
  const auto fd = oracle::finite_difference(p.theta, [&](const Eigen::MatrixXd& th) {
    return dist::reward_values(index, inner::SoftmaxPolicy{th}.probabilities()).J;
  });
  CHECK((grad - fd).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("fisher quadratic matches the explicit Fisher matrix") {
  const auto cmdp = env::random_cmdp(3, 2, 1, 5, 2, 0.9);
  const env::AugmentedIndex index(cmdp);
  const auto pi = random_policy(index, 3).probabilities();
  const Eigen::MatrixXd dir = random_policy(index, 4).theta;
  const Eigen::MatrixXd F = oracle::fisher_matrix(index, pi);
  Eigen::VectorXd flat(dir.size());
  for (int id = 0, k = 0; id < index.size(); ++id)
    for (int a = 0; a < index.num_actions(); ++a) flat(k++) = dir(id, a);
  CHECK(inner::fisher_quadratic(env::occupancy(index, pi), pi, dir) ==
        doctest::Approx(flat.dot(F * flat)).epsilon(1e-10));
}

TEST_CASE("dual solver agrees with projected gradient") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int k = 0; k < 30; ++k) {
    const int m = 1 + k % 3;
    Eigen::MatrixXd B(m, m + 2);
    for (auto& x : B.reshaped()) x = n(rng);
    const Eigen::MatrixXd H = B * B.transpose() + 0.1 * Eigen::MatrixXd::Identity(m, m);
    Eigen::VectorXd c(m);
    for (auto& x : c) x = n(rng);
    const auto x = inner::solve_nonnegative_dual(H, c);
    REQUIRE(x.has_value());
    CHECK((*x - oracle::projected_gradient_dual(H, c)).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("dual without a KKT point") {
  const Eigen::MatrixXd H = Eigen::MatrixXd::Zero(1, 1);
  CHECK_FALSE(inner::solve_nonnegative_dual(H, (Eigen::VectorXd(1) << 1.0).finished()).has_value());
}

TEST_CASE("crpo picks the most violated constraint") {
  const Eigen::VectorXd d = Eigen::VectorXd::Zero(2);
  auto w = inner::weight_strategy_crpo((Eigen::VectorXd(2) << 0.1, 0.3).finished(), d);
  CHECK(w.kase == inner::Case::Violated);
  CHECK(w.lambda(0) == 0.0);
  CHECK(w.lambda(1) == 1.0);
  w = inner::weight_strategy_crpo((Eigen::VectorXd(2) << 0.2, 0.2).finished(), d);
  CHECK(w.lambda(0) == 1.0);
  CHECK(w.lambda(1) == 0.0);
  w = inner::weight_strategy_crpo((Eigen::VectorXd(2) << -0.5, -0.2).finished(), d);
  CHECK(w.kase == inner::Case::Satisfied);
  CHECK(w.lambda.cwiseAbs().sum() == 0.0);
}

TEST_CASE("trust region schedule") {
  CHECK(inner::trust_region_size(0.1, 0, true) == doctest::Approx(0.1));
  CHECK(inner::trust_region_size(0.1, 3, true) == doctest::Approx(0.05));
  CHECK(inner::trust_region_size(0.1, 3, false) == doctest::Approx(0.1));
}

TEST_CASE("a step respects the trust region") {
  const auto cmdp = env::make_env("hazard-chain(5)", 0);
  const env::AugmentedIndex index(cmdp);
  auto p = random_policy(index, 7);
  const auto cs = cvar_constraint(1.0);
  const auto before = p.theta;
  const auto ev = inner::evaluate(index, p.probabilities(), cs);
  const auto rep = inner::inner_step(index, p, cs, cmdp.threshold, inner::Strategy::Proposed, 0.01, {});
  CHECK_FALSE(rep.skipped);
  const Eigen::MatrixXd step = p.theta - before;
  CHECK(inner::fisher_quadratic(ev.d, ev.pi, step) <= 2 * 0.01 * (1 + 1e-9));
}

TEST_CASE("evaluation reports the sub-risk constraint") {
  const auto cmdp = env::make_env("hazard-chain(5)", 0);
  const env::AugmentedIndex index(cmdp);
  const auto pi = random_policy(index, 8).probabilities();
  const auto cs = cvar_constraint(0.5);
  const auto ev = inner::evaluate(index, pi, cs);
  CHECK(ev.J_C(0) == doctest::Approx(dist::sub_risk_of_policy(index, pi, cs[0].disc, cs[0].beta, 0)).epsilon(1e-12));
  CHECK(ev.J_R == doctest::Approx(dist::reward_values(index, pi).J).epsilon(1e-12));
}

TEST_CASE("all strategies reach feasibility on the hazard chain") {
  const auto cmdp = env::make_env("hazard-chain(5)", 0);
  const env::AugmentedIndex index(cmdp);
  const auto cs = cvar_constraint(1.0);
  for (auto s : {inner::Strategy::Proposed, inner::Strategy::CRPO, inner::Strategy::SDACQP}) {
    auto p = inner::SoftmaxPolicy::uniform(index);
    for (int t = 0; t < 1500; ++t) inner::inner_step(index, p, cs, cmdp.threshold, s, inner::trust_region_size(0.1, t, true), {});
    const auto ev = inner::evaluate(index, p.probabilities(), cs);
    INFO(inner::to_string(s));
    CHECK(ev.J_C(0) <= cmdp.threshold(0) + 2e-2);
    CHECK(ev.J_R > 2.0);
  }
}
