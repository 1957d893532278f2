#include "srcpo/distribution.hpp"
#include "srcpo/env.hpp"
#include "srcpo/inner.hpp"
#include "srcpo/oracle.hpp"

#include <doctest.h>

#include <random>

using namespace srcpo;

namespace {

env::PolicyTable random_pi(const env::AugmentedIndex& index, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  inner::SoftmaxPolicy p{Eigen::MatrixXd(index.size(), index.num_actions())};
  for (Eigen::Index k = 0; k < p.theta.size(); ++k) p.theta.data()[k] = n(rng);
  return p.probabilities();
}

}  // namespace

TEST_CASE("exact returns agree with expected value DP") {
  const auto cmdp = env::make_env("random(3,2,1)", 2);
  const env::AugmentedIndex index(cmdp);
  const auto pi = random_pi(index, 1);
  const auto ret = dist::exact_returns(index, pi, 0);
  const auto plain = dist::cost_values(index, pi, 0);
  for (int id = 0; id < index.size(); ++id)
    for (int a = 0; a < index.num_actions(); ++a)
      CHECK(ret.at(id, a).mean() == doctest::Approx(plain.Q(id, a)).epsilon(1e-9));
}

TEST_CASE("risk values from atoms match the Bellman recursion") {
  const auto cmdp = env::make_env("hazard-chain(5)", 0);
  const env::AugmentedIndex index(cmdp);
  const auto pi = random_pi(index, 2);
  const auto disc = risk::discretize(risk::Spectrum::cvar(0.75), 2);
  const risk::HingeFunction g(disc, (Eigen::VectorXd(1) << 1.0).finished());
  const auto ret = dist::exact_returns(index, pi, 0);
  const auto v = dist::risk_values(index, pi, g, 0);
  for (int id = 0; id < index.size(); ++id) {
    CHECK(dist::risk_value_V(index, ret, g, id) == doctest::Approx(v.V(id)).epsilon(1e-10));
    double mean_adv = 0.0;
    for (int a = 0; a < index.num_actions(); ++a) {
      CHECK(dist::risk_value_Q(index, ret, g, id, a) == doctest::Approx(v.Q(id, a)).epsilon(1e-10));
      mean_adv += pi(id, a) * v.A(id, a);
    }
    CHECK(std::abs(mean_adv) < 1e-10);
  }
}

TEST_CASE("sub-risk of the minimizing beta equals the policy's spectral risk") {
  const auto cmdp = env::make_env("hazard-chain(5)", 0);
  const env::AugmentedIndex index(cmdp);
  const auto pi = random_pi(index, 3);
  const auto disc = risk::discretize(risk::Spectrum::pow(0.5), 3);
  const auto G = dist::episode_return(index, dist::exact_returns(index, pi, 0));
  const auto b = risk::minimizing_beta(disc, G);
  CHECK(dist::sub_risk_of_policy(index, pi, disc, b, 0) == doctest::Approx(risk::spectral_risk(disc, G)).epsilon(1e-10));
}

TEST_CASE("midpoint quantile projection and W1") {
  const auto X = risk::ReturnDistribution::uniform(std::vector<double>{0, 1, 2, 3});
  const auto q = dist::project_quantiles(X, 4);
  CHECK((q - (Eigen::VectorXd(4) << 0, 1, 2, 3).finished()).norm() < 1e-12);
  CHECK(dist::wasserstein1(X, X) == 0.0);
  CHECK(dist::wasserstein1(X, risk::ReturnDistribution::point(0.0)) == doctest::Approx(1.5));
}
