#include "srcpo/critic.hpp"
#include "srcpo/distribution.hpp"

#include <doctest.h>

#include <random>

using namespace srcpo;

TEST_CASE("critic storage shape") {
  dist::QuantileCritic c(2, 5, 3, 4, 7, 2);
  CHECK(c.data().size() == 2u * 2 * 5 * 3 * 4 * 7);
  CHECK(c.atoms(1, 1, 4, 2, 3).size() == 7u);
}

TEST_CASE("quantile regression converges to the target quantiles") {
  dist::QuantileCritic c(1, 1, 1, 1, 4, 1);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 20000; ++k) {
    Eigen::VectorXd targets(20);
    for (auto& t : targets) t = u(rng);
    const dist::QuantileSample s{0, 0, 0, 0, 0, targets};
    dist::quantile_regression_update(c, std::span(&s, 1), 0.002);
  }
  const auto q = c.quantiles(0, 0, 0, 0);
  CHECK(q(0) == doctest::Approx(0.125).epsilon(0.05));
  CHECK(q(3) == doctest::Approx(0.875).epsilon(0.05));
  for (int l = 1; l < 4; ++l) CHECK(q(l) >= q(l - 1));
}

TEST_CASE("td lambda with lambda one is the Monte-Carlo return") {
  const std::vector<double> costs{1.0, 0.0, 2.0};
  std::vector<risk::ReturnDistribution> boot(3, risk::ReturnDistribution::point(100.0));
  const auto t = dist::td_lambda_targets(costs, boot, 1.0, 0.5, 10);
  REQUIRE(t.size() == 3);
  CHECK(t[0].mean() == doctest::Approx(1.0 + 0.25 * 2.0));
  CHECK(t[2].mean() == doctest::Approx(2.0));
}

TEST_CASE("td lambda with lambda zero bootstraps one step") {
  const std::vector<double> costs{1.0, 1.0};
  std::vector<risk::ReturnDistribution> boot{risk::ReturnDistribution::point(4.0), risk::ReturnDistribution::point(0.0)};
  const auto t = dist::td_lambda_targets(costs, boot, 0.0, 0.5, 5);
  CHECK(t[0].mean() == doctest::Approx(1.0 + 0.5 * 4.0));
}
