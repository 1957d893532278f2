#include "srcpo/env.hpp"
#include "srcpo/oracle.hpp"

#include <doctest.h>

#include <cmath>

using namespace srcpo;

TEST_CASE("built-in environments validate") {
  for (const char* name : {"hazard-chain(5)", "two-hazard-grid", "random(4,2,1)", "random(3,3,2)"}) {
    const auto cmdp = env::make_env(name, 1);
    CHECK_NOTHROW(cmdp.validate());
  }
  CHECK_THROWS(env::make_env("random(0,2,1)", 0));
  CHECK_THROWS(env::make_env("nowhere", 0));
}

TEST_CASE("random cmdp is reproducible from its seed") {
  CHECK(env::serialize(env::random_cmdp(4, 2, 1, 7)) == env::serialize(env::random_cmdp(4, 2, 1, 7)));
  CHECK(env::serialize(env::random_cmdp(4, 2, 1, 7)) != env::serialize(env::random_cmdp(4, 2, 1, 8)));
}

TEST_CASE("cmdp text round trip and checksum") {
  const auto cmdp = env::make_env("two-hazard-grid", 0);
  const auto text = env::serialize(cmdp);
  CHECK(env::serialize(env::deserialize(text)) == text);
  auto broken = text;
  broken[broken.size() / 2] = broken[broken.size() / 2] == '1' ? '2' : '1';
  CHECK_THROWS(env::deserialize(broken));
}

TEST_CASE("augmented index is level ordered") {
  const auto cmdp = env::make_env("hazard-chain(5)", 0);
  const env::AugmentedIndex index(cmdp);
  CHECK(index.size() == 63);
  for (int id = 1; id < index.size(); ++id) CHECK(index.state(id).t >= index.state(id - 1).t);
  for (int id = 0; id < index.size(); ++id) {
    CHECK(index.find(index.state(id)) == id);
    CHECK(index.b(id) == doctest::Approx(std::pow(index.gamma(), index.state(id).t)));
    if (index.is_terminal(id)) continue;
    for (int a = 0; a < index.num_actions(); ++a) {
      double total = 0.0;
      for (const auto& s : index.successors(id, a)) total += s.probability;
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("augmented cap is enforced") {
  const auto cmdp = env::make_env("random(4,2,1)", 0);
  CHECK_THROWS(env::AugmentedIndex(cmdp, 100));
}

TEST_CASE("occupancy mass and Monte-Carlo agreement") {
  const auto cmdp = env::make_env("hazard-chain(5)", 0);
  const env::AugmentedIndex index(cmdp);
  const auto pi = env::uniform_policy(index);
  const auto d = env::occupancy(index, pi);
  CHECK(d.sum() == doctest::Approx(1.0 - std::pow(cmdp.gamma, cmdp.horizon + 1)).epsilon(1e-12));
  CHECK(env::normalized_occupancy(index, pi).sum() == doctest::Approx(1.0));
  const auto mc = oracle::monte_carlo_occupancy(cmdp, index, pi, 20000, 3);
  CHECK((mc - d).cwiseAbs().maxCoeff() < 0.01);
}

TEST_CASE("rollouts have H steps and end in a terminal id") {
  const auto cmdp = env::make_env("two-hazard-grid", 0);
  const env::AugmentedIndex index(cmdp);
  const auto traj = env::rollout(cmdp, index, env::uniform_policy(index), std::uint64_t{4});
  CHECK(static_cast<int>(traj.steps.size()) == cmdp.horizon);
  CHECK(index.is_terminal(traj.terminal_id));
  for (std::size_t t = 0; t < traj.steps.size(); ++t) CHECK(index.state(traj.steps[t].id).t == static_cast<int>(t));
}

TEST_CASE("cost return max") {
  const auto cmdp = env::make_env("hazard-chain(5)", 0);
  CHECK(cmdp.cost_return_max() ==
        doctest::Approx(cmdp.cost_max() * (1 - std::pow(cmdp.gamma, cmdp.horizon)) / (1 - cmdp.gamma)));
}
