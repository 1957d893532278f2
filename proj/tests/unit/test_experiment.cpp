#include "srcpo/experiment.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace srcpo;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("srcpo_unit_" + name)).string();
}

ExperimentConfig practical_config(int epochs) {
  return parse_config("mode = practical\nM = 2\nbeta_values = 0, 0.5, 1.0\nepochs = " + std::to_string(epochs) +
                      "\nepisodes = 3\nupdates = 2\neps0 = 0.03\nsampler_lr = 0.2\nseed = 5\n");
}

std::string csv_of(Experiment& ex) {
  std::ostringstream s;
  run(ex, &s, nullptr, 0);
  return s.str();
}

}  // namespace

TEST_CASE("default beta values span the cost return range") {
  const auto cmdp = env::make_env("hazard-chain(5)", 0);
  const auto v = default_beta_values(cmdp);
  REQUIRE(v.size() == 5);
  CHECK(v.front() == 0.0);
  CHECK(v.back() == doctest::Approx(cmdp.cost_return_max()));
}

TEST_CASE("replay buffer evicts whole episodes") {
  ReplayBuffer buf(10);
  for (int k = 0; k < 5; ++k) {
    ReplayEntry e;
    e.grid = k;
    e.trajectory.steps.resize(4);
    buf.push(std::move(e));
  }
  CHECK(buf.steps() <= 10);
  CHECK(buf.size() == 2);
  CHECK(buf.entries().front().grid == 3);
}

TEST_CASE("budget error on oversized tables") {
  auto c = parse_config("max_table_entries = 100");
  CHECK_THROWS_AS(Experiment{c}, BudgetError);
}

TEST_CASE("tabular metrics and csv shape") {
  auto c = load_config(SRCPO_SOURCE_DIR "/configs/quickstart.cfg");
  c.epochs = 3;
  Experiment ex(c);
  const auto csv = csv_of(ex);
  std::istringstream lines(csv);
  std::string header, row;
  std::getline(lines, header);
  int rows = 0;
  const auto columns = std::count(header.begin(), header.end(), ',');
  while (std::getline(lines, row)) {
    CHECK(std::count(row.begin(), row.end(), ',') == columns);
    ++rows;
  }
  CHECK(rows == 3);
  CHECK(header.rfind("epoch,env_steps,eps,entropy,modal", 0) == 0);
  CHECK(ex.env_steps() == 0);
}

TEST_CASE("practical env step accounting") {
  Experiment ex(practical_config(4));
  run(ex, nullptr, nullptr, 0);
  CHECK(ex.env_steps() == 4LL * 3 * ex.cmdp().horizon);
  CHECK(ex.buffer().steps() == ex.env_steps());
}

TEST_CASE("zero updates leave policies untouched") {
  auto c = practical_config(3);
  c.updates = 0;
  Experiment ex(c);
  run(ex, nullptr, nullptr, 0);
  for (const auto& p : ex.policies()) CHECK(p.theta.cwiseAbs().maxCoeff() == 0.0);
  CHECK(ex.env_steps() == 3LL * 3 * ex.cmdp().horizon);
}

TEST_CASE("fully exploratory sampling still runs") {
  auto c = practical_config(3);
  c.epsilon = 1.0;
  Experiment ex(c);
  CHECK_NOTHROW(run(ex, nullptr, nullptr, 0));
}

TEST_CASE("thread count does not change results") {
  auto c = load_config(SRCPO_SOURCE_DIR "/configs/quickstart.cfg");
  c.epochs = 20;
  Experiment a(c), b(c);
  b.set_threads(3);
  CHECK(csv_of(a) == csv_of(b));
}

TEST_CASE("checkpoint continuation is byte identical") {
  for (auto c : {practical_config(6), load_config(SRCPO_SOURCE_DIR "/configs/quickstart.cfg")}) {
    c.epochs = 6;
    Experiment whole(c);
    const auto full = csv_of(whole);

    c.epochs = 3;
    Experiment first(c);
    auto head = csv_of(first);
    const auto path = temp_path("resume.ckpt");
    first.save(path);
    auto resumed = Experiment::load(path);
    resumed.set_epochs(6);
    head += csv_of(resumed);
    CHECK(head == full);
    std::filesystem::remove(path);
  }
}

TEST_CASE("checkpoint errors") {
  Experiment ex(practical_config(1));
  run(ex, nullptr, nullptr, 0);
  const auto path = temp_path("bad.ckpt");
  ex.save(path);
  const auto size = std::filesystem::file_size(path);

  std::filesystem::resize_file(path, size / 2);
  try {
    Experiment::load(path);
    FAIL("truncated checkpoint loaded");
  } catch (const CheckpointError& e) {
    CHECK(std::string(e.what()).find("truncated") != std::string::npos);
  }

  ex.save(path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(6);
    const std::uint32_t v = 99;
    f.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  try {
    Experiment::load(path);
    FAIL("wrong version loaded");
  } catch (const CheckpointError& e) {
    CHECK(std::string(e.what()).find("version 99") != std::string::npos);
  }

  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << "hello";
  }
  CHECK_THROWS_AS(Experiment::load(path), CheckpointError);
  std::filesystem::remove(path);
}

TEST_CASE("truncation bound") {
  Experiment ex(parse_config(""));
  const auto& m = ex.cmdp();
  CHECK(ex.truncation_bound() ==
        doctest::Approx(std::pow(m.gamma, m.horizon) * std::max(m.reward_max(), m.cost_max()) / (1 - m.gamma)));
}
