#include "srcpo/config.hpp"
#include "srcpo/distribution.hpp"
#include "srcpo/env.hpp"
#include "srcpo/experiment.hpp"
#include "srcpo/oracle.hpp"
#include "srcpo/risk.hpp"
#include "srcpo/text.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

namespace {

using namespace srcpo;
namespace fs = std::filesystem;

// Usage problems detected after CLI11 parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt(double v) { return text::format12(v); }

std::string join(const Eigen::VectorXd& v, const char* sep = ",") {
  std::string s;
  for (Eigen::Index k = 0; k < v.size(); ++k) s += (k ? sep : "") + fmt(v(k));
  return s;
}

Eigen::VectorXd parse_list(const std::string& field, const std::string& v) {
  std::vector<double> out;
  for (auto f : text::split(v, ',')) {
    const auto x = text::to_double(f);
    if (!x) throw UsageError("--" + field + ": '" + std::string(f) + "' is not a number");
    out.push_back(*x);
  }
  return Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size()));
}

// Lines of `value` or `value probability`; '#' comments and blank lines are skipped.
risk::ReturnDistribution read_atoms(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open atoms file '" + path + "'");
  std::vector<double> values, probs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = text::trim(std::string_view(line).substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto fields = text::split_ws(body);
    const auto v = text::to_double(fields[0]);
    const auto p = fields.size() == 2 ? text::to_double(fields[1]) : std::optional<double>(1.0);
    if (fields.size() > 2 || !v || !p || !std::isfinite(*v) || !(*p >= 0.0))
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected 'value [probability]'");
    values.push_back(*v);
    probs.push_back(*p);
  }
  if (values.empty()) throw std::runtime_error(path + ": no atoms");
  double total = 0.0;
  for (double p : probs) total += p;
  if (!(total > 0.0)) throw std::runtime_error(path + ": probabilities sum to zero");
  std::vector<risk::Atom> atoms;
  for (std::size_t k = 0; k < values.size(); ++k) atoms.push_back({values[k], probs[k] / total});
  return risk::ReturnDistribution(std::move(atoms));
}

risk::DiscretizedSpectrum disc_from(const std::string& spec, int M) {
  const auto s = risk::Spectrum::parse(spec);
  if (M == 1 && !s.is_constant()) std::cerr << "warning: M = 1 replaces a non-constant spectrum by its mean level\n";
  return risk::discretize(s, M);
}

void write_summary(const Experiment& ex, const std::vector<MetricsRecord>& records, const fs::path& path,
                   double seconds) {
  const int modal = ex.modal_point();
  const auto ev = ex.evaluate_point(modal);
  bool feasible = true;
  std::ofstream out(path);
  out << "J_R " << fmt(ev.J_R) << '\n';
  for (Eigen::Index i = 0; i < ev.J_C.size(); ++i) {
    out << "J_C" << i + 1 << ' ' << fmt(ev.J_C(i)) << '\n';
    out << "threshold" << i + 1 << ' ' << fmt(ex.threshold()(i)) << '\n';
    feasible = feasible && ev.J_C(i) <= ex.threshold()(i);
  }
  out << "feasible " << (feasible ? 1 : 0) << '\n';
  out << "modal " << modal << '\n';
  const auto betas = ex.grid().point(modal);
  for (std::size_t i = 0; i < betas.size(); ++i) out << "modal_beta" << i + 1 << ' ' << join(betas[i]) << '\n';
  out << "epochs " << ex.epoch() << '\n';
  out << "env_steps " << ex.env_steps() << '\n';
  out << "truncation_bound " << fmt(ex.truncation_bound()) << '\n';
  out << "records " << records.size() << '\n';
  out << "wall_seconds " << fmt(seconds) << '\n';
}

int cmd_run(const std::string& config_path, const std::string& mode, std::optional<long long> seed,
            const std::string& out_dir, int threads, int log_every, const std::string& resume,
            std::optional<int> epochs) {
  std::optional<Experiment> ex;
  if (!resume.empty()) {
    ex.emplace(Experiment::load(resume));
  } else {
    auto cfg = load_config(config_path);
    if (mode == "tabular") cfg.mode = Mode::Tabular;
    else if (mode == "practical") cfg.mode = Mode::Practical;
    if (seed) cfg.seed = static_cast<std::uint64_t>(*seed);
    if (epochs) cfg.epochs = *epochs;
    validate(cfg);
    ex.emplace(std::move(cfg));
  }
  if (epochs && !resume.empty()) ex->set_epochs(*epochs);
  ex->set_threads(resolve_threads(threads));

  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  std::cerr << "truncation_bound " << fmt(ex->truncation_bound()) << '\n';
  std::ofstream csv(dir / "metrics.csv", resume.empty() ? std::ios::trunc : std::ios::app);
  if (!csv) throw std::runtime_error("cannot write " + (dir / "metrics.csv").string());
  const auto start = std::chrono::steady_clock::now();
  const auto records = run(*ex, &csv, &std::cerr, log_every);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  csv.close();
  ex->save((dir / "final.ckpt").string());
  write_summary(*ex, records, dir / "summary.txt", seconds);
  std::ifstream summary(dir / "summary.txt");
  std::cout << summary.rdbuf();
  return 0;
}

int cmd_eval_risk(const std::string& spec, const std::string& atoms, int M, const std::string& beta) {
  const auto dist = read_atoms(atoms);
  const auto s = risk::Spectrum::parse(spec);
  std::cout << "spectral_risk " << fmt(risk::spectral_risk(s, dist)) << '\n';
  const auto disc = disc_from(spec, M);
  std::cout << "discretized_risk " << fmt(risk::spectral_risk(disc, dist)) << '\n';
  if (!beta.empty()) {
    const auto b = parse_list("beta", beta);
    risk::check_beta(disc, b);
    std::cout << "sub_risk " << fmt(risk::sub_risk(disc, b, dist)) << '\n';
  }
  return 0;
}

int cmd_discretize(const std::string& spec, int M, const std::string& out) {
  const auto disc = disc_from(spec, M);
  std::cout << "eta " << join(disc.levels()) << '\n';
  std::cout << "alpha " << join(disc.breakpoints()) << '\n';
  if (!out.empty()) {
    std::ofstream f(out);
    if (!f) throw std::runtime_error("cannot write '" + out + "'");
    f << disc.serialize();
  }
  return 0;
}

struct OracleArgs {
  std::string name;
  std::string spec = "cvar:0.75";
  int M = 2;
  std::string beta;
  std::string env = "random(4,2,1)";
  long long seed = 0;
  int channel = 0;
  int episodes = 10000;
  std::string config;
};

int cmd_oracle(const OracleArgs& a) {
  if (a.name == "conjugate") {
    const auto disc = disc_from(a.spec, a.M);
    if (a.beta.empty()) throw UsageError("oracle conjugate needs --beta");
    const auto b = parse_list("beta", a.beta);
    risk::check_beta(disc, b);
    std::cout << "conjugate_integral " << fmt(oracle::conjugate_integral(disc, b)) << '\n';
    std::cout << "closed_form " << fmt(risk::conjugate_integral(disc, b)) << '\n';
    return 0;
  }
  const auto cmdp = env::make_env(a.env, static_cast<std::uint64_t>(a.seed));
  const env::AugmentedIndex index(cmdp);
  if (a.name == "fd-gradient") {
    const auto disc = disc_from(a.spec, a.M);
    const auto b = a.beta.empty() ? Eigen::VectorXd::Zero(disc.size() - 1).eval() : parse_list("beta", a.beta);
    risk::check_beta(disc, b);
    if (a.channel < 0 || a.channel >= cmdp.num_constraints()) throw UsageError("--channel out of range");
    std::mt19937_64 rng(static_cast<std::uint64_t>(a.seed));
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd theta(index.size(), index.num_actions());
    for (Eigen::Index k = 0; k < theta.size(); ++k) theta.data()[k] = normal(rng);
    const auto grad = oracle::finite_difference(theta, [&](const Eigen::MatrixXd& th) {
      return oracle::constraint_value_from_atoms(index, th, disc, b, a.channel);
    });
    for (Eigen::Index s = 0; s < grad.rows(); ++s)
      for (Eigen::Index act = 0; act < grad.cols(); ++act)
        std::cout << "grad " << s << ' ' << act << ' ' << fmt(grad(s, act)) << '\n';
    return 0;
  }
  if (a.name == "mc-occupancy") {
    const auto d = oracle::monte_carlo_occupancy(cmdp, index, env::uniform_policy(index), a.episodes,
                                                 static_cast<std::uint64_t>(a.seed));
    for (Eigen::Index id = 0; id < d.size(); ++id) std::cout << "d " << id << ' ' << fmt(d(id)) << '\n';
    return 0;
  }
  if (a.name == "exhaustive-grid") {
    if (a.config.empty()) throw UsageError("oracle exhaustive-grid needs --config");
    const Experiment ex(load_config(a.config));
    std::vector<std::vector<risk::BetaParam>> grid;
    for (int i = 0; i < ex.grid().num_constraints(); ++i) grid.push_back(ex.grid().list(i));
    const auto g = oracle::exhaustive_grid(ex.index(), ex.discs(), grid, ex.threshold());
    for (std::size_t k = 0; k < g.per_point.size(); ++k)
      std::cout << "point " << k << ' ' << (g.per_point[k] ? fmt(*g.per_point[k]) : std::string("infeasible")) << '\n';
    std::cout << "best " << g.best << '\n';
    std::cout << "best_J_R " << fmt(g.J_R) << '\n';
    return 0;
  }
  throw UsageError("unknown oracle '" + a.name + "' (expected conjugate, fd-gradient, mc-occupancy, exhaustive-grid)");
}

int cmd_validate(const std::string& path) {
  (void)load_config(path);
  std::cout << "ok " << path << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"srcpo: spectral-risk-constrained policy optimization on tabular CMDPs"};
  app.require_subcommand(1);

  std::string config_path, mode, out_dir = "out", resume;
  long long seed = -1;
  int threads = 0, log_every = 0, epochs = 0;
  auto* run = app.add_subcommand("run", "Run an experiment");
  run->add_option("config", config_path, "Config file")->check(CLI::ExistingFile);
  run->add_option("--mode", mode, "Override the config mode")->check(CLI::IsMember({"tabular", "practical"}));
  run->add_option("--seed", seed, "Override the config seed")->check(CLI::NonNegativeNumber);
  run->add_option("--out", out_dir, "Output directory")->capture_default_str();
  run->add_option("--threads", threads, "Worker threads (default: SRCPO_THREADS or 1)")->check(CLI::NonNegativeNumber);
  run->add_option("--log-every", log_every, "Epoch line on stderr every N epochs (0: off)")->check(CLI::NonNegativeNumber);
  run->add_option("--resume", resume, "Continue from a checkpoint instead of a config")->check(CLI::ExistingFile);
  run->add_option("--epochs", epochs, "Override the total epoch count")->check(CLI::PositiveNumber);

  std::string spec, atoms, beta, disc_out;
  int M = 2;
  auto* eval = app.add_subcommand("eval-risk", "Spectral risk of an atoms file");
  eval->add_option("--spec", spec, "Spectrum descriptor, e.g. cvar:0.5")->required();
  eval->add_option("--atoms", atoms, "Lines of 'value [probability]'")->required();
  eval->add_option("--M", M, "Discretization levels")->check(CLI::Range(1, 64));
  eval->add_option("--beta", beta, "Comma-separated breakpoints for the sub-risk");

  auto* disc = app.add_subcommand("discretize", "Discretize a spectrum");
  disc->add_option("--spec", spec, "Spectrum descriptor")->required();
  disc->add_option("--M", M, "Levels")->required()->check(CLI::Range(1, 64));
  disc->add_option("--out", disc_out, "Write the discretized spectrum here");

  OracleArgs oa;
  auto* orc = app.add_subcommand("oracle", "Brute-force reference computations");
  orc->add_option("--name", oa.name, "conjugate | fd-gradient | mc-occupancy | exhaustive-grid")->required();
  orc->add_option("--spec", oa.spec, "Spectrum descriptor");
  orc->add_option("--M", oa.M, "Levels")->check(CLI::Range(1, 64));
  orc->add_option("--beta", oa.beta, "Comma-separated breakpoints");
  orc->add_option("--env", oa.env, "Environment name");
  orc->add_option("--seed", oa.seed, "Seed")->check(CLI::NonNegativeNumber);
  orc->add_option("--channel", oa.channel, "Cost channel");
  orc->add_option("--episodes", oa.episodes, "Monte-Carlo episodes")->check(CLI::PositiveNumber);
  orc->add_option("--config", oa.config, "Config file (exhaustive-grid)")->check(CLI::ExistingFile);

  std::string validate_path;
  auto* val = app.add_subcommand("validate-config", "Check a config file");
  val->add_option("config", validate_path, "Config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (run->parsed()) {
      if (config_path.empty() && resume.empty()) throw UsageError("run needs a config file or --resume");
      return cmd_run(config_path, mode, seed >= 0 ? std::optional<long long>(seed) : std::nullopt, out_dir, threads,
                     log_every, resume, epochs > 0 ? std::optional<int>(epochs) : std::nullopt);
    }
    if (eval->parsed()) return cmd_eval_risk(spec, atoms, M, beta);
    if (disc->parsed()) return cmd_discretize(spec, M, disc_out);
    if (orc->parsed()) return cmd_oracle(oa);
    if (val->parsed()) return cmd_validate(validate_path);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
