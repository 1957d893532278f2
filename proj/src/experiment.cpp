#include "srcpo/experiment.hpp"

#include "srcpo/normal.hpp"
#include "srcpo/text.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace srcpo {

// ---------------------------------------------------------------------------
// Replay buffer

ReplayBuffer::ReplayBuffer(long long capacity_steps) : capacity_(capacity_steps) {
  if (capacity_steps < 1) throw std::invalid_argument("replay buffer: capacity must be positive");
}

void ReplayBuffer::push(ReplayEntry entry) {
  steps_ += static_cast<long long>(entry.trajectory.steps.size());
  entries_.push_back(std::move(entry));
  while (steps_ > capacity_ && entries_.size() > 1) {
    steps_ -= static_cast<long long>(entries_.front().trajectory.steps.size());
    entries_.pop_front();
  }
}

const ReplayEntry& ReplayBuffer::sample(std::mt19937_64& rng) const {
  if (entries_.empty()) throw std::logic_error("replay buffer: sample from empty buffer");
  std::uniform_int_distribution<std::size_t> pick(0, entries_.size() - 1);
  return entries_[pick(rng)];
}

// ---------------------------------------------------------------------------
// Setup

std::vector<double> default_beta_values(const env::TabularCMDP& cmdp) {
  const double upper = cmdp.cost_return_max();
  std::vector<double> v;
  for (int k = 0; k < 5; ++k) v.push_back(upper * k / 4.0);
  return v;
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("SRCPO_THREADS")) {
    if (const auto n = text::to_int(env); n && *n > 0) return static_cast<int>(std::min<long long>(*n, 256));
  }
  return 1;
}

Experiment::Experiment(ExperimentConfig cfg)
    : cfg_(std::move(cfg)),
      strategy_(inner::parse_strategy(cfg_.strategy)),
      rng_(cfg_.seed),
      buffer_(cfg_.buffer_capacity) {
  validate(cfg_);
  cmdp_ = env::make_env(cfg_.env, cfg_.seed);
  const int N = cmdp_.num_constraints();
  if (N < 1) throw std::invalid_argument("experiment: environment has no cost channels");
  if (cfg_.spectrum.size() != 1 && static_cast<int>(cfg_.spectrum.size()) != N)
    throw ConfigError("spectrum", "need one descriptor or one per constraint (" + std::to_string(N) + ")");
  if (!cfg_.threshold.empty() && static_cast<int>(cfg_.threshold.size()) != N)
    throw ConfigError("threshold", "need one threshold per constraint (" + std::to_string(N) + ")");

  index_ = std::make_unique<env::AugmentedIndex>(cmdp_, static_cast<std::size_t>(cfg_.max_augmented_states));

  for (int i = 0; i < N; ++i) {
    const auto& d = cfg_.spectrum[cfg_.spectrum.size() == 1 ? 0 : static_cast<std::size_t>(i)];
    discs_.push_back(risk::discretize(risk::Spectrum::parse(d), cfg_.M));
  }
  const int breakpoints = discs_.front().size() - 1;
  for (const auto& d : discs_)
    if (d.size() - 1 != breakpoints)
      throw ConfigError("spectrum", "all constraints must discretize to the same number of levels");

  const auto values = cfg_.beta_values.empty() ? default_beta_values(cmdp_) : cfg_.beta_values;
  grid_ = outer::BetaGrid::uniform(N, breakpoints, values);

  threshold_ = cfg_.threshold.empty() ? cmdp_.threshold
                                      : Eigen::Map<const Eigen::VectorXd>(cfg_.threshold.data(),
                                                                          static_cast<Eigen::Index>(N));
  tr_ = {cfg_.lambda_max, cfg_.g_min, cfg_.g_max};

  const double entries = static_cast<double>(grid_.size()) * index_->size() * index_->num_actions();
  if (entries > static_cast<double>(cfg_.max_table_entries))
    throw BudgetError("budget: " + std::to_string(grid_.size()) + " grid points x " + std::to_string(index_->size()) +
                      " augmented states x " + std::to_string(index_->num_actions()) +
                      " actions exceeds max_table_entries = " + std::to_string(cfg_.max_table_entries));

  policies_.assign(static_cast<std::size_t>(grid_.size()), inner::SoftmaxPolicy::uniform(*index_));
  finite_ = outer::FiniteSampler::uniform(grid_.size());
  const double upper = std::max(cmdp_.cost_return_max(), 1e-12);
  stick_ = outer::StickSampler(N, breakpoints, upper, cfg_.sampler_sd);
  if (cfg_.mode == Mode::Practical)
    critic_ = dist::QuantileCritic(N + 1, index_->size(), index_->num_actions(), grid_.size(), cfg_.critic_quantiles,
                                   cfg_.critic_ensembles);
}

std::vector<inner::ConstraintSpec> Experiment::constraints(int point) const {
  const auto betas = grid_.point(point);
  std::vector<inner::ConstraintSpec> out;
  for (std::size_t i = 0; i < discs_.size(); ++i) out.push_back({discs_[i], betas[i]});
  return out;
}

inner::Evaluation Experiment::evaluate_point(int point) const {
  return inner::evaluate(*index_, policies_[static_cast<std::size_t>(point)].probabilities(), constraints(point));
}

int Experiment::modal_point() const {
  if (cfg_.mode == Mode::Tabular) return finite_.mode();
  return grid_.nearest(stick_.mean_betas());
}

double Experiment::truncation_bound() const {
  const double m = std::max(cmdp_.reward_max(), cmdp_.cost_max());
  return std::pow(cmdp_.gamma, cmdp_.horizon) * m / (1.0 - cmdp_.gamma);
}

// ---------------------------------------------------------------------------
// Epochs

MetricsRecord Experiment::run_epoch() {
  if (done()) throw std::logic_error("experiment: all epochs already ran");
  MetricsRecord r = cfg_.mode == Mode::Tabular ? tabular_epoch() : practical_epoch();
  ++epoch_;
  r.epoch = epoch_;
  r.env_steps = env_steps_;
  r.modal = modal_point();
  r.modal_beta = grid_.point(r.modal);
  const auto ev = evaluate_point(r.modal);
  r.modal_J_R = ev.J_R;
  r.modal_J_C = ev.J_C;
  return r;
}

void Experiment::summarize(MetricsRecord& r, const std::vector<inner::StepReport>& reports) const {
  double lam = 0.0, lam_max = 0.0, nu = 0.0, alpha = 0.0;
  for (const auto& rep : reports) {
    const auto& w = rep.weights;
    (w.kase == inner::Case::Satisfied ? r.satisfied : r.violated) += 1;
    r.fallback += w.fallback ? 1 : 0;
    r.skipped += rep.skipped ? 1 : 0;
    if (w.lambda.size() > 0) {
      lam += w.lambda.mean();
      lam_max = std::max(lam_max, w.lambda.maxCoeff());
    }
    nu += w.nu;
    alpha += w.alpha;
  }
  const double n = std::max<std::size_t>(1, reports.size());
  r.lambda_mean = lam / n;
  r.lambda_max = lam_max;
  r.nu_mean = nu / n;
  r.alpha_mean = alpha / n;
}

MetricsRecord Experiment::tabular_epoch() {
  MetricsRecord r;
  r.eps = inner::trust_region_size(cfg_.eps0, epoch_, decays(cfg_));
  const int G = grid_.size();
  std::vector<inner::StepReport> reports(static_cast<std::size_t>(G));

  auto work = [&](int first, int stride) {
    for (int k = first; k < G; k += stride)
      reports[static_cast<std::size_t>(k)] =
          inner::inner_step(*index_, policies_[static_cast<std::size_t>(k)], constraints(k), threshold_, strategy_,
                            r.eps, tr_);
  };
  const int T = std::min(threads_, G);
  if (T <= 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < T; ++w) pool.emplace_back(work, w, T);
    for (auto& t : pool) t.join();
  }

  Eigen::VectorXd scores(G);
  for (int k = 0; k < G; ++k) {
    const auto& rep = reports[static_cast<std::size_t>(k)];
    scores(k) = outer::target_score(rep.J_R, rep.J_C, threshold_, cfg_.K);
    r.point_J_R.push_back(rep.J_R);
    r.point_J_C.push_back(rep.J_C);
  }
  outer::finite_sampler_step(finite_, scores, cfg_.sampler_lr);
  r.entropy = outer::sampler_entropy(finite_);
  summarize(r, reports);
  r.rollout_cost = Eigen::VectorXd::Zero(threshold_.size());
  return r;
}

namespace {

// Differential entropy of N(mu, sd^2) restricted to [lo, hi].
double truncated_normal_entropy(double mu, double sd, double lo, double hi) {
  const double a = (lo - mu) / sd, b = (hi - mu) / sd;
  const double Z = std::max(normal_cdf(b) - normal_cdf(a), 1e-300);
  const double fa = normal_pdf(a), fb = normal_pdf(b);
  return std::log(std::sqrt(2.0 * std::numbers::pi * std::numbers::e) * sd * Z) + (a * fa - b * fb) / (2.0 * Z);
}

Eigen::RowVectorXd softmax_row(const Eigen::MatrixXd& theta, int id) {
  Eigen::RowVectorXd p = (theta.row(id).array() - theta.row(id).maxCoeff()).exp();
  return p / p.sum();
}

}  // namespace

void train_critic_on_episode(dist::QuantileCritic& critic, const env::Trajectory& traj, const Eigen::MatrixXd& theta,
                             int grid, int ensemble, const CriticSettings& settings) {
  const auto& steps = traj.steps;
  const int H = static_cast<int>(steps.size());
  const int N = critic.num_channels() - 1;
  const int L = critic.num_quantiles();

  std::vector<Eigen::RowVectorXd> next_pi(static_cast<std::size_t>(H));
  for (int t = 0; t + 1 < H; ++t) next_pi[static_cast<std::size_t>(t)] = softmax_row(theta, steps[static_cast<std::size_t>(t + 1)].id);

  std::vector<dist::QuantileSample> batch;
  std::vector<double> values(static_cast<std::size_t>(H));
  std::vector<risk::ReturnDistribution> boot(static_cast<std::size_t>(H));
  for (int ch = 0; ch <= N; ++ch) {
    for (int t = 0; t < H; ++t) {
      const auto& s = steps[static_cast<std::size_t>(t)];
      values[static_cast<std::size_t>(t)] = ch < N ? s.costs(ch) : s.reward;
      if (t + 1 == H) {
        boot[static_cast<std::size_t>(t)] = risk::ReturnDistribution::point(0.0);
        continue;
      }
      const int next = steps[static_cast<std::size_t>(t + 1)].id;
      const auto& p = next_pi[static_cast<std::size_t>(t)];
      std::vector<risk::Atom> mix;
      mix.reserve(static_cast<std::size_t>(p.size() * L));
      for (int a = 0; a < p.size(); ++a)
        for (double z : critic.atoms(ensemble, ch, next, a, grid)) mix.push_back({z, p(a) / L});
      boot[static_cast<std::size_t>(t)] = risk::ReturnDistribution(std::move(mix));
    }
    const auto targets = dist::td_lambda_targets(values, boot, settings.td_lambda, settings.gamma,
                                                 settings.target_quantiles);
    for (int t = 0; t < H; ++t) {
      const auto& s = steps[static_cast<std::size_t>(t)];
      batch.push_back({ensemble, ch, s.id, s.action, grid, targets[static_cast<std::size_t>(t)]});
    }
  }
  dist::quantile_regression_update(critic, batch, settings.lr);
}

inner::Evaluation Experiment::critic_evaluation(int point, const Eigen::VectorXd& d,
                                                const std::vector<risk::BetaParam>& betas) const {
  const auto& idx = *index_;
  const int n = idx.size(), A = idx.num_actions();
  const int N = static_cast<int>(discs_.size());
  inner::Evaluation ev;
  ev.pi = policies_[static_cast<std::size_t>(point)].probabilities();
  ev.d = d;

  std::vector<char> needed(static_cast<std::size_t>(n), 0);
  for (int id = 0; id < n; ++id) needed[static_cast<std::size_t>(id)] = d(id) > 0.0;
  for (const auto& [id, p] : idx.initial()) needed[static_cast<std::size_t>(id)] = 1;

  auto finish = [&](dist::ValueTables& v, bool risk_channel) {
    v.V = (ev.pi.array() * v.Q.array()).rowwise().sum();
    v.A = v.Q.colwise() - v.V;
    if (risk_channel)
      for (int id = 0; id < n; ++id) v.A.row(id) /= idx.b(id);
    v.J = 0.0;
    for (const auto& [id, p] : idx.initial()) v.J += p * v.V(id);
  };

  ev.reward.Q = Eigen::MatrixXd::Zero(n, A);
  for (int id = 0; id < n; ++id) {
    if (!needed[static_cast<std::size_t>(id)] || idx.is_terminal(id)) continue;
    for (int a = 0; a < A; ++a) ev.reward.Q(id, a) = critic_.quantiles(N, id, a, point).mean();
  }
  finish(ev.reward, false);
  ev.J_R = ev.reward.J;

  ev.J_C.resize(N);
  for (int i = 0; i < N; ++i) {
    const risk::HingeFunction g(discs_[static_cast<std::size_t>(i)], betas[static_cast<std::size_t>(i)]);
    dist::ValueTables v;
    v.Q = Eigen::MatrixXd::Zero(n, A);
    for (int id = 0; id < n; ++id) {
      if (!needed[static_cast<std::size_t>(id)]) continue;
      const double b = idx.b(id);
      const double e = idx.state(id).e(i);
      if (idx.is_terminal(id)) {
        v.Q.row(id).setConstant(g(b * e));
        continue;
      }
      for (int a = 0; a < A; ++a) {
        const Eigen::VectorXd q = critic_.quantiles(i, id, a, point);
        double acc = 0.0;
        for (Eigen::Index l = 0; l < q.size(); ++l) acc += g(b * (e + q(l)));
        v.Q(id, a) = acc / static_cast<double>(q.size());
      }
    }
    finish(v, true);
    ev.J_C(i) = v.J + g.conjugate_integral();
    ev.risk.push_back(std::move(v));
  }
  return ev;
}

MetricsRecord Experiment::practical_epoch() {
  MetricsRecord r;
  r.eps = inner::trust_region_size(cfg_.eps0, epoch_, decays(cfg_));
  const int N = static_cast<int>(discs_.size());
  const int G = grid_.size();
  const auto& idx = *index_;
  const double gamma = idx.gamma();
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  // Rollouts.
  std::vector<outer::StickSample> draws;
  std::vector<int> draw_points;
  std::vector<Eigen::VectorXd> occ(static_cast<std::size_t>(G));
  std::vector<int> visits(static_cast<std::size_t>(G), 0);
  r.rollout_cost = Eigen::VectorXd::Zero(N);
  for (int e = 0; e < cfg_.episodes; ++e) {
    auto s = stick_.sample(rng_);
    const int snapped = grid_.nearest(s.betas);
    int k = snapped;
    if (cfg_.epsilon > 0.0 && unif(rng_) < cfg_.epsilon) k = std::min(G - 1, static_cast<int>(unif(rng_) * G));
    draws.push_back(std::move(s));
    draw_points.push_back(snapped);

    auto traj = env::rollout(cmdp_, idx, policies_[static_cast<std::size_t>(k)].probabilities(), rng_);
    auto& d = occ[static_cast<std::size_t>(k)];
    if (d.size() == 0) d = Eigen::VectorXd::Zero(idx.size());
    double disc = 1.0;
    for (const auto& st : traj.steps) {
      d(st.id) += (1.0 - gamma) * disc;
      r.rollout_reward += disc * st.reward;
      r.rollout_cost += disc * st.costs;
      disc *= gamma;
    }
    d(traj.terminal_id) += (1.0 - gamma) * disc;
    ++visits[static_cast<std::size_t>(k)];
    env_steps_ += static_cast<long long>(traj.steps.size());
    buffer_.push({k, std::move(traj)});
  }
  r.rollout_reward /= cfg_.episodes;
  r.rollout_cost /= cfg_.episodes;
  for (int k = 0; k < G; ++k)
    if (visits[static_cast<std::size_t>(k)] > 0) occ[static_cast<std::size_t>(k)] /= visits[static_cast<std::size_t>(k)];

  // Critic, policy and sampler updates.
  std::vector<inner::StepReport> reports;
  for (int u = 0; u < cfg_.updates; ++u) {
    for (int m = 0; m < critic_.num_ensembles(); ++m) {
      const auto& entry = buffer_.sample(rng_);
      train_critic_on_episode(critic_, entry.trajectory, policies_[static_cast<std::size_t>(entry.grid)].theta,
                              entry.grid, m, {cfg_.td_lambda, gamma, cfg_.target_quantiles, cfg_.critic_lr});
    }

    for (int k = 0; k < G; ++k) {
      if (visits[static_cast<std::size_t>(k)] == 0) continue;
      const auto ev = critic_evaluation(k, occ[static_cast<std::size_t>(k)], grid_.point(k));
      reports.push_back(inner::apply_update(ev, policies_[static_cast<std::size_t>(k)], threshold_, strategy_, r.eps,
                                            tr_, gamma));
    }

    std::vector<outer::ScoredSample> batch;
    const Eigen::VectorXd none = Eigen::VectorXd::Zero(idx.size());
    for (std::size_t j = 0; j < draws.size(); ++j) {
      const auto ev = critic_evaluation(draw_points[j], none, draws[j].betas);
      batch.push_back({draws[j].grad_log_density, outer::target_score(ev.J_R, ev.J_C, threshold_, cfg_.K)});
    }
    outer::stick_sampler_step(stick_, batch, cfg_.sampler_lr);
  }
  summarize(r, reports);

  const Eigen::MatrixXd mu = stick_.means();
  for (Eigen::Index i = 0; i < mu.rows(); ++i)
    for (Eigen::Index j = 0; j < mu.cols(); ++j)
      r.entropy += truncated_normal_entropy(mu(i, j), stick_.sd(), 0.0, stick_.upper());

  if (G <= kMaxPointColumns) {
    const Eigen::VectorXd none = Eigen::VectorXd::Zero(idx.size());
    for (int k = 0; k < G; ++k) {
      const auto ev = critic_evaluation(k, none, grid_.point(k));
      r.point_J_R.push_back(ev.J_R);
      r.point_J_C.push_back(ev.J_C);
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string beta_text(const std::vector<risk::BetaParam>& betas) {
  std::string s;
  for (std::size_t i = 0; i < betas.size(); ++i) {
    if (i) s += '|';
    for (Eigen::Index j = 0; j < betas[i].size(); ++j) s += (j ? " " : "") + text::format12(betas[i](j));
  }
  return s;
}

}  // namespace

std::string Experiment::csv_header() const {
  const int N = static_cast<int>(discs_.size());
  std::string h = "epoch,env_steps,eps,entropy,modal,modal_beta,J_R";
  for (int i = 1; i <= N; ++i) h += ",J_C" + std::to_string(i);
  h += ",satisfied,violated,fallback,skipped,lambda_mean,lambda_max,nu_mean,alpha_mean,rollout_reward";
  for (int i = 1; i <= N; ++i) h += ",rollout_cost" + std::to_string(i);
  if (grid_.size() <= kMaxPointColumns)
    for (int k = 0; k < grid_.size(); ++k) {
      h += ",J_R_p" + std::to_string(k);
      for (int i = 1; i <= N; ++i) h += ",J_C" + std::to_string(i) + "_p" + std::to_string(k);
    }
  return h + '\n';
}

std::string Experiment::csv_row(const MetricsRecord& r) const {
  auto f = [](double v) { return text::format12(v); };
  std::string s = std::to_string(r.epoch) + ',' + std::to_string(r.env_steps) + ',' + f(r.eps) + ',' + f(r.entropy) +
                  ',' + std::to_string(r.modal) + ',' + beta_text(r.modal_beta) + ',' + f(r.modal_J_R);
  for (Eigen::Index i = 0; i < r.modal_J_C.size(); ++i) s += ',' + f(r.modal_J_C(i));
  s += ',' + std::to_string(r.satisfied) + ',' + std::to_string(r.violated) + ',' + std::to_string(r.fallback) + ',' +
       std::to_string(r.skipped) + ',' + f(r.lambda_mean) + ',' + f(r.lambda_max) + ',' + f(r.nu_mean) + ',' +
       f(r.alpha_mean) + ',' + f(r.rollout_reward);
  for (Eigen::Index i = 0; i < r.rollout_cost.size(); ++i) s += ',' + f(r.rollout_cost(i));
  if (grid_.size() <= kMaxPointColumns)
    for (std::size_t k = 0; k < r.point_J_R.size(); ++k) {
      s += ',' + f(r.point_J_R[k]);
      for (Eigen::Index i = 0; i < r.point_J_C[k].size(); ++i) s += ',' + f(r.point_J_C[k](i));
    }
  return s + '\n';
}

std::vector<MetricsRecord> run(Experiment& ex, std::ostream* csv, std::ostream* log, int log_every) {
  std::vector<MetricsRecord> out;
  if (csv && ex.epoch() == 0) *csv << ex.csv_header();
  const auto start = std::chrono::steady_clock::now();
  while (!ex.done()) {
    auto r = ex.run_epoch();
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (csv) *csv << ex.csv_row(r);
    if (log && log_every > 0 && (r.epoch % log_every == 0 || ex.done())) {
      *log << "epoch " << r.epoch << " J_R " << text::format12(r.modal_J_R);
      for (Eigen::Index i = 0; i < r.modal_J_C.size(); ++i) *log << " J_C" << i + 1 << ' ' << text::format12(r.modal_J_C(i));
      *log << " modal " << r.modal << " entropy " << text::format12(r.entropy) << '\n';
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace srcpo
