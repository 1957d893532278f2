#include "srcpo/env.hpp"

#include "srcpo/text.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

namespace srcpo::env {

// ---------------------------------------------------------------------------
// TabularCMDP

double TabularCMDP::reward_max() const {
  double m = 0.0;
  for (const auto& r : reward) m = std::max(m, r.cwiseAbs().maxCoeff());
  return m;
}

double TabularCMDP::cost_max() const {
  double m = 0.0;
  for (const auto& channel : cost)
    for (const auto& c : channel) m = std::max(m, c.maxCoeff());
  return m;
}

double TabularCMDP::cost_return_max() const {
  return cost_max() * (1.0 - std::pow(gamma, horizon)) / (1.0 - gamma);
}

void TabularCMDP::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("cmdp: " + what); };
  if (num_states < 1 || num_actions < 1) fail("need at least one state and one action");
  if (!(gamma > 0.0 && gamma < 1.0)) fail("gamma must lie in (0, 1)");
  if (horizon < 0) fail("horizon must be non-negative");
  if (initial.size() != num_states) fail("initial distribution has the wrong length");
  if ((initial.array() < 0.0).any() || std::abs(initial.sum() - 1.0) > 1e-12)
    fail("initial distribution must be non-negative and sum to 1");
  if (static_cast<int>(transition.size()) != num_actions ||
      static_cast<int>(reward.size()) != num_actions)
    fail("transition and reward tables need one matrix per action");
  if (cost.empty()) fail("need at least one cost channel");
  if (threshold.size() != num_constraints()) fail("need one threshold per cost channel");
  for (int a = 0; a < num_actions; ++a) {
    const auto& P = transition[static_cast<std::size_t>(a)];
    if (P.rows() != num_states || P.cols() != num_states) fail("transition matrix has the wrong shape");
    if ((P.array() < 0.0).any()) fail("negative transition probability");
    for (int s = 0; s < num_states; ++s)
      if (std::abs(P.row(s).sum() - 1.0) > 1e-12)
        fail("P(.|s=" + std::to_string(s) + ",a=" + std::to_string(a) + ") does not sum to 1");
    const auto& R = reward[static_cast<std::size_t>(a)];
    if (R.rows() != num_states || R.cols() != num_states) fail("reward matrix has the wrong shape");
    if (!R.allFinite()) fail("non-finite reward");
  }
  for (const auto& channel : cost) {
    if (static_cast<int>(channel.size()) != num_actions) fail("cost channel needs one matrix per action");
    for (const auto& C : channel) {
      if (C.rows() != num_states || C.cols() != num_states) fail("cost matrix has the wrong shape");
      if (!C.allFinite() || (C.array() < 0.0).any()) fail("costs must be finite and non-negative");
    }
  }
}

// ---------------------------------------------------------------------------
// Augmented states

AugmentedState augment_step(const AugmentedState& current, int next_state,
                            const Eigen::VectorXd& costs, double gamma) {
  if (costs.size() != current.e.size())
    throw std::invalid_argument("augment_step: cost vector has the wrong length");
  return {next_state, (costs + current.e) / gamma, current.t + 1};
}

AugmentedIndex::Key AugmentedIndex::key_of(const AugmentedState& s) const {
  Key k{s.t, s.s, {}};
  k.e.reserve(static_cast<std::size_t>(s.e.size()));
  for (Eigen::Index i = 0; i < s.e.size(); ++i) k.e.push_back(std::llround(s.e(i) * 1e12));
  return k;
}

AugmentedIndex::AugmentedIndex(const TabularCMDP& cmdp, std::size_t cap)
    : num_actions_(cmdp.num_actions), horizon_(cmdp.horizon), gamma_(cmdp.gamma) {
  cmdp.validate();
  const int N = cmdp.num_constraints();
  const int S = cmdp.num_states;
  const int A = cmdp.num_actions;
  const double e_limit = 9.0e6;  // keeps llround(e * 1e12) inside int64

  discount_.resize(static_cast<std::size_t>(horizon_) + 1);
  for (int t = 0; t <= horizon_; ++t) discount_[static_cast<std::size_t>(t)] = std::pow(gamma_, t);

  std::map<Key, int> ids;
  auto intern = [&](AugmentedState st) {
    auto key = key_of(st);
    auto [it, inserted] = ids.try_emplace(std::move(key), static_cast<int>(states_.size()));
    if (inserted) {
      if (states_.size() >= cap)
        throw std::runtime_error("augmented state space exceeds the cap of " + std::to_string(cap) +
                                 " states; use a shorter horizon or coarser costs");
      states_.push_back(std::move(st));
    }
    return it->second;
  };

  level_start_.push_back(0);
  for (int s = 0; s < S; ++s) {
    if (cmdp.initial(s) <= 0.0) continue;
    const int id = intern({s, Eigen::VectorXd::Zero(N), 0});
    initial_.emplace_back(id, cmdp.initial(s));
  }
  for (int t = 0; t < horizon_; ++t) {
    const int begin = level_start_.back();
    const int end = static_cast<int>(states_.size());
    level_start_.push_back(end);
    for (int id = begin; id < end; ++id) {
      for (int a = 0; a < A; ++a) {
        std::vector<Successor> out;
        for (int sp = 0; sp < S; ++sp) {
          const double p = cmdp.transition[static_cast<std::size_t>(a)](states_[static_cast<std::size_t>(id)].s, sp);
          if (p <= 0.0) continue;
          const int s = states_[static_cast<std::size_t>(id)].s;
          Eigen::VectorXd c(N);
          for (int i = 0; i < N; ++i) c(i) = cmdp.cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)](s, sp);
          auto next = augment_step(states_[static_cast<std::size_t>(id)], sp, c, gamma_);
          if ((next.e.array() > e_limit).any())
            throw std::runtime_error("augmented cost state too large to key; reduce the horizon");
          const int nid = intern(std::move(next));
          out.push_back({nid, sp, p, cmdp.reward[static_cast<std::size_t>(a)](s, sp), std::move(c)});
        }
        succ_.push_back(std::move(out));
      }
    }
  }
  level_start_.push_back(static_cast<int>(states_.size()));
  // Terminal level: no successors.
  succ_.resize(states_.size() * static_cast<std::size_t>(A));

  lookup_.reserve(ids.size());
  for (auto& [k, v] : ids) lookup_.emplace_back(k, v);
}

std::optional<int> AugmentedIndex::find(const AugmentedState& s) const {
  const auto key = key_of(s);
  const auto it = std::lower_bound(lookup_.begin(), lookup_.end(), key,
                                   [](const auto& entry, const Key& k) { return entry.first < k; });
  if (it == lookup_.end() || !(it->first == key)) return std::nullopt;
  return it->second;
}

std::span<const Successor> AugmentedIndex::successors(int id, int a) const {
  return succ_[static_cast<std::size_t>(id) * static_cast<std::size_t>(num_actions_) + static_cast<std::size_t>(a)];
}

PolicyTable uniform_policy(const AugmentedIndex& index) {
  return PolicyTable::Constant(index.size(), index.num_actions(), 1.0 / index.num_actions());
}

// ---------------------------------------------------------------------------
// Simulation and occupancy

namespace {

int sample_index(std::mt19937_64& rng, const auto& weights, int n) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  double acc = 0.0;
  for (int k = 0; k < n; ++k) {
    acc += weights(k);
    if (u < acc) return k;
  }
  // Round-off: fall back to the last positive weight.
  for (int k = n - 1; k >= 0; --k)
    if (weights(k) > 0.0) return k;
  return n - 1;
}

}  // namespace

Trajectory rollout(const TabularCMDP& cmdp, const AugmentedIndex& index, const PolicyTable& policy,
                   std::mt19937_64& rng) {
  if (policy.rows() != index.size() || policy.cols() != index.num_actions())
    throw std::invalid_argument("rollout: policy table shape does not match the augmented index");
  Trajectory traj;
  traj.steps.reserve(static_cast<std::size_t>(cmdp.horizon));

  Eigen::VectorXd rho(static_cast<Eigen::Index>(index.initial().size()));
  for (std::size_t k = 0; k < index.initial().size(); ++k) rho(static_cast<Eigen::Index>(k)) = index.initial()[k].second;
  int id = index.initial()[static_cast<std::size_t>(sample_index(rng, rho, static_cast<int>(rho.size())))].first;

  for (int t = 0; t < cmdp.horizon; ++t) {
    const int a = sample_index(rng, policy.row(id), index.num_actions());
    const auto succ = index.successors(id, a);
    Eigen::VectorXd p(static_cast<Eigen::Index>(succ.size()));
    for (std::size_t k = 0; k < succ.size(); ++k) p(static_cast<Eigen::Index>(k)) = succ[k].probability;
    const auto& next = succ[static_cast<std::size_t>(sample_index(rng, p, static_cast<int>(p.size())))];
    traj.steps.push_back({id, index.state(id), a, next.reward, next.costs});
    id = next.next;
  }
  traj.terminal_id = id;
  return traj;
}

Trajectory rollout(const TabularCMDP& cmdp, const AugmentedIndex& index, const PolicyTable& policy,
                   std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return rollout(cmdp, index, policy, rng);
}

Eigen::VectorXd visitation(const AugmentedIndex& index, const PolicyTable& policy) {
  if (policy.rows() != index.size() || policy.cols() != index.num_actions())
    throw std::invalid_argument("visitation: policy table shape does not match the augmented index");
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(index.size());
  for (const auto& [id, p] : index.initial()) mass(id) += p;
  for (int t = 0; t < index.horizon(); ++t) {
    for (int id = index.level_begin(t); id < index.level_begin(t + 1); ++id) {
      if (mass(id) == 0.0) continue;
      for (int a = 0; a < index.num_actions(); ++a) {
        const double w = mass(id) * policy(id, a);
        if (w == 0.0) continue;
        for (const auto& s : index.successors(id, a)) mass(s.next) += w * s.probability;
      }
    }
  }
  return mass;
}

Eigen::VectorXd occupancy(const AugmentedIndex& index, const PolicyTable& policy) {
  Eigen::VectorXd d = visitation(index, policy);
  for (int id = 0; id < index.size(); ++id) d(id) *= (1.0 - index.gamma()) * index.b(id);
  return d;
}

Eigen::VectorXd normalized_occupancy(const AugmentedIndex& index, const PolicyTable& policy) {
  Eigen::VectorXd d = occupancy(index, policy);
  return d / d.sum();
}

// ---------------------------------------------------------------------------
// Built-in environments

TabularCMDP random_cmdp(int num_states, int num_actions, int num_constraints, std::uint64_t seed,
                        int horizon, double gamma) {
  if (num_states < 1 || num_actions < 1 || num_constraints < 1)
    throw std::invalid_argument("random cmdp: sizes must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<int> level(0, 2);

  TabularCMDP m;
  m.num_states = num_states;
  m.num_actions = num_actions;
  m.gamma = gamma;
  m.horizon = horizon;
  m.initial = Eigen::VectorXd(num_states);
  for (int s = 0; s < num_states; ++s) m.initial(s) = 0.1 + unif(rng);
  m.initial /= m.initial.sum();
  for (int a = 0; a < num_actions; ++a) {
    Eigen::MatrixXd P(num_states, num_states), R(num_states, num_states);
    for (int s = 0; s < num_states; ++s) {
      for (int sp = 0; sp < num_states; ++sp) {
        P(s, sp) = 0.05 + unif(rng);
        R(s, sp) = 2.0 * unif(rng) - 1.0;
      }
      P.row(s) /= P.row(s).sum();
    }
    m.transition.push_back(std::move(P));
    m.reward.push_back(std::move(R));
  }
  // Costs on a {0, 0.5, 1} lattice keep the augmented space finite and small.
  m.cost.resize(static_cast<std::size_t>(num_constraints));
  for (auto& channel : m.cost) {
    for (int a = 0; a < num_actions; ++a) {
      Eigen::MatrixXd C(num_states, num_states);
      for (int s = 0; s < num_states; ++s)
        for (int sp = 0; sp < num_states; ++sp) C(s, sp) = 0.5 * level(rng);
      channel.push_back(std::move(C));
    }
  }
  m.threshold = Eigen::VectorXd::Constant(num_constraints, 1.0);
  m.validate();
  return m;
}

TabularCMDP hazard_chain(int length) {
  if (length < 2) throw std::invalid_argument("hazard-chain: length must be at least 2");
  // State 2*p + lane: lane 1 marks that the step into position p hit the hazard.
  constexpr double kHazard = 0.3;
  constexpr double kFastReward = 1.0;
  constexpr double kSafeReward = 0.2;
  const int S = 2 * length;

  TabularCMDP m;
  m.num_states = S;
  m.num_actions = 2;
  m.gamma = 0.9;
  m.horizon = length;
  m.initial = Eigen::VectorXd::Zero(S);
  m.initial(0) = 1.0;
  Eigen::MatrixXd P_safe = Eigen::MatrixXd::Zero(S, S), P_fast = Eigen::MatrixXd::Zero(S, S);
  Eigen::MatrixXd R_safe = Eigen::MatrixXd::Zero(S, S), R_fast = Eigen::MatrixXd::Zero(S, S);
  Eigen::MatrixXd C_safe = Eigen::MatrixXd::Zero(S, S), C_fast = Eigen::MatrixXd::Zero(S, S);
  for (int s = 0; s < S; ++s) {
    const int next = std::min(s / 2 + 1, length - 1);
    const int clear = 2 * next, hit = 2 * next + 1;
    P_safe(s, clear) = 1.0;
    R_safe(s, clear) = kSafeReward;
    P_fast(s, clear) = 1.0 - kHazard;
    P_fast(s, hit) = kHazard;
    R_fast(s, clear) = kFastReward;
    R_fast(s, hit) = kFastReward;
    C_fast(s, hit) = 1.0;
  }
  m.transition = {P_safe, P_fast};
  m.reward = {R_safe, R_fast};
  m.cost = {{C_safe, C_fast}};
  m.threshold = Eigen::VectorXd::Constant(1, 1.0);
  m.validate();
  return m;
}

TabularCMDP two_hazard_grid() {
  // 3x3 grid, actions right/down with a 0.2 slip into the other direction.
  // Every monotone path crosses the anti-diagonal once: the centre trips
  // channel 0, the two corners trip channel 1.
  constexpr int W = 3;
  constexpr double kSlip = 0.2;
  const int S = W * W;
  auto cell = [](int r, int c) { return r * W + c; };

  TabularCMDP m;
  m.num_states = S;
  m.num_actions = 2;
  m.gamma = 0.9;
  m.horizon = 4;
  m.initial = Eigen::VectorXd::Zero(S);
  m.initial(0) = 1.0;

  Eigen::VectorXd enter_reward = Eigen::VectorXd::Zero(S);
  enter_reward(cell(1, 1)) = 1.0;
  enter_reward(cell(0, 2)) = 0.5;
  enter_reward(cell(2, 0)) = 0.5;
  enter_reward(cell(2, 2)) = 1.0;

  m.cost.assign(2, {});
  for (int a = 0; a < 2; ++a) {
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(S, S), R = Eigen::MatrixXd::Zero(S, S);
    Eigen::MatrixXd C0 = Eigen::MatrixXd::Zero(S, S), C1 = Eigen::MatrixXd::Zero(S, S);
    for (int r = 0; r < W; ++r) {
      for (int c = 0; c < W; ++c) {
        const int s = cell(r, c);
        if (s == cell(2, 2)) {
          P(s, s) = 1.0;
          continue;
        }
        const int right = c + 1 < W ? cell(r, c + 1) : -1;
        const int down = r + 1 < W ? cell(r + 1, c) : -1;
        int intended = a == 0 ? right : down;
        int slipped = a == 0 ? down : right;
        if (intended < 0) std::swap(intended, slipped);
        if (slipped < 0) {
          P(s, intended) = 1.0;
        } else {
          P(s, intended) += 1.0 - kSlip;
          P(s, slipped) += kSlip;
        }
      }
    }
    for (int s = 0; s < S; ++s) {
      for (int sp = 0; sp < S; ++sp) {
        if (P(s, sp) <= 0.0 || s == sp) continue;
        R(s, sp) = enter_reward(sp);
        if (sp == cell(1, 1)) C0(s, sp) = 1.0;
        if (sp == cell(0, 2) || sp == cell(2, 0)) C1(s, sp) = 1.0;
      }
    }
    m.transition.push_back(std::move(P));
    m.reward.push_back(std::move(R));
    m.cost[0].push_back(std::move(C0));
    m.cost[1].push_back(std::move(C1));
  }
  m.threshold = Eigen::VectorXd::Constant(2, 0.5);
  m.validate();
  return m;
}

TabularCMDP make_env(std::string_view name, std::uint64_t seed) {
  name = text::trim(name);
  auto args_of = [&](std::string_view prefix) -> std::optional<std::vector<long long>> {
    if (name.substr(0, prefix.size()) != prefix || name.size() < prefix.size() + 2) return std::nullopt;
    if (name[prefix.size()] != '(' || name.back() != ')') return std::nullopt;
    std::vector<long long> out;
    for (auto f : text::split(name.substr(prefix.size() + 1, name.size() - prefix.size() - 2), ',')) {
      const auto v = text::to_int(f);
      if (!v) throw std::invalid_argument("environment '" + std::string(name) + "': bad argument '" + std::string(f) + "'");
      out.push_back(*v);
    }
    return out;
  };
  if (name == "two-hazard-grid") return two_hazard_grid();
  if (auto args = args_of("hazard-chain")) {
    if (args->size() != 1) throw std::invalid_argument("hazard-chain takes one argument: hazard-chain(L)");
    return hazard_chain(static_cast<int>((*args)[0]));
  }
  if (auto args = args_of("random")) {
    if (args->size() != 3) throw std::invalid_argument("random takes three arguments: random(S,A,N)");
    return random_cmdp(static_cast<int>((*args)[0]), static_cast<int>((*args)[1]),
                       static_cast<int>((*args)[2]), seed);
  }
  throw std::invalid_argument("unknown environment '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Text serialization

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

void write_row(std::ostringstream& out, const Eigen::MatrixXd& m, int row) {
  for (int c = 0; c < m.cols(); ++c) out << ' ' << text::format_exact(m(row, c));
}

}  // namespace

std::string serialize(const TabularCMDP& m) {
  m.validate();
  std::ostringstream out;
  out << "srcpo-cmdp 1\n";
  out << "states " << m.num_states << "\nactions " << m.num_actions << "\nconstraints "
      << m.num_constraints() << "\ngamma " << text::format_exact(m.gamma) << "\nhorizon " << m.horizon
      << "\ninitial";
  for (int s = 0; s < m.num_states; ++s) out << ' ' << text::format_exact(m.initial(s));
  out << "\nthreshold";
  for (int i = 0; i < m.num_constraints(); ++i) out << ' ' << text::format_exact(m.threshold(i));
  out << '\n';
  for (int a = 0; a < m.num_actions; ++a)
    for (int s = 0; s < m.num_states; ++s) {
      out << "transition " << a << ' ' << s;
      write_row(out, m.transition[static_cast<std::size_t>(a)], s);
      out << "\nreward " << a << ' ' << s;
      write_row(out, m.reward[static_cast<std::size_t>(a)], s);
      out << '\n';
    }
  for (int i = 0; i < m.num_constraints(); ++i)
    for (int a = 0; a < m.num_actions; ++a)
      for (int s = 0; s < m.num_states; ++s) {
        out << "cost " << i << ' ' << a << ' ' << s;
        write_row(out, m.cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)], s);
        out << '\n';
      }
  std::string body = out.str();
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(body)));
  return body + "checksum " + buf + "\n";
}

TabularCMDP deserialize(std::string_view input) {
  auto fail = [](int line, const std::string& what) -> void {
    throw std::invalid_argument("cmdp file line " + std::to_string(line) + ": " + what);
  };
  const auto pos = input.rfind("checksum ");
  if (pos == std::string_view::npos) fail(0, "missing checksum line");
  const auto body = input.substr(0, pos);
  const auto stated = text::trim(input.substr(pos + 9));
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(body)));
  if (stated != buf) fail(0, "checksum mismatch");

  TabularCMDP m;
  int N = -1;
  int lineno = 0;
  auto numbers = [&](const std::vector<std::string_view>& f, std::size_t from, std::size_t count) {
    if (f.size() != from + count) fail(lineno, "expected " + std::to_string(count) + " values");
    Eigen::VectorXd v(static_cast<Eigen::Index>(count));
    for (std::size_t k = 0; k < count; ++k) {
      const auto x = text::to_double(f[from + k]);
      if (!x) fail(lineno, "bad number '" + std::string(f[from + k]) + "'");
      v(static_cast<Eigen::Index>(k)) = *x;
    }
    return v;
  };
  auto index_at = [&](const std::vector<std::string_view>& f, std::size_t k, int limit) {
    const auto v = k < f.size() ? text::to_int(f[k]) : std::nullopt;
    if (!v || *v < 0 || *v >= limit) fail(lineno, "index out of range");
    return static_cast<int>(*v);
  };
  auto require_shape = [&]() {
    if (m.num_states <= 0 || m.num_actions <= 0 || N <= 0) fail(lineno, "table before header");
    if (m.transition.empty()) {
      m.transition.assign(static_cast<std::size_t>(m.num_actions), Eigen::MatrixXd::Zero(m.num_states, m.num_states));
      m.reward = m.transition;
      m.cost.assign(static_cast<std::size_t>(N), m.transition);
    }
  };

  bool magic = false;
  for (auto line : text::split(body, '\n')) {
    ++lineno;
    if (line.empty() || line.front() == '#') continue;
    const auto f = text::split_ws(line);
    const auto tag = f[0];
    if (!magic) {
      if (f.size() != 2 || tag != "srcpo-cmdp") fail(lineno, "not a cmdp file");
      if (f[1] != "1") fail(lineno, "unsupported cmdp file version " + std::string(f[1]));
      magic = true;
      continue;
    }
    auto scalar_int = [&]() {
      const auto v = f.size() == 2 ? text::to_int(f[1]) : std::nullopt;
      if (!v) fail(lineno, "expected an integer");
      return static_cast<int>(*v);
    };
    if (tag == "states") m.num_states = scalar_int();
    else if (tag == "actions") m.num_actions = scalar_int();
    else if (tag == "constraints") N = scalar_int();
    else if (tag == "horizon") m.horizon = scalar_int();
    else if (tag == "gamma") m.gamma = numbers(f, 1, 1)(0);
    else if (tag == "initial") m.initial = numbers(f, 1, static_cast<std::size_t>(std::max(m.num_states, 0)));
    else if (tag == "threshold") m.threshold = numbers(f, 1, static_cast<std::size_t>(std::max(N, 0)));
    else if (tag == "transition" || tag == "reward") {
      require_shape();
      const int a = index_at(f, 1, m.num_actions), s = index_at(f, 2, m.num_states);
      auto& M = (tag == "transition" ? m.transition : m.reward)[static_cast<std::size_t>(a)];
      M.row(s) = numbers(f, 3, static_cast<std::size_t>(m.num_states)).transpose();
    } else if (tag == "cost") {
      require_shape();
      const int i = index_at(f, 1, N), a = index_at(f, 2, m.num_actions), s = index_at(f, 3, m.num_states);
      m.cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)].row(s) =
          numbers(f, 4, static_cast<std::size_t>(m.num_states)).transpose();
    } else {
      fail(lineno, "unknown record '" + std::string(tag) + "'");
    }
  }
  if (!magic) fail(0, "empty cmdp file");
  m.validate();
  return m;
}

}  // namespace srcpo::env
