#include "srcpo/experiment.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace srcpo {

namespace {

constexpr char kMagic[6] = {'S', 'R', 'C', 'P', 'O', '1'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  template <typename T>
  void pod(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void doubles(const double* p, std::size_t n) {
    pod<std::uint64_t>(n);
    out_.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
  }
  void matrix(const Eigen::MatrixXd& m) {
    pod<std::int64_t>(m.rows());
    pod<std::int64_t>(m.cols());
    const Eigen::MatrixXd c = m;  // column-major copy
    out_.write(reinterpret_cast<const char*>(c.data()), static_cast<std::streamsize>(c.size() * sizeof(double)));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void raw(char* p, std::size_t n, const char* what) {
    in_.read(p, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw CheckpointError(std::string("checkpoint truncated while reading ") + what);
  }
  template <typename T>
  T pod(const char* what) {
    T v{};
    raw(reinterpret_cast<char*>(&v), sizeof v, what);
    return v;
  }
  std::string str(const char* what) {
    const auto n = pod<std::uint64_t>(what);
    if (n > (1ull << 32)) throw CheckpointError(std::string("checkpoint corrupt: implausible length for ") + what);
    std::string s(n, '\0');
    raw(s.data(), n, what);
    return s;
  }
  void doubles(std::vector<double>& v, std::size_t expected, const char* what) {
    const auto n = pod<std::uint64_t>(what);
    if (n != expected) throw CheckpointError(std::string("checkpoint does not match its config: ") + what);
    v.resize(n);
    raw(reinterpret_cast<char*>(v.data()), n * sizeof(double), what);
  }
  template <typename M>
  void matrix(M& m, const char* what) {
    const auto r = pod<std::int64_t>(what), c = pod<std::int64_t>(what);
    if (r != m.rows() || c != m.cols())
      throw CheckpointError(std::string("checkpoint does not match its config: ") + what + " shape");
    raw(reinterpret_cast<char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(double), what);
  }

 private:
  std::istream& in_;
};

}  // namespace

void Experiment::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  Writer w(out);
  out.write(kMagic, sizeof kMagic);
  w.pod(kVersion);
  w.str(serialize(cfg_));
  w.pod<std::int32_t>(epoch_);
  w.pod<std::int64_t>(env_steps_);
  std::ostringstream rng;
  rng << rng_;
  w.str(rng.str());

  w.pod<std::uint64_t>(policies_.size());
  for (const auto& p : policies_) w.matrix(p.theta);
  w.matrix(finite_.phi);
  w.matrix(stick_.phi());
  w.doubles(critic_.data().data(), critic_.data().size());

  w.pod<std::uint64_t>(buffer_.entries().size());
  for (const auto& e : buffer_.entries()) {
    w.pod<std::int32_t>(e.grid);
    w.pod<std::int32_t>(e.trajectory.terminal_id);
    w.pod<std::uint64_t>(e.trajectory.steps.size());
    for (const auto& s : e.trajectory.steps) {
      w.pod<std::int32_t>(s.id);
      w.pod<std::int32_t>(s.action);
      w.pod(s.reward);
      w.doubles(s.costs.data(), static_cast<std::size_t>(s.costs.size()));
    }
  }
  out.write("END", 3);
  if (!out) throw std::runtime_error("failed writing checkpoint '" + path + "'");
}

Experiment Experiment::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  Reader r(in);
  char magic[sizeof kMagic];
  r.raw(magic, sizeof magic, "magic bytes");
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw CheckpointError("not a checkpoint file (bad magic bytes)");
  const auto version = r.pod<std::uint32_t>("version");
  if (version != kVersion)
    throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kVersion) + ")");

  Experiment ex(parse_config(r.str("config")));
  ex.epoch_ = r.pod<std::int32_t>("epoch");
  ex.env_steps_ = r.pod<std::int64_t>("env steps");
  std::istringstream rng(r.str("rng state"));
  rng >> ex.rng_;
  if (!rng) throw CheckpointError("checkpoint corrupt: rng state");

  const auto P = r.pod<std::uint64_t>("policy count");
  if (P != ex.policies_.size()) throw CheckpointError("checkpoint does not match its config: policy count");
  for (auto& p : ex.policies_) r.matrix(p.theta, "policy logits");
  r.matrix(ex.finite_.phi, "finite sampler");
  r.matrix(ex.stick_.phi(), "stick sampler");
  r.doubles(ex.critic_.data(), ex.critic_.data().size(), "critic atoms");

  const auto B = r.pod<std::uint64_t>("buffer size");
  const int N = ex.cmdp_.num_constraints();
  std::vector<double> costs;
  for (std::uint64_t k = 0; k < B; ++k) {
    ReplayEntry e;
    e.grid = r.pod<std::int32_t>("buffer entry");
    e.trajectory.terminal_id = r.pod<std::int32_t>("buffer entry");
    const auto H = r.pod<std::uint64_t>("buffer entry");
    if (H > 1'000'000) throw CheckpointError("checkpoint corrupt: implausible episode length");
    for (std::uint64_t t = 0; t < H; ++t) {
      env::Step s;
      s.id = r.pod<std::int32_t>("buffer step");
      s.action = r.pod<std::int32_t>("buffer step");
      s.reward = r.pod<double>("buffer step");
      r.doubles(costs, static_cast<std::size_t>(N), "buffer step costs");
      if (s.id < 0 || s.id >= ex.index_->size()) throw CheckpointError("checkpoint corrupt: augmented id out of range");
      s.state = ex.index_->state(s.id);
      s.costs = Eigen::Map<const Eigen::VectorXd>(costs.data(), N);
      e.trajectory.steps.push_back(std::move(s));
    }
    ex.buffer_.push(std::move(e));
  }
  char end[3];
  r.raw(end, 3, "end marker");
  if (std::memcmp(end, "END", 3) != 0) throw CheckpointError("checkpoint corrupt: missing end marker");
  return ex;
}

}  // namespace srcpo
