#include "fedrec/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace fedrec {

namespace {

constexpr std::array<char, 8> kMagic{'F', 'E', 'D', 'R', 'E', 'C', 'C', 'K'};
constexpr std::uint64_t kMaxLength = std::uint64_t{1} << 34;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void u64(std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out_.write(reinterpret_cast<const char*>(b), 8);
  }
  void u32(std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out_.write(reinterpret_cast<const char*>(b), 4);
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void doubles(std::span<const double> xs) {
    u64(xs.size());
    for (double x : xs) f64(x);
  }
  void optimizer(const Optimizer& opt) {
    u32(opt.kind() == OptimizerKind::adam ? 1 : 0);
    u64(opt.dim());
    u64(opt.steps());
    doubles(opt.first_moment());
    doubles(opt.second_moment());
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::uint64_t u64() {
    unsigned char b[8];
    read(b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  std::uint32_t u32() {
    unsigned char b[4];
    read(b, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::uint64_t length() {
    auto n = u64();
    if (n > kMaxLength) throw CheckpointError("checkpoint section length is implausible");
    return n;
  }
  std::vector<double> doubles() {
    std::vector<double> xs(length());
    for (auto& x : xs) x = f64();
    return xs;
  }
  Optimizer optimizer() {
    const auto kind_tag = u32();
    if (kind_tag > 1) throw CheckpointError("unknown optimizer tag in checkpoint");
    const auto kind = kind_tag == 1 ? OptimizerKind::adam : OptimizerKind::sgd;
    const auto dim = length();
    const auto steps = u64();
    auto m = doubles();
    auto v = doubles();
    try {
      return Optimizer::restore(kind, dim, steps, std::move(m), std::move(v));
    } catch (const std::invalid_argument& e) {
      throw CheckpointError(e.what());
    }
  }
  void read(unsigned char* dst, std::size_t n) {
    in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n)) throw CheckpointError("checkpoint is truncated");
  }

 private:
  std::istream& in_;
};

}  // namespace

void save_checkpoint(std::ostream& out, const TrainState& state) {
  out.write(kMagic.data(), kMagic.size());
  Writer w(out);
  w.u32(kCheckpointVersion);
  const auto& fn = state.global.score_fn();
  w.u32(fn.kind == ScoreKind::mlp1 ? 1 : 0);
  w.u64(fn.dim);
  w.u64(fn.hidden);
  w.u64(state.global.num_items());
  w.u64(state.completed_rounds);
  w.doubles(state.global.flat());
  w.optimizer(state.server_optimizer);
  w.u64(state.clients.size());
  for (const auto& c : state.clients) {
    w.u32(c.user);
    w.doubles(c.embedding);
    w.optimizer(c.optimizer);
  }
  if (!out) throw CheckpointError("failed to write checkpoint");
}

void save_checkpoint(const std::filesystem::path& path, const TrainState& state) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open '" + path.string() + "' for writing");
  save_checkpoint(out, state);
}

TrainState load_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != 8 || magic != kMagic) throw CheckpointError("not a checkpoint file");
  Reader r(in);
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  ScoreFn fn;
  const auto kind = r.u32();
  if (kind > 1) throw CheckpointError("unknown score function tag");
  fn.kind = kind == 1 ? ScoreKind::mlp1 : ScoreKind::dot;
  fn.dim = r.length();
  fn.hidden = r.length();
  const auto num_items = r.length();

  TrainState state;
  state.completed_rounds = r.u64();
  state.global = GlobalParams(num_items, fn);
  auto theta = r.doubles();
  if (theta.size() != state.global.flat_size()) throw CheckpointError("parameter block size mismatch");
  std::copy(theta.begin(), theta.end(), state.global.flat().begin());
  state.server_optimizer = r.optimizer();
  const auto clients = r.length();
  state.clients.reserve(clients);
  for (std::uint64_t k = 0; k < clients; ++k) {
    ClientState c;
    c.user = r.u32();
    c.embedding = r.doubles();
    if (c.embedding.size() != fn.dim) throw CheckpointError("user embedding size mismatch");
    c.optimizer = r.optimizer();
    state.clients.push_back(std::move(c));
  }
  return state;
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  return load_checkpoint(in);
}

}  // namespace fedrec
