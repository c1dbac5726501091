#include <gtest/gtest.h>

#include <sstream>

#include "fedrec/checkpoint.hpp"
#include "fedrec/synthetic.hpp"

using namespace fedrec;

namespace {

const SplitDataset& dataset() {
  static const SplitDataset ds = [] {
    SyntheticSpec spec;
    spec.users = 100;
    spec.items = 300;
    spec.mean_interactions = 10;
    return filter_and_split(generate_synthetic_log(spec), 2);
  }();
  return ds;
}

TrainConfig config(std::size_t rounds) {
  TrainConfig cfg;
  cfg.rounds = rounds;
  cfg.embedding_dim = 6;
  cfg.score_kind = ScoreKind::mlp1;
  cfg.hidden_units = 4;
  cfg.clients_per_round = 30;
  return cfg;
}

std::string serialize(const TrainState& s) {
  std::ostringstream out;
  save_checkpoint(out, s);
  return out.str();
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  auto state = run_training(dataset(), config(2)).state;
  const auto bytes = serialize(state);
  std::istringstream in(bytes);
  auto back = load_checkpoint(in);
  EXPECT_EQ(back, state);
  EXPECT_EQ(serialize(back), bytes);
}

TEST(Checkpoint, ResumeMatchesContinuousTraining) {
  auto full = run_training(dataset(), config(4)).state;
  auto half = run_training(dataset(), config(2)).state;
  std::istringstream in(serialize(half));
  auto resumed = run_training(dataset(), config(4), {}, load_checkpoint(in)).state;
  EXPECT_EQ(resumed, full);
}

TEST(Checkpoint, RejectsBadMagic) {
  std::istringstream in("NOTACKPT and some more bytes");
  EXPECT_THROW(load_checkpoint(in), CheckpointError);
}

TEST(Checkpoint, RejectsTruncatedFile) {
  const auto bytes = serialize(run_training(dataset(), config(1)).state);
  for (std::size_t cut : {std::size_t{4}, std::size_t{12}, bytes.size() / 2, bytes.size() - 1}) {
    std::istringstream in(bytes.substr(0, cut));
    EXPECT_THROW(load_checkpoint(in), CheckpointError) << "cut at " << cut;
  }
}

TEST(Checkpoint, MissingFileIsAnError) {
  EXPECT_THROW(load_checkpoint(std::filesystem::path("/nonexistent/ck.bin")), CheckpointError);
}
