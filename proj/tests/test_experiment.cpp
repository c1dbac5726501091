#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "fedrec/experiment.hpp"
#include "fedrec/synthetic.hpp"

using namespace fedrec;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class ExperimentTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("fedrec_exp_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    SyntheticSpec synth;
    synth.users = 80;
    synth.items = 250;
    synth.mean_interactions = 10;
    std::ofstream out(root_ / "log.tsv");
    write_log(out, generate_synthetic_log(synth));
  }
  void TearDown() override { fs::remove_all(root_); }

  ExperimentSpec tiny_spec(const std::string& out) const {
    ExperimentSpec s;
    s.dataset = (root_ / "log.tsv").string();
    s.output_dir = (root_ / out).string();
    s.seeds = {0, 1};
    s.train.rounds = 2;
    s.train.embedding_dim = 4;
    s.train.clients_per_round = 20;
    s.eval_every = 1;
    return s;
  }

  fs::path root_;
};

}  // namespace

TEST(ExperimentConfig, JsonRoundTrip) {
  ExperimentSpec s;
  s.dataset = "x.tsv";
  s.train.method = Method::ablate_no_shared;
  s.train.score_kind = ScoreKind::mlp1;
  s.train.normreg = NormRegConfig{true, 0.2, 1000.0, SigmaPolicy::fixed};
  s.train.sam = SamConfig{0.1, 0.02, true, false};
  s.sweep = SweepAxis{"rho_co", {0.01, 0.1}};
  s.ks = {1, 5, 20};
  auto back = spec_from_json(to_json(s));
  EXPECT_EQ(back.train, s.train);
  EXPECT_EQ(back.ks, s.ks);
  ASSERT_TRUE(back.sweep);
  EXPECT_EQ(back.sweep->values, s.sweep->values);
  EXPECT_EQ(to_json(back), to_json(s));
}

TEST(ExperimentConfig, UnknownFieldIsNamed) {
  auto j = to_json(ExperimentSpec{});
  j["train"]["sam"]["rho_shared"] = 0.1;
  try {
    spec_from_json(j);
    FAIL() << "expected a config error";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train.sam.rho_shared"), std::string::npos);
  }
  auto k = to_json(ExperimentSpec{});
  k["train"]["lr"] = "fast";
  EXPECT_THROW(spec_from_json(k), ConfigError);
}

TEST(ExperimentConfig, SetParam) {
  TrainConfig cfg;
  set_param(cfg, "rho_co", 0.3);
  set_param(cfg, "rho_ur", 0.4);
  set_param(cfg, "rounds", 7);
  set_param(cfg, "sigma", 0.9);
  EXPECT_EQ(cfg.sam.rho_co, 0.3);
  EXPECT_EQ(cfg.sam.rho_ur, 0.4);
  EXPECT_EQ(cfg.rounds, 7u);
  EXPECT_EQ(cfg.normreg.sigma, 0.9);
  EXPECT_THROW(set_param(cfg, "rounds", 2.5), ConfigError);
  EXPECT_THROW(set_param(cfg, "rounds", -1), ConfigError);
  EXPECT_THROW(set_param(cfg, "momentum", 0.9), ConfigError);
}

TEST(ExperimentConfig, SweepLabels) {
  EXPECT_EQ(sweep_label(std::nullopt), "default");
  EXPECT_EQ(sweep_label(0.05), "0.05");
  EXPECT_EQ(sweep_label(1e-4), "0.0001");
}

TEST(ExperimentConfig, MeanStd) {
  auto m = mean_std({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(m.mean, 2.5);
  EXPECT_NEAR(m.std, std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_EQ(mean_std({0.7}).std, 0.0);
  EXPECT_TRUE(std::isnan(mean_std({}).mean));
}

TEST(ExperimentConfig, AlignmentChecks) {
  ExperimentSpec a, b;
  b.train.method = Method::baseline_plain;
  EXPECT_NO_THROW(check_aligned({a, b}));
  EXPECT_THROW(check_aligned({}), ConfigError);
  EXPECT_THROW(check_aligned({a, a}), ConfigError);
  b.train.lr = 0.5;
  try {
    check_aligned({a, b});
    FAIL() << "expected a config error";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("/train/lr"), std::string::npos);
  }
}

TEST_F(ExperimentTest, WritesRunLayoutAndIsReproducible) {
  auto spec = tiny_spec("a");
  auto first = run_experiment(spec);
  ASSERT_EQ(first.runs.size(), 2u);
  for (auto seed : {"0", "1"}) {
    const auto dir = root_ / "a" / "FEDRECGEL" / "default" / seed;
    for (auto f : {"config.json", "metrics.csv", "rounds.csv", "final.csv"}) {
      EXPECT_TRUE(fs::exists(dir / f)) << dir / f;
    }
    std::istringstream metrics(slurp(dir / "metrics.csv"));
    std::string line;
    std::size_t rows = 0;
    std::getline(metrics, line);
    EXPECT_EQ(line, metrics_csv_header());
    while (std::getline(metrics, line)) ++rows;
    EXPECT_EQ(rows, 2u);
  }
  ASSERT_EQ(first.summary.size(), 1u);
  EXPECT_EQ(first.summary[0].num_seeds, 2u);
  EXPECT_TRUE(fs::exists(root_ / "a" / "FEDRECGEL" / "summary.csv"));

  spec.output_dir = (root_ / "b").string();
  run_experiment(spec);
  for (auto f : {"metrics.csv", "final.csv"}) {
    EXPECT_EQ(slurp(root_ / "a" / "FEDRECGEL" / "default" / "1" / f),
              slurp(root_ / "b" / "FEDRECGEL" / "default" / "1" / f));
  }
}

TEST_F(ExperimentTest, EchoedConfigReproducesTheRun) {
  auto spec = tiny_spec("a");
  spec.train.method = Method::baseline_plain;
  auto first = run_experiment(spec);
  const auto run_dir = root_ / "a" / "BASELINE_PLAIN" / "default" / "1";
  auto echo = load_spec(run_dir / "config.json");
  EXPECT_EQ(echo.seeds, std::vector<std::uint64_t>{1});
  echo.output_dir = (root_ / "echo").string();
  auto again = run_experiment(echo);
  ASSERT_EQ(again.runs.size(), 1u);
  EXPECT_EQ(again.runs[0].final_report.ranks, first.runs[1].final_report.ranks);
}

TEST_F(ExperimentTest, SweepAndComparisonOutputs) {
  auto spec = tiny_spec("sweep");
  spec.seeds = {3};
  spec.sweep = SweepAxis{"rho_co", {0.0, 0.1}};
  auto swept = run_experiment(spec);
  ASSERT_EQ(swept.summary.size(), 2u);
  EXPECT_EQ(swept.summary[0].param, "rho_co");
  EXPECT_TRUE(fs::exists(root_ / "sweep" / "FEDRECGEL" / "0.1" / "3" / "final.csv"));

  spec.sweep.reset();
  spec.output_dir = (root_ / "cmp").string();
  auto other = spec;
  other.train.method = Method::baseline_plain;
  auto table = compare_methods({spec, other});
  ASSERT_EQ(table.rows.size(), 1u);
  ASSERT_EQ(table.rows[0].reports.size(), 2u);
  std::istringstream csv(slurp(root_ / "cmp" / "comparison.csv"));
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header.rfind("value,seed,FEDRECGEL:hr@5", 0), 0u);
  EXPECT_TRUE(fs::exists(root_ / "cmp" / "summary.csv"));
}

TEST_F(ExperimentTest, PinnedSplitFileOverridesDataset) {
  auto spec = tiny_spec("pin");
  DatasetCache cache(spec);
  const auto ds = cache.split_for(0);
  write_split(root_ / "split.tsv", ds);
  spec.dataset = "/does/not/exist.tsv";
  spec.split_file = (root_ / "split.tsv").string();
  DatasetCache pinned(spec);
  EXPECT_EQ(pinned.split_for(7).fingerprint(), ds.fingerprint());
}
