#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedrec/data.hpp"
#include "fedrec/federation.hpp"
#include "fedrec/metrics.hpp"

namespace fedrec {

struct SweepAxis {
  std::string param;  // a TrainConfig field accepted by set_param
  std::vector<double> values;
};

struct ExperimentSpec {
  std::string dataset;        // interaction log path
  std::string format = "tsv"; // LogFormat descriptor or preset
  std::string split_file;     // pinned split; overrides dataset when set
  std::size_t min_interactions = 5;
  TrainConfig train;
  std::vector<std::size_t> ks{5, 10};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::optional<SweepAxis> sweep;
  std::string output_dir = "runs";
  std::size_t eval_every = 10;
  bool save_checkpoint = false;
  std::size_t checkpoint_every = 0;  // 0: final round only (when save_checkpoint)

  void validate() const;
};

nlohmann::json to_json(const ExperimentSpec& spec);
/// Missing keys keep their defaults; unknown keys and bad values raise
/// ConfigError naming the field.
ExperimentSpec spec_from_json(const nlohmann::json& j);
ExperimentSpec load_spec(const std::filesystem::path& path);

/// Sets a numeric TrainConfig field by name (rho_co, rho_ur, lr, sigma, big_n,
/// rounds, clients_per_round, local_epochs, batch_size, embedding_dim,
/// negatives_per_positive, hidden_units, workers).
void set_param(TrainConfig& cfg, const std::string& name, double value);

/// Label of a sweep value in output paths and summaries ("default" when no sweep).
std::string sweep_label(const std::optional<double>& value);

/// Loads the dataset and builds the split for one seed.
class DatasetCache {
 public:
  explicit DatasetCache(const ExperimentSpec& spec) : spec_(spec) {}
  const SplitDataset& split_for(std::uint64_t seed);
  const std::optional<InteractionLog>& log() const { return log_; }

 private:
  const ExperimentSpec& spec_;
  std::optional<InteractionLog> log_;
  std::optional<SplitDataset> pinned_;
  std::optional<std::uint64_t> cached_seed_;
  std::optional<SplitDataset> cached_;
};

std::uint64_t split_seed(std::uint64_t seed);

struct RunOutcome {
  Method method = Method::fedrecgel;
  std::optional<double> sweep_value;
  std::uint64_t seed = 0;
  EvalReport final_report;
  std::filesystem::path dir;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single seed
};

MeanStd mean_std(const std::vector<double>& xs);

struct SummaryRow {
  Method method = Method::fedrecgel;
  std::string param;  // sweep parameter or "none"
  std::string value;  // sweep label
  std::map<std::size_t, std::pair<MeanStd, MeanStd>> at;  // K -> (hr, ndcg)
  std::size_t num_seeds = 0;
};

struct ExperimentResult {
  std::vector<RunOutcome> runs;
  std::vector<SummaryRow> summary;
};

std::string summary_csv_header();
std::string summary_csv_row(const SummaryRow& row);

/// Runs every (sweep value x seed) combination. Writes
/// <output_dir>/<METHOD>/<sweep-value>/<seed>/{metrics.csv,rounds.csv,final.csv,config.json}
/// and <output_dir>/<METHOD>/summary.csv. Progress goes to `log` when given.
ExperimentResult run_experiment(const ExperimentSpec& spec, std::ostream* log = nullptr);

struct ComparisonRow {
  std::uint64_t seed = 0;
  std::optional<double> sweep_value;
  std::vector<std::pair<Method, EvalReport>> reports;  // in input order
};

struct ComparisonTable {
  std::vector<Method> methods;
  std::vector<ComparisonRow> rows;  // one per (sweep value, seed)
  std::vector<SummaryRow> summary;  // one per (method, sweep value)
};

/// Specs must differ only in train.method (and be pairwise distinct in it).
void check_aligned(const std::vector<ExperimentSpec>& specs);

/// Runs aligned specs and pairs their results per seed. Writes
/// <output_dir>/comparison.csv and <output_dir>/summary.csv.
ComparisonTable compare_methods(const std::vector<ExperimentSpec>& specs, std::ostream* log = nullptr);

}  // namespace fedrec
