#include "fedrec/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>

#include "fedrec/checkpoint.hpp"

namespace fedrec {

using nlohmann::json;

namespace {

json train_to_json(const TrainConfig& t) {
  return {
      {"rounds", t.rounds},
      {"clients_per_round", t.clients_per_round},
      {"local_epochs", t.local_epochs},
      {"batch_size", t.batch_size},
      {"lr", t.lr},
      {"embedding_dim", t.embedding_dim},
      {"negatives_per_positive", t.negatives_per_positive},
      {"method", std::string(to_string(t.method))},
      {"seed", t.seed},
      {"score", std::string(to_string(t.score_kind))},
      {"hidden_units", t.hidden_units},
      {"optimizer", std::string(to_string(t.optimizer))},
      {"workers", t.workers},
      {"sam",
       {{"rho_co", t.sam.rho_co},
        {"rho_ur", t.sam.rho_ur},
        {"enable_shared", t.sam.enable_shared},
        {"enable_nonshared", t.sam.enable_nonshared}}},
      {"normreg",
       {{"enabled", t.normreg.enabled},
        {"sigma", t.normreg.sigma},
        {"big_n", t.normreg.big_n},
        {"sigma_policy", std::string(to_string(t.normreg.sigma_policy))}}},
  };
}

// Reads j[key] into out when present; wraps type errors with the field path.
template <class T>
void read(const json& j, const char* key, T& out, const std::string& path) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config field '" + path + key + "' has the wrong type");
  }
}

template <class Parse>
void read_enum(const json& j, const char* key, Parse parse, const std::string& path) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_string()) throw ConfigError("config field '" + path + key + "' must be a string");
  try {
    parse(it->get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw ConfigError("config field '" + path + key + "': " + e.what());
  }
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& path) {
  if (!j.is_object()) throw ConfigError("config section '" + path + "' must be an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok |= key == k;
    if (!ok) throw ConfigError("unknown config field '" + path + key + "'");
  }
}

TrainConfig train_from_json(const json& j) {
  reject_unknown(j,
                 {"rounds", "clients_per_round", "local_epochs", "batch_size", "lr", "embedding_dim",
                  "negatives_per_positive", "method", "seed", "score", "hidden_units", "optimizer", "workers", "sam",
                  "normreg"},
                 "train.");
  TrainConfig t;
  const std::string p = "train.";
  read(j, "rounds", t.rounds, p);
  read(j, "clients_per_round", t.clients_per_round, p);
  read(j, "local_epochs", t.local_epochs, p);
  read(j, "batch_size", t.batch_size, p);
  read(j, "lr", t.lr, p);
  read(j, "embedding_dim", t.embedding_dim, p);
  read(j, "negatives_per_positive", t.negatives_per_positive, p);
  read(j, "seed", t.seed, p);
  read(j, "hidden_units", t.hidden_units, p);
  read(j, "workers", t.workers, p);
  read_enum(j, "method", [&](const std::string& s) { t.method = parse_method(s); }, p);
  read_enum(j, "score", [&](const std::string& s) { t.score_kind = parse_score_kind(s); }, p);
  read_enum(j, "optimizer", [&](const std::string& s) { t.optimizer = parse_optimizer_kind(s); }, p);
  if (auto it = j.find("sam"); it != j.end()) {
    reject_unknown(*it, {"rho_co", "rho_ur", "enable_shared", "enable_nonshared"}, "train.sam.");
    read(*it, "rho_co", t.sam.rho_co, "train.sam.");
    read(*it, "rho_ur", t.sam.rho_ur, "train.sam.");
    read(*it, "enable_shared", t.sam.enable_shared, "train.sam.");
    read(*it, "enable_nonshared", t.sam.enable_nonshared, "train.sam.");
  }
  if (auto it = j.find("normreg"); it != j.end()) {
    reject_unknown(*it, {"enabled", "sigma", "big_n", "sigma_policy"}, "train.normreg.");
    read(*it, "enabled", t.normreg.enabled, "train.normreg.");
    read(*it, "sigma", t.normreg.sigma, "train.normreg.");
    read(*it, "big_n", t.normreg.big_n, "train.normreg.");
    read_enum(
        *it, "sigma_policy", [&](const std::string& s) { t.normreg.sigma_policy = parse_sigma_policy(s); },
        "train.normreg.");
  }
  return t;
}

std::size_t as_count(const std::string& name, double value) {
  if (!(value >= 0.0) || value != std::floor(value) || value > 1e15) {
    throw ConfigError("parameter '" + name + "' needs a non-negative integer, got " + std::to_string(value));
  }
  return static_cast<std::size_t>(value);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

std::string final_csv(const EvalReport& r) {
  std::string s = "k,hr,ndcg\n";
  char buf[96];
  for (const auto& [k, m] : r.at) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f\n", k, m.hr, m.ndcg);
    s += buf;
  }
  return s;
}

std::vector<SummaryRow> summarize(const std::vector<RunOutcome>& runs, const std::string& param,
                                  std::span<const std::size_t> ks) {
  std::vector<SummaryRow> rows;
  std::vector<std::pair<Method, std::string>> keys;
  for (const auto& r : runs) {
    std::pair<Method, std::string> key{r.method, sweep_label(r.sweep_value)};
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
  }
  for (const auto& [method, label] : keys) {
    SummaryRow row;
    row.method = method;
    row.param = param;
    row.value = label;
    for (auto k : ks) {
      std::vector<double> hr, ndcg;
      for (const auto& r : runs) {
        if (r.method != method || sweep_label(r.sweep_value) != label) continue;
        const auto& m = r.final_report.at.at(k);
        hr.push_back(m.hr);
        ndcg.push_back(m.ndcg);
      }
      row.num_seeds = hr.size();
      row.at[k] = {mean_std(hr), mean_std(ndcg)};
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string summary_text(const std::vector<SummaryRow>& rows) {
  std::string s = summary_csv_header() + "\n";
  for (const auto& r : rows) s += summary_csv_row(r) + "\n";
  return s;
}

}  // namespace

void ExperimentSpec::validate() const {
  if (dataset.empty() && split_file.empty()) throw ConfigError("no dataset or split_file given");
  if (split_file.empty()) {
    try {
      (void)LogFormat::parse(format);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("format: ") + e.what());
    }
  }
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigError("seeds contain duplicates");
  }
  if (ks.empty()) throw ConfigError("ks must not be empty");
  for (auto k : ks) {
    if (k == 0 || k > kEvalCandidates) throw ConfigError("every K must be in [1, 100]");
  }
  if (eval_every == 0) throw ConfigError("eval_every must be >= 1");
  if (min_interactions < 2) throw ConfigError("min_interactions must be >= 2");
  if (sweep) {
    if (sweep->values.empty()) throw ConfigError("sweep has no values");
    TrainConfig probe = train;
    for (double v : sweep->values) set_param(probe, sweep->param, v);
  }
  train.sam.validate();
  train.normreg.validate();
}

json to_json(const ExperimentSpec& s) {
  json j = {
      {"dataset", s.dataset},
      {"format", s.format},
      {"split_file", s.split_file},
      {"min_interactions", s.min_interactions},
      {"train", train_to_json(s.train)},
      {"ks", s.ks},
      {"seeds", s.seeds},
      {"output_dir", s.output_dir},
      {"eval_every", s.eval_every},
      {"save_checkpoint", s.save_checkpoint},
      {"checkpoint_every", s.checkpoint_every},
  };
  if (s.sweep) {
    j["sweep"] = {{"param", s.sweep->param}, {"values", s.sweep->values}};
  } else {
    j["sweep"] = nullptr;
  }
  return j;
}

ExperimentSpec spec_from_json(const json& j) {
  reject_unknown(j,
                 {"dataset", "format", "split_file", "min_interactions", "train", "ks", "seeds", "sweep",
                  "output_dir", "eval_every", "save_checkpoint", "checkpoint_every"},
                 "");
  ExperimentSpec s;
  read(j, "dataset", s.dataset, "");
  read(j, "format", s.format, "");
  read(j, "split_file", s.split_file, "");
  read(j, "min_interactions", s.min_interactions, "");
  read(j, "ks", s.ks, "");
  read(j, "seeds", s.seeds, "");
  read(j, "output_dir", s.output_dir, "");
  read(j, "eval_every", s.eval_every, "");
  read(j, "save_checkpoint", s.save_checkpoint, "");
  read(j, "checkpoint_every", s.checkpoint_every, "");
  if (auto it = j.find("train"); it != j.end()) s.train = train_from_json(*it);
  if (auto it = j.find("sweep"); it != j.end() && !it->is_null()) {
    reject_unknown(*it, {"param", "values"}, "sweep.");
    SweepAxis axis;
    read(*it, "param", axis.param, "sweep.");
    read(*it, "values", axis.values, "sweep.");
    s.sweep = std::move(axis);
  }
  return s;
}

ExperimentSpec load_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return spec_from_json(j);
}

void set_param(TrainConfig& cfg, const std::string& name, double value) {
  if (name == "rho_co") cfg.sam.rho_co = value;
  else if (name == "rho_ur") cfg.sam.rho_ur = value;
  else if (name == "lr") cfg.lr = value;
  else if (name == "sigma") cfg.normreg.sigma = value;
  else if (name == "big_n") cfg.normreg.big_n = value;
  else if (name == "rounds") cfg.rounds = as_count(name, value);
  else if (name == "clients_per_round") cfg.clients_per_round = as_count(name, value);
  else if (name == "local_epochs") cfg.local_epochs = as_count(name, value);
  else if (name == "batch_size") cfg.batch_size = as_count(name, value);
  else if (name == "embedding_dim") cfg.embedding_dim = as_count(name, value);
  else if (name == "negatives_per_positive") cfg.negatives_per_positive = as_count(name, value);
  else if (name == "hidden_units") cfg.hidden_units = as_count(name, value);
  else if (name == "workers") cfg.workers = as_count(name, value);
  else throw ConfigError("unknown sweep parameter '" + name + "'");
}

std::string sweep_label(const std::optional<double>& value) {
  if (!value) return "default";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", *value);
  return buf;
}

std::uint64_t split_seed(std::uint64_t seed) { return derive_seed(seed, "split"); }

const SplitDataset& DatasetCache::split_for(std::uint64_t seed) {
  if (!spec_.split_file.empty()) {
    if (!pinned_) pinned_ = read_split(spec_.split_file);
    return *pinned_;
  }
  if (cached_seed_ == seed) return *cached_;
  if (!log_) log_ = parse_log(spec_.dataset, LogFormat::parse(spec_.format));
  cached_ = filter_and_split(*log_, split_seed(seed), spec_.min_interactions);
  cached_seed_ = seed;
  return *cached_;
}

MeanStd mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  double sum = 0.0;
  for (double x : xs) sum += x;
  const double mean = sum / static_cast<double>(xs.size());
  if (xs.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

std::string summary_csv_header() {
  return "method,param,value,hr@5_mean,hr@5_std,ndcg@5_mean,ndcg@5_std,hr@10_mean,hr@10_std,ndcg@10_mean,"
         "ndcg@10_std";
}

std::string summary_csv_row(const SummaryRow& row) {
  std::string s = std::string(to_string(row.method)) + "," + row.param + "," + row.value;
  char buf[128];
  for (std::size_t k : {std::size_t{5}, std::size_t{10}}) {
    auto it = row.at.find(k);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const auto [hr, ndcg] = it == row.at.end() ? std::pair{MeanStd{nan, nan}, MeanStd{nan, nan}} : it->second;
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f,%.6f", hr.mean, hr.std, ndcg.mean, ndcg.std);
    s += buf;
  }
  return s;
}

ExperimentResult run_experiment(const ExperimentSpec& spec, std::ostream* log) {
  spec.validate();
  DatasetCache cache(spec);
  ExperimentResult result;
  const std::string method(to_string(spec.train.method));
  const std::filesystem::path method_dir = std::filesystem::path(spec.output_dir) / method;

  std::vector<std::optional<double>> values;
  if (spec.sweep) {
    for (double v : spec.sweep->values) values.emplace_back(v);
  } else {
    values.emplace_back(std::nullopt);
  }

  for (const auto& value : values) {
    for (auto seed : spec.seeds) {
      const SplitDataset& ds = cache.split_for(seed);
      TrainConfig cfg = spec.train;
      cfg.seed = seed;
      if (value) set_param(cfg, spec.sweep->param, *value);
      cfg.validate(ds.num_users());

      const auto dir = method_dir / sweep_label(value) / std::to_string(seed);
      std::filesystem::create_directories(dir);

      ExperimentSpec echo = spec;
      echo.train = cfg;
      echo.seeds = {seed};
      if (value) echo.sweep = SweepAxis{spec.sweep->param, {*value}};
      write_text(dir / "config.json", to_json(echo).dump(2) + "\n");

      std::ofstream metrics(dir / "metrics.csv");
      std::ofstream rounds(dir / "rounds.csv");
      if (!metrics || !rounds) throw std::runtime_error("cannot write run outputs under '" + dir.string() + "'");
      metrics << metrics_csv_header(spec.ks) << "\n";
      rounds << "round,grad_norm,mean_client_loss,participants,seconds\n";

      EvalReport last;
      TrainHooks hooks;
      hooks.on_round = [&](const RoundResult& r, const TrainState& state) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%zu,%.3f\n", r.round, r.aggregated_grad_norm,
                      r.mean_client_loss, r.participants.size(), r.seconds);
        rounds << buf;
        if (r.round % spec.eval_every == 0 || r.round == cfg.rounds) {
          last = evaluate(state.global, state.clients, ds, spec.ks);
          metrics << metrics_csv_row(r.round, method, seed, last, spec.ks) << "\n";
          metrics.flush();
          if (log) {
            *log << method << " " << sweep_label(value) << " seed " << seed << " round " << r.round;
            for (const auto& [k, m] : last.at) {
              std::snprintf(buf, sizeof buf, " hr@%zu=%.4f ndcg@%zu=%.4f", k, m.hr, k, m.ndcg);
              *log << buf;
            }
            *log << "\n";
          }
        }
        if (spec.save_checkpoint && spec.checkpoint_every != 0 && r.round % spec.checkpoint_every == 0) {
          save_checkpoint(dir / "checkpoint.bin", state);
        }
      };

      auto trained = run_training(ds, cfg, hooks);
      if (cfg.rounds == 0) {
        last = evaluate(trained.state.global, trained.state.clients, ds, spec.ks);
        metrics << metrics_csv_row(0, method, seed, last, spec.ks) << "\n";
      }
      if (spec.save_checkpoint) save_checkpoint(dir / "checkpoint.bin", trained.state);
      write_text(dir / "final.csv", final_csv(last));

      result.runs.push_back({cfg.method, value, seed, last, dir});
    }
  }

  result.summary = summarize(result.runs, spec.sweep ? spec.sweep->param : "none", spec.ks);
  std::filesystem::create_directories(method_dir);
  write_text(method_dir / "summary.csv", summary_text(result.summary));
  return result;
}

void check_aligned(const std::vector<ExperimentSpec>& specs) {
  if (specs.empty()) throw ConfigError("no methods to compare");
  std::set<Method> seen;
  for (const auto& s : specs) {
    if (!seen.insert(s.train.method).second) {
      throw ConfigError("method " + std::string(to_string(s.train.method)) + " appears more than once");
    }
  }
  auto strip = [](const ExperimentSpec& s) {
    json j = to_json(s);
    j["train"].erase("method");
    return j;
  };
  const json base = strip(specs.front());
  for (std::size_t i = 1; i < specs.size(); ++i) {
    const json patch = json::diff(base, strip(specs[i]));
    if (patch.empty()) continue;
    std::set<std::string> fields;
    for (const auto& op : patch) fields.insert(op.at("path").get<std::string>());
    std::string list;
    for (const auto& f : fields) list += (list.empty() ? "" : ", ") + f;
    throw ConfigError("specs for " + std::string(to_string(specs.front().train.method)) + " and " +
                      std::string(to_string(specs[i].train.method)) + " differ in: " + list);
  }
}

ComparisonTable compare_methods(const std::vector<ExperimentSpec>& specs, std::ostream* log) {
  check_aligned(specs);
  ComparisonTable table;
  std::vector<ExperimentResult> results;
  std::vector<RunOutcome> all;
  for (const auto& s : specs) {
    table.methods.push_back(s.train.method);
    results.push_back(run_experiment(s, log));
    all.insert(all.end(), results.back().runs.begin(), results.back().runs.end());
    table.summary.insert(table.summary.end(), results.back().summary.begin(), results.back().summary.end());
  }
  const std::size_t n = results.front().runs.size();
  for (std::size_t i = 0; i < n; ++i) {
    ComparisonRow row;
    row.seed = results.front().runs[i].seed;
    row.sweep_value = results.front().runs[i].sweep_value;
    for (const auto& r : results) row.reports.emplace_back(r.runs[i].method, r.runs[i].final_report);
    table.rows.push_back(std::move(row));
  }

  const auto& spec = specs.front();
  std::filesystem::create_directories(spec.output_dir);
  std::string csv = "value,seed";
  for (auto m : table.methods) {
    for (auto k : spec.ks) {
      csv += "," + std::string(to_string(m)) + ":hr@" + std::to_string(k);
      csv += "," + std::string(to_string(m)) + ":ndcg@" + std::to_string(k);
    }
  }
  csv += "\n";
  char buf[64];
  for (const auto& row : table.rows) {
    csv += sweep_label(row.sweep_value) + "," + std::to_string(row.seed);
    for (const auto& [m, report] : row.reports) {
      for (auto k : spec.ks) {
        std::snprintf(buf, sizeof buf, ",%.6f,%.6f", report.at.at(k).hr, report.at.at(k).ndcg);
        csv += buf;
      }
    }
    csv += "\n";
  }
  write_text(std::filesystem::path(spec.output_dir) / "comparison.csv", csv);
  write_text(std::filesystem::path(spec.output_dir) / "summary.csv", summary_text(table.summary));
  return table;
}

}  // namespace fedrec
