#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedrec/checkpoint.hpp"
#include "fedrec/experiment.hpp"
#include "fedrec/landscape.hpp"
#include "fedrec/synthetic.hpp"

using namespace fedrec;

namespace {

// Flags shared by every subcommand that builds an ExperimentSpec. Only flags
// given on the command line override the config file.
struct Overrides {
  std::string config;
  std::string dataset, format, split_file, output_dir, method, score, optimizer, sigma_policy;
  std::vector<std::uint64_t> seeds;
  std::vector<std::size_t> ks;
  std::size_t rounds = 0, clients_per_round = 0, local_epochs = 0, batch_size = 0, embedding_dim = 0,
              negatives = 0, workers = 0, eval_every = 0, min_interactions = 0, checkpoint_every = 0;
  double lr = 0, rho_co = 0, rho_ur = 0, sigma = 0, big_n = 0;
  bool normreg = false, no_normreg = false, checkpoint = false;
  std::vector<CLI::Option*> given;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config, "JSON experiment config")->check(CLI::ExistingFile);
    app->add_option("--dataset", dataset, "interaction log");
    app->add_option("--format", format, "log format descriptor or preset (filmtrust, movielens, tsv, csv)");
    app->add_option("--split-file", split_file, "pinned split file");
    app->add_option("-o,--output-dir", output_dir, "output directory");
    app->add_option("--method", method, "FEDRECGEL, BASELINE_PLAIN, ABLATE_NO_NONSHARED, ABLATE_NO_SHARED");
    app->add_option("--score", score, "dot or mlp1");
    app->add_option("--optimizer", optimizer, "adam or sgd");
    app->add_option("--sigma-policy", sigma_policy, "fixed or from_rho");
    app->add_option("--seeds", seeds, "seeds")->delimiter(',');
    app->add_option("--ks", ks, "ranking cutoffs")->delimiter(',');
    app->add_option("--rounds", rounds);
    app->add_option("--clients-per-round", clients_per_round, "0 = all clients");
    app->add_option("--local-epochs", local_epochs);
    app->add_option("--batch-size", batch_size);
    app->add_option("--embedding-dim", embedding_dim);
    app->add_option("--negatives", negatives, "sampled negatives per training positive");
    app->add_option("--workers", workers, "client worker threads");
    app->add_option("--eval-every", eval_every);
    app->add_option("--min-interactions", min_interactions);
    app->add_option("--checkpoint-every", checkpoint_every);
    app->add_option("--lr", lr);
    app->add_option("--rho-co", rho_co);
    app->add_option("--rho-ur", rho_ur);
    app->add_option("--sigma", sigma);
    app->add_option("--big-n", big_n, "0 = local sample count");
    app->add_flag("--normreg", normreg, "enable the norm regularizer");
    app->add_flag("--no-normreg", no_normreg, "disable the norm regularizer");
    app->add_flag("--save-checkpoint", checkpoint, "write checkpoint.bin per run");
  }

  ExperimentSpec build(CLI::App* app) const {
    ExperimentSpec s = config.empty() ? ExperimentSpec{} : load_spec(config);
    auto has = [app](const char* name) { return app->get_option(name)->count() > 0; };
    if (has("--dataset")) s.dataset = dataset;
    if (has("--format")) s.format = format;
    if (has("--split-file")) s.split_file = split_file;
    if (has("--output-dir")) s.output_dir = output_dir;
    if (has("--method")) s.train.method = parse_method(method);
    if (has("--score")) s.train.score_kind = parse_score_kind(score);
    if (has("--optimizer")) s.train.optimizer = parse_optimizer_kind(optimizer);
    if (has("--sigma-policy")) s.train.normreg.sigma_policy = parse_sigma_policy(sigma_policy);
    if (has("--seeds")) s.seeds = seeds;
    if (has("--ks")) s.ks = ks;
    if (has("--rounds")) s.train.rounds = rounds;
    if (has("--clients-per-round")) s.train.clients_per_round = clients_per_round;
    if (has("--local-epochs")) s.train.local_epochs = local_epochs;
    if (has("--batch-size")) s.train.batch_size = batch_size;
    if (has("--embedding-dim")) s.train.embedding_dim = embedding_dim;
    if (has("--negatives")) s.train.negatives_per_positive = negatives;
    if (has("--workers")) s.train.workers = workers;
    if (has("--eval-every")) s.eval_every = eval_every;
    if (has("--min-interactions")) s.min_interactions = min_interactions;
    if (has("--checkpoint-every")) s.checkpoint_every = checkpoint_every;
    if (has("--lr")) s.train.lr = lr;
    if (has("--rho-co")) s.train.sam.rho_co = rho_co;
    if (has("--rho-ur")) s.train.sam.rho_ur = rho_ur;
    if (has("--sigma")) s.train.normreg.sigma = sigma;
    if (has("--big-n")) s.train.normreg.big_n = big_n;
    if (normreg) s.train.normreg.enabled = true;
    if (no_normreg) s.train.normreg.enabled = false;
    if (checkpoint) s.save_checkpoint = true;
    if (const char* root = std::getenv("FEDREC_OUTPUT_ROOT"); root && *root) {
      std::filesystem::path out(s.output_dir);
      if (out.is_relative()) s.output_dir = (std::filesystem::path(root) / out).string();
    }
    return s;
  }
};

void print_summary(const std::vector<SummaryRow>& rows) {
  std::cout << summary_csv_header() << "\n";
  for (const auto& r : rows) std::cout << summary_csv_row(r) << "\n";
}

void print_report(const EvalReport& r) {
  for (const auto& [k, m] : r.at) {
    std::printf("HR@%zu %.4f  NDCG@%zu %.4f\n", k, m.hr, k, m.ndcg);
  }
}

// Loads the checkpoint if given, otherwise trains the first configured seed.
TrainState model_for(const ExperimentSpec& spec, const SplitDataset& ds, const std::string& checkpoint) {
  if (!checkpoint.empty()) {
    auto state = load_checkpoint(checkpoint);
    if (state.clients.size() != ds.num_users() || state.global.num_items() != ds.num_items) {
      throw std::runtime_error("checkpoint does not match the dataset's users/items");
    }
    return state;
  }
  TrainConfig cfg = spec.train;
  cfg.seed = spec.seeds.front();
  cfg.validate(ds.num_users());
  std::cerr << "training " << to_string(cfg.method) << " for " << cfg.rounds << " rounds\n";
  return run_training(ds, cfg).state;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated recommendation simulator with hierarchical sharpness-aware training"};
  app.require_subcommand(1);

  Overrides train_o, sweep_o, ablate_o, land_o, eval_o, split_o;

  auto* train = app.add_subcommand("train", "train one method over all seeds");
  train_o.attach(train);

  auto* sweep = app.add_subcommand("sweep", "train one method over a parameter grid");
  sweep_o.attach(sweep);
  std::string sweep_param;
  std::vector<double> sweep_values;
  sweep->add_option("--param", sweep_param, "parameter to sweep (e.g. rho_co, rho_ur, lr)")->required();
  sweep->add_option("--values", sweep_values, "values")->delimiter(',')->required();

  auto* ablate = app.add_subcommand("ablate", "run several methods on identical settings and compare per seed");
  ablate_o.attach(ablate);
  std::vector<std::string> methods{"FEDRECGEL", "BASELINE_PLAIN", "ABLATE_NO_NONSHARED", "ABLATE_NO_SHARED"};
  ablate->add_option("--methods", methods, "methods to compare")->delimiter(',');

  auto* land = app.add_subcommand("landscape", "loss landscape grid or magnitude sweep of a trained model");
  land_o.attach(land);
  std::string land_ckpt, land_mode = "sweep", land_scope = "shared", land_out;
  double extent = 1.0;
  std::size_t resolution = 21, directions = 5, probe_clients = 0;
  std::vector<double> magnitudes = kDefaultMagnitudes;
  std::uint64_t land_seed = 0;
  land->add_option("--from-checkpoint", land_ckpt, "trained state (trains the first seed when omitted)");
  land->add_option("--mode", land_mode, "grid or sweep")->check(CLI::IsMember({"grid", "sweep"}));
  land->add_option("--scope", land_scope, "shared or all")->check(CLI::IsMember({"shared", "all"}));
  land->add_option("--extent", extent);
  land->add_option("--resolution", resolution);
  land->add_option("--directions", directions, "random directions per magnitude");
  land->add_option("--magnitudes", magnitudes)->delimiter(',');
  land->add_option("--probe-clients", probe_clients, "0 = all clients");
  land->add_option("--probe-seed", land_seed);
  land->add_option("--out", land_out, "CSV path (default: <output-dir>/landscape_<mode>.csv)");

  auto* eval = app.add_subcommand("evaluate", "HR/NDCG of a checkpoint");
  eval_o.attach(eval);
  std::string eval_ckpt;
  eval->add_option("--from-checkpoint", eval_ckpt)->required()->check(CLI::ExistingFile);

  auto* split = app.add_subcommand("split", "filter, split and write a pinned split file");
  split_o.attach(split);
  std::string split_out;
  split->add_option("--out", split_out)->required();

  auto* synth = app.add_subcommand("synth", "write a synthetic interaction log");
  SyntheticSpec synth_spec;
  std::string synth_out;
  synth->add_option("--out", synth_out)->required();
  synth->add_option("--users", synth_spec.users);
  synth->add_option("--items", synth_spec.items);
  synth->add_option("--mean-interactions", synth_spec.mean_interactions);
  synth->add_option("--activity-spread", synth_spec.activity_spread);
  synth->add_option("--latent-dim", synth_spec.latent_dim);
  synth->add_option("--popularity-exponent", synth_spec.popularity_exponent);
  synth->add_option("--affinity", synth_spec.affinity);
  synth->add_option("--seed", synth_spec.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (train->parsed()) {
      auto spec = train_o.build(train);
      auto result = run_experiment(spec, &std::cerr);
      print_summary(result.summary);
    } else if (sweep->parsed()) {
      auto spec = sweep_o.build(sweep);
      spec.sweep = SweepAxis{sweep_param, sweep_values};
      auto result = run_experiment(spec, &std::cerr);
      print_summary(result.summary);
    } else if (ablate->parsed()) {
      auto base = ablate_o.build(ablate);
      std::vector<ExperimentSpec> specs;
      for (const auto& m : methods) {
        auto s = base;
        s.train.method = parse_method(m);
        specs.push_back(std::move(s));
      }
      auto table = compare_methods(specs, &std::cerr);
      print_summary(table.summary);
    } else if (land->parsed()) {
      auto spec = land_o.build(land);
      spec.validate();
      DatasetCache cache(spec);
      const auto& ds = cache.split_for(spec.seeds.front());
      auto state = model_for(spec, ds, land_ckpt);
      auto probe = make_probe(ds, probe_clients, spec.train.negatives_per_positive, land_seed);
      const auto scope = land_scope == "all" ? PerturbScope::shared_and_private : PerturbScope::shared;
      Rng rng = make_rng(land_seed, "landscape-directions");
      if (land_out.empty()) {
        std::filesystem::create_directories(spec.output_dir);
        land_out = (std::filesystem::path(spec.output_dir) / ("landscape_" + land_mode + ".csv")).string();
      }
      std::ofstream out(land_out);
      if (!out) throw std::runtime_error("cannot write '" + land_out + "'");
      if (land_mode == "grid") {
        auto grid = evaluate_grid(state.global, state.clients, probe, {extent, resolution, scope}, rng);
        write_grid_csv(out, grid);
      } else {
        auto result = magnitude_sweep(state.global, state.clients, probe, magnitudes, directions, rng, scope);
        write_sweep_csv(out, result);
        write_sweep_csv(std::cout, result);
      }
      std::cerr << "wrote " << land_out << "\n";
    } else if (eval->parsed()) {
      auto spec = eval_o.build(eval);
      spec.validate();
      DatasetCache cache(spec);
      const auto& ds = cache.split_for(spec.seeds.front());
      auto state = model_for(spec, ds, eval_ckpt);
      print_report(evaluate(state.global, state.clients, ds, spec.ks));
    } else if (split->parsed()) {
      auto spec = split_o.build(split);
      spec.validate();
      DatasetCache cache(spec);
      const auto& ds = cache.split_for(spec.seeds.front());
      write_split(split_out, ds);
      std::cerr << "raw: " << ds.pre_filter.users << " users, " << ds.pre_filter.items << " items, "
                << ds.pre_filter.interactions << " interactions\n"
                << "filtered: " << ds.post_filter.users << " users, " << ds.post_filter.items << " items, "
                << ds.post_filter.interactions << " interactions\n";
    } else if (synth->parsed()) {
      auto log = generate_synthetic_log(synth_spec);
      std::ofstream out(synth_out);
      if (!out) throw std::runtime_error("cannot write '" + synth_out + "'");
      write_log(out, log);
      const auto st = log.stats();
      std::cerr << st.users << " users, " << st.items << " items, " << st.interactions << " interactions\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
