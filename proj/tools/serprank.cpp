#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "serprank/data/dataset.hpp"
#include "serprank/train/config_file.hpp"
#include "serprank/train/experiment.hpp"
#include "serprank/train/report.hpp"

namespace fs = std::filesystem;
using namespace serprank;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitDivergence = 3;

struct CliOptions {
  std::string config_path;
  std::string output;
  std::string algorithm;
  std::optional<std::uint64_t> seed;
  std::string train_path, valid_path, test_path;

  // evaluate
  std::string checkpoint, data_path, split = "test";

  // compare
  std::string csv_a, csv_b, metric = "ndcg@10";
  int permutations = 10000;
  std::uint64_t compare_seed = 1;

  // synth
  int queries = 200, valid_queries = 0, test_queries = 0;
  int docs = 10, features = 5;
  double noise = 0.0;
  std::uint64_t synth_seed = 1;
};

train::ExperimentConfig load_config_with_overrides(const CliOptions& opt) {
  train::ExperimentConfig config = train::load_experiment_config(opt.config_path);
  if (!opt.output.empty()) config.output_dir = opt.output;
  if (!opt.algorithm.empty()) {
    config.trainer.algorithm = train::algorithm_from_string(opt.algorithm);
  }
  if (opt.seed.has_value()) {
    config.seeds = {*opt.seed};
    config.repeats = 1;
  }
  if (!opt.train_path.empty()) config.data.train_path = opt.train_path;
  if (!opt.valid_path.empty()) config.data.valid_path = opt.valid_path;
  if (!opt.test_path.empty()) config.data.test_path = opt.test_path;
  config.validate();
  return config;
}

int run_train(const CliOptions& opt) {
  const train::ExperimentConfig config = load_config_with_overrides(opt);
  const std::vector<train::RunRecord> records = train::cmd_train(config);
  int diverged = 0;
  for (const train::RunRecord& record : records) {
    if (record.diverged) {
      ++diverged;
      std::cout << "seed " << record.seed << ": diverged (" << record.divergence_message
                << ")\n";
      continue;
    }
    std::cout << "seed " << record.seed << ": best step "
              << record.evals[static_cast<std::size_t>(record.best_eval_index)].step
              << ", valid ndcg@10 "
              << format_double(
                     record.evals[static_cast<std::size_t>(record.best_eval_index)]
                         .valid.mean_ndcg(10))
              << ", test ndcg@10 " << format_double(record.final_test.mean_ndcg(10)) << "\n";
  }
  std::cout << "artifacts under " << config.output_dir << "/"
            << train::to_string(config.trainer.algorithm) << "\n";
  return diverged > 0 ? kExitDivergence : kExitOk;
}

int run_evaluate(const CliOptions& opt) {
  std::vector<int> cutoffs{1, 3, 5, 10};
  train::TrainerConfig trainer;
  int feature_limit = 0;
  bool normalize = false;
  if (!opt.config_path.empty()) {
    const train::ExperimentConfig config = train::load_experiment_config(opt.config_path);
    trainer = config.trainer;
    cutoffs = config.cutoffs;
    feature_limit = config.data.feature_limit;
    normalize = config.data.normalize;
  }
  data::Dataset dataset = data::load_letor_file(opt.data_path);
  dataset.split = data::split_from_string(opt.split);
  if (feature_limit > 0) dataset = data::truncate_features(dataset, feature_limit);
  if (normalize) dataset = data::normalize_dataset(dataset);

  const metrics::MetricReport report = train::cmd_evaluate(opt.checkpoint, dataset, trainer);
  if (!opt.output.empty()) {
    train::write_text_atomic(opt.output,
                             train::render_metrics_csv({{dataset.split, &report}}, cutoffs));
  }
  std::cout << report.aggregate_json() << "\n";
  return kExitOk;
}

int run_compare(const CliOptions& opt) {
  train::RewardMetric metric = train::RewardMetric::kNdcg;
  int cutoff = 10;
  train::parse_reward_metric(opt.metric, metric, cutoff);
  const data::Split split = data::split_from_string(opt.split);

  const auto read_column = [&](const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open metrics csv '" + path + "'");
    return train::read_metric_column(in, split, metric, cutoff);
  };
  const train::MetricColumn a = read_column(opt.csv_a);
  const train::MetricColumn b = read_column(opt.csv_b);
  const train::CompareResult result =
      train::cmd_compare(a, b, opt.permutations, opt.compare_seed);
  std::cout << "mean_a = " << format_double(result.mean_a) << "\n";
  std::cout << "mean_b = " << format_double(result.mean_b) << "\n";
  std::cout << "p_value = " << format_double(result.p_value) << "\n";
  std::cout << "significant@0.05 = " << (result.significant ? "yes" : "no") << "\n";
  return kExitOk;
}

int run_report(const CliOptions& opt) {
  std::vector<int> cutoffs{1, 3, 5, 10};
  if (!opt.config_path.empty()) {
    cutoffs = train::load_experiment_config(opt.config_path).cutoffs;
  }
  const std::vector<train::AlgorithmReport> rows = train::cmd_report(opt.output, cutoffs);
  std::cout << train::render_table_text(rows, cutoffs);
  std::cout << "report files under " << opt.output << "/report\n";
  return kExitOk;
}

int run_sweep(const CliOptions& opt) {
  const train::ExperimentConfig base = train::load_experiment_config(opt.config_path);
  const std::string sweep_dir = opt.output.empty() ? "sweep" : opt.output;
  fs::create_directories(sweep_dir);
  for (double lr : {1e-1, 1e-2, 1e-3, 1e-4, 1e-5}) {
    train::ExperimentConfig config = base;
    config.trainer.lr = lr;
    const std::string tag = "lr_" + format_double(lr);
    config.output_dir = (fs::path(base.output_dir) / tag).string();
    const std::string path = (fs::path(sweep_dir) / (tag + ".ini")).string();
    train::write_text_atomic(path, train::echo_config(config));
    std::cout << path << "\n";
  }
  return kExitOk;
}

int run_synth(const CliOptions& opt) {
  if (opt.queries < 1 || opt.docs < 1 || opt.features < 1) {
    throw ConfigError("queries, docs and features must all be >= 1");
  }
  const int valid_queries = opt.valid_queries > 0 ? opt.valid_queries
                                                  : std::max(1, opt.queries / 5);
  const int test_queries = opt.test_queries > 0 ? opt.test_queries : valid_queries;
  const std::string dir = opt.output.empty() ? "synth" : opt.output;
  fs::create_directories(dir);
  Rng rng(opt.synth_seed);
  // One draw for all three files so every split shares the same hidden
  // relevance function; per-call draws would make the test split unlearnable.
  const data::Dataset full = data::generate_synthetic(
      opt.queries + valid_queries + test_queries, opt.docs, opt.features, rng, opt.noise);
  std::size_t offset = 0;
  const auto emit = [&](const char* name, int n, data::Split split) {
    data::Dataset dataset;
    dataset.feature_count = full.feature_count;
    dataset.split = split;
    for (int i = 0; i < n; ++i) dataset.groups.push_back(full.groups[offset++]);
    const std::string path = (fs::path(dir) / name).string();
    data::save_letor_file(dataset, path);
    std::cout << path << ": " << n << " queries x " << opt.docs << " docs\n";
  };
  emit("train.txt", opt.queries, data::Split::kTrain);
  emit("valid.txt", valid_queries, data::Split::kValid);
  emit("test.txt", test_queries, data::Split::kTest);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ranking experiments driven by page-level rewards"};
  app.require_subcommand(1);
  CliOptions opt;

  CLI::App* train_cmd = app.add_subcommand("train", "train one algorithm across seeds");
  train_cmd->add_option("--config", opt.config_path, "experiment config file")->required();
  train_cmd->add_option("--output", opt.output, "override output directory");
  train_cmd->add_option("--algorithm", opt.algorithm, "override trainer algorithm");
  train_cmd->add_option("--seed", opt.seed, "train only this seed");
  train_cmd->add_option("--train", opt.train_path, "override training split path");
  train_cmd->add_option("--valid", opt.valid_path, "override validation split path");
  train_cmd->add_option("--test", opt.test_path, "override test split path");

  CLI::App* eval_cmd = app.add_subcommand("evaluate", "score a checkpoint on one split");
  eval_cmd->add_option("--checkpoint", opt.checkpoint, "model checkpoint")->required();
  eval_cmd->add_option("--data", opt.data_path, "dataset file")->required();
  eval_cmd->add_option("--split", opt.split, "split label for the csv (default test)");
  eval_cmd->add_option("--config", opt.config_path, "config for preprocessing + cutoffs");
  eval_cmd->add_option("--output", opt.output, "write per-query metrics csv here");

  CLI::App* compare_cmd = app.add_subcommand("compare", "paired significance test");
  compare_cmd->add_option("--a", opt.csv_a, "first metrics csv")->required();
  compare_cmd->add_option("--b", opt.csv_b, "second metrics csv")->required();
  compare_cmd->add_option("--metric", opt.metric, "metric@cutoff (default ndcg@10)");
  compare_cmd->add_option("--split", opt.split, "split to compare (default test)");
  compare_cmd->add_option("--permutations", opt.permutations, "sign flips (default 10000)");
  compare_cmd->add_option("--seed", opt.compare_seed, "randomization seed");

  CLI::App* report_cmd = app.add_subcommand("report", "aggregate finished runs");
  report_cmd->add_option("--output", opt.output, "training output directory")->required();
  report_cmd->add_option("--config", opt.config_path, "config supplying the cutoff list");

  CLI::App* sweep_cmd = app.add_subcommand("sweep", "emit learning-rate sweep configs");
  sweep_cmd->add_option("--config", opt.config_path, "base config")->required();
  sweep_cmd->add_option("--output", opt.output, "directory for generated configs");

  CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic benchmark");
  synth_cmd->add_option("--output", opt.output, "directory for the three splits");
  synth_cmd->add_option("--queries", opt.queries, "training queries (default 200)");
  synth_cmd->add_option("--valid-queries", opt.valid_queries, "validation queries");
  synth_cmd->add_option("--test-queries", opt.test_queries, "test queries");
  synth_cmd->add_option("--docs", opt.docs, "documents per query (default 10)");
  synth_cmd->add_option("--features", opt.features, "feature count (default 5)");
  synth_cmd->add_option("--noise", opt.noise, "label noise scale (default 0)");
  synth_cmd->add_option("--seed", opt.synth_seed, "generator seed (default 1)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (train_cmd->parsed()) return run_train(opt);
    if (eval_cmd->parsed()) return run_evaluate(opt);
    if (compare_cmd->parsed()) return run_compare(opt);
    if (report_cmd->parsed()) return run_report(opt);
    if (sweep_cmd->parsed()) return run_sweep(opt);
    if (synth_cmd->parsed()) return run_synth(opt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const SamplingStallError& e) {
    std::cerr << "sampling stall: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}
