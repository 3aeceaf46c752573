#include <array>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "serprank/data/dataset.hpp"
#include "serprank/train/config_file.hpp"
#include "serprank/train/experiment.hpp"
#include "serprank/train/report.hpp"

using namespace serprank;
using train::Algorithm;
using train::ExperimentConfig;

namespace fs = std::filesystem;

namespace {

std::string fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

train::LoadedData tiny_splits(std::uint64_t seed, int train_queries = 8) {
  Rng rng(seed);
  train::LoadedData data;
  data.train = data::generate_synthetic(train_queries, 6, 3, rng);
  data.valid = data::generate_synthetic(4, 6, 3, rng);
  data.test = data::generate_synthetic(4, 6, 3, rng);
  data.train.split = data::Split::kTrain;
  data.valid.split = data::Split::kValid;
  data.test.split = data::Split::kTest;
  return data;
}

ExperimentConfig tiny_config(Algorithm algorithm, const std::string& output_dir) {
  ExperimentConfig config;
  config.trainer.algorithm = algorithm;
  config.trainer.lr = 0.05;
  config.trainer.rank_list_size = 5;
  config.trainer.batch_size = 4;
  config.trainer.sample_count = 2;
  config.trainer.m_samples = 2;
  config.trainer.steps = 3;
  config.trainer.epochs = 2;
  config.trainer.scorer_hidden = {4};
  config.trainer.critic_hidden = {4};
  config.trainer.vae_latent = 2;
  config.trainer.vae_encoder_hidden = {4};
  config.trainer.vae_decoder_hidden = {4};
  config.trainer.perturb_hidden = {4};
  config.seeds = {11};
  config.repeats = 1;
  config.validation_interval = 2;
  config.validation_epochs = 1;
  config.output_dir = output_dir;
  return config;
}

// One perfect query: mean nDCG@10 of exactly 1.
metrics::MetricReport ideal_report() {
  metrics::MetricReport report;
  report.add("q1", {2, 1}, {2, 1}, 4);
  return report;
}

// One inverted query: mean nDCG@10 strictly below 1.
metrics::MetricReport weak_report() {
  metrics::MetricReport report;
  report.add("q1", {0, 2}, {0, 2}, 4);
  return report;
}

train::EvalPoint eval_point(long step, bool strong) {
  train::EvalPoint point;
  point.step = step;
  point.train = strong ? ideal_report() : weak_report();
  point.valid = strong ? ideal_report() : weak_report();
  point.test = strong ? ideal_report() : weak_report();
  return point;
}

train::RunSummary summary_fixture(Algorithm algorithm, std::uint64_t seed, double train_ndcg10,
                                  double test_ndcg10, int curve_points) {
  train::RunSummary summary;
  summary.algorithm = algorithm;
  summary.seed = seed;
  summary.best_eval_index = 0;
  summary.best_step = 0;
  summary.best_valid_ndcg10 = test_ndcg10;
  summary.train_seconds = 1.0;
  for (std::size_t c = 0; c < metrics::kCutoffs.size(); ++c) {
    summary.train_ndcg[c] = train_ndcg10;
    summary.train_err[c] = train_ndcg10 / 2.0;
    summary.test_ndcg[c] = test_ndcg10;
    summary.test_err[c] = test_ndcg10 / 2.0;
  }
  for (int i = 0; i < curve_points; ++i) {
    summary.curve.push_back({static_cast<long>(i), train_ndcg10, test_ndcg10, test_ndcg10});
  }
  return summary;
}

}  // namespace

TEST_CASE("parse_config_text handles sections, comments and whitespace") {
  const std::string text =
      "# leading comment\n"
      "[data]\n"
      "train = a.txt\n"
      "  normalize=false\n"
      "; another comment style\n"
      "\n"
      "[trainer]\n"
      "lr = 0.5\n";
  const train::ConfigMap map = train::parse_config_text(text);
  REQUIRE(map.size() == 3);
  CHECK(map.at("data.train") == "a.txt");
  CHECK(map.at("data.normalize") == "false");
  CHECK(map.at("trainer.lr") == "0.5");
}

TEST_CASE("parse_config_text rejects malformed input with line numbers") {
  const auto expect_mention = [](const std::string& text, const std::string& fragment) {
    try {
      train::parse_config_text(text);
      FAIL_CHECK("expected ConfigError for: " << text);
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(fragment) != std::string::npos);
    }
  };
  expect_mention("key = 1\n", "line 1");                          // key before any section
  expect_mention("[data]\nbroken line\n", "line 2");              // no '='
  expect_mention("[data\ntrain = x\n", "malformed section");      // unterminated header
  expect_mention("[data]\n = 5\n", "empty key");
  expect_mention("[data]\ntrain = a\ntrain = b\n", "duplicate key 'data.train'");
}

TEST_CASE("experiment_config_from_map applies values onto defaults") {
  train::ConfigMap map;
  map["trainer.algorithm"] = "ddpg";
  map["trainer.lr"] = "0.5";
  map["trainer.ddpg_transition"] = "batch-chain";
  map["trainer.reward"] = "err@5";
  map["experiment.seeds"] = "7, 8";
  map["experiment.cutoffs"] = "1 3";
  const ExperimentConfig config = train::experiment_config_from_map(map);
  CHECK(config.trainer.algorithm == Algorithm::kDdpg);
  CHECK(config.trainer.lr == 0.5);
  CHECK(config.trainer.ddpg_transition == train::DdpgTransition::kBatchChain);
  CHECK(config.trainer.reward_metric == train::RewardMetric::kErr);
  CHECK(config.trainer.reward_cutoff == 5);
  CHECK(config.seeds == std::vector<std::uint64_t>{7, 8});
  CHECK(config.repeats == 2);  // derived from the seed list
  CHECK(config.cutoffs == std::vector<int>{1, 3});
  CHECK(config.trainer.batch_size == 256);  // untouched default

  SUBCASE("repeats alone derives consecutive seeds") {
    train::ConfigMap only_repeats;
    only_repeats["experiment.repeats"] = "3";
    const ExperimentConfig derived = train::experiment_config_from_map(only_repeats);
    CHECK(derived.seeds == std::vector<std::uint64_t>{1, 2, 3});
  }

  SUBCASE("alpha_td accepts the gamma sentinel") {
    train::ConfigMap sentinel;
    sentinel["trainer.alpha_td"] = "gamma";
    sentinel["trainer.gamma"] = "0.25";
    const ExperimentConfig derived = train::experiment_config_from_map(sentinel);
    CHECK(derived.trainer.effective_alpha_td() == 0.25);
  }

  SUBCASE("bad values and unknown keys are config errors") {
    const auto reject = [](const std::string& key, const std::string& value) {
      train::ConfigMap bad;
      bad[key] = value;
      CHECK_THROWS_AS(train::experiment_config_from_map(bad), ConfigError);
    };
    reject("trainer.unknown", "1");
    reject("nonsense.key", "1");
    reject("trainer.lr", "fast");
    reject("trainer.steps", "many");
    reject("data.normalize", "maybe");
    reject("experiment.seeds", "1 x");
    reject("experiment.cutoffs", "1 2");     // 2 is not a supported cutoff
    reject("trainer.algorithm", "sarsa");
  }

  SUBCASE("explicitly inconsistent repeats and seeds are rejected") {
    train::ConfigMap bad;
    bad["experiment.repeats"] = "2";
    bad["experiment.seeds"] = "1 2 3";
    CHECK_THROWS_AS(train::experiment_config_from_map(bad), ConfigError);
  }
}

TEST_CASE("echo_config round-trips through the parser") {
  train::ConfigMap map;
  map["data.train"] = "train.txt";
  map["data.valid"] = "valid.txt";
  map["data.test"] = "test.txt";
  map["trainer.algorithm"] = "bcq";
  map["trainer.lr"] = "0.002";
  map["trainer.grad_clip"] = "5";
  map["experiment.seeds"] = "3 1 4";
  const ExperimentConfig config = train::experiment_config_from_map(map);
  const std::string echoed = train::echo_config(config);
  CHECK(echoed.find("[data]") != std::string::npos);
  CHECK(echoed.find("[trainer]") != std::string::npos);
  CHECK(echoed.find("[experiment]") != std::string::npos);
  CHECK(echoed.find("algorithm = bcq") != std::string::npos);
  CHECK(echoed.find("seeds = 3 1 4") != std::string::npos);

  const ExperimentConfig reparsed =
      train::experiment_config_from_map(train::parse_config_text(echoed));
  CHECK(train::echo_config(reparsed) == echoed);  // echo is a fixed point
}

TEST_CASE("experiment config validation") {
  ExperimentConfig config = tiny_config(Algorithm::kPgRank, "out");
  CHECK_NOTHROW(config.validate());

  const auto expect_reject = [&](auto mutate) {
    ExperimentConfig bad = tiny_config(Algorithm::kPgRank, "out");
    mutate(bad);
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  };
  expect_reject([](ExperimentConfig& c) { c.repeats = 0; });
  expect_reject([](ExperimentConfig& c) { c.repeats = 3; });  // differs from seed count
  expect_reject([](ExperimentConfig& c) { c.cutoffs = {}; });
  expect_reject([](ExperimentConfig& c) { c.cutoffs = {1, 2}; });
  expect_reject([](ExperimentConfig& c) { c.cutoffs = {10, 5}; });
  expect_reject([](ExperimentConfig& c) { c.cutoffs = {3, 3}; });
  expect_reject([](ExperimentConfig& c) { c.validation_interval = 0; });
  expect_reject([](ExperimentConfig& c) { c.validation_epochs = 0; });
  expect_reject([](ExperimentConfig& c) { c.output_dir.clear(); });
  expect_reject([](ExperimentConfig& c) { c.trainer.lr = 0.0; });
}

TEST_CASE("load_experiment_config reads files and reports missing ones") {
  const std::string dir = fresh_dir("serprank_cfg");
  const std::string path = dir + "/exp.ini";
  train::write_text_atomic(path,
                           "[trainer]\nalgorithm = oracle_ce\n[experiment]\nrepeats = 2\n");
  const ExperimentConfig config = train::load_experiment_config(path);
  CHECK(config.trainer.algorithm == Algorithm::kOracleCe);
  CHECK(config.seeds == std::vector<std::uint64_t>{1, 2});
  CHECK_THROWS_AS(train::load_experiment_config(dir + "/absent.ini"), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("select_best_eval prefers the highest validation ndcg, earliest on ties") {
  std::vector<train::EvalPoint> evals;
  CHECK(train::select_best_eval(evals) == -1);

  evals.push_back(eval_point(0, false));
  evals.push_back(eval_point(5, true));
  evals.push_back(eval_point(10, true));  // exact tie with index 1
  CHECK(train::select_best_eval(evals) == 1);

  evals.insert(evals.begin(), eval_point(0, true));
  CHECK(train::select_best_eval(evals) == 0);
}

TEST_CASE("load_experiment_data wires truncation and normalization") {
  const std::string dir = fresh_dir("serprank_data");
  Rng rng(3);
  data::Dataset train_set = data::generate_synthetic(4, 5, 3, rng);
  data::Dataset valid_set = data::generate_synthetic(2, 5, 3, rng);
  data::Dataset test_set = data::generate_synthetic(2, 5, 2, rng);  // one feature short
  data::save_letor_file(train_set, dir + "/train.txt");
  data::save_letor_file(valid_set, dir + "/valid.txt");
  data::save_letor_file(test_set, dir + "/test.txt");

  train::DataConfig config;
  config.train_path = dir + "/train.txt";
  config.valid_path = dir + "/valid.txt";
  config.test_path = dir + "/test.txt";

  SUBCASE("feature-count disagreement is a data error") {
    CHECK_THROWS_AS(train::load_experiment_data(config), DataError);
  }

  SUBCASE("a feature limit reconciles the splits") {
    config.feature_limit = 2;
    const train::LoadedData data = train::load_experiment_data(config);
    CHECK(data.train.feature_count == 2);
    CHECK(data.valid.feature_count == 2);
    CHECK(data.test.feature_count == 2);
    CHECK(data.train.split == data::Split::kTrain);
    CHECK(data.valid.split == data::Split::kValid);
    CHECK(data.test.split == data::Split::kTest);
  }

  SUBCASE("normalization keeps features inside the unit interval") {
    config.feature_limit = 2;
    config.normalize = true;
    const train::LoadedData data = train::load_experiment_data(config);
    for (const auto& group : data.train.groups) {
      for (const auto& doc : group.documents) {
        CHECK(doc.features.minCoeff() >= 0.0);
        CHECK(doc.features.maxCoeff() <= 1.0);
      }
    }
  }

  SUBCASE("unset paths are config errors") {
    train::DataConfig incomplete;
    incomplete.train_path = dir + "/train.txt";
    CHECK_THROWS_AS(train::load_experiment_data(incomplete), ConfigError);
  }

  fs::remove_all(dir);
}

TEST_CASE("run_single_seed: evaluation cadence, artifacts and best-checkpoint consistency") {
  const train::LoadedData data = tiny_splits(41);

  SUBCASE("step regime evaluates at step 0, every interval, and the end") {
    const std::string dir = fresh_dir("serprank_run_steps");
    const ExperimentConfig config = tiny_config(Algorithm::kOracleCe, dir);
    const train::RunRecord record = train::run_single_seed(config, data, 11);

    CHECK_FALSE(record.diverged);
    REQUIRE(record.evals.size() == 3);  // steps 0, 2, 3
    CHECK(record.evals[0].step == 0);
    CHECK(record.evals[1].step == 2);
    CHECK(record.evals[2].step == 3);
    CHECK(record.step_logs.size() == 3);
    for (std::size_t i = 0; i < record.step_logs.size(); ++i) {
      CHECK(record.step_logs[i].step == static_cast<long>(i) + 1);
      CHECK(record.step_logs[i].seed == 11);
    }

    REQUIRE(record.best_eval_index >= 0);
    CHECK(record.best_eval_index == train::select_best_eval(record.evals));
    const train::EvalPoint& best =
        record.evals[static_cast<std::size_t>(record.best_eval_index)];
    // Final numbers come from the reloaded artifact, which must reproduce the
    // winning evaluation bit for bit.
    CHECK(record.final_test.mean_ndcg(10) == best.test.mean_ndcg(10));
    CHECK(record.final_train.mean_ndcg(10) == best.train.mean_ndcg(10));

    const std::string seed_dir = dir + "/oracle_ce/11";
    for (const char* name : {"steps.csv", "curves.csv", "metrics.csv", "run.json", "best.json"}) {
      CHECK(fs::is_regular_file(seed_dir + "/" + name));
    }
    fs::remove_all(dir);
  }

  SUBCASE("epoch regime drives the listwise policy") {
    const std::string dir = fresh_dir("serprank_run_epochs");
    const ExperimentConfig config = tiny_config(Algorithm::kPgRank, dir);
    const train::RunRecord record = train::run_single_seed(config, data, 11);

    CHECK_FALSE(record.diverged);
    // 8 training queries in chunks of 4 -> 2 steps per epoch, 2 epochs.
    CHECK(record.step_logs.size() == 4);
    REQUIRE(record.evals.size() == 3);  // step 0 plus one eval per epoch
    CHECK(record.evals[0].step == 0);
    CHECK(record.evals[1].step == 2);
    CHECK(record.evals[2].step == 4);
    fs::remove_all(dir);
  }

  SUBCASE("steps = 0 records the untouched model only") {
    const std::string dir = fresh_dir("serprank_run_zero");
    ExperimentConfig config = tiny_config(Algorithm::kOracleCe, dir);
    config.trainer.steps = 0;
    const train::RunRecord record = train::run_single_seed(config, data, 11);
    CHECK(record.step_logs.empty());
    REQUIRE(record.evals.size() == 1);
    CHECK(record.evals[0].step == 0);
    CHECK(record.best_eval_index == 0);
    fs::remove_all(dir);
  }

  SUBCASE("a sampling stall marks the seed diverged but still yields artifacts") {
    const std::string dir = fresh_dir("serprank_run_stall");
    ExperimentConfig config = tiny_config(Algorithm::kReinforceTopK, dir);
    // A near-zero temperature drives the non-argmax probabilities to exactly
    // zero, so the with-replacement sampler can never finish a 5-slot page.
    config.trainer.tau_temp = 1e-9;
    config.trainer.steps = 1;
    const train::RunRecord record = train::run_single_seed(config, data, 11);
    CHECK(record.diverged);
    CHECK_FALSE(record.divergence_message.empty());
    REQUIRE(record.evals.size() == 1);  // the step-0 evaluation survived
    CHECK(fs::is_regular_file(dir + "/reinforce_topk/11/run.json"));
    const train::RunSummary summary =
        train::read_run_summary(dir + "/reinforce_topk/11/run.json");
    CHECK(summary.diverged);
    fs::remove_all(dir);
  }
}

TEST_CASE("cmd_train writes the echoed config and reruns byte-identically") {
  Rng rng(43);
  const std::string data_dir = fresh_dir("serprank_train_data");
  {
    data::Dataset train_set = data::generate_synthetic(8, 6, 3, rng);
    data::Dataset valid_set = data::generate_synthetic(4, 6, 3, rng);
    data::Dataset test_set = data::generate_synthetic(4, 6, 3, rng);
    data::save_letor_file(train_set, data_dir + "/train.txt");
    data::save_letor_file(valid_set, data_dir + "/valid.txt");
    data::save_letor_file(test_set, data_dir + "/test.txt");
  }

  const auto run_into = [&](const std::string& dir) {
    ExperimentConfig config = tiny_config(Algorithm::kOracleLambdaRank, dir);
    config.seeds = {5, 6};
    config.repeats = 2;
    config.data.train_path = data_dir + "/train.txt";
    config.data.valid_path = data_dir + "/valid.txt";
    config.data.test_path = data_dir + "/test.txt";
    config.data.normalize = false;
    return train::cmd_train(config);
  };

  const std::string dir_a = fresh_dir("serprank_train_a");
  const std::string dir_b = fresh_dir("serprank_train_b");
  const std::vector<train::RunRecord> first = run_into(dir_a);
  const std::vector<train::RunRecord> second = run_into(dir_b);

  REQUIRE(first.size() == 2);
  CHECK(first[0].seed == 5);
  CHECK(first[1].seed == 6);
  CHECK(fs::is_regular_file(dir_a + "/oracle_lambdarank/config.echo"));

  for (const char* seed : {"5", "6"}) {
    for (const char* name : {"steps.csv", "curves.csv", "metrics.csv", "best.json"}) {
      const std::string rel = std::string("/oracle_lambdarank/") + seed + "/" + name;
      CHECK(read_file(dir_a + rel) == read_file(dir_b + rel));
    }
  }

  fs::remove_all(data_dir);
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("render_steps_csv emits one exact row per log") {
  train::StepLog log;
  log.step = 1;
  log.algorithm = Algorithm::kPgRank;
  log.loss = 0.5;
  log.mean_reward = 0.25;
  log.lr = 0.001;
  log.seed = 7;
  CHECK(train::render_steps_csv({log}) ==
        "step,algorithm,loss,mean_reward,lr,seed\n"
        "1,pgrank,0.5,0.25,0.001,7\n");
  CHECK(train::render_steps_csv({}) == "step,algorithm,loss,mean_reward,lr,seed\n");
}

TEST_CASE("render_curves_csv emits three split rows per evaluation") {
  const std::vector<train::EvalPoint> evals{eval_point(0, false), eval_point(2, true)};
  const std::string csv = train::render_curves_csv(evals);
  std::istringstream in(csv);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 7);
  CHECK(lines[0] == "eval_index,split,ndcg@10");
  CHECK(lines[1].rfind("0,train,", 0) == 0);
  CHECK(lines[2].rfind("0,valid,", 0) == 0);
  CHECK(lines[3].rfind("0,test,", 0) == 0);
  CHECK(lines[4] == "1,train,1");
  CHECK(lines[6] == "1,test,1");
}

TEST_CASE("metrics csv round-trips through read_metric_column") {
  metrics::MetricReport report;
  report.add("q1", {2, 1}, {2, 1}, 4);
  report.add("q2", {0, 2}, {0, 2}, 4);
  const std::string csv = train::render_metrics_csv(
      {{data::Split::kTrain, &report}, {data::Split::kTest, &report}}, {1, 3, 5, 10});

  std::istringstream in(csv);
  const train::MetricColumn column =
      train::read_metric_column(in, data::Split::kTest, train::RewardMetric::kNdcg, 10);
  REQUIRE(column.qids == std::vector<std::string>{"q1", "q2"});
  CHECK(column.values[0] == report.per_query[0].ndcg[3]);
  CHECK(column.values[1] == report.per_query[1].ndcg[3]);

  const train::MetricColumn direct =
      train::metric_column(report, train::RewardMetric::kNdcg, 10);
  CHECK(direct.qids == column.qids);
  CHECK(direct.values == column.values);

  SUBCASE("wrong header is rejected") {
    std::istringstream bad("qid,value\nq1,0.5\n");
    CHECK_THROWS_AS(
        train::read_metric_column(bad, data::Split::kTest, train::RewardMetric::kNdcg, 10),
        DataError);
  }

  SUBCASE("an absent column is reported, not silently empty") {
    std::istringstream valid_split(csv);
    CHECK_THROWS_AS(train::read_metric_column(valid_split, data::Split::kValid,
                                              train::RewardMetric::kNdcg, 10),
                    DataError);
  }
}

TEST_CASE("cmd_compare runs the paired randomization test") {
  train::MetricColumn base;
  for (int i = 0; i < 50; ++i) {
    base.qids.push_back("q" + std::to_string(i));
    base.values.push_back(0.01 * i);
  }

  SUBCASE("identical columns are maximally insignificant") {
    const train::CompareResult result = train::cmd_compare(base, base, 1000, 7);
    CHECK(result.p_value == 1.0);
    CHECK_FALSE(result.significant);
    CHECK(result.mean_a == result.mean_b);
  }

  SUBCASE("a uniform large shift is detected") {
    train::MetricColumn shifted = base;
    for (double& v : shifted.values) v += 100.0;
    const train::CompareResult result = train::cmd_compare(shifted, base, 10000, 7);
    CHECK(result.p_value <= 0.001);
    CHECK(result.significant);
    CHECK(result.mean_a == doctest::Approx(result.mean_b + 100.0).epsilon(1e-12));
  }

  SUBCASE("mismatched query sets are rejected") {
    train::MetricColumn other = base;
    other.qids[3] = "different";
    CHECK_THROWS_AS(train::cmd_compare(base, other, 100, 7), ArgumentError);
  }
}

TEST_CASE("format_gap renders one-decimal percentages") {
  CHECK(train::format_gap(0.830, 0.725) == "12.7%");
  CHECK(train::format_gap(0.873, 0.742) == "15.0%");
  CHECK(train::format_gap(1.0, 1.0) == "0.0%");
  CHECK(train::format_gap(0.0, 0.0) == "n/a");
  CHECK(train::format_gap(-0.1, 0.0) == "n/a");
}

TEST_CASE("run summaries survive a json round-trip") {
  train::RunRecord record;
  record.seed = 9;
  record.algorithm = Algorithm::kDdpg;
  record.evals = {eval_point(0, false), eval_point(4, true)};
  record.best_eval_index = 1;
  record.final_train = ideal_report();
  record.final_test = weak_report();
  record.train_seconds = 1.5;

  const train::RunSummary summary = train::summarize(record);
  CHECK(summary.algorithm == Algorithm::kDdpg);
  CHECK(summary.seed == 9);
  CHECK(summary.best_eval_index == 1);
  CHECK(summary.best_step == 4);
  CHECK(summary.best_valid_ndcg10 == 1.0);
  CHECK(summary.train_ndcg[3] == record.final_train.mean_ndcg(10));
  CHECK(summary.test_ndcg[3] == record.final_test.mean_ndcg(10));
  CHECK(summary.test_err[0] == record.final_test.mean_err(1));
  REQUIRE(summary.curve.size() == 2);
  CHECK(summary.curve[0].step == 0);
  CHECK(summary.curve[1].valid == 1.0);

  const std::string dir = fresh_dir("serprank_summary");
  const std::string path = dir + "/run.json";
  train::write_run_summary(path, summary);
  const train::RunSummary loaded = train::read_run_summary(path);
  CHECK(loaded.algorithm == summary.algorithm);
  CHECK(loaded.seed == summary.seed);
  CHECK(loaded.diverged == summary.diverged);
  CHECK(loaded.best_eval_index == summary.best_eval_index);
  CHECK(loaded.best_step == summary.best_step);
  CHECK(loaded.best_valid_ndcg10 == summary.best_valid_ndcg10);
  CHECK(loaded.train_seconds == summary.train_seconds);
  CHECK(loaded.train_ndcg == summary.train_ndcg);
  CHECK(loaded.train_err == summary.train_err);
  CHECK(loaded.test_ndcg == summary.test_ndcg);
  CHECK(loaded.test_err == summary.test_err);
  REQUIRE(loaded.curve.size() == summary.curve.size());
  for (std::size_t i = 0; i < loaded.curve.size(); ++i) {
    CHECK(loaded.curve[i].step == summary.curve[i].step);
    CHECK(loaded.curve[i].train == summary.curve[i].train);
    CHECK(loaded.curve[i].valid == summary.curve[i].valid);
    CHECK(loaded.curve[i].test == summary.curve[i].test);
  }

  SUBCASE("wrong checkpoint kind is rejected") {
    train::write_text_atomic(dir + "/bad.json", "{\"kind\": \"model\"}");
    CHECK_THROWS_AS(train::read_run_summary(dir + "/bad.json"), CheckpointError);
  }
  fs::remove_all(dir);
}

TEST_CASE("aggregate_report averages usable seeds and truncates curves") {
  std::vector<train::RunSummary> summaries;
  summaries.push_back(summary_fixture(Algorithm::kPgRank, 1, 0.75, 0.5, 3));
  train::RunSummary dead = summary_fixture(Algorithm::kPgRank, 2, 0.9, 0.9, 1);
  dead.diverged = true;
  summaries.push_back(dead);
  summaries.push_back(summary_fixture(Algorithm::kPgRank, 3, 0.5, 0.25, 2));
  summaries.push_back(summary_fixture(Algorithm::kOracleLambdaRank, 1, 0.873, 0.742, 2));

  const std::vector<train::AlgorithmReport> rows = train::aggregate_report(summaries);
  REQUIRE(rows.size() == 2);

  const train::AlgorithmReport& pgrank = rows[0];
  CHECK(pgrank.algorithm == Algorithm::kPgRank);
  CHECK(pgrank.runs == 3);
  CHECK(pgrank.usable == 2);
  CHECK(pgrank.train_ndcg[3] == 0.625);      // mean of 0.75 and 0.5, diverged seed excluded
  CHECK(pgrank.test_ndcg[3] == 0.375);
  CHECK(pgrank.gap_ndcg10 == 0.4);           // (0.625 - 0.375) / 0.625
  REQUIRE(pgrank.curve.size() == 2);         // truncated to the shortest usable run
  CHECK(pgrank.curve[0].train == 0.625);

  const train::AlgorithmReport& oracle = rows[1];
  CHECK(oracle.algorithm == Algorithm::kOracleLambdaRank);
  CHECK(oracle.usable == 1);
  CHECK(train::format_gap(oracle.train_ndcg[3], oracle.test_ndcg[3]) == "15.0%");
}

TEST_CASE("cmd_report scans run directories and writes the report artifacts") {
  const std::string dir = fresh_dir("serprank_report");

  SUBCASE("an empty directory has nothing to report") {
    CHECK_THROWS_AS(train::cmd_report(dir, {1, 3, 5, 10}), DataError);
  }

  SUBCASE("summaries aggregate into table and curve files") {
    const auto drop = [&](Algorithm algorithm, std::uint64_t seed, double train_v,
                          double test_v) {
      const std::string seed_dir =
          dir + "/" + train::to_string(algorithm) + "/" + std::to_string(seed);
      fs::create_directories(seed_dir);
      train::write_run_summary(seed_dir + "/run.json",
                               summary_fixture(algorithm, seed, train_v, test_v, 2));
    };
    drop(Algorithm::kPgRank, 1, 0.830, 0.725);
    drop(Algorithm::kOracleLambdaRank, 1, 0.873, 0.742);
    // A stray non-numeric directory must be ignored, not crash the scan.
    fs::create_directories(dir + "/pgrank/notes");

    const std::vector<train::AlgorithmReport> rows = train::cmd_report(dir, {1, 3, 5, 10});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].algorithm == Algorithm::kPgRank);

    const std::string table = read_file(dir + "/report/table.csv");
    CHECK(table.find("12.7%") != std::string::npos);
    CHECK(table.find("15.0%") != std::string::npos);
    CHECK(fs::is_regular_file(dir + "/report/table.txt"));
    CHECK(fs::is_regular_file(dir + "/report/curves_pgrank.csv"));
    CHECK(fs::is_regular_file(dir + "/report/curves_oracle_lambdarank.csv"));

    const std::string text_table = read_file(dir + "/report/table.txt");
    CHECK(text_table.find("algorithm") != std::string::npos);
    CHECK(text_table.find("12.7%") != std::string::npos);
  }

  fs::remove_all(dir);
}

TEST_CASE("cmd_evaluate scores a saved checkpoint") {
  const std::string dir = fresh_dir("serprank_eval");
  const train::LoadedData data = tiny_splits(47);
  ExperimentConfig config = tiny_config(Algorithm::kOracleCe, dir);
  const train::RunRecord record = train::run_single_seed(config, data, 11);

  const metrics::MetricReport report =
      train::cmd_evaluate(record.best_checkpoint_path, data.test, config.trainer);
  CHECK(report.mean_ndcg(10) == record.final_test.mean_ndcg(10));
  CHECK_THROWS_AS(train::cmd_evaluate(dir + "/absent.json", data.test, config.trainer),
                  DataError);
  fs::remove_all(dir);
}
