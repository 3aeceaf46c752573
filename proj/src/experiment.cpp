#include "serprank/train/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>

#include "serprank/train/config_file.hpp"
#include "serprank/train/report.hpp"

namespace serprank::train {

namespace fs = std::filesystem;

namespace {

bool cutoff_supported(int cutoff) {
  return std::find(metrics::kCutoffs.begin(), metrics::kCutoffs.end(), cutoff) !=
         metrics::kCutoffs.end();
}

// Deterministic Fisher-Yates; std::shuffle is not pinned across libraries.
void shuffle_indices(std::vector<std::size_t>& indices, Rng& rng) {
  for (std::size_t i = indices.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(indices[i - 1], indices[j]);
  }
}

double mean_valid_ndcg10(const EvalPoint& eval) { return eval.valid.mean_ndcg(10); }

struct SeedLoop {
  const ExperimentConfig& config;
  const LoadedData& data;
  RunRecord& record;
  AlgorithmState& state;
  const std::string seed_dir;
  double best_valid = -1.0;

  void evaluate(long step) {
    EvalPoint point;
    point.step = step;
    point.train = evaluate_policy(state, data.train, config.trainer);
    point.valid = evaluate_policy(state, data.valid, config.trainer);
    point.test = evaluate_policy(state, data.test, config.trainer);
    record.evals.push_back(std::move(point));
    const double valid = mean_valid_ndcg10(record.evals.back());
    if (valid > best_valid) {  // strict: the earliest evaluation wins ties
      best_valid = valid;
      record.best_eval_index = static_cast<int>(record.evals.size()) - 1;
      record.best_checkpoint_path = seed_dir + "/best.json";
      save_algorithm_state(record.best_checkpoint_path, state);
    }
  }

  void log(StepLog log) {
    log.seed = record.seed;
    record.step_logs.push_back(log);
  }
};

void run_step_regime(SeedLoop& loop, Rng& rng) {
  const TrainerConfig& trainer = loop.config.trainer;
  for (long step = 1; step <= trainer.steps; ++step) {
    const data::Batch batch = data::sample_batch(loop.data.train, trainer.batch_size, rng);
    loop.log(train_step(loop.state, batch, trainer, rng));
    if (step % loop.config.validation_interval == 0 || step == trainer.steps) {
      loop.evaluate(step);
    }
  }
}

// Epoch regime: seeded-shuffle passes over the whole training set in
// batch_size chunks, evaluating every validation_epochs epochs.
void run_epoch_regime(SeedLoop& loop, Rng& rng) {
  const TrainerConfig& trainer = loop.config.trainer;
  std::vector<std::size_t> order(loop.data.train.groups.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int epoch = 1; epoch <= trainer.epochs; ++epoch) {
    shuffle_indices(order, rng);
    for (std::size_t offset = 0; offset < order.size();
         offset += static_cast<std::size_t>(trainer.batch_size)) {
      data::Batch batch;
      const std::size_t stop =
          std::min(order.size(), offset + static_cast<std::size_t>(trainer.batch_size));
      for (std::size_t i = offset; i < stop; ++i) {
        batch.groups.push_back(&loop.data.train.groups[order[i]]);
      }
      loop.log(train_step(loop.state, batch, trainer, rng));
    }
    if (epoch % loop.config.validation_epochs == 0 || epoch == trainer.epochs) {
      loop.evaluate(loop.state.global_step);
    }
  }
}

void write_seed_artifacts(const ExperimentConfig& config, const RunRecord& record,
                          const std::string& seed_dir) {
  write_text_atomic(seed_dir + "/steps.csv", render_steps_csv(record.step_logs));
  write_text_atomic(seed_dir + "/curves.csv", render_curves_csv(record.evals));
  write_text_atomic(seed_dir + "/metrics.csv",
                    render_metrics_csv({{data::Split::kTrain, &record.final_train},
                                        {data::Split::kTest, &record.final_test}},
                                       config.cutoffs));
  write_run_summary(seed_dir + "/run.json", summarize(record));
}

}  // namespace

void ExperimentConfig::validate() const {
  trainer.validate();
  if (repeats < 1) throw ConfigError("repeats must be >= 1");
  if (static_cast<std::size_t>(repeats) != seeds.size()) {
    throw ConfigError("repeats (" + std::to_string(repeats) + ") must equal the seed count (" +
                      std::to_string(seeds.size()) + ")");
  }
  if (cutoffs.empty()) throw ConfigError("cutoffs must be non-empty");
  for (std::size_t i = 0; i < cutoffs.size(); ++i) {
    if (!cutoff_supported(cutoffs[i])) {
      throw ConfigError("unsupported cutoff " + std::to_string(cutoffs[i]));
    }
    if (i > 0 && cutoffs[i] <= cutoffs[i - 1]) {
      throw ConfigError("cutoffs must be strictly ascending");
    }
  }
  if (validation_interval < 1) throw ConfigError("validation_interval must be >= 1");
  if (validation_epochs < 1) throw ConfigError("validation_epochs must be >= 1");
  if (output_dir.empty()) throw ConfigError("output directory must be set");
}

int select_best_eval(const std::vector<EvalPoint>& evals) {
  int best = -1;
  double best_value = -1.0;
  for (std::size_t i = 0; i < evals.size(); ++i) {
    const double value = mean_valid_ndcg10(evals[i]);
    if (value > best_value) {
      best_value = value;
      best = static_cast<int>(i);
    }
  }
  return best;
}

LoadedData load_experiment_data(const DataConfig& config) {
  if (config.train_path.empty() || config.valid_path.empty() || config.test_path.empty()) {
    throw ConfigError("train, valid and test dataset paths must all be set");
  }
  LoadedData data;
  data.train = data::load_letor_file(config.train_path);
  data.valid = data::load_letor_file(config.valid_path);
  data.test = data::load_letor_file(config.test_path);
  data.train.split = data::Split::kTrain;
  data.valid.split = data::Split::kValid;
  data.test.split = data::Split::kTest;
  if (config.feature_limit > 0) {
    data.train = data::truncate_features(data.train, config.feature_limit);
    data.valid = data::truncate_features(data.valid, config.feature_limit);
    data.test = data::truncate_features(data.test, config.feature_limit);
  }
  if (data.valid.feature_count != data.train.feature_count ||
      data.test.feature_count != data.train.feature_count) {
    throw DataError("splits disagree on feature count: train " +
                    std::to_string(data.train.feature_count) + ", valid " +
                    std::to_string(data.valid.feature_count) + ", test " +
                    std::to_string(data.test.feature_count));
  }
  if (config.normalize) {
    data.train = data::normalize_dataset(data.train);
    data.valid = data::normalize_dataset(data.valid);
    data.test = data::normalize_dataset(data.test);
  }
  return data;
}

RunRecord run_single_seed(const ExperimentConfig& config, const LoadedData& data,
                          std::uint64_t seed) {
  const std::string seed_dir = (fs::path(config.output_dir) /
                                to_string(config.trainer.algorithm) / std::to_string(seed))
                                   .string();
  fs::create_directories(seed_dir);

  RunRecord record;
  record.seed = seed;
  record.algorithm = config.trainer.algorithm;

  const auto started = std::chrono::steady_clock::now();
  Rng rng(seed);
  AlgorithmState state = init_algorithm(config.trainer, data.train.feature_count, rng);
  SeedLoop loop{config, data, record, state, seed_dir};
  try {
    loop.evaluate(0);  // the untouched model is a selectable candidate
    if (config.trainer.algorithm == Algorithm::kPgRank) {
      run_epoch_regime(loop, rng);
    } else {
      run_step_regime(loop, rng);
    }
  } catch (const DivergenceError& e) {
    record.diverged = true;
    record.divergence_message = e.what();
  } catch (const SamplingStallError& e) {
    record.diverged = true;
    record.divergence_message = e.what();
  }
  record.train_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  // Final train/test evaluation of the best checkpoint, reloaded from disk so
  // the artifact itself is what gets scored.
  const AlgorithmState best = load_algorithm_state(record.best_checkpoint_path);
  record.final_train = evaluate_policy(best, data.train, config.trainer);
  record.final_test = evaluate_policy(best, data.test, config.trainer);

  write_seed_artifacts(config, record, seed_dir);
  return record;
}

std::vector<RunRecord> cmd_train(const ExperimentConfig& config) {
  config.validate();
  const LoadedData data = load_experiment_data(config.data);
  const std::string run_dir =
      (fs::path(config.output_dir) / to_string(config.trainer.algorithm)).string();
  fs::create_directories(run_dir);
  write_text_atomic(run_dir + "/config.echo", echo_config(config));

  std::vector<RunRecord> records;
  records.reserve(config.seeds.size());
  for (std::uint64_t seed : config.seeds) {
    records.push_back(run_single_seed(config, data, seed));
  }
  return records;
}

metrics::MetricReport cmd_evaluate(const std::string& checkpoint_path,
                                   const data::Dataset& dataset, const TrainerConfig& trainer) {
  const AlgorithmState state = load_algorithm_state(checkpoint_path);
  return evaluate_policy(state, dataset, trainer);
}

}  // namespace serprank::train
