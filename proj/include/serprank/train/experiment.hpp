#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "serprank/data/dataset.hpp"
#include "serprank/metrics/metrics.hpp"
#include "serprank/train/trainers.hpp"

namespace serprank::train {

struct DataConfig {
  std::string train_path, valid_path, test_path;
  int feature_limit = 0;  // keep only the first n features; 0 keeps all
  bool normalize = true;  // per-query min-max rescale
};

struct ExperimentConfig {
  DataConfig data;
  TrainerConfig trainer;
  std::vector<int> cutoffs{1, 3, 5, 10};
  int repeats = 5;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  int validation_interval = 100;  // steps between evaluations
  int validation_epochs = 10;     // epoch cadence for the epoch-trained policy
  std::string output_dir = "runs";

  // Structural checks only; dataset-path presence is checked by the commands
  // that need the paths.
  void validate() const;
};

// One mid-training evaluation over all three splits.
struct EvalPoint {
  long step = 0;
  metrics::MetricReport train, valid, test;
};

struct RunRecord {
  std::uint64_t seed = 0;
  Algorithm algorithm = Algorithm::kPgRank;
  std::vector<StepLog> step_logs;
  std::vector<EvalPoint> evals;
  int best_eval_index = -1;            // argmax valid nDCG@10, earliest on ties
  std::string best_checkpoint_path;
  metrics::MetricReport final_train;   // best checkpoint re-evaluated
  metrics::MetricReport final_test;
  double train_seconds = 0.0;
  bool diverged = false;               // this seed aborted; others are unaffected
  std::string divergence_message;
};

// Index of the evaluation with the highest validation nDCG@10; the earliest
// one wins ties.  Returns -1 on an empty list.
int select_best_eval(const std::vector<EvalPoint>& evals);

struct LoadedData {
  data::Dataset train, valid, test;
};

// Loads, optionally truncates and normalizes, all three splits; feature counts
// must agree afterwards.
LoadedData load_experiment_data(const DataConfig& config);

// Trains one seed end to end and writes its artifacts (steps.csv, curves.csv,
// metrics.csv, best checkpoint, run.json) under output/<algorithm>/<seed>/.
RunRecord run_single_seed(const ExperimentConfig& config, const LoadedData& data,
                          std::uint64_t seed);

// Full protocol: every seed in config.seeds, plus config.echo in the run
// directory.  Divergence aborts only the affected seed.
std::vector<RunRecord> cmd_train(const ExperimentConfig& config);

// Loads a checkpoint and scores one split deterministically.
metrics::MetricReport cmd_evaluate(const std::string& checkpoint_path,
                                   const data::Dataset& dataset, const TrainerConfig& trainer);

}  // namespace serprank::train
