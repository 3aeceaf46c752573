#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "serprank/train/experiment.hpp"

namespace serprank::train {

// ----- CSV artifacts ---------------------------------------------------------

// `step,algorithm,loss,mean_reward,lr,seed`
std::string render_steps_csv(const std::vector<StepLog>& logs);

// `eval_index,split,ndcg@10`: one row per recorded evaluation per split.
std::string render_curves_csv(const std::vector<EvalPoint>& evals);

// `split,qid,metric,cutoff,value`, filtered to the requested cutoffs.
std::string render_metrics_csv(
    const std::vector<std::pair<data::Split, const metrics::MetricReport*>>& sections,
    const std::vector<int>& cutoffs);

// Per-query values of one metric column pulled back out of a metrics.csv.
struct MetricColumn {
  std::vector<std::string> qids;
  std::vector<double> values;
};

MetricColumn read_metric_column(std::istream& in, data::Split split, RewardMetric metric,
                                int cutoff);
MetricColumn metric_column(const metrics::MetricReport& report, RewardMetric metric, int cutoff,
                           data::Split split = data::Split::kTest);

// ----- significance comparison ----------------------------------------------

struct CompareResult {
  double mean_a = 0.0;
  double mean_b = 0.0;
  double p_value = 1.0;
  bool significant = false;  // p <= 0.05
};

// Paired randomization test over two per-query columns; the query sequences
// must match exactly.
CompareResult cmd_compare(const MetricColumn& a, const MetricColumn& b, int permutations,
                          std::uint64_t seed);

// ----- run summaries (what `report` aggregates) ------------------------------

struct CurvePoint {
  long step = 0;
  double train = 0.0, valid = 0.0, test = 0.0;  // mean nDCG@10 per split
};

// The aggregate slice of a RunRecord that reporting needs; persisted as
// run.json so reporting never recomputes metrics.
struct RunSummary {
  Algorithm algorithm = Algorithm::kPgRank;
  std::uint64_t seed = 0;
  bool diverged = false;
  std::string divergence_message;
  int best_eval_index = -1;
  long best_step = 0;
  double best_valid_ndcg10 = 0.0;
  double train_seconds = 0.0;
  std::array<double, metrics::kCutoffs.size()> train_ndcg{}, train_err{};
  std::array<double, metrics::kCutoffs.size()> test_ndcg{}, test_err{};
  std::vector<CurvePoint> curve;
};

RunSummary summarize(const RunRecord& record);
void write_run_summary(const std::string& path, const RunSummary& summary);
RunSummary read_run_summary(const std::string& path);

// ----- the report command -----------------------------------------------------

struct AlgorithmReport {
  Algorithm algorithm = Algorithm::kPgRank;
  int runs = 0;      // summaries seen
  int usable = 0;    // non-diverged summaries that contributed to the means
  std::array<double, metrics::kCutoffs.size()> train_ndcg{}, train_err{};
  std::array<double, metrics::kCutoffs.size()> test_ndcg{}, test_err{};
  double gap_ndcg10 = 0.0;  // (train - test) / train at nDCG@10
  std::vector<CurvePoint> curve;  // seed-averaged, truncated to the shortest run
};

// Groups summaries by algorithm and averages over the usable seeds.
std::vector<AlgorithmReport> aggregate_report(const std::vector<RunSummary>& summaries);

// "(train - test)/train" as a percentage with one decimal, e.g. "12.7%".
std::string format_gap(double train_ndcg10, double test_ndcg10);

std::string render_table_csv(const std::vector<AlgorithmReport>& rows,
                             const std::vector<int>& cutoffs);
std::string render_table_text(const std::vector<AlgorithmReport>& rows,
                              const std::vector<int>& cutoffs);
std::string render_report_curves_csv(const AlgorithmReport& row);

// Scans output_dir/<algorithm>/<seed>/run.json, aggregates, and writes
// table.csv, table.txt and curves_<algorithm>.csv under output_dir/report/.
std::vector<AlgorithmReport> cmd_report(const std::string& output_dir,
                                        const std::vector<int>& cutoffs);

// Writes via a temp file plus rename so partial files are never observed.
void write_text_atomic(const std::string& path, const std::string& content);

}  // namespace serprank::train
