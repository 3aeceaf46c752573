#include "serprank/train/report.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <utility>

#include "serprank/nn/checkpoint.hpp"

namespace serprank::train {

namespace fs = std::filesystem;

namespace {

std::size_t cutoff_slot(int cutoff) {
  for (std::size_t c = 0; c < metrics::kCutoffs.size(); ++c) {
    if (metrics::kCutoffs[c] == cutoff) return c;
  }
  throw ArgumentError("unsupported report cutoff " + std::to_string(cutoff));
}

const char* metric_tag(RewardMetric metric) {
  return metric == RewardMetric::kNdcg ? "ndcg" : "err";
}

std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(std::exchange(current, {}));
    } else if (c != '\r') {
      current.push_back(c);
    }
  }
  fields.push_back(current);
  return fields;
}

std::string fixed4(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.4f", value);
  return buffer;
}

}  // namespace

std::string render_steps_csv(const std::vector<StepLog>& logs) {
  std::string out = "step,algorithm,loss,mean_reward,lr,seed\n";
  for (const StepLog& log : logs) {
    out += std::to_string(log.step);
    out += ',';
    out += to_string(log.algorithm);
    out += ',';
    out += format_double(log.loss);
    out += ',';
    out += format_double(log.mean_reward);
    out += ',';
    out += format_double(log.lr);
    out += ',';
    out += std::to_string(log.seed);
    out += '\n';
  }
  return out;
}

std::string render_curves_csv(const std::vector<EvalPoint>& evals) {
  std::string out = "eval_index,split,ndcg@10\n";
  for (std::size_t i = 0; i < evals.size(); ++i) {
    const auto row = [&](const char* split, const metrics::MetricReport& report) {
      out += std::to_string(i);
      out += ',';
      out += split;
      out += ',';
      out += format_double(report.mean_ndcg(10));
      out += '\n';
    };
    row("train", evals[i].train);
    row("valid", evals[i].valid);
    row("test", evals[i].test);
  }
  return out;
}

std::string render_metrics_csv(
    const std::vector<std::pair<data::Split, const metrics::MetricReport*>>& sections,
    const std::vector<int>& cutoffs) {
  std::string out = "split,qid,metric,cutoff,value\n";
  for (const auto& [split, report] : sections) {
    const std::string split_name = data::to_string(split);
    for (const auto& row : report->per_query) {
      for (int k : cutoffs) {
        out += split_name + "," + row.qid + ",ndcg," + std::to_string(k) + "," +
               format_double(row.ndcg[cutoff_slot(k)]) + "\n";
      }
      for (int k : cutoffs) {
        out += split_name + "," + row.qid + ",err," + std::to_string(k) + "," +
               format_double(row.err[cutoff_slot(k)]) + "\n";
      }
    }
  }
  return out;
}

MetricColumn read_metric_column(std::istream& in, data::Split split, RewardMetric metric,
                                int cutoff) {
  std::string line;
  if (!std::getline(in, line) || split_csv_row(line) != std::vector<std::string>{
                                     "split", "qid", "metric", "cutoff", "value"}) {
    throw DataError("not a metrics csv: bad header");
  }
  const std::string want_split = data::to_string(split);
  const std::string want_metric = metric_tag(metric);
  const std::string want_cutoff = std::to_string(cutoff);
  MetricColumn column;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_csv_row(line);
    if (fields.size() != 5) throw ParseError(line_no, "expected 5 csv fields");
    if (fields[0] != want_split || fields[2] != want_metric || fields[3] != want_cutoff) {
      continue;
    }
    column.qids.push_back(fields[1]);
    column.values.push_back(parse_double(fields[4]));
  }
  if (column.qids.empty()) {
    throw DataError("no rows for " + want_split + "/" + want_metric + "@" + want_cutoff);
  }
  return column;
}

MetricColumn metric_column(const metrics::MetricReport& report, RewardMetric metric, int cutoff,
                           data::Split split) {
  (void)split;
  MetricColumn column;
  for (const auto& row : report.per_query) column.qids.push_back(row.qid);
  column.values = metric == RewardMetric::kNdcg ? report.ndcg_column(cutoff)
                                                : report.err_column(cutoff);
  return column;
}

CompareResult cmd_compare(const MetricColumn& a, const MetricColumn& b, int permutations,
                          std::uint64_t seed) {
  if (a.qids != b.qids) {
    throw ArgumentError("compared reports cover different query sets");
  }
  CompareResult result;
  for (double v : a.values) result.mean_a += v;
  for (double v : b.values) result.mean_b += v;
  result.mean_a /= static_cast<double>(a.values.size());
  result.mean_b /= static_cast<double>(b.values.size());
  Rng rng(seed);
  result.p_value = metrics::fisher_randomization_test(a.values, b.values, permutations, rng);
  result.significant = result.p_value <= 0.05;
  return result;
}

RunSummary summarize(const RunRecord& record) {
  RunSummary summary;
  summary.algorithm = record.algorithm;
  summary.seed = record.seed;
  summary.diverged = record.diverged;
  summary.divergence_message = record.divergence_message;
  summary.best_eval_index = record.best_eval_index;
  summary.train_seconds = record.train_seconds;
  if (record.best_eval_index >= 0) {
    const EvalPoint& best = record.evals[static_cast<std::size_t>(record.best_eval_index)];
    summary.best_step = best.step;
    summary.best_valid_ndcg10 = best.valid.mean_ndcg(10);
  }
  for (std::size_t c = 0; c < metrics::kCutoffs.size(); ++c) {
    summary.train_ndcg[c] = record.final_train.mean_ndcg(metrics::kCutoffs[c]);
    summary.train_err[c] = record.final_train.mean_err(metrics::kCutoffs[c]);
    summary.test_ndcg[c] = record.final_test.mean_ndcg(metrics::kCutoffs[c]);
    summary.test_err[c] = record.final_test.mean_err(metrics::kCutoffs[c]);
  }
  for (const EvalPoint& eval : record.evals) {
    summary.curve.push_back({eval.step, eval.train.mean_ndcg(10), eval.valid.mean_ndcg(10),
                             eval.test.mean_ndcg(10)});
  }
  return summary;
}

void write_run_summary(const std::string& path, const RunSummary& summary) {
  nlohmann::ordered_json payload;
  payload["algorithm"] = to_string(summary.algorithm);
  payload["seed"] = summary.seed;
  payload["diverged"] = summary.diverged;
  payload["divergence_message"] = summary.divergence_message;
  payload["best_eval_index"] = summary.best_eval_index;
  payload["best_step"] = summary.best_step;
  payload["best_valid_ndcg10"] = summary.best_valid_ndcg10;
  payload["train_seconds"] = summary.train_seconds;
  payload["train_ndcg"] = summary.train_ndcg;
  payload["train_err"] = summary.train_err;
  payload["test_ndcg"] = summary.test_ndcg;
  payload["test_err"] = summary.test_err;
  nlohmann::ordered_json curve = nlohmann::ordered_json::array();
  for (const CurvePoint& point : summary.curve) {
    curve.push_back({{"step", point.step},
                     {"train", point.train},
                     {"valid", point.valid},
                     {"test", point.test}});
  }
  payload["curve"] = std::move(curve);
  nn::write_json_atomic(path, nn::make_checkpoint("run_record", std::move(payload)));
}

RunSummary read_run_summary(const std::string& path) {
  const nlohmann::json payload = nn::open_checkpoint(nn::read_json_file(path), "run_record");
  RunSummary summary;
  try {
    summary.algorithm = algorithm_from_string(payload.at("algorithm").get<std::string>());
    summary.seed = payload.at("seed").get<std::uint64_t>();
    summary.diverged = payload.at("diverged").get<bool>();
    summary.divergence_message = payload.at("divergence_message").get<std::string>();
    summary.best_eval_index = payload.at("best_eval_index").get<int>();
    summary.best_step = payload.at("best_step").get<long>();
    summary.best_valid_ndcg10 = payload.at("best_valid_ndcg10").get<double>();
    summary.train_seconds = payload.at("train_seconds").get<double>();
    summary.train_ndcg = payload.at("train_ndcg").get<std::array<double, 4>>();
    summary.train_err = payload.at("train_err").get<std::array<double, 4>>();
    summary.test_ndcg = payload.at("test_ndcg").get<std::array<double, 4>>();
    summary.test_err = payload.at("test_err").get<std::array<double, 4>>();
    for (const auto& point : payload.at("curve")) {
      summary.curve.push_back({point.at("step").get<long>(), point.at("train").get<double>(),
                               point.at("valid").get<double>(),
                               point.at("test").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad run record: ") + e.what());
  }
  return summary;
}

std::vector<AlgorithmReport> aggregate_report(const std::vector<RunSummary>& summaries) {
  std::vector<AlgorithmReport> rows;
  for (Algorithm algorithm : all_algorithms()) {
    AlgorithmReport row;
    row.algorithm = algorithm;
    std::vector<const RunSummary*> usable;
    for (const RunSummary& summary : summaries) {
      if (summary.algorithm != algorithm) continue;
      row.runs += 1;
      if (!summary.diverged) usable.push_back(&summary);
    }
    if (row.runs == 0) continue;
    row.usable = static_cast<int>(usable.size());
    if (!usable.empty()) {
      const auto n = static_cast<double>(usable.size());
      for (const RunSummary* summary : usable) {
        for (std::size_t c = 0; c < metrics::kCutoffs.size(); ++c) {
          row.train_ndcg[c] += summary->train_ndcg[c] / n;
          row.train_err[c] += summary->train_err[c] / n;
          row.test_ndcg[c] += summary->test_ndcg[c] / n;
          row.test_err[c] += summary->test_err[c] / n;
        }
      }
      const std::size_t ndcg10 = cutoff_slot(10);
      if (row.train_ndcg[ndcg10] > 0.0) {
        row.gap_ndcg10 =
            (row.train_ndcg[ndcg10] - row.test_ndcg[ndcg10]) / row.train_ndcg[ndcg10];
      }
      std::size_t curve_len = usable.front()->curve.size();
      for (const RunSummary* summary : usable) {
        curve_len = std::min(curve_len, summary->curve.size());
      }
      row.curve.resize(curve_len);
      for (std::size_t i = 0; i < curve_len; ++i) {
        row.curve[i].step = usable.front()->curve[i].step;
        for (const RunSummary* summary : usable) {
          row.curve[i].train += summary->curve[i].train / n;
          row.curve[i].valid += summary->curve[i].valid / n;
          row.curve[i].test += summary->curve[i].test / n;
        }
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_gap(double train_ndcg10, double test_ndcg10) {
  if (train_ndcg10 <= 0.0) return "n/a";
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.1f%%",
                100.0 * (train_ndcg10 - test_ndcg10) / train_ndcg10);
  return buffer;
}

std::string render_table_csv(const std::vector<AlgorithmReport>& rows,
                             const std::vector<int>& cutoffs) {
  std::string out = "algorithm,split";
  for (int k : cutoffs) out += ",ndcg@" + std::to_string(k);
  for (int k : cutoffs) out += ",err@" + std::to_string(k);
  out += ",gap_ndcg@10\n";
  for (const AlgorithmReport& row : rows) {
    const std::string gap = format_gap(row.train_ndcg[cutoff_slot(10)],
                                       row.test_ndcg[cutoff_slot(10)]);
    const auto emit = [&](const char* split,
                          const std::array<double, metrics::kCutoffs.size()>& ndcg,
                          const std::array<double, metrics::kCutoffs.size()>& err) {
      out += to_string(row.algorithm);
      out += ',';
      out += split;
      for (int k : cutoffs) out += "," + format_double(ndcg[cutoff_slot(k)]);
      for (int k : cutoffs) out += "," + format_double(err[cutoff_slot(k)]);
      out += "," + gap + "\n";
    };
    emit("train", row.train_ndcg, row.train_err);
    emit("test", row.test_ndcg, row.test_err);
  }
  return out;
}

std::string render_table_text(const std::vector<AlgorithmReport>& rows,
                              const std::vector<int>& cutoffs) {
  std::vector<std::vector<std::string>> table;
  std::vector<std::string> header{"algorithm", "split"};
  for (int k : cutoffs) header.push_back("ndcg@" + std::to_string(k));
  for (int k : cutoffs) header.push_back("err@" + std::to_string(k));
  header.push_back("gap");
  table.push_back(std::move(header));
  for (const AlgorithmReport& row : rows) {
    const std::string gap = format_gap(row.train_ndcg[cutoff_slot(10)],
                                       row.test_ndcg[cutoff_slot(10)]);
    const auto emit = [&](const char* split,
                          const std::array<double, metrics::kCutoffs.size()>& ndcg,
                          const std::array<double, metrics::kCutoffs.size()>& err,
                          const std::string& gap_cell) {
      std::vector<std::string> cells{to_string(row.algorithm), split};
      for (int k : cutoffs) cells.push_back(fixed4(ndcg[cutoff_slot(k)]));
      for (int k : cutoffs) cells.push_back(fixed4(err[cutoff_slot(k)]));
      cells.push_back(gap_cell);
      table.push_back(std::move(cells));
    };
    emit("train", row.train_ndcg, row.train_err, "");
    emit("test", row.test_ndcg, row.test_err, gap);
  }
  std::vector<std::size_t> widths(table.front().size(), 0);
  for (const auto& cells : table) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      widths[c] = std::max(widths[c], cells[c].size());
    }
  }
  std::string out;
  for (const auto& cells : table) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c > 0) out += "  ";
      out += cells[c];
      out.append(widths[c] - cells[c].size(), ' ');
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    out += '\n';
  }
  return out;
}

std::string render_report_curves_csv(const AlgorithmReport& row) {
  std::string out = "eval_index,split,ndcg@10\n";
  for (std::size_t i = 0; i < row.curve.size(); ++i) {
    out += std::to_string(i) + ",train," + format_double(row.curve[i].train) + "\n";
    out += std::to_string(i) + ",valid," + format_double(row.curve[i].valid) + "\n";
    out += std::to_string(i) + ",test," + format_double(row.curve[i].test) + "\n";
  }
  return out;
}

std::vector<AlgorithmReport> cmd_report(const std::string& output_dir,
                                        const std::vector<int>& cutoffs) {
  std::vector<RunSummary> summaries;
  for (Algorithm algorithm : all_algorithms()) {
    const fs::path algo_dir = fs::path(output_dir) / to_string(algorithm);
    if (!fs::is_directory(algo_dir)) continue;
    std::map<std::uint64_t, fs::path> seed_files;  // numeric seed order
    for (const auto& entry : fs::directory_iterator(algo_dir)) {
      if (!entry.is_directory()) continue;
      const fs::path run_json = entry.path() / "run.json";
      if (!fs::is_regular_file(run_json)) continue;
      std::uint64_t seed = 0;
      const std::string name = entry.path().filename().string();
      const char* end = name.data() + name.size();
      const auto [ptr, ec] = std::from_chars(name.data(), end, seed);
      if (ec != std::errc{} || ptr != end) continue;
      seed_files.emplace(seed, run_json);
    }
    for (const auto& [seed, path] : seed_files) {
      summaries.push_back(read_run_summary(path.string()));
    }
  }
  if (summaries.empty()) {
    throw DataError("no run records found under '" + output_dir + "'");
  }
  const std::vector<AlgorithmReport> rows = aggregate_report(summaries);

  const fs::path report_dir = fs::path(output_dir) / "report";
  fs::create_directories(report_dir);
  write_text_atomic((report_dir / "table.csv").string(), render_table_csv(rows, cutoffs));
  write_text_atomic((report_dir / "table.txt").string(), render_table_text(rows, cutoffs));
  for (const AlgorithmReport& row : rows) {
    write_text_atomic(
        (report_dir / ("curves_" + to_string(row.algorithm) + ".csv")).string(),
        render_report_curves_csv(row));
  }
  return rows;
}

void write_text_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + tmp + "'");
    out << content;
    if (!out.flush()) throw DataError("failed writing '" + tmp + "'");
  }
  fs::rename(tmp, path);
}

}  // namespace serprank::train
