#include "serprank/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace serprank::metrics {

namespace {

void check_grades(const std::vector<int>& grades, int max_grade) {
  for (int g : grades) {
    if (g < 0 || g > max_grade) {
      throw ArgumentError("relevance grade " + std::to_string(g) + " outside [0," +
                          std::to_string(max_grade) + "]");
    }
  }
}

double gain(int grade) { return std::exp2(static_cast<double>(grade)) - 1.0; }

// Discount of zero-based position p under cutoff k, zero beyond the cutoff.
double discount(std::size_t p, int k) {
  if (p >= static_cast<std::size_t>(k)) return 0.0;
  return 1.0 / std::log2(static_cast<double>(p) + 2.0);
}

int cutoff_index(int k) {
  for (std::size_t c = 0; c < kCutoffs.size(); ++c) {
    if (kCutoffs[c] == k) return static_cast<int>(c);
  }
  throw ArgumentError("unsupported report cutoff " + std::to_string(k));
}

}  // namespace

double dcg_at_k(const std::vector<int>& ranked_grades, int k) {
  if (k < 1) throw ArgumentError("cutoff must be >= 1");
  check_grades(ranked_grades, 4);
  double total = 0.0;
  const std::size_t limit = std::min(ranked_grades.size(), static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < limit; ++i) {
    total += gain(ranked_grades[i]) * discount(i, k);
  }
  return total;
}

double ideal_dcg_at_k(const std::vector<int>& all_grades, int k) {
  std::vector<int> sorted = all_grades;
  std::sort(sorted.begin(), sorted.end(), std::greater<int>());
  return dcg_at_k(sorted, k);
}

double ndcg_at_k(const std::vector<int>& ranked_grades, const std::vector<int>& all_grades,
                 int k) {
  const double ideal = ideal_dcg_at_k(all_grades, k);
  if (ideal <= 0.0) return 0.0;
  return dcg_at_k(ranked_grades, k) / ideal;
}

double err_at_k(const std::vector<int>& ranked_grades, int k, int max_grade) {
  if (k < 1) throw ArgumentError("cutoff must be >= 1");
  if (max_grade < 1) throw ArgumentError("max_grade must be >= 1");
  check_grades(ranked_grades, max_grade);
  const double scale = std::exp2(static_cast<double>(max_grade));
  double err = 0.0;
  double p_continue = 1.0;
  const std::size_t limit = std::min(ranked_grades.size(), static_cast<std::size_t>(k));
  for (std::size_t r = 0; r < limit; ++r) {
    const double stop = gain(ranked_grades[r]) / scale;
    err += p_continue * stop / static_cast<double>(r + 1);
    p_continue *= 1.0 - stop;
  }
  return err;
}

double delta_ndcg(const std::vector<int>& all_grades, const std::vector<int>& ranked_grades,
                  std::size_t i, std::size_t j, int k) {
  if (i == j) throw ArgumentError("delta_ndcg requires two distinct positions");
  if (i >= ranked_grades.size() || j >= ranked_grades.size()) {
    throw ArgumentError("delta_ndcg position out of range");
  }
  const double ideal = ideal_dcg_at_k(all_grades, k);
  if (ideal <= 0.0) return 0.0;
  // Only the two swapped positions change, so the DCG difference factors.
  const double d = (gain(ranked_grades[i]) - gain(ranked_grades[j])) *
                   (discount(i, k) - discount(j, k));
  return std::abs(d) / ideal;
}

void MetricReport::add(const std::string& qid, const std::vector<int>& ranked_grades,
                       const std::vector<int>& all_grades, int max_grade) {
  QueryMetrics row;
  row.qid = qid;
  for (std::size_t c = 0; c < kCutoffs.size(); ++c) {
    row.ndcg[c] = ndcg_at_k(ranked_grades, all_grades, kCutoffs[c]);
    row.err[c] = err_at_k(ranked_grades, kCutoffs[c], max_grade);
  }
  per_query.push_back(std::move(row));
}

double MetricReport::mean_ndcg(int k) const {
  if (per_query.empty()) throw EmptyDatasetError("metric report has no queries");
  const int c = cutoff_index(k);
  double sum = 0.0;
  for (const auto& row : per_query) sum += row.ndcg[static_cast<std::size_t>(c)];
  return sum / static_cast<double>(per_query.size());
}

double MetricReport::mean_err(int k) const {
  if (per_query.empty()) throw EmptyDatasetError("metric report has no queries");
  const int c = cutoff_index(k);
  double sum = 0.0;
  for (const auto& row : per_query) sum += row.err[static_cast<std::size_t>(c)];
  return sum / static_cast<double>(per_query.size());
}

std::vector<double> MetricReport::ndcg_column(int k) const {
  const int c = cutoff_index(k);
  std::vector<double> column;
  column.reserve(per_query.size());
  for (const auto& row : per_query) column.push_back(row.ndcg[static_cast<std::size_t>(c)]);
  return column;
}

std::vector<double> MetricReport::err_column(int k) const {
  const int c = cutoff_index(k);
  std::vector<double> column;
  column.reserve(per_query.size());
  for (const auto& row : per_query) column.push_back(row.err[static_cast<std::size_t>(c)]);
  return column;
}

void MetricReport::to_csv(std::ostream& out) const {
  out << "qid,metric,cutoff,value\n";
  for (const auto& row : per_query) {
    for (std::size_t c = 0; c < kCutoffs.size(); ++c) {
      out << row.qid << ",ndcg," << kCutoffs[c] << ',' << format_double(row.ndcg[c]) << '\n';
    }
    for (std::size_t c = 0; c < kCutoffs.size(); ++c) {
      out << row.qid << ",err," << kCutoffs[c] << ',' << format_double(row.err[c]) << '\n';
    }
  }
}

std::string MetricReport::aggregate_json() const {
  nlohmann::ordered_json agg;
  for (int k : kCutoffs) agg["ndcg@" + std::to_string(k)] = mean_ndcg(k);
  for (int k : kCutoffs) agg["err@" + std::to_string(k)] = mean_err(k);
  return agg.dump(2);
}

}  // namespace serprank::metrics
