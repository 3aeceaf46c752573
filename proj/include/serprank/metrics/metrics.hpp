#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "serprank/common.hpp"

namespace serprank::metrics {

// Rank cutoffs reported everywhere.
inline constexpr std::array<int, 4> kCutoffs{1, 3, 5, 10};

// DCG@k = sum_{i<min(k,n)} (2^g_i - 1) / log2(i+2)   (i zero-based).
double dcg_at_k(const std::vector<int>& ranked_grades, int k);

// DCG of the descending-sorted grade pool.
double ideal_dcg_at_k(const std::vector<int>& all_grades, int k);

// DCG@k / IDCG@k; defined as 0.0 when the ideal DCG is 0 so that queries with
// no relevant documents still contribute a paired value to significance tests.
double ndcg_at_k(const std::vector<int>& ranked_grades, const std::vector<int>& all_grades,
                 int k);

// Cascade-model expected reciprocal rank with stop probability
// R_i = (2^g_i - 1) / 2^max_grade.
double err_at_k(const std::vector<int>& ranked_grades, int k, int max_grade = 4);

// |nDCG@k(order) - nDCG@k(order with positions i and j swapped)|, evaluated in
// closed form from the two affected positions.  i and j are zero-based.
double delta_ndcg(const std::vector<int>& all_grades, const std::vector<int>& ranked_grades,
                  std::size_t i, std::size_t j, int k);

struct QueryMetrics {
  std::string qid;
  std::array<double, kCutoffs.size()> ndcg{};
  std::array<double, kCutoffs.size()> err{};
};

// Per-query metric table plus aggregate means, produced by evaluation passes.
struct MetricReport {
  std::vector<QueryMetrics> per_query;

  // Computes all cutoffs for one query and appends a row.
  void add(const std::string& qid, const std::vector<int>& ranked_grades,
           const std::vector<int>& all_grades, int max_grade = 4);

  double mean_ndcg(int k) const;
  double mean_err(int k) const;

  // Column vector of one metric across queries, in row order (for paired tests).
  std::vector<double> ndcg_column(int k) const;
  std::vector<double> err_column(int k) const;

  // Rows of `qid,metric,cutoff,value` preceded by a header line.
  void to_csv(std::ostream& out) const;
  // {"ndcg@1": ..., ..., "err@10": ...}
  std::string aggregate_json() const;
};

// Two-sided paired sign-flip randomization test on per-query paired scores.
// Returns (1 + #{|randomized mean diff| >= |observed mean diff|}) / (1 + permutations).
double fisher_randomization_test(const std::vector<double>& per_query_a,
                                 const std::vector<double>& per_query_b, int permutations,
                                 Rng& rng);

}  // namespace serprank::metrics
