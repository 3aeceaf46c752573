#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "serprank/common.hpp"

namespace serprank::data {

// One query-document pair: dense feature vector plus a relevance grade 0-4.
struct Document {
  Eigen::VectorXd features;
  int relevance = 0;
  std::string doc_tag;  // comment field from the input line, if any

  bool operator==(const Document& other) const;
};

// All candidate documents of one query, in source-file order.
struct QueryGroup {
  std::string qid;
  std::vector<Document> documents;

  bool operator==(const QueryGroup& other) const = default;
};

enum class Split { kTrain, kValid, kTest };

std::string to_string(Split split);
Split split_from_string(const std::string& name);

struct Dataset {
  Split split = Split::kTrain;
  std::vector<QueryGroup> groups;
  int feature_count = 0;
  int max_grade = 4;

  bool operator==(const Dataset& other) const = default;
  std::size_t total_documents() const;
};

// A training batch of exactly n query references, drawn with replacement.
struct Batch {
  std::vector<const QueryGroup*> groups;
  std::string seed_state;  // RNG snapshot taken before the draw
};

struct PaddedGroup {
  QueryGroup group;                // exactly k documents
  std::vector<std::uint8_t> mask;  // mask[i] != 0 iff slot i is a real document
};

// Parses SVMlight/LETOR text: `<grade> qid:<id> <fid>:<val> ... [# comment]`.
// Lines with the same qid merge into one group; first-appearance order of
// qids and source order of documents are preserved.  feature_count becomes
// the maximum feature id seen; missing sparse entries densify to 0.0.
Dataset parse_letor(std::istream& in);

// Inverse of parse_letor up to densification: writes every coordinate, so
// re-parsing yields an identical Dataset.
void serialize_letor(const Dataset& dataset, std::ostream& out);

// Reads a LETOR file from disk; transparently inflates gzip input.
Dataset load_letor_file(const std::string& path);
void save_letor_file(const Dataset& dataset, const std::string& path);

// Keeps the first `keep` coordinates of every feature vector.
Dataset truncate_features(const Dataset& dataset, int keep);

// Per-coordinate min-max rescale within the group; constant columns map to 0.
QueryGroup normalize_per_query(const QueryGroup& group);
Dataset normalize_dataset(const Dataset& dataset);

// Keeps the first k documents or appends zero-feature grade-0 padding.
PaddedGroup pad_or_truncate(const QueryGroup& group, int k);

// n queries drawn uniformly with replacement.
Batch sample_batch(const Dataset& dataset, int n, Rng& rng);

// Desk-scale benchmark generator with a known optimal ranking: grade =
// clamp(round(4 * sigmoid(w.x + eps)), 0, 4), features ~ U[0,1]^F.  With
// noise = 0 sorting by w.x is ideal for every query.  `hidden_weights`, when
// non-null, receives w so tests can exercise that guarantee.
Dataset generate_synthetic(int num_queries, int docs_per_query, int num_features,
                           Rng& rng, double noise = 0.0,
                           Eigen::VectorXd* hidden_weights = nullptr);

}  // namespace serprank::data
