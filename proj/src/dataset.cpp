#include "serprank/data/dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string_view>
#include <utility>

namespace serprank::data {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

// Pulls the next whitespace-delimited token off `s`, advancing past it.
std::string_view next_token(std::string_view& s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  std::size_t end = 0;
  while (end < s.size() && s[end] != ' ' && s[end] != '\t') ++end;
  std::string_view tok = s.substr(0, end);
  s.remove_prefix(end);
  return tok;
}

int parse_int_token(std::string_view tok, std::size_t line_no, const char* what) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
    throw ParseError(line_no, "bad " + std::string(what) + " '" + std::string(tok) + "'");
  }
  return value;
}

double parse_double_token(std::string_view tok, std::size_t line_no, const char* what) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
    throw ParseError(line_no, "bad " + std::string(what) + " '" + std::string(tok) + "'");
  }
  return value;
}

struct SparseRow {
  int grade = 0;
  std::string qid;
  std::vector<std::pair<int, double>> entries;  // (feature id, value), ids ascending
  std::string doc_tag;
};

// Parses one non-empty data line.  Returns false for blank/comment-only lines.
bool parse_line(std::string_view line, std::size_t line_no, SparseRow& row) {
  // Split off an optional trailing comment.
  std::string_view tag;
  if (auto hash = line.find('#'); hash != std::string_view::npos) {
    tag = trim(line.substr(hash + 1));
    line = line.substr(0, hash);
  }
  line = trim(line);
  if (line.empty()) {
    if (!tag.empty()) {
      throw ParseError(line_no, "comment without a data row");
    }
    return false;
  }

  std::string_view rest = line;
  std::string_view grade_tok = next_token(rest);
  row.grade = parse_int_token(grade_tok, line_no, "relevance grade");
  if (row.grade < 0 || row.grade > 4) {
    throw ValidationError("relevance grade " + std::to_string(row.grade) +
                          " outside [0,4] at line " + std::to_string(line_no));
  }

  std::string_view qid_tok = next_token(rest);
  if (qid_tok.substr(0, 4) != "qid:" || qid_tok.size() <= 4) {
    throw ParseError(line_no, "expected qid:<id>, got '" + std::string(qid_tok) + "'");
  }
  row.qid = std::string(qid_tok.substr(4));

  row.entries.clear();
  int prev_id = 0;
  while (true) {
    std::string_view tok = next_token(rest);
    if (tok.empty()) break;
    auto colon = tok.find(':');
    if (colon == std::string_view::npos || colon == 0 || colon + 1 == tok.size()) {
      throw ParseError(line_no, "expected <fid>:<value>, got '" + std::string(tok) + "'");
    }
    int fid = parse_int_token(tok.substr(0, colon), line_no, "feature id");
    if (fid < 1) {
      throw ValidationError("feature id " + std::to_string(fid) +
                            " must be >= 1 at line " + std::to_string(line_no));
    }
    if (fid <= prev_id) {
      throw ValidationError("feature ids must be strictly ascending at line " +
                            std::to_string(line_no));
    }
    double value = parse_double_token(tok.substr(colon + 1), line_no, "feature value");
    if (!std::isfinite(value)) {
      throw ValidationError("non-finite feature value at line " + std::to_string(line_no));
    }
    row.entries.emplace_back(fid, value);
    prev_id = fid;
  }
  row.doc_tag = std::string(tag);
  return true;
}

}  // namespace

bool Document::operator==(const Document& other) const {
  return relevance == other.relevance && doc_tag == other.doc_tag &&
         features.size() == other.features.size() && features == other.features;
}

std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValid: return "valid";
    case Split::kTest: return "test";
  }
  throw ArgumentError("unknown split");
}

Split split_from_string(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "valid" || name == "validation" || name == "vali") return Split::kValid;
  if (name == "test") return Split::kTest;
  throw ArgumentError("unknown split '" + name + "'");
}

std::size_t Dataset::total_documents() const {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.documents.size();
  return n;
}

Dataset parse_letor(std::istream& in) {
  std::vector<SparseRow> rows;
  std::string line;
  std::size_t line_no = 0;
  int max_fid = 0;
  while (std::getline(in, line)) {
    ++line_no;
    SparseRow row;
    if (!parse_line(line, line_no, row)) continue;
    if (!row.entries.empty()) max_fid = std::max(max_fid, row.entries.back().first);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) {
    throw EmptyDatasetError("no document rows found");
  }

  Dataset dataset;
  dataset.feature_count = max_fid;
  std::map<std::string, std::size_t> group_index;  // qid -> position in groups
  for (auto& row : rows) {
    auto [it, inserted] = group_index.emplace(row.qid, dataset.groups.size());
    if (inserted) {
      QueryGroup group;
      group.qid = row.qid;
      dataset.groups.push_back(std::move(group));
    }
    Document doc;
    doc.features = Eigen::VectorXd::Zero(max_fid);
    for (const auto& [fid, value] : row.entries) {
      doc.features[fid - 1] = value;
    }
    doc.relevance = row.grade;
    doc.doc_tag = std::move(row.doc_tag);
    dataset.groups[it->second].documents.push_back(std::move(doc));
  }
  return dataset;
}

void serialize_letor(const Dataset& dataset, std::ostream& out) {
  for (const auto& group : dataset.groups) {
    for (const auto& doc : group.documents) {
      out << doc.relevance << " qid:" << group.qid;
      for (int j = 0; j < doc.features.size(); ++j) {
        out << ' ' << (j + 1) << ':' << format_double(doc.features[j]);
      }
      if (!doc.doc_tag.empty()) {
        out << " # " << doc.doc_tag;
      }
      out << '\n';
    }
  }
}

Dataset load_letor_file(const std::string& path) {
  // gzread handles both plain and gzip files, so route everything through it.
  gzFile file = gzopen(path.c_str(), "rb");
  if (file == nullptr) {
    throw DataError("cannot open '" + path + "'");
  }
  std::string content;
  char buffer[1 << 16];
  int got = 0;
  while ((got = gzread(file, buffer, sizeof(buffer))) > 0) {
    content.append(buffer, static_cast<std::size_t>(got));
  }
  if (got < 0) {
    int errnum = 0;
    const char* msg = gzerror(file, &errnum);
    std::string detail = msg != nullptr ? msg : "unknown zlib error";
    gzclose(file);
    throw DataError("error reading '" + path + "': " + detail);
  }
  gzclose(file);
  std::istringstream in(std::move(content));
  try {
    return parse_letor(in);
  } catch (const EmptyDatasetError&) {
    throw EmptyDatasetError("no document rows found in '" + path + "'");
  }
}

void save_letor_file(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError("cannot write '" + path + "'");
  }
  serialize_letor(dataset, out);
  if (!out) {
    throw DataError("error writing '" + path + "'");
  }
}

Dataset truncate_features(const Dataset& dataset, int keep) {
  if (keep <= 0 || keep > dataset.feature_count) {
    throw ArgumentError("cannot keep " + std::to_string(keep) + " of " +
                        std::to_string(dataset.feature_count) + " features");
  }
  Dataset out = dataset;
  out.feature_count = keep;
  for (auto& group : out.groups) {
    for (auto& doc : group.documents) {
      doc.features = Eigen::VectorXd(doc.features.head(keep));
    }
  }
  return out;
}

QueryGroup normalize_per_query(const QueryGroup& group) {
  QueryGroup out = group;
  if (out.documents.empty()) return out;
  const Eigen::Index dims = out.documents.front().features.size();
  for (Eigen::Index j = 0; j < dims; ++j) {
    double lo = out.documents.front().features[j];
    double hi = lo;
    for (const auto& doc : out.documents) {
      lo = std::min(lo, doc.features[j]);
      hi = std::max(hi, doc.features[j]);
    }
    const double range = hi - lo;
    for (auto& doc : out.documents) {
      doc.features[j] = range > 0.0 ? (doc.features[j] - lo) / range : 0.0;
    }
  }
  return out;
}

Dataset normalize_dataset(const Dataset& dataset) {
  Dataset out = dataset;
  for (auto& group : out.groups) {
    group = normalize_per_query(group);
  }
  return out;
}

PaddedGroup pad_or_truncate(const QueryGroup& group, int k) {
  if (k <= 0) {
    throw ArgumentError("pad_or_truncate requires k > 0");
  }
  PaddedGroup out;
  out.group.qid = group.qid;
  const int real = std::min<int>(k, static_cast<int>(group.documents.size()));
  out.group.documents.assign(group.documents.begin(), group.documents.begin() + real);
  out.mask.assign(static_cast<std::size_t>(k), 0);
  for (int i = 0; i < real; ++i) out.mask[static_cast<std::size_t>(i)] = 1;
  if (real < k) {
    Eigen::Index dims =
        group.documents.empty() ? 0 : group.documents.front().features.size();
    Document pad;
    pad.features = Eigen::VectorXd::Zero(dims);
    pad.relevance = 0;
    out.group.documents.resize(static_cast<std::size_t>(k), pad);
  }
  return out;
}

Batch sample_batch(const Dataset& dataset, int n, Rng& rng) {
  if (dataset.groups.empty()) {
    throw EmptyDatasetError("cannot sample from a dataset with no queries");
  }
  if (n <= 0) {
    throw ArgumentError("batch size must be positive");
  }
  Batch batch;
  batch.seed_state = rng.state();
  batch.groups.reserve(static_cast<std::size_t>(n));
  const auto count = static_cast<std::int64_t>(dataset.groups.size());
  for (int i = 0; i < n; ++i) {
    auto idx = rng.uniform_int(0, count - 1);
    batch.groups.push_back(&dataset.groups[static_cast<std::size_t>(idx)]);
  }
  return batch;
}

Dataset generate_synthetic(int num_queries, int docs_per_query, int num_features,
                           Rng& rng, double noise, Eigen::VectorXd* hidden_weights) {
  if (num_queries <= 0 || docs_per_query <= 0 || num_features <= 0) {
    throw ArgumentError("synthetic dataset dimensions must be positive");
  }
  // Redraw w until its coordinates roughly cancel, so that w.x over U[0,1]^F
  // straddles 0 and the sigmoid produces the full grade range.
  Eigen::VectorXd w(num_features);
  while (true) {
    for (int j = 0; j < num_features; ++j) w[j] = rng.uniform(-3.0, 3.0);
    if (std::abs(w.sum()) <= 1.0) break;
  }
  if (hidden_weights != nullptr) *hidden_weights = w;

  Dataset dataset;
  dataset.feature_count = num_features;
  dataset.groups.reserve(static_cast<std::size_t>(num_queries));
  for (int q = 0; q < num_queries; ++q) {
    QueryGroup group;
    group.qid = std::to_string(q + 1);
    group.documents.reserve(static_cast<std::size_t>(docs_per_query));
    for (int d = 0; d < docs_per_query; ++d) {
      Document doc;
      doc.features = Eigen::VectorXd(num_features);
      for (int j = 0; j < num_features; ++j) doc.features[j] = rng.uniform01();
      double score = w.dot(doc.features);
      if (noise > 0.0) score += noise * rng.normal();
      const double sig = 1.0 / (1.0 + std::exp(-score));
      const int grade = static_cast<int>(std::lround(4.0 * sig));
      doc.relevance = std::clamp(grade, 0, 4);
      group.documents.push_back(std::move(doc));
    }
    dataset.groups.push_back(std::move(group));
  }
  return dataset;
}

}  // namespace serprank::data
