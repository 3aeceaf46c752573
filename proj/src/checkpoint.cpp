#include "serprank/nn/checkpoint.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

namespace serprank::nn {

namespace {

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index k = 0; k < m.cols(); ++k) values.push_back(m(i, k));
  }
  j["data"] = values;
  return j;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto values = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 ||
      values.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols)) {
    throw CheckpointError("tensor payload size does not match its shape");
  }
  Eigen::MatrixXd m(rows, cols);
  std::size_t pos = 0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = values[pos++];
  }
  return m;
}

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  std::vector<double> values(v.data(), v.data() + v.size());
  return nlohmann::json(values);
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) v[static_cast<Eigen::Index>(i)] = values[i];
  return v;
}

}  // namespace

nlohmann::ordered_json to_json(const MlpSpec& spec) {
  nlohmann::ordered_json j;
  j["input_dim"] = spec.input_dim;
  j["hidden"] = spec.hidden;
  j["output_dim"] = spec.output_dim;
  j["output_activation"] = to_string(spec.output_activation);
  return j;
}

MlpSpec mlp_spec_from_json(const nlohmann::json& j) {
  MlpSpec spec;
  try {
    spec.input_dim = j.at("input_dim").get<int>();
    spec.hidden = j.at("hidden").get<std::vector<int>>();
    spec.output_dim = j.at("output_dim").get<int>();
    spec.output_activation =
        output_activation_from_string(j.at("output_activation").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad network spec: ") + e.what());
  }
  return spec;
}

nlohmann::ordered_json to_json(const ModelState& state) {
  nlohmann::ordered_json j;
  nlohmann::json weights = nlohmann::json::array();
  nlohmann::json biases = nlohmann::json::array();
  for (const auto& w : state.weights) weights.push_back(matrix_to_json(w));
  for (const auto& b : state.biases) biases.push_back(vector_to_json(b));
  j["weights"] = weights;
  j["biases"] = biases;
  nlohmann::json adam;
  adam["step"] = state.adam.step;
  nlohmann::json mw = nlohmann::json::array(), vw = nlohmann::json::array();
  nlohmann::json mb = nlohmann::json::array(), vb = nlohmann::json::array();
  for (const auto& m : state.adam.m_weights) mw.push_back(matrix_to_json(m));
  for (const auto& v : state.adam.v_weights) vw.push_back(matrix_to_json(v));
  for (const auto& m : state.adam.m_biases) mb.push_back(vector_to_json(m));
  for (const auto& v : state.adam.v_biases) vb.push_back(vector_to_json(v));
  adam["m_weights"] = mw;
  adam["v_weights"] = vw;
  adam["m_biases"] = mb;
  adam["v_biases"] = vb;
  j["adam"] = adam;
  return j;
}

ModelState model_state_from_json(const nlohmann::json& j) {
  ModelState state;
  try {
    for (const auto& w : j.at("weights")) state.weights.push_back(matrix_from_json(w));
    for (const auto& b : j.at("biases")) state.biases.push_back(vector_from_json(b));
    const auto& adam = j.at("adam");
    state.adam.step = adam.at("step").get<std::int64_t>();
    for (const auto& m : adam.at("m_weights")) state.adam.m_weights.push_back(matrix_from_json(m));
    for (const auto& v : adam.at("v_weights")) state.adam.v_weights.push_back(matrix_from_json(v));
    for (const auto& m : adam.at("m_biases")) state.adam.m_biases.push_back(vector_from_json(m));
    for (const auto& v : adam.at("v_biases")) state.adam.v_biases.push_back(vector_from_json(v));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad model state: ") + e.what());
  }
  if (state.weights.size() != state.biases.size() ||
      state.weights.size() != state.adam.m_weights.size()) {
    throw CheckpointError("model state layer counts are inconsistent");
  }
  return state;
}

nlohmann::ordered_json to_json(const VaeSpec& spec) {
  nlohmann::ordered_json j;
  j["state_dim"] = spec.state_dim;
  j["latent_dim"] = spec.latent_dim;
  j["encoder_hidden"] = spec.encoder_hidden;
  j["decoder_hidden"] = spec.decoder_hidden;
  j["output_dim"] = spec.output_dim;
  return j;
}

VaeSpec vae_spec_from_json(const nlohmann::json& j) {
  VaeSpec spec;
  try {
    spec.state_dim = j.at("state_dim").get<int>();
    spec.latent_dim = j.at("latent_dim").get<int>();
    spec.encoder_hidden = j.at("encoder_hidden").get<std::vector<int>>();
    spec.decoder_hidden = j.at("decoder_hidden").get<std::vector<int>>();
    spec.output_dim = j.at("output_dim").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad vae spec: ") + e.what());
  }
  return spec;
}

nlohmann::ordered_json to_json(const VaeState& state) {
  nlohmann::ordered_json j;
  j["encoder"] = to_json(state.encoder);
  j["decoder"] = to_json(state.decoder);
  return j;
}

VaeState vae_state_from_json(const nlohmann::json& j) {
  VaeState state;
  try {
    state.encoder = model_state_from_json(j.at("encoder"));
    state.decoder = model_state_from_json(j.at("decoder"));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad vae state: ") + e.what());
  }
  return state;
}

nlohmann::ordered_json make_checkpoint(const std::string& kind,
                                       nlohmann::ordered_json payload) {
  nlohmann::ordered_json doc;
  doc["format_version"] = kCheckpointFormatVersion;
  doc["kind"] = kind;
  doc["payload"] = std::move(payload);
  return doc;
}

nlohmann::json open_checkpoint(const nlohmann::json& doc, const std::string& kind) {
  if (!doc.contains("format_version") || !doc.contains("kind") || !doc.contains("payload")) {
    throw CheckpointError("missing checkpoint envelope fields");
  }
  const int version = doc.at("format_version").get<int>();
  if (version != kCheckpointFormatVersion) {
    throw CheckpointError("unsupported checkpoint format version " + std::to_string(version));
  }
  const auto stored = doc.at("kind").get<std::string>();
  if (stored != kind) {
    throw CheckpointError("checkpoint holds '" + stored + "', expected '" + kind + "'");
  }
  return doc.at("payload");
}

void write_json_atomic(const std::string& path, const nlohmann::ordered_json& doc) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write '" + tmp + "'");
    out << doc.dump(2) << '\n';
    if (!out) throw CheckpointError("error writing '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    throw CheckpointError("cannot move '" + tmp + "' to '" + path + "': " + ec.message());
  }
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("cannot parse '" + path + "': " + e.what());
  }
  return doc;
}

}  // namespace serprank::nn
