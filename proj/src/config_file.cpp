#include "serprank/train/config_file.hpp"

#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>
#include <utility>

namespace serprank::train {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

long parse_long(const std::string& value, const std::string& key) {
  long out = 0;
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end) {
    throw ConfigError(key + ": '" + value + "' is not an integer");
  }
  return out;
}

int parse_int(const std::string& value, const std::string& key) {
  const long v = parse_long(value, key);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw ConfigError(key + ": '" + value + "' overflows");
  }
  return static_cast<int>(v);
}

double parse_real(const std::string& value, const std::string& key) {
  try {
    return parse_double(value);
  } catch (const ArgumentError&) {
    throw ConfigError(key + ": '" + value + "' is not a number");
  }
}

bool parse_bool(const std::string& value, const std::string& key) {
  if (value == "true" || value == "yes" || value == "1") return true;
  if (value == "false" || value == "no" || value == "0") return false;
  throw ConfigError(key + ": '" + value + "' is not a boolean");
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> items;
  std::string current;
  for (char c : value) {
    if (c == ' ' || c == '\t' || c == ',') {
      if (!current.empty()) items.push_back(std::exchange(current, {}));
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty()) items.push_back(current);
  return items;
}

std::vector<int> parse_int_list(const std::string& value, const std::string& key) {
  std::vector<int> out;
  for (const std::string& item : split_list(value)) out.push_back(parse_int(item, key));
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& value, const std::string& key) {
  std::vector<std::uint64_t> out;
  for (const std::string& item : split_list(value)) {
    std::uint64_t seed = 0;
    const char* end = item.data() + item.size();
    const auto [ptr, ec] = std::from_chars(item.data(), end, seed);
    if (ec != std::errc{} || ptr != end) {
      throw ConfigError(key + ": '" + item + "' is not a seed");
    }
    out.push_back(seed);
  }
  return out;
}

std::string join_ints(const std::vector<int>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out += ' ';
    out += std::to_string(values[i]);
  }
  return out;
}

std::string join_seeds(const std::vector<std::uint64_t>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out += ' ';
    out += std::to_string(values[i]);
  }
  return out;
}

}  // namespace

ConfigMap parse_config_text(const std::string& text) {
  ConfigMap map;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string trimmed = trim(line);
    if (trimmed.empty() || trimmed.front() == '#' || trimmed.front() == ';') continue;
    if (trimmed.front() == '[') {
      if (trimmed.back() != ']' || trimmed.size() < 3) {
        throw ConfigError("line " + std::to_string(line_no) + ": malformed section header '" +
                          trimmed + "'");
      }
      section = trim(trimmed.substr(1, trimmed.size() - 2));
      continue;
    }
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value', got '" +
                        trimmed + "'");
    }
    const std::string key = trim(trimmed.substr(0, eq));
    const std::string value = trim(trimmed.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    }
    if (section.empty()) {
      throw ConfigError("line " + std::to_string(line_no) + ": key '" + key +
                        "' appears before any [section]");
    }
    const std::string full = section + "." + key;
    if (!map.emplace(full, value).second) {
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + full + "'");
    }
  }
  return map;
}

ExperimentConfig experiment_config_from_map(const ConfigMap& map) {
  ExperimentConfig config;
  bool saw_repeats = false, saw_seeds = false;
  for (const auto& [key, value] : map) {
    if (key == "data.train") {
      config.data.train_path = value;
    } else if (key == "data.valid") {
      config.data.valid_path = value;
    } else if (key == "data.test") {
      config.data.test_path = value;
    } else if (key == "data.feature_limit") {
      config.data.feature_limit = parse_int(value, key);
    } else if (key == "data.normalize") {
      config.data.normalize = parse_bool(value, key);
    } else if (key == "trainer.algorithm") {
      config.trainer.algorithm = algorithm_from_string(value);
    } else if (key == "trainer.lr") {
      config.trainer.lr = parse_real(value, key);
    } else if (key == "trainer.gamma") {
      config.trainer.gamma = parse_real(value, key);
    } else if (key == "trainer.tau_soft") {
      config.trainer.tau_soft = parse_real(value, key);
    } else if (key == "trainer.tau_temp") {
      config.trainer.tau_temp = parse_real(value, key);
    } else if (key == "trainer.phi") {
      config.trainer.phi = parse_real(value, key);
    } else if (key == "trainer.lambda_mix") {
      config.trainer.lambda_mix = parse_real(value, key);
    } else if (key == "trainer.alpha_td") {
      config.trainer.alpha_td = value == "gamma" ? -1.0 : parse_real(value, key);
    } else if (key == "trainer.m_samples") {
      config.trainer.m_samples = parse_int(value, key);
    } else if (key == "trainer.rank_list_size") {
      config.trainer.rank_list_size = parse_int(value, key);
    } else if (key == "trainer.batch_size") {
      config.trainer.batch_size = parse_int(value, key);
    } else if (key == "trainer.steps") {
      config.trainer.steps = parse_long(value, key);
    } else if (key == "trainer.epochs") {
      config.trainer.epochs = parse_int(value, key);
    } else if (key == "trainer.reward") {
      parse_reward_metric(value, config.trainer.reward_metric, config.trainer.reward_cutoff);
    } else if (key == "trainer.sample_count") {
      config.trainer.sample_count = parse_int(value, key);
    } else if (key == "trainer.ddpg_transition") {
      config.trainer.ddpg_transition = ddpg_transition_from_string(value);
    } else if (key == "trainer.grad_clip") {
      config.trainer.grad_clip = parse_real(value, key);
    } else if (key == "trainer.scorer_hidden") {
      config.trainer.scorer_hidden = parse_int_list(value, key);
    } else if (key == "trainer.critic_hidden") {
      config.trainer.critic_hidden = parse_int_list(value, key);
    } else if (key == "trainer.vae_latent") {
      config.trainer.vae_latent = parse_int(value, key);
    } else if (key == "trainer.vae_encoder_hidden") {
      config.trainer.vae_encoder_hidden = parse_int_list(value, key);
    } else if (key == "trainer.vae_decoder_hidden") {
      config.trainer.vae_decoder_hidden = parse_int_list(value, key);
    } else if (key == "trainer.perturb_hidden") {
      config.trainer.perturb_hidden = parse_int_list(value, key);
    } else if (key == "experiment.output") {
      config.output_dir = value;
    } else if (key == "experiment.repeats") {
      config.repeats = parse_int(value, key);
      saw_repeats = true;
    } else if (key == "experiment.seeds") {
      config.seeds = parse_seed_list(value, key);
      saw_seeds = true;
    } else if (key == "experiment.cutoffs") {
      config.cutoffs = parse_int_list(value, key);
    } else if (key == "experiment.validation_interval") {
      config.validation_interval = parse_int(value, key);
    } else if (key == "experiment.validation_epochs") {
      config.validation_epochs = parse_int(value, key);
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  // Seeds and repeats must agree; either can be derived from the other.
  if (saw_seeds && !saw_repeats) {
    config.repeats = static_cast<int>(config.seeds.size());
  } else if (saw_repeats && !saw_seeds) {
    config.seeds.clear();
    for (int i = 1; i <= config.repeats; ++i) {
      config.seeds.push_back(static_cast<std::uint64_t>(i));
    }
  }
  config.validate();
  return config;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return experiment_config_from_map(parse_config_text(text.str()));
}

std::string echo_config(const ExperimentConfig& config) {
  const TrainerConfig& t = config.trainer;
  std::ostringstream out;
  out << "[data]\n";
  out << "train = " << config.data.train_path << "\n";
  out << "valid = " << config.data.valid_path << "\n";
  out << "test = " << config.data.test_path << "\n";
  out << "feature_limit = " << config.data.feature_limit << "\n";
  out << "normalize = " << (config.data.normalize ? "true" : "false") << "\n";
  out << "\n[trainer]\n";
  out << "algorithm = " << to_string(t.algorithm) << "\n";
  out << "lr = " << format_double(t.lr) << "\n";
  out << "gamma = " << format_double(t.gamma) << "\n";
  out << "tau_soft = " << format_double(t.tau_soft) << "\n";
  out << "tau_temp = " << format_double(t.tau_temp) << "\n";
  out << "phi = " << format_double(t.phi) << "\n";
  out << "lambda_mix = " << format_double(t.lambda_mix) << "\n";
  out << "alpha_td = " << format_double(t.effective_alpha_td()) << "\n";
  out << "m_samples = " << t.m_samples << "\n";
  out << "rank_list_size = " << t.rank_list_size << "\n";
  out << "batch_size = " << t.batch_size << "\n";
  out << "steps = " << t.steps << "\n";
  out << "epochs = " << t.epochs << "\n";
  out << "reward = " << reward_metric_name(t.reward_metric, t.reward_cutoff) << "\n";
  out << "sample_count = " << t.sample_count << "\n";
  out << "ddpg_transition = " << to_string(t.ddpg_transition) << "\n";
  out << "grad_clip = " << format_double(t.grad_clip) << "\n";
  out << "scorer_hidden = " << join_ints(t.scorer_hidden) << "\n";
  out << "critic_hidden = " << join_ints(t.critic_hidden) << "\n";
  out << "vae_latent = " << t.vae_latent << "\n";
  out << "vae_encoder_hidden = " << join_ints(t.vae_encoder_hidden) << "\n";
  out << "vae_decoder_hidden = " << join_ints(t.vae_decoder_hidden) << "\n";
  out << "perturb_hidden = " << join_ints(t.perturb_hidden) << "\n";
  out << "\n[experiment]\n";
  out << "output = " << config.output_dir << "\n";
  out << "repeats = " << config.repeats << "\n";
  out << "seeds = " << join_seeds(config.seeds) << "\n";
  out << "cutoffs = " << join_ints(config.cutoffs) << "\n";
  out << "validation_interval = " << config.validation_interval << "\n";
  out << "validation_epochs = " << config.validation_epochs << "\n";
  return out.str();
}

}  // namespace serprank::train
