#include "chexfuse/config.hpp"

#include <fstream>
#include <sstream>

#include "chexfuse/errors.hpp"

namespace chexfuse {

ConfigMap default_config() {
  return {
      {"train.batch_size", "16"},
      {"train.lr", "0.001"},
      {"train.beta1", "0.9"},
      {"train.beta2", "0.999"},
      {"train.adam_eps", "1e-8"},
      {"train.plateau_factor", "10"},
      {"train.plateau_patience", "1"},
      {"train.max_epochs", "44"},
      {"train.seed", "0"},
      {"train.augment", "true"},
      {"train.pos_weight", "false"},
      {"model.variant", "densenet121"},
      {"model.image_only", "false"},
      {"head.hidden1", "512"},
      {"head.init", "identity_start"},
      {"data.image_size", "224"},
      {"data.train_frac", "0.7"},
      {"data.val_frac", "0.1"},
      {"data.test_frac", "0.2"},
  };
}

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

ConfigMap parse_config_text(const std::string& text) {
  ConfigMap out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    }
    out[key] = value;
  }
  return out;
}

ConfigMap parse_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

void apply_overrides(ConfigMap& base, const ConfigMap& overrides) {
  const ConfigMap known = default_config();
  for (const auto& [key, value] : overrides) {
    if (known.find(key) == known.end()) {
      throw ConfigError("unknown config key '" + key + "'");
    }
    base[key] = value;
  }
}

std::string render_config(const ConfigMap& config) {
  std::ostringstream out;
  for (const auto& [key, value] : config) out << key << " = " << value << "\n";
  return out.str();
}

const std::string& config_str(const ConfigMap& config, const std::string& key) {
  const auto it = config.find(key);
  if (it == config.end()) throw ConfigError("missing config key '" + key + "'");
  return it->second;
}

int config_int(const ConfigMap& config, const std::string& key) {
  const std::string& s = config_str(config, key);
  try {
    std::size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': integer expected, got '" + s + "'");
  }
}

double config_double(const ConfigMap& config, const std::string& key) {
  const std::string& s = config_str(config, key);
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': number expected, got '" + s + "'");
  }
}

bool config_bool(const ConfigMap& config, const std::string& key) {
  const std::string& s = config_str(config, key);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("config key '" + key + "': boolean expected, got '" + s + "'");
}

std::uint64_t config_u64(const ConfigMap& config, const std::string& key) {
  const std::string& s = config_str(config, key);
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return static_cast<std::uint64_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': unsigned integer expected, got '" +
                      s + "'");
  }
}

TrainConfig train_config_from(const ConfigMap& config) {
  TrainConfig cfg;
  cfg.batch_size = config_int(config, "train.batch_size");
  cfg.lr = config_double(config, "train.lr");
  cfg.beta1 = config_double(config, "train.beta1");
  cfg.beta2 = config_double(config, "train.beta2");
  cfg.adam_eps = config_double(config, "train.adam_eps");
  cfg.plateau_factor = config_double(config, "train.plateau_factor");
  cfg.plateau_patience = config_int(config, "train.plateau_patience");
  cfg.max_epochs = config_int(config, "train.max_epochs");
  cfg.seed = config_u64(config, "train.seed");
  cfg.augment = config_bool(config, "train.augment");
  cfg.pos_weight = config_bool(config, "train.pos_weight");
  cfg.head_init = head_init_from(config);
  cfg.validate();
  return cfg;
}

BackboneConfig backbone_config_from(const ConfigMap& config) {
  return BackboneConfig::from_variant(config_str(config, "model.variant"));
}

HeadConfig head_config_from(const ConfigMap& config, int feature_dim) {
  HeadConfig cfg;
  cfg.hidden1 = config_int(config, "head.hidden1");
  cfg.feature_dim = feature_dim;
  cfg.validate();
  return cfg;
}

HeadInit head_init_from(const ConfigMap& config) {
  const std::string& mode = config_str(config, "head.init");
  if (mode == "identity_start") return HeadInit::kIdentityStart;
  if (mode == "standard") return HeadInit::kStandard;
  throw ConfigError("head.init must be 'identity_start' or 'standard', got '" +
                    mode + "'");
}

std::array<double, 3> split_ratios_from(const ConfigMap& config) {
  return {config_double(config, "data.train_frac"),
          config_double(config, "data.val_frac"),
          config_double(config, "data.test_frac")};
}

int image_size_from(const ConfigMap& config) {
  const int size = config_int(config, "data.image_size");
  if (size < 1) throw ConfigError("data.image_size must be >= 1");
  return size;
}

bool image_only_from(const ConfigMap& config) {
  return config_bool(config, "model.image_only");
}

}  // namespace chexfuse
