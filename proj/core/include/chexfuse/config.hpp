#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>

#include "chexfuse/backbone.hpp"
#include "chexfuse/fusion_head.hpp"
#include "chexfuse/training.hpp"

// Flat dotted-key configuration ("key = value" lines, '#' comments). The same
// map is echoed verbatim into checkpoints so evaluation can rebuild the exact
// patient-disjoint split a model was trained with.

namespace chexfuse {

using ConfigMap = std::map<std::string, std::string>;

/// Every known key with its default value. Defaults follow the reference
/// training protocol: batch 16, lr 0.001, 44 epochs, 0.7/0.1/0.2 split.
ConfigMap default_config();

/// Parses a config file. Unknown keys are rejected against default_config().
ConfigMap parse_config_file(const std::string& path);

/// Parses config text (same syntax as the file form).
ConfigMap parse_config_text(const std::string& text);

/// Overlays `overrides` onto `base`; throws ConfigError on unknown keys.
void apply_overrides(ConfigMap& base, const ConfigMap& overrides);

/// Renders in "key = value" lines, sorted by key.
std::string render_config(const ConfigMap& config);

// Typed accessors; throw ConfigError on unparseable values.
int config_int(const ConfigMap& config, const std::string& key);
double config_double(const ConfigMap& config, const std::string& key);
bool config_bool(const ConfigMap& config, const std::string& key);
std::uint64_t config_u64(const ConfigMap& config, const std::string& key);
const std::string& config_str(const ConfigMap& config, const std::string& key);

TrainConfig train_config_from(const ConfigMap& config);
BackboneConfig backbone_config_from(const ConfigMap& config);
HeadConfig head_config_from(const ConfigMap& config, int feature_dim);
HeadInit head_init_from(const ConfigMap& config);
std::array<double, 3> split_ratios_from(const ConfigMap& config);
int image_size_from(const ConfigMap& config);
bool image_only_from(const ConfigMap& config);

}  // namespace chexfuse
