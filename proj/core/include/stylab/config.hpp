#pragma once

#include <stdexcept>
#include <string>

#include "stylab/augment.hpp"
#include "stylab/eval.hpp"
#include "stylab/ssl.hpp"

namespace stylab {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct PathsSpec {
  std::string style_bank;      // empty: build one from the training images
  std::string output_dir = ".";
};

/// Whole-run configuration, stored as an INI-style text document with
/// sections. Unknown keys are rejected; omitted keys keep their defaults;
/// parse and serialize are mutually canonical (serialize(parse(s)) is a fixed
/// point).
struct RunConfig {
  uint64_t seed = 7;
  int workers = 0;  // 0: hardware concurrency
  SynthSpec data;
  AugPolicy augment;
  ModelConfig model;
  TrainConfig train;
  PathsSpec paths;
  int embed_dim = kDefaultEmbedDim;
  int styled_layers = StylizationNetwork::kStyledLayerCount;
  int64_t pairing_offset = kDefaultPairingOffset;

  void validate() const;
};

RunConfig parse_config(const std::string& text);
std::string serialize_config(const RunConfig& cfg);

RunConfig load_config_file(const std::string& path);
void save_config_file(const RunConfig& cfg, const std::string& path);

/// FNV-1a over the canonical serialization.
uint64_t config_hash(const RunConfig& cfg);

}  // namespace stylab
