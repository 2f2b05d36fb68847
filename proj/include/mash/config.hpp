#pragma once

#include "mash/model.hpp"

#include <cstdint>
#include <string>
#include <string_view>

namespace mash {

/// Synthetic action-scene data knobs.
struct GenConfig {
  int scene_classes = 4;
  int action_classes = 4;
  int cooccur_width = 2;  // typical actions per scene: s, s+1, ... (mod A)
  int train_samples = 2000;
  int test_samples = 600;
  double scene_strength = 1.0;
  double action_strength = 1.0;
  double noise = 1.0;

  void validate() const;
};

struct TrainConfig {
  int epochs = 3;
  int batch_size = 4;  // samples per step; each sample carries all of its questions
  double lr = 1e-3;

  void validate() const;
};

/// Everything a run depends on. `model.seed` drives both data and init.
struct RunConfig {
  ModelConfig model;
  GenConfig gen;
  TrainConfig train;

  std::uint64_t seed() const { return model.seed; }
  void validate() const;
};

/// Flat `key = value` text; '#' starts a comment. Unknown or repeated keys
/// and malformed values are errors. Keys not present keep their defaults.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::string& path);

/// Canonical text holding every key, in a fixed order.
std::string format_config(const RunConfig& cfg);

/// FNV-1a over format_config.
std::uint64_t config_hash(const RunConfig& cfg);
std::string hex64(std::uint64_t v);

/// Build revision baked in at configure time ("unknown" outside a checkout).
std::string_view revision();

}  // namespace mash
