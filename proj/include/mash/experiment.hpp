#pragma once

#include "mash/config.hpp"
#include "mash/dataset.hpp"
#include "mash/evaluate.hpp"
#include "mash/model.hpp"

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace mash {

/// Teacher-forced examples for every question of a sample: answer [yes|no, END].
std::vector<TrainExample> sample_examples(const SyntheticSample& s);

/// Adam over shuffled mini-batches of samples. Returns the mean loss per epoch.
std::vector<double> train_model(const RunConfig& cfg, std::span<const SyntheticSample> train,
                                ModelParams& params, std::ostream* log = nullptr);

/// Same data and schedule with a plain causal mask and sequential positions.
RunConfig baseline_of(const RunConfig& cfg);

struct RunResult {
  std::string variant;
  RunConfig cfg;
  ModelParams params;
  std::vector<double> epoch_loss;
  EvalReport report;
  std::vector<ProfileRow> action_profile, scene_profile;
};

RunResult run_variant(const RunConfig& cfg, const Dataset& data, const std::string& variant,
                      std::ostream* log = nullptr);

EvalReport evaluate_model(const ModelParams& params, const RunConfig& cfg,
                          std::span<const SyntheticSample> samples, const std::string& variant);

/// checkpoint.mash, report.csv, profile_action.csv, profile_scene.csv, config.txt
void write_run(const RunResult& run, const std::string& dir);

/// Axes: attention (temporal x spatial directions), disentangle, rope_scheme, mask_mode.
std::vector<std::pair<std::string, RunConfig>> ablation_variants(const RunConfig& cfg,
                                                                 std::string_view axis);
std::vector<std::string_view> ablation_axes();

/// One table over variants: `variant,regime,category,dual_acc,n`.
std::string ablation_summary_csv(std::span<const RunResult> runs);

/// Regimes where the two factors disagree with the training co-occurrence.
inline constexpr Regime kHardRegimes[] = {Regime::unusual, Regime::scene_only};

}  // namespace mash
