#include "mash/experiment.hpp"

#include "mash/checkpoint.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <ostream>
#include <sstream>

namespace mash {

std::vector<TrainExample> sample_examples(const SyntheticSample& s) {
  std::vector<TrainExample> out;
  for (const Question& q : s.qa) out.push_back(TrainExample{&s.fe, q.prompt, {q.gold_token(), kEnd}});
  return out;
}

std::vector<double> train_model(const RunConfig& cfg, std::span<const SyntheticSample> train,
                                ModelParams& params, std::ostream* log) {
  cfg.validate();
  if (train.empty()) throw ValidationError("train: empty training split");
  const AdamConfig opt{cfg.train.lr};
  AdamState state = init_adam(params);
  std::vector<std::size_t> order(train.size());
  std::vector<double> epoch_loss;
  for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    // Shuffle streams sit below the sample and template indices.
    std::mt19937_64 rng = sample_rng(cfg.seed(), ~std::uint64_t{0} - 1 - static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(rng)]);
    }
    double total = 0.0;
    std::size_t steps = 0;
    const auto batch = static_cast<std::size_t>(cfg.train.batch_size);
    for (std::size_t first = 0; first < order.size(); first += batch) {
      std::vector<TrainExample> examples;
      for (std::size_t i = first; i < std::min(order.size(), first + batch); ++i) {
        const auto ex = sample_examples(train[order[i]]);
        examples.insert(examples.end(), ex.begin(), ex.end());
      }
      total += train_step(examples, params, state, cfg.model, opt);
      ++steps;
    }
    epoch_loss.push_back(total / static_cast<double>(steps));
    if (log) *log << "epoch " << epoch + 1 << "/" << cfg.train.epochs << " loss " << epoch_loss.back() << '\n';
  }
  return epoch_loss;
}

RunConfig baseline_of(const RunConfig& cfg) {
  RunConfig b = cfg;
  b.model.attention.mask_mode = MaskMode::full_causal;
  b.model.attention.rope_scheme = RopeScheme::distinct;
  return b;
}

EvalReport evaluate_model(const ModelParams& params, const RunConfig& cfg,
                          std::span<const SyntheticSample> samples, const std::string& variant) {
  EvalReport r = evaluate_dual(samples, model_answerer(params, cfg.model));
  r.variant = variant;
  r.config_hash = hex64(config_hash(cfg));
  r.seed = cfg.seed();
  r.revision = std::string(revision());
  return r;
}

RunResult run_variant(const RunConfig& cfg, const Dataset& data, const std::string& variant,
                      std::ostream* log) {
  RunResult run;
  run.variant = variant;
  run.cfg = cfg;
  run.params = init_params(cfg.model);
  if (log) *log << "[" << variant << "] training on " << data.train.size() << " samples\n";
  run.epoch_loss = train_model(cfg, data.train, run.params, log);
  run.report = evaluate_model(run.params, cfg, data.test, variant);
  run.action_profile = average_profile(run.params, cfg.model, data.test, Category::action);
  run.scene_profile = average_profile(run.params, cfg.model, data.test, Category::scene);
  if (log) {
    *log << "[" << variant << "] dual accuracy: all "
         << run.report.dual_accuracy(std::vector<Regime>{Regime::usual, Regime::unusual, Regime::scene_only})
         << ", unusual+scene_only " << run.report.dual_accuracy(kHardRegimes) << '\n';
  }
  return run;
}

void write_run(const RunResult& run, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path d(dir);
  save_checkpoint((d / "checkpoint.mash").string(), run.cfg.model, run.params);
  write_text_file((d / "report.csv").string(), write_report_csv(run.report));
  write_text_file((d / "profile_action.csv").string(), write_profile_csv(run.action_profile));
  write_text_file((d / "profile_scene.csv").string(), write_profile_csv(run.scene_profile));
  write_text_file((d / "config.txt").string(), format_config(run.cfg));
}

std::vector<std::string_view> ablation_axes() {
  return {"attention", "disentangle", "rope_scheme", "mask_mode"};
}

std::vector<std::pair<std::string, RunConfig>> ablation_variants(const RunConfig& cfg,
                                                                 std::string_view axis) {
  std::vector<std::pair<std::string, RunConfig>> out;
  if (axis == "attention") {
    for (Direction t : {Direction::causal, Direction::bidirectional}) {
      for (Direction s : {Direction::causal, Direction::bidirectional}) {
        RunConfig c = cfg;
        c.model.attention.temporal_attn = t;
        c.model.attention.spatial_attn = s;
        out.emplace_back("temporal_" + std::string(to_string(t)) + "+spatial_" + std::string(to_string(s)), c);
      }
    }
  } else if (axis == "disentangle") {
    for (bool on : {true, false}) {
      RunConfig c = cfg;
      c.model.attention.disentangle = on;
      out.emplace_back(on ? "disentangle_on" : "disentangle_off", c);
    }
  } else if (axis == "rope_scheme") {
    for (RopeScheme s : {RopeScheme::distinct, RopeScheme::balanced, RopeScheme::harmonic}) {
      RunConfig c = cfg;
      c.model.attention.rope_scheme = s;
      out.emplace_back(std::string(to_string(s)), c);
    }
  } else if (axis == "mask_mode") {
    for (MaskMode m : {MaskMode::full_causal, MaskMode::dst}) {
      RunConfig c = cfg;
      c.model.attention.mask_mode = m;
      out.emplace_back(std::string(to_string(m)), c);
    }
  } else {
    throw ValidationError("unknown ablation axis '" + std::string(axis) +
                          "' (expected attention, disentangle, rope_scheme or mask_mode)");
  }
  for (auto& [name, c] : out) c.validate();
  return out;
}

std::string ablation_summary_csv(std::span<const RunResult> runs) {
  std::ostringstream out;
  out << "variant,regime,category,dual_acc,n\n";
  char buf[40];
  for (const RunResult& run : runs) {
    for (const ReportRow& r : run.report.rows) {
      std::snprintf(buf, sizeof buf, "%.17g", r.accuracy());
      out << run.variant << ',' << to_string(r.regime) << ',' << to_string(r.category) << ',' << buf
          << ',' << r.n << '\n';
    }
  }
  return out.str();
}

}  // namespace mash
