#include "mash/checkpoint.hpp"
#include "mash/experiment.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <random>
#include <sstream>

namespace {

using namespace mash;

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool need_out) {
  cmd->add_option("--config", c.config, "flat key = value config file")->check(CLI::ExistingFile);
  c.seed_opt = cmd->add_option("--seed", c.seed, "overrides the config seed");
  auto* out = cmd->add_option("--out", c.out, "output directory");
  if (need_out) out->required();
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  if (c.seed_opt->count() > 0) cfg.model.seed = c.seed;
  cfg.validate();
  return cfg;
}

std::filesystem::path out_dir(const std::string& out) {
  std::filesystem::create_directories(out);
  return std::filesystem::path(out);
}

std::string dataset_csv(const Dataset& d) {
  std::ostringstream out;
  out << "split,index,regime,scene,action,category,role,prompt,gold\n";
  auto dump = [&](const char* split, const std::vector<SyntheticSample>& samples) {
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const SyntheticSample& s = samples[i];
      for (const Question& q : s.qa) {
        out << split << ',' << i << ',' << to_string(s.regime) << ',' << s.scene << ','
            << (s.action == kNoAction ? std::string("none") : std::to_string(s.action)) << ','
            << to_string(q.category) << ',' << to_string(q.role) << ',' << q.prompt[0] << ' '
            << q.prompt[1] << ',' << (q.gold_yes() ? "yes" : "no") << '\n';
      }
    }
  };
  dump("train", d.train);
  dump("test", d.test);
  return out.str();
}

// Checkpoint model plus data knobs from the config file, if any.
RunConfig resolve_with_checkpoint(const Common& c, const Checkpoint& ck) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  cfg.model = ck.config;
  if (c.seed_opt->count() > 0) cfg.model.seed = c.seed;
  cfg.validate();
  return cfg;
}

const std::vector<SyntheticSample>& pick_split(const Dataset& d, const std::string& split) {
  if (split == "test") return d.test;
  if (split == "train") return d.train;
  throw ValidationError("unknown split '" + split + "' (expected train or test)");
}

int grad_check(const Common& c) {
  ModelConfig cfg;
  cfg.blocks = 1;
  cfg.d_model = 8;
  cfg.attention.heads = 2;
  cfg.attention.head_dim = 4;
  cfg.attention.rope_scheme = RopeScheme::distinct;
  cfg.vocab = 8;
  cfg.encoder_dim = 4;
  cfg.frames = 4;
  cfg.grid_h = 2;
  cfg.grid_w = 2;
  if (!c.config.empty()) cfg = load_config(c.config).model;
  if (c.seed_opt->count() > 0) cfg.seed = c.seed;
  cfg.validate();

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  FrameEmbeddings fe;
  fe.frames = cfg.frames;
  fe.grid_h = cfg.grid_h;
  fe.grid_w = cfg.grid_w;
  fe.patches = Mat(Eigen::Index{cfg.frames} * fe.patches_per_frame(), cfg.encoder_dim);
  fe.cls = Mat(cfg.frames, cfg.encoder_dim);
  for (Eigen::Index i = 0; i < fe.patches.size(); ++i) fe.patches.data()[i] = normal(rng);
  for (Eigen::Index i = 0; i < fe.cls.size(); ++i) fe.cls.data()[i] = normal(rng);
  ModelParams params = init_params(cfg);
  std::normal_distribution<double> weight(0.0, 0.3);
  params.visit([&](const std::string&, Mat& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = weight(rng);
  });
  const TrainExample ex{&fe, {1, 2}, {3, 0}};
  const double err = gradient_check(params, cfg, ex);
  std::cout << "parameters " << params.parameter_count() << "\nmax relative error " << err << '\n';
  return err < 1e-4 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Disentangled spatial-temporal attention toolkit"};
  app.require_subcommand(1);

  Common gen_c, train_c, eval_c, prof_c, ablate_c, grad_c;
  bool baseline = false;
  std::string checkpoint, split = "test", axis;

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic action-scene dataset");
  add_common(gen, gen_c, true);

  auto* train = app.add_subcommand("train", "train, evaluate and write checkpoint, report and profiles");
  add_common(train, train_c, true);
  train->add_flag("--baseline", baseline, "also train the full-causal + distinct-position variant");

  auto* eval = app.add_subcommand("eval", "dual-question evaluation of a checkpoint");
  add_common(eval, eval_c, false);
  eval->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  eval->add_option("--split", split, "train or test");

  auto* prof = app.add_subcommand("profile", "attention mass from answer rows onto each block");
  add_common(prof, prof_c, true);
  prof->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  prof->add_option("--split", split, "train or test");

  auto* ablate = app.add_subcommand("ablate", "train one variant per value of an ablation axis");
  add_common(ablate, ablate_c, true);
  ablate->add_option("--axis", axis, "attention, disentangle, rope_scheme, mask_mode or all")->required();

  auto* grad = app.add_subcommand("grad-check", "compare tape gradients with central differences");
  add_common(grad, grad_c, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const RunConfig cfg = resolve(gen_c);
      const auto dir = out_dir(gen_c.out);
      write_text_file((dir / "dataset.csv").string(), dataset_csv(gen_dataset(cfg)));
      write_text_file((dir / "config.txt").string(), format_config(cfg));
    } else if (train->parsed()) {
      const RunConfig cfg = resolve(train_c);
      const Dataset data = gen_dataset(cfg);
      const auto dir = out_dir(train_c.out);
      write_run(run_variant(cfg, data, "model", &std::cerr), (dir / "model").string());
      if (baseline) write_run(run_variant(baseline_of(cfg), data, "baseline", &std::cerr), (dir / "baseline").string());
    } else if (eval->parsed()) {
      const Checkpoint ck = load_checkpoint(checkpoint);
      const RunConfig cfg = resolve_with_checkpoint(eval_c, ck);
      const Dataset data = gen_dataset(cfg);
      const std::string csv = write_report_csv(evaluate_model(ck.params, cfg, pick_split(data, split), "eval"));
      if (eval_c.out.empty()) {
        std::cout << csv;
      } else {
        write_text_file((out_dir(eval_c.out) / "report.csv").string(), csv);
      }
    } else if (prof->parsed()) {
      const Checkpoint ck = load_checkpoint(checkpoint);
      const RunConfig cfg = resolve_with_checkpoint(prof_c, ck);
      const Dataset data = gen_dataset(cfg);
      const auto& samples = pick_split(data, split);
      const auto dir = out_dir(prof_c.out);
      write_text_file((dir / "profile_action.csv").string(),
                      write_profile_csv(average_profile(ck.params, cfg.model, samples, Category::action)));
      write_text_file((dir / "profile_scene.csv").string(),
                      write_profile_csv(average_profile(ck.params, cfg.model, samples, Category::scene)));
    } else if (ablate->parsed()) {
      const RunConfig cfg = resolve(ablate_c);
      std::vector<std::string_view> axes;
      if (axis == "all") {
        axes = ablation_axes();
      } else {
        axes.push_back(axis);
      }
      const Dataset data = gen_dataset(cfg);
      const auto dir = out_dir(ablate_c.out);
      for (std::string_view a : axes) {
        std::vector<RunResult> runs;
        for (const auto& [name, variant] : ablation_variants(cfg, a)) {
          runs.push_back(run_variant(variant, data, name, &std::cerr));
          write_run(runs.back(), (dir / std::string(a) / name).string());
        }
        write_text_file((dir / ("ablation_" + std::string(a) + ".csv")).string(), ablation_summary_csv(runs));
      }
    } else if (grad->parsed()) {
      return grad_check(grad_c);
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
