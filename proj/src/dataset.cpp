#include "mash/dataset.hpp"

namespace mash {

std::string_view to_string(Regime r) {
  switch (r) {
    case Regime::usual:
      return "usual";
    case Regime::unusual:
      return "unusual";
    case Regime::scene_only:
      return "scene_only";
  }
  return "usual";
}

std::string_view to_string(Category c) { return c == Category::action ? "action" : "scene"; }

std::string_view to_string(Role r) {
  switch (r) {
    case Role::gold:
      return "gold";
    case Role::hallucination:
      return "hallucination";
    case Role::distractor:
      return "distractor";
  }
  return "gold";
}

Regime parse_regime(std::string_view s) {
  for (Regime r : {Regime::usual, Regime::unusual, Regime::scene_only}) {
    if (s == to_string(r)) return r;
  }
  throw ValidationError("unknown regime '" + std::string(s) + "'");
}

Category parse_category(std::string_view s) {
  for (Category c : {Category::action, Category::scene}) {
    if (s == to_string(c)) return c;
  }
  throw ValidationError("unknown question category '" + std::string(s) + "'");
}

Role parse_role(std::string_view s) {
  for (Role r : {Role::gold, Role::hallucination, Role::distractor}) {
    if (s == to_string(r)) return r;
  }
  throw ValidationError("unknown question role '" + std::string(s) + "'");
}

bool Cooccurrence::usual(int scene, int action) const {
  const int offset = ((action - scene) % actions + actions) % actions;
  return offset < width;
}

std::mt19937_64 sample_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

ClassTemplates make_templates(const RunConfig& cfg) {
  const ModelConfig& m = cfg.model;
  // Index ~0 is never a sample index.
  std::mt19937_64 rng = sample_rng(cfg.seed(), ~std::uint64_t{0});
  std::normal_distribution<double> normal(0.0, 1.0);
  auto gauss = [&](Eigen::Index r, Eigen::Index c) {
    Mat out(r, c);
    for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = normal(rng);
    return out;
  };
  ClassTemplates t;
  for (int s = 0; s < cfg.gen.scene_classes; ++s) {
    t.scene.push_back(gauss(Eigen::Index{m.grid_h} * m.grid_w, m.encoder_dim));
  }
  const int per = m.frames / kSpatialSegments;
  for (int a = 0; a < cfg.gen.action_classes; ++a) {
    Mat traj = gauss(m.frames, m.encoder_dim);
    // Remove each segment's mean so the motion carries no static appearance.
    for (int s = 0; s < kSpatialSegments; ++s) {
      Mat mean = Mat::Zero(1, m.encoder_dim);
      for (int f = s * per; f < (s + 1) * per; ++f) mean += traj.row(f);
      mean /= static_cast<double>(per);
      for (int f = s * per; f < (s + 1) * per; ++f) traj.row(f) -= mean;
    }
    t.action.push_back(std::move(traj));
  }
  return t;
}

FrameEmbeddings render_clean(const RunConfig& cfg, const ClassTemplates& t, int scene, int action) {
  const ModelConfig& m = cfg.model;
  FrameEmbeddings fe;
  fe.frames = m.frames;
  fe.grid_h = m.grid_h;
  fe.grid_w = m.grid_w;
  const int n = fe.patches_per_frame();
  fe.patches = Mat(Eigen::Index{m.frames} * n, m.encoder_dim);
  fe.cls = Mat(m.frames, m.encoder_dim);
  const Mat& pattern = t.scene.at(static_cast<std::size_t>(scene));
  for (int f = 0; f < m.frames; ++f) {
    Mat frame = cfg.gen.scene_strength * pattern;
    if (action != kNoAction) {
      const Mat offset = cfg.gen.action_strength * t.action.at(static_cast<std::size_t>(action)).row(f);
      for (int p = 0; p < n; ++p) frame.row(p) += offset;
    }
    fe.patches.middleRows(Eigen::Index{f} * n, n) = frame;
    Mat global = Mat::Zero(1, m.encoder_dim);
    for (int p = 0; p < n; ++p) global += frame.row(p);
    fe.cls.row(f) = global / static_cast<double>(n);
  }
  return fe;
}

namespace {

int other_than(int exclude, int classes, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, classes - 2);
  const int v = pick(rng);
  return v >= exclude ? v + 1 : v;
}

Question ask(Category c, Role r, int label, const GenConfig& g) {
  const int token = c == Category::action ? action_token(label, g) : scene_token(label);
  return Question{c, r, {c == Category::action ? kIsAction : kIsScene, token}};
}

SyntheticSample make_sample(const RunConfig& cfg, const ClassTemplates& t, const Cooccurrence& co,
                            Regime regime, std::uint64_t index) {
  const GenConfig& g = cfg.gen;
  std::mt19937_64 rng = sample_rng(cfg.seed(), index);
  std::uniform_int_distribution<int> pick_scene(0, g.scene_classes - 1);
  SyntheticSample s;
  s.regime = regime;
  s.scene = pick_scene(rng);
  if (regime == Regime::usual) {
    std::uniform_int_distribution<int> k(0, g.cooccur_width - 1);
    s.action = (s.scene + k(rng)) % g.action_classes;
  } else if (regime == Regime::unusual) {
    std::uniform_int_distribution<int> k(g.cooccur_width, g.action_classes - 1);
    s.action = (s.scene + k(rng)) % g.action_classes;
  }

  if (regime == Regime::scene_only) {
    const int typical = co.typical_action(s.scene);
    s.qa.push_back(ask(Category::action, Role::hallucination, typical, g));
    s.qa.push_back(ask(Category::action, Role::distractor, other_than(typical, g.action_classes, rng), g));
  } else {
    s.qa.push_back(ask(Category::action, Role::gold, s.action, g));
    s.qa.push_back(ask(Category::scene, Role::gold, s.scene, g));
    if (regime == Regime::unusual) {
      s.qa.push_back(ask(Category::action, Role::hallucination, co.typical_action(s.scene), g));
      int scene_lure = co.typical_scene(s.action);
      if (scene_lure == s.scene) scene_lure = (s.scene + 1) % g.scene_classes;
      s.qa.push_back(ask(Category::scene, Role::hallucination, scene_lure, g));
    } else {
      s.qa.push_back(ask(Category::action, Role::distractor, other_than(s.action, g.action_classes, rng), g));
      s.qa.push_back(ask(Category::scene, Role::distractor, other_than(s.scene, g.scene_classes, rng), g));
    }
  }

  s.fe = render_clean(cfg, t, s.scene, s.action);
  std::normal_distribution<double> noise(0.0, g.noise);
  if (g.noise > 0) {
    for (Eigen::Index i = 0; i < s.fe.patches.size(); ++i) s.fe.patches.data()[i] += noise(rng);
    for (Eigen::Index i = 0; i < s.fe.cls.size(); ++i) s.fe.cls.data()[i] += noise(rng);
  }
  return s;
}

}  // namespace

Dataset gen_dataset(const RunConfig& cfg) {
  cfg.validate();
  const ClassTemplates t = make_templates(cfg);
  const Cooccurrence co(cfg.gen);
  Dataset d;
  d.train.reserve(static_cast<std::size_t>(cfg.gen.train_samples));
  for (int i = 0; i < cfg.gen.train_samples; ++i) {
    d.train.push_back(make_sample(cfg, t, co, Regime::usual, static_cast<std::uint64_t>(i)));
  }
  const Regime cycle[] = {Regime::usual, Regime::unusual, Regime::scene_only};
  for (int i = 0; i < cfg.gen.test_samples; ++i) {
    const auto index = static_cast<std::uint64_t>(cfg.gen.train_samples + i);
    d.test.push_back(make_sample(cfg, t, co, cycle[i % 3], index));
  }
  return d;
}

}  // namespace mash
