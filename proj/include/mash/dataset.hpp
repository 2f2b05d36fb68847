#pragma once

#include "mash/config.hpp"
#include "mash/tokens.hpp"

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace mash {

// Fixed symbol layout; scene and action class symbols follow.
inline constexpr int kPad = 0;
inline constexpr int kYes = 1;
inline constexpr int kNo = 2;
inline constexpr int kEnd = 3;
inline constexpr int kIsAction = 4;
inline constexpr int kIsScene = 5;
inline constexpr int kNoAction = -1;

inline int scene_token(int scene) { return 6 + scene; }
inline int action_token(int action, const GenConfig& g) { return 6 + g.scene_classes + action; }

enum class Regime : std::uint8_t { usual, unusual, scene_only };
enum class Category : std::uint8_t { action, scene };
/// gold: the true label, answer yes. hallucination: the label the training
/// co-occurrence suggests from the other factor, answer no. distractor: some
/// other wrong label, answer no.
enum class Role : std::uint8_t { gold, hallucination, distractor };

std::string_view to_string(Regime r);
std::string_view to_string(Category c);
std::string_view to_string(Role r);
Regime parse_regime(std::string_view s);
Category parse_category(std::string_view s);
Role parse_role(std::string_view s);

struct Question {
  Category category = Category::action;
  Role role = Role::gold;
  std::vector<int> prompt;  // [IS_ACTION a] or [IS_SCENE s]
  bool gold_yes() const { return role == Role::gold; }
  int gold_token() const { return gold_yes() ? kYes : kNo; }
};

struct SyntheticSample {
  FrameEmbeddings fe;
  int scene = 0;
  int action = kNoAction;
  Regime regime = Regime::usual;
  std::vector<Question> qa;  // two per category; scene-only has action questions only
};

/// Scene s typically hosts actions s, s+1, ..., s+width-1 (mod A).
struct Cooccurrence {
  int scenes = 0, actions = 0, width = 1;

  explicit Cooccurrence(const GenConfig& g)
      : scenes(g.scene_classes), actions(g.action_classes), width(g.cooccur_width) {}
  bool usual(int scene, int action) const;
  int typical_action(int scene) const { return scene % actions; }
  int typical_scene(int action) const { return action % scenes; }
};

struct Dataset {
  std::vector<SyntheticSample> train;  // usual pairs only
  std::vector<SyntheticSample> test;   // usual, unusual, scene-only in turn
};

/// Sample i draws from its own generator seeded by (seed, i), so any subset
/// can be regenerated alone.
Dataset gen_dataset(const RunConfig& cfg);

/// Class patterns shared by every sample of a run.
struct ClassTemplates {
  std::vector<Mat> scene;   // (h*w) x d static pattern per scene
  std::vector<Mat> action;  // T x d per-frame offset per action, zero mean in each segment
};

ClassTemplates make_templates(const RunConfig& cfg);
std::mt19937_64 sample_rng(std::uint64_t seed, std::uint64_t index);

/// Renders one clip without noise; noise is added by gen_dataset.
FrameEmbeddings render_clean(const RunConfig& cfg, const ClassTemplates& t, int scene, int action);

}  // namespace mash
