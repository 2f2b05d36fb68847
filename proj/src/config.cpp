#include "mash/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#ifndef MASH_REVISION
#define MASH_REVISION "unknown"
#endif

namespace mash {

void GenConfig::validate() const {
  if (scene_classes < 2 || action_classes < 2) {
    throw ValidationError("gen: scene_classes and action_classes must be >= 2");
  }
  if (cooccur_width < 1 || cooccur_width >= action_classes) {
    throw ValidationError("gen: cooccur_width " + std::to_string(cooccur_width) +
                          " leaves no held-out (unusual) pairs with " +
                          std::to_string(action_classes) + " actions");
  }
  if (train_samples < 1) throw ValidationError("gen: train_samples must be positive");
  if (test_samples < 3) throw ValidationError("gen: test_samples must cover all three regimes");
  if (!(scene_strength >= 0) || !(action_strength >= 0) || !(noise >= 0)) {
    throw ValidationError("gen: strengths and noise must be non-negative");
  }
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ValidationError("train: epochs must be non-negative");
  if (batch_size < 1) throw ValidationError("train: batch_size must be positive");
  if (!(lr >= 0)) throw ValidationError("train: lr must be non-negative");
}

void RunConfig::validate() const {
  model.validate();
  gen.validate();
  train.validate();
  const int needed = 6 + gen.scene_classes + gen.action_classes;
  if (model.vocab < needed) {
    throw ValidationError("config: vocab " + std::to_string(model.vocab) + " cannot hold the " +
                          std::to_string(needed) + " question/answer symbols");
  }
}

namespace {

template <typename T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ValidationError("config: bad value '" + std::string(v) + "' for " + std::string(key));
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  throw ValidationError("config: bad boolean '" + std::string(v) + "' for " + std::string(key));
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

using Setter = std::function<void(RunConfig&, std::string_view key, std::string_view value)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct Key {
  const char* name;
  Setter set;
  Getter get;
};

template <typename T>
Key int_key(const char* name, T RunConfig::*section, int T::*field) {
  return {name,
          [=](RunConfig& c, std::string_view k, std::string_view v) {
            (c.*section).*field = parse_number<int>(k, v);
          },
          [=](const RunConfig& c) { return std::to_string((c.*section).*field); }};
}

template <typename T>
Key double_key(const char* name, T RunConfig::*section, double T::*field) {
  return {name,
          [=](RunConfig& c, std::string_view k, std::string_view v) {
            (c.*section).*field = parse_number<double>(k, v);
          },
          [=](const RunConfig& c) { return fmt_double((c.*section).*field); }};
}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = [] {
    using R = RunConfig;
    std::vector<Key> k;
    k.push_back({"seed",
                 [](R& c, std::string_view key, std::string_view v) {
                   c.model.seed = parse_number<std::uint64_t>(key, v);
                 },
                 [](const R& c) { return std::to_string(c.model.seed); }});
    k.push_back(int_key("blocks", &R::model, &ModelConfig::blocks));
    k.push_back(int_key("d_model", &R::model, &ModelConfig::d_model));
    k.push_back({"heads",
                 [](R& c, std::string_view key, std::string_view v) {
                   c.model.attention.heads = parse_number<int>(key, v);
                 },
                 [](const R& c) { return std::to_string(c.model.attention.heads); }});
    k.push_back({"head_dim",
                 [](R& c, std::string_view key, std::string_view v) {
                   c.model.attention.head_dim = parse_number<int>(key, v);
                 },
                 [](const R& c) { return std::to_string(c.model.attention.head_dim); }});
    k.push_back(int_key("vocab", &R::model, &ModelConfig::vocab));
    k.push_back(int_key("mlp_hidden", &R::model, &ModelConfig::mlp_hidden));
    k.push_back(int_key("encoder_dim", &R::model, &ModelConfig::encoder_dim));
    k.push_back(int_key("frames", &R::model, &ModelConfig::frames));
    k.push_back(int_key("grid_h", &R::model, &ModelConfig::grid_h));
    k.push_back(int_key("grid_w", &R::model, &ModelConfig::grid_w));
    k.push_back({"rope_base",
                 [](R& c, std::string_view key, std::string_view v) {
                   c.model.attention.rope_base = parse_number<double>(key, v);
                 },
                 [](const R& c) { return fmt_double(c.model.attention.rope_base); }});
    k.push_back({"rope_scheme",
                 [](R& c, std::string_view, std::string_view v) {
                   c.model.attention.rope_scheme = parse_rope_scheme(v);
                 },
                 [](const R& c) { return std::string(to_string(c.model.attention.rope_scheme)); }});
    k.push_back({"mask_mode",
                 [](R& c, std::string_view, std::string_view v) {
                   c.model.attention.mask_mode = parse_mask_mode(v);
                 },
                 [](const R& c) { return std::string(to_string(c.model.attention.mask_mode)); }});
    k.push_back({"temporal_attn",
                 [](R& c, std::string_view, std::string_view v) {
                   c.model.attention.temporal_attn = parse_direction(v);
                 },
                 [](const R& c) { return std::string(to_string(c.model.attention.temporal_attn)); }});
    k.push_back({"spatial_attn",
                 [](R& c, std::string_view, std::string_view v) {
                   c.model.attention.spatial_attn = parse_direction(v);
                 },
                 [](const R& c) { return std::string(to_string(c.model.attention.spatial_attn)); }});
    k.push_back({"disentangle",
                 [](R& c, std::string_view key, std::string_view v) {
                   c.model.attention.disentangle = parse_bool(key, v);
                 },
                 [](const R& c) { return std::string(c.model.attention.disentangle ? "true" : "false"); }});
    k.push_back(int_key("scene_classes", &R::gen, &GenConfig::scene_classes));
    k.push_back(int_key("action_classes", &R::gen, &GenConfig::action_classes));
    k.push_back(int_key("cooccur_width", &R::gen, &GenConfig::cooccur_width));
    k.push_back(int_key("train_samples", &R::gen, &GenConfig::train_samples));
    k.push_back(int_key("test_samples", &R::gen, &GenConfig::test_samples));
    k.push_back(double_key("scene_strength", &R::gen, &GenConfig::scene_strength));
    k.push_back(double_key("action_strength", &R::gen, &GenConfig::action_strength));
    k.push_back(double_key("noise", &R::gen, &GenConfig::noise));
    k.push_back(int_key("epochs", &R::train, &TrainConfig::epochs));
    k.push_back(int_key("batch_size", &R::train, &TrainConfig::batch_size));
    k.push_back(double_key("lr", &R::train, &TrainConfig::lr));
    return k;
  }();
  return table;
}

}  // namespace

RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  std::set<std::string, std::less<>> seen;
  int line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ValidationError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string_view key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    const Key* match = nullptr;
    for (const Key& k : keys()) {
      if (key == k.name) match = &k;
    }
    if (!match) {
      throw ValidationError("config line " + std::to_string(line_no) + ": unknown key '" +
                            std::string(key) + "'");
    }
    if (!seen.insert(std::string(key)).second) {
      throw ValidationError("config line " + std::to_string(line_no) + ": repeated key '" +
                            std::string(key) + "'");
    }
    match->set(cfg, key, value);
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const RunConfig& cfg) {
  std::string out;
  for (const Key& k : keys()) out += std::string(k.name) + " = " + k.get(cfg) + "\n";
  return out;
}

std::uint64_t config_hash(const RunConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : format_config(cfg)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string_view revision() { return MASH_REVISION; }

}  // namespace mash
