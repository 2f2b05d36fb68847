#pragma once

#include "mash/dataset.hpp"
#include "mash/model.hpp"

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mash {

/// Dual-question score for one (regime, category): a sample counts only if
/// both of its questions in that category are answered correctly.
struct ReportRow {
  Regime regime = Regime::usual;
  Category category = Category::action;
  std::int64_t correct = 0;
  std::int64_t n = 0;
  double accuracy() const { return n > 0 ? static_cast<double>(correct) / static_cast<double>(n) : 0.0; }
  bool operator==(const ReportRow&) const = default;
};

/// Single-question accuracy for one (regime, category, role).
struct QuestionStat {
  Regime regime = Regime::usual;
  Category category = Category::action;
  Role role = Role::gold;
  std::int64_t correct = 0;
  std::int64_t n = 0;
  double accuracy() const { return n > 0 ? static_cast<double>(correct) / static_cast<double>(n) : 0.0; }
  bool operator==(const QuestionStat&) const = default;
};

struct EvalReport {
  std::string variant;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string revision;
  std::int64_t invalid = 0;  // answers that were neither yes nor no
  std::vector<ReportRow> rows;
  std::vector<QuestionStat> questions;

  /// Pooled dual accuracy over every row whose regime is listed.
  double dual_accuracy(std::span<const Regime> regimes) const;
  bool operator==(const EvalReport&) const = default;
};

/// First answer token for each question of a sample, in sample.qa order.
using Answerer = std::function<std::vector<int>(const SyntheticSample&)>;

Answerer model_answerer(const ModelParams& params, const ModelConfig& cfg);

EvalReport evaluate_dual(std::span<const SyntheticSample> samples, const Answerer& answer);

/// Comment lines (`# key,value...`) carry metadata and per-question stats,
/// then the `regime,category,dual_acc,n` table follows.
std::string write_report_csv(const EvalReport& report);
EvalReport parse_report_csv(std::string_view text);

struct ProfileRow {
  int layer = 0;
  int head = 0;
  TokenType block = TokenType::temporal;
  double mass = 0.0;
  bool operator==(const ProfileRow&) const = default;
};

/// Attention mass from the row that emits the answer onto each block type,
/// per layer and head: layers x heads x 3 rows.
std::vector<ProfileRow> extract_attention_profile(const ModelParams& params, const ModelConfig& cfg,
                                                  const SyntheticSample& sample,
                                                  const Question& question);

/// Mean of extract_attention_profile over every question of one category.
std::vector<ProfileRow> average_profile(const ModelParams& params, const ModelConfig& cfg,
                                        std::span<const SyntheticSample> samples, Category category);

std::string write_profile_csv(std::span<const ProfileRow> rows);
std::vector<ProfileRow> parse_profile_csv(std::string_view text);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace mash
