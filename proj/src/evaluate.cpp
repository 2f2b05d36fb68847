#include "mash/evaluate.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

namespace mash {

double EvalReport::dual_accuracy(std::span<const Regime> regimes) const {
  std::int64_t correct = 0, n = 0;
  for (const ReportRow& r : rows) {
    for (Regime g : regimes) {
      if (r.regime == g) {
        correct += r.correct;
        n += r.n;
      }
    }
  }
  return n > 0 ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;
}

Answerer model_answerer(const ModelParams& params, const ModelConfig& cfg) {
  return [&params, cfg](const SyntheticSample& s) {
    std::vector<std::vector<int>> prompts;
    for (const Question& q : s.qa) prompts.push_back(q.prompt);
    return next_tokens(s.fe, prompts, params, cfg);
  };
}

EvalReport evaluate_dual(std::span<const SyntheticSample> samples, const Answerer& answer) {
  using RowKey = std::tuple<Regime, Category>;
  using QKey = std::tuple<Regime, Category, Role>;
  std::map<RowKey, ReportRow> rows;
  std::map<QKey, QuestionStat> questions;
  EvalReport report;
  for (const SyntheticSample& s : samples) {
    const std::vector<int> got = answer(s);
    if (got.size() != s.qa.size()) throw InvariantError("evaluate_dual: answer count mismatch");
    std::map<Category, bool> all_right;
    for (std::size_t i = 0; i < s.qa.size(); ++i) {
      const Question& q = s.qa[i];
      if (got[i] != kYes && got[i] != kNo) ++report.invalid;
      const bool right = got[i] == q.gold_token();
      auto [it, fresh] = all_right.try_emplace(q.category, right);
      if (!fresh) it->second = it->second && right;
      QuestionStat& qs = questions[{s.regime, q.category, q.role}];
      qs.regime = s.regime;
      qs.category = q.category;
      qs.role = q.role;
      qs.correct += right ? 1 : 0;
      ++qs.n;
    }
    for (const auto& [category, ok] : all_right) {
      ReportRow& r = rows[{s.regime, category}];
      r.regime = s.regime;
      r.category = category;
      r.correct += ok ? 1 : 0;
      ++r.n;
    }
  }
  for (const auto& [k, r] : rows) report.rows.push_back(r);
  for (const auto& [k, q] : questions) report.questions.push_back(q);
  return report;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  while (true) {
    const auto comma = line.find(',');
    out.push_back(line.substr(0, comma));
    if (comma == std::string_view::npos) break;
    line = line.substr(comma + 1);
  }
  return out;
}

template <typename T>
T number(std::string_view v) {
  T out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ValidationError("csv: bad number '" + std::string(v) + "'");
  }
  return out;
}

// Recovers an integer count from accuracy * n, insisting on an exact match.
std::int64_t count_from(double accuracy, std::int64_t n) {
  if (n < 0 || !(accuracy >= 0.0 && accuracy <= 1.0)) throw ValidationError("csv: rate outside [0, 1]");
  const auto c = static_cast<std::int64_t>(std::llround(accuracy * static_cast<double>(n)));
  const double back = n > 0 ? static_cast<double>(c) / static_cast<double>(n) : 0.0;
  if (back != accuracy) throw ValidationError("csv: rate " + fmt(accuracy) + " is not k/" + std::to_string(n));
  return c;
}

template <typename F>
void for_each_line(std::string_view text, F&& f) {
  int line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    f(line, line_no);
  }
}

TokenType parse_block(std::string_view s) {
  if (s == "temporal") return TokenType::temporal;
  if (s == "spatial") return TokenType::spatial;
  if (s == "text") return TokenType::text;
  throw ValidationError("csv: unknown block '" + std::string(s) + "'");
}

std::string_view block_name(TokenType t) {
  switch (t) {
    case TokenType::temporal:
      return "temporal";
    case TokenType::spatial:
      return "spatial";
    case TokenType::text:
      return "text";
  }
  return "text";
}

}  // namespace

std::string write_report_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "# variant," << r.variant << '\n';
  out << "# config_hash," << r.config_hash << '\n';
  out << "# seed," << r.seed << '\n';
  out << "# revision," << r.revision << '\n';
  out << "# invalid," << r.invalid << '\n';
  for (const QuestionStat& q : r.questions) {
    out << "# question," << to_string(q.regime) << ',' << to_string(q.category) << ','
        << to_string(q.role) << ',' << fmt(q.accuracy()) << ',' << q.n << '\n';
  }
  out << "regime,category,dual_acc,n\n";
  for (const ReportRow& row : r.rows) {
    out << to_string(row.regime) << ',' << to_string(row.category) << ',' << fmt(row.accuracy())
        << ',' << row.n << '\n';
  }
  return out.str();
}

EvalReport parse_report_csv(std::string_view text) {
  EvalReport r;
  bool header = false;
  for_each_line(text, [&](std::string_view line, int line_no) {
    const std::string where = "report line " + std::to_string(line_no) + ": ";
    if (line.rfind("# ", 0) == 0) {
      const auto f = split(line.substr(2));
      if (f[0] == "variant" && f.size() == 2) {
        r.variant = std::string(f[1]);
      } else if (f[0] == "config_hash" && f.size() == 2) {
        r.config_hash = std::string(f[1]);
      } else if (f[0] == "seed" && f.size() == 2) {
        r.seed = number<std::uint64_t>(f[1]);
      } else if (f[0] == "revision" && f.size() == 2) {
        r.revision = std::string(f[1]);
      } else if (f[0] == "invalid" && f.size() == 2) {
        r.invalid = number<std::int64_t>(f[1]);
      } else if (f[0] == "question" && f.size() == 6) {
        QuestionStat q{parse_regime(f[1]), parse_category(f[2]), parse_role(f[3]), 0,
                       number<std::int64_t>(f[5])};
        q.correct = count_from(number<double>(f[4]), q.n);
        r.questions.push_back(q);
      } else {
        throw ValidationError(where + "unrecognized metadata");
      }
      return;
    }
    if (!header) {
      if (line != "regime,category,dual_acc,n") throw ValidationError(where + "bad header");
      header = true;
      return;
    }
    const auto f = split(line);
    if (f.size() != 4) throw ValidationError(where + "expected 4 fields");
    ReportRow row{parse_regime(f[0]), parse_category(f[1]), 0, number<std::int64_t>(f[3])};
    row.correct = count_from(number<double>(f[2]), row.n);
    r.rows.push_back(row);
  });
  if (!header) throw ValidationError("report: missing header");
  return r;
}

namespace {

// Adds the attention mass of `row` onto each block type, per layer and head.
void accumulate_profile(const ForwardResult& fr, Eigen::Index row, std::vector<ProfileRow>& acc) {
  const auto& tags = fr.layout.tags;
  std::size_t at = 0;
  for (std::size_t layer = 0; layer < fr.probs.size(); ++layer) {
    for (std::size_t head = 0; head < fr.probs[layer].size(); ++head) {
      const Mat& p = fr.probs[layer][head];
      double mass[3] = {0, 0, 0};
      for (Eigen::Index j = 0; j < p.cols(); ++j) {
        mass[static_cast<int>(tags[static_cast<std::size_t>(j)])] += p(row, j);
      }
      for (int b = 0; b < 3; ++b) acc[at++].mass += mass[b];
    }
  }
}

std::vector<ProfileRow> empty_profile(const ModelConfig& cfg) {
  std::vector<ProfileRow> rows;
  for (int layer = 0; layer < cfg.blocks; ++layer) {
    for (int head = 0; head < cfg.heads(); ++head) {
      for (TokenType b : {TokenType::temporal, TokenType::spatial, TokenType::text}) {
        rows.push_back({layer, head, b, 0.0});
      }
    }
  }
  return rows;
}

}  // namespace

std::vector<ProfileRow> extract_attention_profile(const ModelParams& params, const ModelConfig& cfg,
                                                  const SyntheticSample& sample,
                                                  const Question& question) {
  Tape tape;
  ForwardResult fr = forward(tape, params, cfg, sample.fe, question.prompt);
  std::vector<ProfileRow> rows = empty_profile(cfg);
  accumulate_profile(fr, fr.layout.visual() + static_cast<Eigen::Index>(question.prompt.size()) - 1, rows);
  return rows;
}

std::vector<ProfileRow> average_profile(const ModelParams& params, const ModelConfig& cfg,
                                        std::span<const SyntheticSample> samples, Category category) {
  std::vector<ProfileRow> rows = empty_profile(cfg);
  std::int64_t count = 0;
  for (const SyntheticSample& s : samples) {
    std::vector<std::vector<int>> prompts;
    for (const Question& q : s.qa) {
      if (q.category == category) prompts.push_back(q.prompt);
    }
    if (prompts.empty()) continue;
    Tape tape;
    ForwardResult fr = forward_packed(tape, register_params(tape, params, false), cfg, s.fe, prompts);
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      const Eigen::Index row = fr.layout.visual() + fr.segment_starts[i] +
                               static_cast<Eigen::Index>(prompts[i].size()) - 1;
      accumulate_profile(fr, row, rows);
      ++count;
    }
  }
  if (count > 0) {
    for (ProfileRow& r : rows) r.mass /= static_cast<double>(count);
  }
  return rows;
}

std::string write_profile_csv(std::span<const ProfileRow> rows) {
  std::ostringstream out;
  out << "layer,head,block,mass\n";
  for (const ProfileRow& r : rows) {
    out << r.layer << ',' << r.head << ',' << block_name(r.block) << ',' << fmt(r.mass) << '\n';
  }
  return out.str();
}

std::vector<ProfileRow> parse_profile_csv(std::string_view text) {
  std::vector<ProfileRow> rows;
  bool header = false;
  for_each_line(text, [&](std::string_view line, int line_no) {
    if (!header) {
      if (line != "layer,head,block,mass") {
        throw ValidationError("profile line " + std::to_string(line_no) + ": bad header");
      }
      header = true;
      return;
    }
    const auto f = split(line);
    if (f.size() != 4) throw ValidationError("profile line " + std::to_string(line_no) + ": expected 4 fields");
    rows.push_back({number<int>(f[0]), number<int>(f[1]), parse_block(f[2]), number<double>(f[3])});
  });
  if (!header) throw ValidationError("profile: missing header");
  return rows;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path);
  out << text;
  if (!out) throw ValidationError("write failed for " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace mash
