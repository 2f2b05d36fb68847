#include "mash/model.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace mash {

int ModelConfig::hidden_width() const {
  if (mlp_hidden > 0) return mlp_hidden;
  const double raw = 4.0 * d_model / 1.5;
  const int h = heads();
  return std::max(h, static_cast<int>(std::lround(raw / h)) * h);
}

void ModelConfig::validate() const {
  if (blocks < 1) throw ValidationError("model: need at least one block");
  if (vocab < 4) throw ValidationError("model: vocabulary must hold at least 4 symbols");
  if (encoder_dim < 1) throw ValidationError("model: encoder_dim must be positive");
  if (frames < kSpatialSegments || frames % kSpatialSegments != 0) {
    throw ValidationError("model: frames = " + std::to_string(frames) + " must be a positive multiple of " +
                          std::to_string(kSpatialSegments));
  }
  if (grid_h < 2 || grid_w < 2 || grid_h % 2 != 0 || grid_w % 2 != 0) {
    throw ValidationError("model: patch grid must have even sides >= 2");
  }
  attention.validate();
  if (attention.width() != d_model) {
    throw ValidationError("model: heads * head_dim = " + std::to_string(attention.width()) +
                          " does not equal d_model = " + std::to_string(d_model));
  }
  if (attention.rope_scheme != RopeScheme::distinct && temporal_tokens() > spatial_tokens()) {
    throw ValidationError("model: M = 3T-1 = " + std::to_string(temporal_tokens()) +
                          " exceeds N = h*w = " + std::to_string(spatial_tokens()));
  }
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  visit([&](const std::string&, const Mat& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

std::vector<double> ModelParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  visit([&](const std::string&, const Mat& m) { flat.insert(flat.end(), m.data(), m.data() + m.size()); });
  return flat;
}

void ModelParams::unflatten(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw ShapeError("unflatten: parameter count mismatch");
  std::size_t at = 0;
  visit([&](const std::string&, Mat& m) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(at), m.size(), m.data());
    at += static_cast<std::size_t>(m.size());
  });
}

ModelParams init_params(const ModelConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 0.02);
  auto gauss = [&](Eigen::Index r, Eigen::Index c) {
    Mat m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    return m;
  };
  const int d = cfg.d_model, hidden = cfg.hidden_width();
  ModelParams p;
  p.proj_w1 = gauss(cfg.encoder_dim, d);
  p.proj_b1 = Mat::Zero(1, d);
  p.proj_w2 = gauss(d, d);
  p.proj_b2 = Mat::Zero(1, d);
  p.text_embedding = gauss(cfg.vocab, d);
  for (int k = 0; k < cfg.blocks; ++k) {
    BlockParams b;
    b.attn_norm = Mat::Zero(1, d);
    b.wq = gauss(d, d);
    b.wk = gauss(d, d);
    b.wv = gauss(d, d);
    b.wo = gauss(d, d);
    b.mlp_norm = Mat::Zero(1, d);
    b.w_gate = gauss(d, hidden);
    b.w_up = gauss(d, hidden);
    b.w_down = gauss(hidden, d);
    p.blocks.push_back(std::move(b));
  }
  p.final_norm = Mat::Zero(1, d);
  p.output_head = gauss(d, cfg.vocab);
  return p;
}

ParamVars register_params(Tape& tape, const ModelParams& params, bool trainable) {
  ParamVars pv;
  params.visit([&](const std::string&, const Mat& m) {
    pv.vars.push_back(trainable ? tape.parameter(m) : tape.constant(m));
  });
  return pv;
}

namespace {

constexpr std::size_t kHeadTensors = 5;   // proj (4) + text embedding
constexpr std::size_t kBlockTensors = 9;

struct BlockVars {
  Var attn_norm, wq, wk, wv, wo, mlp_norm, w_gate, w_up, w_down;
};

BlockVars block_vars(const ParamVars& pv, int k) {
  const auto& v = pv.vars;
  const std::size_t b = kHeadTensors + kBlockTensors * static_cast<std::size_t>(k);
  return {v[b], v[b + 1], v[b + 2], v[b + 3], v[b + 4], v[b + 5], v[b + 6], v[b + 7], v[b + 8]};
}

Var project(Var x, const ParamVars& pv) {
  const auto& v = pv.vars;
  Var h = silu(add_row(matmul(x, v[0]), v[1]));
  return add_row(matmul(h, v[2]), v[3]);
}

}  // namespace

ForwardResult forward_packed(Tape& tape, const ParamVars& pv, const ModelConfig& cfg,
                             const FrameEmbeddings& fe, std::span<const std::vector<int>> segments) {
  cfg.validate();
  if (segments.empty()) throw ValidationError("forward: need at least one text segment");
  for (const auto& seg : segments) {
    if (seg.empty()) throw ValidationError("forward: text must contain at least one token");
  }
  if (fe.frames != cfg.frames || fe.grid_h != cfg.grid_h || fe.grid_w != cfg.grid_w ||
      fe.width() != cfg.encoder_dim) {
    throw ShapeError("forward: frame embeddings do not match the model configuration");
  }
  const std::size_t expected = kHeadTensors + kBlockTensors * static_cast<std::size_t>(cfg.blocks) + 2;
  if (pv.vars.size() != expected) throw ShapeError("forward: parameter set does not match config");

  const Mat temporal_raw = build_temporal_tokens(fe);
  const Mat spatial_raw = build_spatial_tokens(fe);

  ForwardResult out;
  std::vector<int> text;
  for (const auto& seg : segments) {
    out.segment_starts.push_back(static_cast<std::int64_t>(text.size()));
    text.insert(text.end(), seg.begin(), seg.end());
  }
  out.layout = make_layout(temporal_raw.rows(), spatial_raw.rows(),
                           static_cast<std::int64_t>(text.size()),
                           cfg.attention.rope_scheme != RopeScheme::distinct);
  DstMask mask = full_dst_mask(out.layout.tags, cfg.attention);
  if (segments.size() > 1) {
    const std::int64_t visual = out.layout.visual();
    std::vector<std::size_t> owner(text.size());
    for (std::size_t s = 0; s < segments.size(); ++s) {
      const auto start = static_cast<std::size_t>(out.segment_starts[s]);
      for (std::size_t i = 0; i < segments[s].size(); ++i) {
        owner[start + i] = s;
        const auto row = static_cast<std::size_t>(visual) + start + i;
        const auto local = static_cast<std::int64_t>(i) + 1;
        out.layout.ids.distinct[row] = visual + local;
        if (!out.layout.ids.balanced.empty()) out.layout.ids.balanced[row] = out.layout.spatial + local;
      }
    }
    for (std::size_t i = 0; i < text.size(); ++i) {
      for (std::size_t j = 0; j < text.size(); ++j) {
        if (owner[i] != owner[j]) {
          mask.entries(visual + static_cast<Eigen::Index>(i), visual + static_cast<Eigen::Index>(j)) =
              neg_inf<double>();
        }
      }
    }
  }

  std::vector<Var> parts{project(tape.constant(temporal_raw), pv),
                         project(tape.constant(spatial_raw), pv),
                         gather_rows(pv.vars[4], text)};
  Var x = concat_rows(parts);

  for (int k = 0; k < cfg.blocks; ++k) {
    const BlockVars b = block_vars(pv, k);
    Var h = rms_norm(x, b.attn_norm);
    AttentionResult att = attend(matmul(h, b.wq), matmul(h, b.wk), matmul(h, b.wv), mask,
                                 out.layout.ids, cfg.attention);
    x = add(x, matmul(att.output, b.wo));
    Var m = rms_norm(x, b.mlp_norm);
    Var gated = hadamard(silu(matmul(m, b.w_gate)), matmul(m, b.w_up));
    x = add(x, matmul(gated, b.w_down));
    out.hidden.push_back(x);
    out.probs.push_back(std::move(att.probs));
  }

  const Var& final_norm = pv.vars[expected - 2];
  const Var& head = pv.vars[expected - 1];
  Var text_rows = slice_rows(x, out.layout.visual(), out.layout.text);
  out.logits = matmul(rms_norm(text_rows, final_norm), head);
  return out;
}

ForwardResult forward(Tape& tape, const ParamVars& pv, const ModelConfig& cfg,
                      const FrameEmbeddings& fe, std::span<const int> text) {
  const std::vector<int> one[] = {std::vector<int>(text.begin(), text.end())};
  return forward_packed(tape, pv, cfg, fe, one);
}

ForwardResult forward(Tape& tape, const ModelParams& params, const ModelConfig& cfg,
                      const FrameEmbeddings& fe, std::span<const int> text) {
  return forward(tape, register_params(tape, params, false), cfg, fe, text);
}

namespace {

// Sum of the per-example mean answer losses for examples sharing one frame set.
Var group_loss(Tape& tape, const ParamVars& pv, const ModelConfig& cfg,
               std::span<const TrainExample> group) {
  std::vector<std::vector<int>> texts;
  for (const TrainExample& ex : group) {
    if (ex.answer.empty()) throw ValidationError("sequence_loss: empty answer");
    if (ex.prompt.empty()) throw ValidationError("sequence_loss: empty prompt");
    if (ex.frames != group.front().frames) throw ValidationError("sequence_loss: mixed frames");
    std::vector<int> text = ex.prompt;
    text.insert(text.end(), ex.answer.begin(), ex.answer.end() - 1);
    texts.push_back(std::move(text));
  }
  ForwardResult fr = forward_packed(tape, pv, cfg, *group.front().frames, texts);
  std::optional<Var> total;
  for (std::size_t e = 0; e < group.size(); ++e) {
    const TrainExample& ex = group[e];
    const auto len = static_cast<std::int64_t>(texts[e].size());
    // Row i predicts text token i + 1; only answer tokens are supervised.
    std::vector<int> targets(texts[e].size(), 0);
    std::vector<bool> supervised(texts[e].size(), false);
    for (std::size_t a = 0; a < ex.answer.size(); ++a) {
      const std::size_t row = ex.prompt.size() - 1 + a;
      targets[row] = ex.answer[a];
      supervised[row] = true;
    }
    Var loss = group.size() == 1 ? cross_entropy(fr.logits, targets, supervised)
                                 : cross_entropy(slice_rows(fr.logits, fr.segment_starts[e], len),
                                                 targets, supervised);
    total = total ? add(*total, loss) : loss;
  }
  return *total;
}

}  // namespace

Var sequence_loss(Tape& tape, const ParamVars& pv, const ModelConfig& cfg,
                  const TrainExample& ex) {
  return group_loss(tape, pv, cfg, std::span<const TrainExample>(&ex, 1));
}

AdamState init_adam(const ModelParams& params) {
  AdamState s;
  params.visit([&](const std::string&, const Mat& m) {
    s.m.push_back(Mat::Zero(m.rows(), m.cols()));
    s.v.push_back(Mat::Zero(m.rows(), m.cols()));
  });
  return s;
}

BatchGradient batch_gradient(const ModelParams& params, const ModelConfig& cfg,
                             std::span<const TrainExample> batch) {
  if (batch.empty()) throw ValidationError("batch_gradient: empty batch");
  BatchGradient out;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (std::size_t first = 0; first < batch.size();) {
    std::size_t last = first + 1;
    while (last < batch.size() && batch[last].frames == batch[first].frames) ++last;
    Tape tape;
    ParamVars pv = register_params(tape, params);
    Var loss = scale(group_loss(tape, pv, cfg, batch.subspan(first, last - first)), inv);
    tape.backward(loss);
    out.loss += loss.value()(0, 0);
    if (out.grads.empty()) {
      for (const Var& v : pv.vars) out.grads.push_back(tape.grad(v));
    } else {
      for (std::size_t i = 0; i < pv.vars.size(); ++i) out.grads[i] += tape.grad(pv.vars[i]);
    }
    first = last;
  }
  return out;
}

void adam_update(ModelParams& params, AdamState& state, const std::vector<Mat>& grads,
                 const AdamConfig& opt) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
  std::size_t i = 0;
  params.visit([&](const std::string&, Mat& p) {
    Mat& m = state.m[i];
    Mat& v = state.v[i];
    const Mat& g = grads[i];
    for (Eigen::Index j = 0; j < p.size(); ++j) {
      m.data()[j] = opt.beta1 * m.data()[j] + (1.0 - opt.beta1) * g.data()[j];
      v.data()[j] = opt.beta2 * v.data()[j] + (1.0 - opt.beta2) * g.data()[j] * g.data()[j];
      const double step = (m.data()[j] / bc1) / (std::sqrt(v.data()[j] / bc2) + opt.eps);
      p.data()[j] -= opt.lr * step;
    }
    ++i;
  });
}

double train_step(std::span<const TrainExample> batch, ModelParams& params, AdamState& state,
                  const ModelConfig& cfg, const AdamConfig& opt) {
  BatchGradient bg = batch_gradient(params, cfg, batch);
  if (!std::isfinite(bg.loss)) {
    std::ostringstream msg;
    msg << "train_step: non-finite loss " << bg.loss << " at step " << state.step << "; norms:";
    params.visit([&](const std::string& name, const Mat& m) { msg << ' ' << name << '=' << m.norm(); });
    throw InvariantError(msg.str());
  }
  adam_update(params, state, bg.grads, opt);
  return bg.loss;
}

double gradient_check(const ModelParams& params, const ModelConfig& cfg, const TrainExample& ex,
                      double eps) {
  const TrainExample one[] = {ex};
  BatchGradient bg = batch_gradient(params, cfg, one);
  std::vector<double> analytic;
  for (const Mat& g : bg.grads) analytic.insert(analytic.end(), g.data(), g.data() + g.size());
  ModelParams probe = params;
  auto loss_at = [&](const std::vector<double>& flat) {
    probe.unflatten(flat);
    Tape tape;
    return sequence_loss(tape, register_params(tape, probe, false), cfg, ex).value()(0, 0);
  };
  return finite_diff_check(loss_at, params.flatten(), analytic, eps);
}

std::vector<int> greedy_decode(const FrameEmbeddings& fe, std::span<const int> prompt,
                               const ModelParams& params, const ModelConfig& cfg, int max_new,
                               std::optional<int> end_token) {
  if (max_new < 1) throw ValidationError("greedy_decode: max_new must be >= 1");
  std::vector<int> text(prompt.begin(), prompt.end());
  std::vector<int> generated;
  for (int step = 0; step < max_new; ++step) {
    Tape tape;
    ForwardResult fr = forward(tape, params, cfg, fe, text);
    const Mat& logits = fr.logits.value();
    const Eigen::Index last = logits.rows() - 1;
    int best = 0;
    for (Eigen::Index j = 1; j < logits.cols(); ++j) {
      if (logits(last, j) > logits(last, best)) best = static_cast<int>(j);
    }
    generated.push_back(best);
    text.push_back(best);
    if (end_token && best == *end_token) break;
  }
  return generated;
}

std::vector<int> next_tokens(const FrameEmbeddings& fe, std::span<const std::vector<int>> prompts,
                             const ModelParams& params, const ModelConfig& cfg) {
  Tape tape;
  ForwardResult fr = forward_packed(tape, register_params(tape, params, false), cfg, fe, prompts);
  const Mat& logits = fr.logits.value();
  std::vector<int> out;
  for (std::size_t s = 0; s < prompts.size(); ++s) {
    const Eigen::Index row = fr.segment_starts[s] + static_cast<Eigen::Index>(prompts[s].size()) - 1;
    int best = 0;
    for (Eigen::Index j = 1; j < logits.cols(); ++j) {
      if (logits(row, j) > logits(row, best)) best = static_cast<int>(j);
    }
    out.push_back(best);
  }
  return out;
}

std::vector<std::vector<HeadProfile>> attention_profile(const ForwardResult& fr,
                                                        std::span<const int> text_rows) {
  const auto& tags = fr.layout.tags;
  const auto visual = static_cast<int>(fr.layout.visual());
  std::vector<std::vector<HeadProfile>> out;
  for (const auto& block : fr.probs) {
    std::vector<HeadProfile> heads;
    for (const Mat& p : block) {
      HeadProfile hp;
      Eigen::Vector3d counts = Eigen::Vector3d::Zero();
      auto add_row = [&](Eigen::Index i) {
        const int src = static_cast<int>(tags[static_cast<std::size_t>(i)]);
        counts(src) += 1.0;
        for (Eigen::Index j = 0; j < p.cols(); ++j) {
          hp.mass(src, static_cast<int>(tags[static_cast<std::size_t>(j)])) += p(i, j);
        }
      };
      for (Eigen::Index i = 0; i < visual; ++i) add_row(i);
      for (int r : text_rows) {
        if (r < 0 || r >= fr.layout.text) throw ValidationError("attention_profile: bad text row");
        add_row(visual + r);
      }
      for (int src = 0; src < 3; ++src) {
        if (counts(src) > 0) hp.mass.row(src) /= counts(src);
      }
      heads.push_back(hp);
    }
    out.push_back(std::move(heads));
  }
  return out;
}

}  // namespace mash
