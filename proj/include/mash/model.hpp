#pragma once

#include "mash/attention.hpp"
#include "mash/numerics.hpp"
#include "mash/tape.hpp"
#include "mash/tokens.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mash {

struct ModelConfig {
  int blocks = 2;         // K
  int d_model = 32;       // D
  int vocab = 16;         // V
  int mlp_hidden = 0;     // 0 selects the default width
  int encoder_dim = 16;   // width of incoming frame embeddings
  int frames = 8;         // T
  int grid_h = 6;
  int grid_w = 6;
  std::uint64_t seed = 7;
  AttentionConfig attention;

  int heads() const { return attention.heads; }
  int head_dim() const { return attention.head_dim; }
  /// round(4 * D / 1.5) to the nearest multiple of the head count.
  int hidden_width() const;
  int temporal_tokens() const { return 3 * frames - 1; }
  int spatial_tokens() const { return grid_h * grid_w; }
  void validate() const;
};

struct BlockParams {
  Mat attn_norm;  // 1 x D offsets
  Mat wq, wk, wv, wo;
  Mat mlp_norm;
  Mat w_gate, w_up, w_down;
};

struct ModelParams {
  Mat proj_w1, proj_b1, proj_w2, proj_b2;
  Mat text_embedding;  // V x D
  std::vector<BlockParams> blocks;
  Mat final_norm;
  Mat output_head;  // D x V

  /// Visits every tensor with a stable dotted name, in a fixed order.
  template <typename F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <typename F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

  std::size_t parameter_count() const;
  std::vector<double> flatten() const;
  void unflatten(std::span<const double> flat);

private:
  template <typename Self, typename F>
  static void visit_impl(Self& self, F& f) {
    f("proj.w1", self.proj_w1);
    f("proj.b1", self.proj_b1);
    f("proj.w2", self.proj_w2);
    f("proj.b2", self.proj_b2);
    f("text_embedding", self.text_embedding);
    for (std::size_t i = 0; i < self.blocks.size(); ++i) {
      auto& b = self.blocks[i];
      const std::string p = "blocks." + std::to_string(i) + ".";
      f(p + "attn_norm", b.attn_norm);
      f(p + "wq", b.wq);
      f(p + "wk", b.wk);
      f(p + "wv", b.wv);
      f(p + "wo", b.wo);
      f(p + "mlp_norm", b.mlp_norm);
      f(p + "w_gate", b.w_gate);
      f(p + "w_up", b.w_up);
      f(p + "w_down", b.w_down);
    }
    f("final_norm", self.final_norm);
    f("output_head", self.output_head);
  }
};

/// Gaussian(0, 0.02) weights, zero biases and norm offsets.
ModelParams init_params(const ModelConfig& cfg);

/// Attention mass per source row type, averaged over rows of that type.
/// mass(src, dst) with src/dst indexed by TokenType.
struct HeadProfile {
  Eigen::Matrix3d mass = Eigen::Matrix3d::Zero();
};

struct ForwardResult {
  Var logits;                            // L x V, one row per text position
  std::vector<Var> hidden;               // S x D after each block
  std::vector<std::vector<Mat>> probs;   // [block][head] S x S
  SequenceLayout layout;
  std::vector<std::int64_t> segment_starts;  // first logits row of each text segment
};

/// Params registered on a tape, in ModelParams::visit order.
struct ParamVars {
  std::vector<Var> vars;
};

ParamVars register_params(Tape& tape, const ModelParams& params, bool trainable = true);

ForwardResult forward(Tape& tape, const ParamVars& params, const ModelConfig& cfg,
                      const FrameEmbeddings& fe, std::span<const int> text);

/// Several text segments over one visual prefix. Each segment reads every
/// visual token it would read on its own plus its own earlier tokens, and its
/// positions restart after the visual block, so each segment's logits equal a
/// separate forward of that segment alone.
ForwardResult forward_packed(Tape& tape, const ParamVars& params, const ModelConfig& cfg,
                             const FrameEmbeddings& fe, std::span<const std::vector<int>> segments);

/// Convenience forward without gradients.
ForwardResult forward(Tape& tape, const ModelParams& params, const ModelConfig& cfg,
                      const FrameEmbeddings& fe, std::span<const int> text);

/// One training sequence: prompt tokens followed by supervised answer tokens.
struct TrainExample {
  const FrameEmbeddings* frames = nullptr;
  std::vector<int> prompt;
  std::vector<int> answer;
};

/// Teacher-forced loss on the answer tokens; returns the 1x1 loss Var.
Var sequence_loss(Tape& tape, const ParamVars& params, const ModelConfig& cfg,
                  const TrainExample& ex);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Mat> m, v;
  std::int64_t step = 0;
};

AdamState init_adam(const ModelParams& params);

/// Mean loss and gradient (visit order) over a batch. Consecutive examples
/// sharing a FrameEmbeddings pointer run as one packed sequence.
struct BatchGradient {
  double loss = 0.0;
  std::vector<Mat> grads;
};

BatchGradient batch_gradient(const ModelParams& params, const ModelConfig& cfg,
                             std::span<const TrainExample> batch);

void adam_update(ModelParams& params, AdamState& state, const std::vector<Mat>& grads,
                 const AdamConfig& opt);

/// Computes the batch loss, applies one Adam step and returns the pre-step loss.
/// Throws InvariantError with a parameter summary if the loss is not finite.
double train_step(std::span<const TrainExample> batch, ModelParams& params, AdamState& state,
                  const ModelConfig& cfg, const AdamConfig& opt);

/// Max relative error between tape gradients of sequence_loss and central
/// differences over every parameter.
double gradient_check(const ModelParams& params, const ModelConfig& cfg, const TrainExample& ex,
                      double eps = 1e-5);

/// Appends argmax tokens until `end_token` or `max_new` tokens were produced.
/// Returns only the generated tokens.
std::vector<int> greedy_decode(const FrameEmbeddings& fe, std::span<const int> prompt,
                               const ModelParams& params, const ModelConfig& cfg, int max_new,
                               std::optional<int> end_token = std::nullopt);

/// Greedy next token after each prompt, computed in one packed pass.
std::vector<int> next_tokens(const FrameEmbeddings& fe, std::span<const std::vector<int>> prompts,
                             const ModelParams& params, const ModelConfig& cfg);

/// Per-block, per-head attention mass averaged over the given text rows and
/// over all rows of each visual type.
std::vector<std::vector<HeadProfile>> attention_profile(const ForwardResult& fr,
                                                        std::span<const int> text_rows);

}  // namespace mash
