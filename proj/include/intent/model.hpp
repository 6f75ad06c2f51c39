#pragma once

#include "intent/core.hpp"
#include "intent/gridworld.hpp"
#include "intent/latent.hpp"

#include <random>

namespace intent {

/// Architecture sizes. Defaults are the desk-scale configuration.
struct ModelConfig {
  ObservationFormat obs_format = ObservationFormat::Symbolic;
  int64_t grid_size = 7;
  int64_t width = 64;
  int64_t latent_dim = 16;
  int64_t vision_blocks = 1;
  int64_t vision_heads = 4;
  int64_t encoder_blocks = 2;
  int64_t encoder_heads = 4;
  int64_t decoder_blocks = 2;
  int64_t decoder_heads = 4;
  int64_t xattn_heads = 1;
  bool xattn_qk_norm = true;
  /// Adds to every patch token an embedding of its offset from the agent's
  /// cell: read from the agent channel of symbolic frames, located by a
  /// learned softmax over patches for rendered frames.
  bool anchor_embedding = true;
  /// Initial bias of the log_std head.
  double log_std_init = -3.0;
  int64_t mlp_ratio = 2;
  int64_t chunk_len = 32;
  int64_t max_text_len = 8;
  int64_t vocab_size = 10;
  int64_t num_actions = kNumActions;
  int64_t prior_window = 1;
  bool chunk_memory = false;
  double log_std_min = kLogStdMin;
  double log_std_max = kLogStdMax;

  ObservationShape obs_shape() const { return observation_shape(obs_format, static_cast<int>(grid_size)); }
  int64_t patch_count() const;
  void validate() const;
};

/// Multi-head scaled dot-product attention with separate query and key/value inputs.
class MultiHeadAttentionImpl : public torch::nn::Module {
 public:
  /// `qk_norm` scores by cosine similarity times sqrt(head_dim).
  MultiHeadAttentionImpl(int64_t query_dim, int64_t kv_dim, int64_t width, int64_t heads, bool qk_norm = false);

  /// q_in [B, Lq, Dq], kv_in [B, Lk, Dkv]; `allowed` broadcasts to [B, heads, Lq, Lk].
  torch::Tensor forward(const torch::Tensor& q_in, const torch::Tensor& kv_in,
                        const torch::Tensor& allowed = {});

  /// Keys and values in head layout [B, heads, Lk, width/heads].
  std::pair<torch::Tensor, torch::Tensor> keys_values(const torch::Tensor& kv_in);
  torch::Tensor attend(const torch::Tensor& q_in, const torch::Tensor& keys, const torch::Tensor& values,
                       const torch::Tensor& allowed = {});

  torch::nn::Linear query{nullptr}, key{nullptr}, value{nullptr}, out{nullptr};

 private:
  int64_t heads_;
  int64_t head_dim_;
  bool qk_norm_;
};
TORCH_MODULE(MultiHeadAttention);

/// Per-layer keys/values kept for incremental decoding.
struct LayerCache {
  torch::Tensor keys;     // [B, H, L, dh]
  torch::Tensor values;   // [B, H, L, dh]
  torch::Tensor mem_keys;  // previous chunk, detached; undefined when empty
  torch::Tensor mem_values;
};

/// Pre-norm transformer block.
class TransformerBlockImpl : public torch::nn::Module {
 public:
  TransformerBlockImpl(int64_t width, int64_t heads, int64_t mlp_ratio);

  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& allowed = {});
  /// Self-attention over cached memory + current chunk keys. Appends the new
  /// keys/values to `cache` when `record` is set.
  torch::Tensor forward_cached(const torch::Tensor& x, LayerCache& cache, const torch::Tensor& allowed,
                               bool record);

  torch::nn::LayerNorm ln1{nullptr}, ln2{nullptr};
  MultiHeadAttention attn{nullptr};
  torch::nn::Linear fc1{nullptr}, fc2{nullptr};

 private:
  torch::Tensor mlp(const torch::Tensor& x);
};
TORCH_MODULE(TransformerBlock);

/// Self-attention over a square token grid with learned relative-position
/// embeddings added to keys and values (one table per block, shared by heads).
class GridAttentionImpl : public torch::nn::Module {
 public:
  GridAttentionImpl(int64_t side, int64_t width, int64_t heads);
  /// x [F, side*side, width] -> [F, side*side, width].
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Linear qkv{nullptr}, out{nullptr};
  torch::Tensor rel_key, rel_value;  // [(2*side-1)^2, width/heads]

 private:
  int64_t heads_;
  int64_t head_dim_;
  torch::Tensor offset_index_;  // [P, P] into the relative tables
};
TORCH_MODULE(GridAttention);

class GridBlockImpl : public torch::nn::Module {
 public:
  GridBlockImpl(int64_t side, int64_t width, int64_t heads, int64_t mlp_ratio);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::LayerNorm ln1{nullptr}, ln2{nullptr};
  GridAttention attn{nullptr};
  torch::nn::Linear fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(GridBlock);

/// Shared perception backbone: per-frame patch tokens contextualised by a
/// small non-causal grid transformer.
class VisionBackboneImpl : public torch::nn::Module {
 public:
  explicit VisionBackboneImpl(const ModelConfig& cfg);
  /// frames [F, C, H, W] -> tokens [F, P, width].
  torch::Tensor forward(const torch::Tensor& frames);

 private:
  ModelConfig cfg_;
  torch::nn::Linear cell_embed{nullptr};
  torch::nn::Conv2d patch_embed{nullptr};
  torch::Tensor patch_pos;
  torch::nn::Linear anchor_score{nullptr};
  torch::Tensor anchor_rel;      // [(2*side-1)^2, width]
  torch::Tensor anchor_index_;   // [P, P] into anchor_rel
  torch::nn::ModuleList blocks{nullptr};
  torch::nn::LayerNorm ln{nullptr};
};
TORCH_MODULE(VisionBackbone);

/// Unified non-causal instruction encoder with modality markers and
/// per-modality input adapters. Mean-pools its outputs into a diagonal Gaussian.
class InstructionEncoderImpl : public torch::nn::Module {
 public:
  explicit InstructionEncoderImpl(const ModelConfig& cfg);

  /// pooled [B, L, width] with valid prefix lengths [B].
  LatentGaussian encode_video(const torch::Tensor& pooled, const torch::Tensor& lengths);
  /// tokens [B, M] int64 padded with 0, lengths [B].
  LatentGaussian encode_text(const torch::Tensor& tokens, const torch::Tensor& lengths);
  /// values [B].
  LatentGaussian encode_return(const torch::Tensor& values);

  /// Parameters of the text and return input adapters (label path only).
  std::vector<torch::Tensor> label_adapter_parameters() const;

  torch::Tensor vid_marker, txt_marker, ret_marker;

 private:
  LatentGaussian trunk(const torch::Tensor& seq, const torch::Tensor& lengths);

  ModelConfig cfg_;
  torch::Tensor video_pos, text_pos;
  torch::nn::Embedding text_embed{nullptr};
  torch::nn::Sequential return_mlp{nullptr};
  torch::nn::ModuleList blocks{nullptr};
  torch::nn::LayerNorm ln{nullptr};
  torch::nn::Linear mean_head{nullptr}, log_std_head{nullptr};
};
TORCH_MODULE(InstructionEncoder);

struct DecoderCache {
  std::vector<LayerCache> layers;
  int64_t position = 0;  // position inside the current chunk
};

/// Latent-conditioned causal policy: z-query cross-attention pools each
/// frame, a causal transformer decodes action logits.
class PolicyImpl : public torch::nn::Module {
 public:
  explicit PolicyImpl(const ModelConfig& cfg);

  /// z [B, d], tokens [B, L, P, width] -> fused frames [B, L, width].
  torch::Tensor prefuse(const torch::Tensor& z, const torch::Tensor& tokens);
  /// fused [B, L, width] -> logits [B, L, A]. L > chunk_len requires chunk memory.
  torch::Tensor decode(const torch::Tensor& fused);
  DecoderCache start(int64_t batch) const;
  /// One incremental decoding step: fused_t [B, width] -> logits [B, A].
  torch::Tensor decode_step(const torch::Tensor& fused_t, DecoderCache& cache);

  MultiHeadAttention xattn{nullptr};

 private:
  torch::Tensor decode_chunk(const torch::Tensor& x, std::vector<LayerCache>& caches, bool record);

  ModelConfig cfg_;
  torch::Tensor pos;
  torch::nn::ModuleList blocks{nullptr};
  torch::nn::LayerNorm ln{nullptr};
  torch::nn::Linear head{nullptr};
};
TORCH_MODULE(Policy);

enum class ActMode : uint8_t { Greedy, Sample };

/// Whole model: shared vision backbone, instruction encoder (posterior,
/// prior and label encoders share it) and the policy.
class IntentModelImpl : public torch::nn::Module {
 public:
  explicit IntentModelImpl(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  torch::Dtype dtype() const;

  /// frames [N, C, H, W] -> per-frame token grids [N, P, width].
  torch::Tensor embed_observations(const torch::Tensor& frames);
  /// Spatial average over the patch axis: [..., P, width] -> [..., width].
  static torch::Tensor video_representation(const torch::Tensor& tokens);

  LatentGaussian encode_instruction(const Instruction& instruction);
  /// Prior from the first `prior_window` observations (default: o_1 only).
  LatentGaussian prior(const torch::Tensor& observations);

  /// Logits for every step of `history` [t, C, H, W] under latent z [d].
  torch::Tensor action_logits(const torch::Tensor& history, const torch::Tensor& z);

  VisionBackbone vision{nullptr};
  InstructionEncoder encoder{nullptr};
  Policy policy{nullptr};

 private:
  ModelConfig cfg_;
};
TORCH_MODULE(IntentModel);

/// Greedy: argmax with ties to the lowest id. Sample: categorical draw.
int64_t select_action(const torch::Tensor& logits, ActMode mode, std::mt19937_64& rng);

/// act(o_{1:t}, z): full causal pass over the history, then selects from the last step.
int64_t act(IntentModel& model, const torch::Tensor& history, const LatentSample& z, ActMode mode,
            uint64_t seed = 0);

/// Incremental rollout driver holding a decoder cache.
class PolicyRunner {
 public:
  PolicyRunner(IntentModel model, torch::Tensor z, ActMode mode = ActMode::Greedy, uint64_t seed = 0);
  /// Feeds the next observation [C, H, W] and returns the chosen action.
  int64_t act(const torch::Tensor& observation);
  torch::Tensor last_logits() const { return last_logits_; }

 private:
  IntentModel model_;
  torch::Tensor z_;
  ActMode mode_;
  std::mt19937_64 rng_;
  DecoderCache cache_;
  torch::Tensor last_logits_;
};

}  // namespace intent
