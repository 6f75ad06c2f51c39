#include "intent/model.hpp"

#include <cmath>
#include <limits>

namespace intent {

namespace nn = torch::nn;

namespace {

torch::Tensor embedding_param(int64_t rows, int64_t width, double scale = 0.1) {
  return torch::randn({rows, width}) * scale;
}

// [Lq, Lk] causal mask where the last Lq keys are the queries themselves and
// the first (Lk - Lq) keys are always visible.
torch::Tensor causal_allowed(int64_t lq, int64_t lk) {
  auto visible = torch::ones({lq, lk - lq}, torch::kBool);
  auto causal = torch::ones({lq, lq}, torch::kBool).tril();
  return torch::cat({visible, causal}, 1);
}

}  // namespace

int64_t ModelConfig::patch_count() const {
  if (obs_format == ObservationFormat::Symbolic) return grid_size * grid_size;
  const auto s = obs_shape();
  return (s.height / kRenderCellPixels) * (s.width / kRenderCellPixels);
}

void ModelConfig::validate() const {
  require(width > 0 && latent_dim > 0 && chunk_len > 0 && max_text_len > 0, "model sizes must be positive");
  require(vocab_size > 0 && num_actions > 1, "vocabulary and action space must be nonempty");
  require(width % encoder_heads == 0 && width % decoder_heads == 0 && width % vision_heads == 0 &&
              width % xattn_heads == 0,
          "width must be divisible by every head count");
  require(vision_blocks >= 0 && encoder_blocks >= 1 && decoder_blocks >= 1, "block counts out of range");
  require(prior_window >= 1, "prior window must be at least one frame");
  require(log_std_min < log_std_max, "log_std clamp range is empty");
  require(log_std_init >= log_std_min && log_std_init <= log_std_max, "log_std_init must lie in the clamp range");
}

// ---------------------------------------------------------------------------

MultiHeadAttentionImpl::MultiHeadAttentionImpl(int64_t query_dim, int64_t kv_dim, int64_t width, int64_t heads,
                                               bool qk_norm)
    : heads_(heads), head_dim_(width / heads), qk_norm_(qk_norm) {
  require(width % heads == 0, "attention width must divide evenly into heads");
  query = register_module("query", nn::Linear(query_dim, width));
  key = register_module("key", nn::Linear(kv_dim, width));
  value = register_module("value", nn::Linear(kv_dim, width));
  out = register_module("out", nn::Linear(width, width));
}

std::pair<torch::Tensor, torch::Tensor> MultiHeadAttentionImpl::keys_values(const torch::Tensor& kv_in) {
  const auto b = kv_in.size(0);
  const auto l = kv_in.size(1);
  auto k = key(kv_in).view({b, l, heads_, head_dim_}).transpose(1, 2);
  auto v = value(kv_in).view({b, l, heads_, head_dim_}).transpose(1, 2);
  return {k, v};
}

torch::Tensor MultiHeadAttentionImpl::attend(const torch::Tensor& q_in, const torch::Tensor& keys,
                                             const torch::Tensor& values, const torch::Tensor& allowed) {
  const auto b = q_in.size(0);
  const auto lq = q_in.size(1);
  auto q = query(q_in).view({b, lq, heads_, head_dim_}).transpose(1, 2);
  torch::Tensor scores;
  if (qk_norm_) {
    namespace F = torch::nn::functional;
    const auto unit = F::NormalizeFuncOptions().dim(-1);
    scores = torch::matmul(F::normalize(q, unit), F::normalize(keys, unit).transpose(-2, -1)) *
             std::sqrt(static_cast<double>(head_dim_));
  } else {
    scores = torch::matmul(q, keys.transpose(-2, -1)) / std::sqrt(static_cast<double>(head_dim_));
  }
  if (allowed.defined()) scores = scores.masked_fill(allowed.logical_not(), -std::numeric_limits<double>::infinity());
  auto weights = torch::softmax(scores, -1);
  auto mixed = torch::matmul(weights, values).transpose(1, 2).reshape({b, lq, heads_ * head_dim_});
  return out(mixed);
}

torch::Tensor MultiHeadAttentionImpl::forward(const torch::Tensor& q_in, const torch::Tensor& kv_in,
                                              const torch::Tensor& allowed) {
  auto [k, v] = keys_values(kv_in);
  return attend(q_in, k, v, allowed);
}

// ---------------------------------------------------------------------------

TransformerBlockImpl::TransformerBlockImpl(int64_t width, int64_t heads, int64_t mlp_ratio) {
  ln1 = register_module("ln1", nn::LayerNorm(nn::LayerNormOptions({width})));
  attn = register_module("attn", MultiHeadAttention(width, width, width, heads));
  ln2 = register_module("ln2", nn::LayerNorm(nn::LayerNormOptions({width})));
  fc1 = register_module("fc1", nn::Linear(width, width * mlp_ratio));
  fc2 = register_module("fc2", nn::Linear(width * mlp_ratio, width));
}

torch::Tensor TransformerBlockImpl::mlp(const torch::Tensor& x) { return fc2(torch::gelu(fc1(x))); }

torch::Tensor TransformerBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& allowed) {
  auto h = ln1(x);
  auto y = x + attn(h, h, allowed);
  return y + mlp(ln2(y));
}

torch::Tensor TransformerBlockImpl::forward_cached(const torch::Tensor& x, LayerCache& cache,
                                                   const torch::Tensor& allowed, bool record) {
  auto h = ln1(x);
  auto [k, v] = attn->keys_values(h);
  std::vector<torch::Tensor> ks, vs;
  if (cache.mem_keys.defined()) {
    ks.push_back(cache.mem_keys);
    vs.push_back(cache.mem_values);
  }
  if (cache.keys.defined()) {
    ks.push_back(cache.keys);
    vs.push_back(cache.values);
  }
  ks.push_back(k);
  vs.push_back(v);
  auto keys = ks.size() == 1 ? k : torch::cat(ks, 2);
  auto values = vs.size() == 1 ? v : torch::cat(vs, 2);
  if (record) {
    cache.keys = cache.keys.defined() ? torch::cat({cache.keys, k}, 2) : k;
    cache.values = cache.values.defined() ? torch::cat({cache.values, v}, 2) : v;
  }
  auto y = x + attn->attend(h, keys, values, allowed);
  return y + mlp(ln2(y));
}

// ---------------------------------------------------------------------------

namespace {

/// [P, P] index of the offset from cell i to cell j in a (2*side-1)^2 table.
torch::Tensor grid_offset_index(int64_t side) {
  const auto span = 2 * side - 1;
  auto r = torch::arange(side * side, torch::kLong).div(side, "floor");
  auto c = torch::arange(side * side, torch::kLong).remainder(side);
  auto dr = r.unsqueeze(0) - r.unsqueeze(1) + (side - 1);  // [i, j] = row(j) - row(i)
  auto dc = c.unsqueeze(0) - c.unsqueeze(1) + (side - 1);
  return dr * span + dc;
}

}  // namespace

GridAttentionImpl::GridAttentionImpl(int64_t side, int64_t width, int64_t heads)
    : heads_(heads), head_dim_(width / heads) {
  require(width % heads == 0, "attention width must divide evenly into heads");
  qkv = register_module("qkv", nn::Linear(width, 3 * width));
  out = register_module("out", nn::Linear(width, width));
  const auto span = 2 * side - 1;
  rel_key = register_parameter("rel_key", embedding_param(span * span, head_dim_));
  rel_value = register_parameter("rel_value", embedding_param(span * span, head_dim_));
  offset_index_ = register_buffer("offset_index", grid_offset_index(side));

}

torch::Tensor GridAttentionImpl::forward(const torch::Tensor& x) {
  const auto f = x.size(0);
  const auto p = x.size(1);
  require(p == offset_index_.size(0), "grid attention: token count does not match the grid");
  auto parts = qkv(x).view({f, p, 3, heads_, head_dim_}).permute({2, 0, 3, 1, 4});
  auto q = parts[0], k = parts[1], v = parts[2];  // [F, H, P, dh]
  auto idx = offset_index_.reshape({-1}).to(torch::kLong);
  auto ak = rel_key.index_select(0, idx).view({p, p, head_dim_});
  auto av = rel_value.index_select(0, idx).view({p, p, head_dim_});
  auto scores = torch::matmul(q, k.transpose(-2, -1)) + torch::einsum("fhid,ijd->fhij", {q, ak});
  auto weights = torch::softmax(scores / std::sqrt(static_cast<double>(head_dim_)), -1);
  auto mixed = torch::matmul(weights, v) + torch::einsum("fhij,ijd->fhid", {weights, av});
  return out(mixed.transpose(1, 2).reshape({f, p, heads_ * head_dim_}));
}

GridBlockImpl::GridBlockImpl(int64_t side, int64_t width, int64_t heads, int64_t mlp_ratio) {
  ln1 = register_module("ln1", nn::LayerNorm(nn::LayerNormOptions({width})));
  attn = register_module("attn", GridAttention(side, width, heads));
  ln2 = register_module("ln2", nn::LayerNorm(nn::LayerNormOptions({width})));
  fc1 = register_module("fc1", nn::Linear(width, width * mlp_ratio));
  fc2 = register_module("fc2", nn::Linear(width * mlp_ratio, width));
}

torch::Tensor GridBlockImpl::forward(const torch::Tensor& x) {
  auto y = x + attn(ln1(x));
  return y + fc2(torch::gelu(fc1(ln2(y))));
}

// ---------------------------------------------------------------------------

VisionBackboneImpl::VisionBackboneImpl(const ModelConfig& cfg) : cfg_(cfg) {
  const auto shape = cfg.obs_shape();
  if (cfg.obs_format == ObservationFormat::Symbolic) {
    cell_embed = register_module("cell_embed", nn::Linear(shape.channels, cfg.width));
  } else {
    patch_embed = register_module(
        "patch_embed",
        nn::Conv2d(nn::Conv2dOptions(shape.channels, cfg.width, kRenderCellPixels).stride(kRenderCellPixels)));
  }
  patch_pos = register_parameter("patch_pos", embedding_param(cfg.patch_count(), cfg.width));
  const auto side = static_cast<int64_t>(std::lround(std::sqrt(static_cast<double>(cfg.patch_count()))));
  if (cfg.anchor_embedding) {
    if (cfg.obs_format == ObservationFormat::Rendered)
      anchor_score = register_module("anchor_score", nn::Linear(cfg.width, 1));
    anchor_rel = register_parameter("anchor_rel", embedding_param((2 * side - 1) * (2 * side - 1), cfg.width));
    anchor_index_ = register_buffer("anchor_index", grid_offset_index(side));
  }
  blocks = register_module("blocks", nn::ModuleList());
  for (int64_t i = 0; i < cfg.vision_blocks; ++i)
    blocks->push_back(GridBlock(side, cfg.width, cfg.vision_heads, cfg.mlp_ratio));
  ln = register_module("ln", nn::LayerNorm(nn::LayerNormOptions({cfg.width})));
}

torch::Tensor VisionBackboneImpl::forward(const torch::Tensor& frames) {
  const auto shape = cfg_.obs_shape();
  require(frames.dim() == 4 && frames.size(1) == shape.channels && frames.size(2) == shape.height &&
              frames.size(3) == shape.width,
          "observation tensor does not match the configured observation format");
  require(frames.size(0) >= 1, "observation sequence must be nonempty");
  torch::Tensor x;
  if (cfg_.obs_format == ObservationFormat::Symbolic) {
    x = cell_embed(frames.flatten(2).transpose(1, 2));
  } else {
    x = patch_embed(frames).flatten(2).transpose(1, 2);
  }
  x = x + patch_pos;
  if (anchor_rel.defined()) {
    const auto p = x.size(1);
    // Symbolic frames mark the agent's cell directly; pixels need a learned locator.
    auto anchor = anchor_score ? torch::softmax(anchor_score(x).squeeze(-1), -1)
                               : frames.select(1, kNumKinds).flatten(1);  // [F, P]
    auto table = anchor_rel.index_select(0, anchor_index_.reshape({-1}).to(torch::kLong)).view({p, p, -1});
    x = x + torch::einsum("fj,ijw->fiw", {anchor, table});
  }
  for (auto& block : *blocks) x = block->as<GridBlock>()->forward(x);
  return ln(x);
}

// ---------------------------------------------------------------------------

InstructionEncoderImpl::InstructionEncoderImpl(const ModelConfig& cfg) : cfg_(cfg) {
  const auto h = cfg.width;
  vid_marker = register_parameter("vid_marker", torch::randn({h}) * 0.1);
  txt_marker = register_parameter("txt_marker", torch::randn({h}) * 0.1);
  ret_marker = register_parameter("ret_marker", torch::randn({h}) * 0.1);
  video_pos = register_parameter("video_pos", embedding_param(cfg.chunk_len, h));
  text_pos = register_parameter("text_pos", embedding_param(cfg.max_text_len, h));
  text_embed = register_module("text_embed", nn::Embedding(cfg.vocab_size, h));
  return_mlp = register_module("return_mlp", nn::Sequential(nn::Linear(1, h), nn::GELU(), nn::Linear(h, h)));
  blocks = register_module("blocks", nn::ModuleList());
  for (int64_t i = 0; i < cfg.encoder_blocks; ++i)
    blocks->push_back(TransformerBlock(h, cfg.encoder_heads, cfg.mlp_ratio));
  ln = register_module("ln", nn::LayerNorm(nn::LayerNormOptions({h})));
  mean_head = register_module("mean_head", nn::Linear(h, cfg.latent_dim));
  log_std_head = register_module("log_std_head", nn::Linear(h, cfg.latent_dim));
  torch::NoGradGuard no_grad;
  log_std_head->bias.fill_(cfg.log_std_init);
}

std::vector<torch::Tensor> InstructionEncoderImpl::label_adapter_parameters() const {
  std::vector<torch::Tensor> params{txt_marker, ret_marker, text_pos};
  for (const auto& p : text_embed->parameters()) params.push_back(p);
  for (const auto& p : return_mlp->parameters()) params.push_back(p);
  return params;
}

LatentGaussian InstructionEncoderImpl::trunk(const torch::Tensor& seq, const torch::Tensor& lengths) {
  const auto l = seq.size(1);
  auto valid = torch::arange(l, torch::kLong).unsqueeze(0) < lengths.to(torch::kLong).unsqueeze(1);  // [B, L]
  auto allowed = valid.unsqueeze(1).unsqueeze(1);  // [B, 1, 1, L]
  auto x = seq;
  for (auto& block : *blocks) x = block->as<TransformerBlock>()->forward(x, allowed);
  x = ln(x);
  auto w = valid.to(x.scalar_type()).unsqueeze(-1);
  auto pooled = (x * w).sum(1) / w.sum(1);
  auto mean = mean_head(pooled);
  auto log_std = log_std_head(pooled).clamp(cfg_.log_std_min, cfg_.log_std_max);
  return {mean, log_std};
}

LatentGaussian InstructionEncoderImpl::encode_video(const torch::Tensor& pooled, const torch::Tensor& lengths) {
  const auto l = pooled.size(1);
  require(l >= 1 && l <= cfg_.chunk_len, "video instruction length must be within [1, chunk_len]");
  return trunk(pooled + video_pos.narrow(0, 0, l) + vid_marker, lengths);
}

LatentGaussian InstructionEncoderImpl::encode_text(const torch::Tensor& tokens, const torch::Tensor& lengths) {
  const auto m = tokens.size(1);
  require(m >= 1 && m <= cfg_.max_text_len, "text instruction length must be within [1, max_text_len]");
  return trunk(text_embed(tokens) + text_pos.narrow(0, 0, m) + txt_marker, lengths);
}

LatentGaussian InstructionEncoderImpl::encode_return(const torch::Tensor& values) {
  auto x = return_mlp->forward<torch::Tensor>(values.reshape({-1, 1}).to(ret_marker.scalar_type())).unsqueeze(1) + ret_marker;
  return trunk(x, torch::ones({values.numel()}, torch::kLong));
}

// ---------------------------------------------------------------------------

PolicyImpl::PolicyImpl(const ModelConfig& cfg) : cfg_(cfg) {
  xattn = register_module("xattn", MultiHeadAttention(cfg.latent_dim, cfg.width, cfg.width, cfg.xattn_heads, cfg.xattn_qk_norm));
  pos = register_parameter("pos", embedding_param(cfg.chunk_len, cfg.width));
  blocks = register_module("blocks", nn::ModuleList());
  for (int64_t i = 0; i < cfg.decoder_blocks; ++i)
    blocks->push_back(TransformerBlock(cfg.width, cfg.decoder_heads, cfg.mlp_ratio));
  ln = register_module("ln", nn::LayerNorm(nn::LayerNormOptions({cfg.width})));
  head = register_module("head", nn::Linear(cfg.width, cfg.num_actions));
}

torch::Tensor PolicyImpl::prefuse(const torch::Tensor& z, const torch::Tensor& tokens) {
  require(z.dim() == 2 && z.size(1) == cfg_.latent_dim, "prefuse: latent must be [B, d]");
  require(tokens.dim() == 4 && tokens.size(0) == z.size(0) && tokens.size(3) == cfg_.width,
          "prefuse: tokens must be [B, L, P, width]");
  const auto b = tokens.size(0);
  const auto l = tokens.size(1);
  const auto p = tokens.size(2);
  auto q = z.unsqueeze(1).expand({b, l, z.size(1)}).reshape({b * l, 1, z.size(1)});
  auto kv = tokens.reshape({b * l, p, cfg_.width});
  return xattn(q, kv).view({b, l, cfg_.width});
}

DecoderCache PolicyImpl::start(int64_t /*batch*/) const {
  DecoderCache cache;
  cache.layers.resize(static_cast<size_t>(cfg_.decoder_blocks));
  return cache;
}

torch::Tensor PolicyImpl::decode_chunk(const torch::Tensor& x_in, std::vector<LayerCache>& caches, bool record) {
  const auto lq = x_in.size(1);
  const auto& first = caches.front();
  const int64_t lm = first.mem_keys.defined() ? first.mem_keys.size(2) : 0;
  const int64_t lp = first.keys.defined() ? first.keys.size(2) : 0;
  auto allowed = causal_allowed(lq, lm + lp + lq);
  auto x = x_in;
  for (size_t i = 0; i < blocks->size(); ++i)
    x = blocks[i]->as<TransformerBlock>()->forward_cached(x, caches[i], allowed, record);
  return head(ln(x));
}

torch::Tensor PolicyImpl::decode(const torch::Tensor& fused) {
  require(fused.dim() == 3 && fused.size(2) == cfg_.width, "decode: fused frames must be [B, L, width]");
  const auto l = fused.size(1);
  require(l >= 1, "decode: sequence must be nonempty");
  require(l <= cfg_.chunk_len || cfg_.chunk_memory,
          "decode: sequence longer than chunk length without chunk memory");
  auto cache = start(fused.size(0));
  std::vector<torch::Tensor> outs;
  for (int64_t s = 0; s < l; s += cfg_.chunk_len) {
    const auto n = std::min(cfg_.chunk_len, l - s);
    auto x = fused.narrow(1, s, n) + pos.narrow(0, 0, n);
    const bool more = s + n < l;
    outs.push_back(decode_chunk(x, cache.layers, more));
    if (more) {
      for (auto& layer : cache.layers) {
        layer.mem_keys = layer.keys.detach();
        layer.mem_values = layer.values.detach();
        layer.keys = torch::Tensor();
        layer.values = torch::Tensor();
      }
    }
  }
  return outs.size() == 1 ? outs.front() : torch::cat(outs, 1);
}

torch::Tensor PolicyImpl::decode_step(const torch::Tensor& fused_t, DecoderCache& cache) {
  if (cache.position == cfg_.chunk_len) {
    require(cfg_.chunk_memory, "decode_step: history exceeds chunk length without chunk memory");
    for (auto& layer : cache.layers) {
      layer.mem_keys = layer.keys.detach();
      layer.mem_values = layer.values.detach();
      layer.keys = torch::Tensor();
      layer.values = torch::Tensor();
    }
    cache.position = 0;
  }
  auto x = fused_t.unsqueeze(1) + pos.narrow(0, cache.position, 1);
  auto logits = decode_chunk(x, cache.layers, true).squeeze(1);
  ++cache.position;
  return logits;
}

// ---------------------------------------------------------------------------

IntentModelImpl::IntentModelImpl(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  vision = register_module("vision", VisionBackbone(cfg_));
  encoder = register_module("encoder", InstructionEncoder(cfg_));
  policy = register_module("policy", Policy(cfg_));
}

torch::Dtype IntentModelImpl::dtype() const { return parameters().front().scalar_type(); }

torch::Tensor IntentModelImpl::embed_observations(const torch::Tensor& frames) {
  return vision(frames.to(dtype()));
}

torch::Tensor IntentModelImpl::video_representation(const torch::Tensor& tokens) {
  // Sorting first fixes the summation order, so the pooled vector is bitwise
  // invariant to token order.
  return std::get<0>(tokens.sort(-2)).mean(-2);
}

LatentGaussian IntentModelImpl::encode_instruction(const Instruction& instruction) {
  if (const auto* video = std::get_if<VideoFrames>(&instruction)) {
    require(video->frames.defined() && video->frames.dim() == 4 && video->frames.size(0) >= 1,
            "video instruction must contain at least one frame");
    auto pooled = video_representation(embed_observations(video->frames)).unsqueeze(0);
    auto lengths = torch::full({1}, pooled.size(1), torch::kLong);
    return encoder->encode_video(pooled, lengths).row(0);
  }
  if (const auto* text = std::get_if<TextTokens>(&instruction)) {
    require(!text->tokens.empty(), "text instruction must be nonempty");
    for (auto t : text->tokens) require(t >= 0 && t < cfg_.vocab_size, "text token out of vocabulary");
    auto tokens = torch::tensor(text->tokens, torch::kLong).unsqueeze(0);
    auto lengths = torch::full({1}, tokens.size(1), torch::kLong);
    return encoder->encode_text(tokens, lengths).row(0);
  }
  const auto& ret = std::get<ReturnValue>(instruction);
  require(std::isfinite(ret.value), "return instruction must be finite");
  return encoder->encode_return(torch::full({1}, ret.value, torch::TensorOptions().dtype(dtype()))).row(0);
}

LatentGaussian IntentModelImpl::prior(const torch::Tensor& observations) {
  auto frames = observations.dim() == 3 ? observations.unsqueeze(0) : observations;
  const auto k = std::min(cfg_.prior_window, frames.size(0));
  return encode_instruction(VideoFrames{frames.narrow(0, 0, k)});
}

torch::Tensor IntentModelImpl::action_logits(const torch::Tensor& history, const torch::Tensor& z) {
  auto tokens = embed_observations(history).unsqueeze(0);
  auto fused = policy->prefuse(z.reshape({1, -1}).to(dtype()), tokens);
  return policy->decode(fused).squeeze(0);
}

// ---------------------------------------------------------------------------

int64_t select_action(const torch::Tensor& logits, ActMode mode, std::mt19937_64& rng) {
  auto values = logits.detach().to(torch::kDouble).contiguous();
  require(values.dim() == 1 && values.numel() >= 1, "select_action: logits must be a vector");
  const auto* v = values.data_ptr<double>();
  const int64_t n = values.numel();
  if (mode == ActMode::Greedy) {
    int64_t best = 0;
    for (int64_t i = 1; i < n; ++i)
      if (v[i] > v[best]) best = i;
    return best;
  }
  auto probs = torch::softmax(values, 0);
  const auto* p = probs.data_ptr<double>();
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    acc += p[i];
    if (u < acc) return i;
  }
  return n - 1;
}

int64_t act(IntentModel& model, const torch::Tensor& history, const LatentSample& z, ActMode mode, uint64_t seed) {
  torch::NoGradGuard no_grad;
  auto frames = history.dim() == 3 ? history.unsqueeze(0) : history;
  require(frames.size(0) >= 1, "act: history must be nonempty");
  auto logits = model->action_logits(frames, z.z);
  std::mt19937_64 rng(seed);
  return select_action(logits[-1], mode, rng);
}

PolicyRunner::PolicyRunner(IntentModel model, torch::Tensor z, ActMode mode, uint64_t seed)
    : model_(std::move(model)), z_(z.detach().reshape({1, -1}).to(model_->dtype())), mode_(mode), rng_(seed) {
  cache_ = model_->policy->start(1);
}

int64_t PolicyRunner::act(const torch::Tensor& observation) {
  torch::NoGradGuard no_grad;
  auto tokens = model_->embed_observations(observation.unsqueeze(0)).unsqueeze(0);
  auto fused = model_->policy->prefuse(z_, tokens);
  last_logits_ = model_->policy->decode_step(fused.select(1, 0), cache_).squeeze(0);
  return select_action(last_logits_, mode_, rng_);
}

}  // namespace intent
