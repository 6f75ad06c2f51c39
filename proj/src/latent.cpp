#include "intent/latent.hpp"

#include <cmath>
#include <numbers>

namespace intent {

Modality modality_of(const Instruction& instruction) {
  return static_cast<Modality>(instruction.index());
}

Modality modality_of(const Label& label) {
  return std::holds_alternative<TextTokens>(label) ? Modality::Text : Modality::Return;
}

Instruction as_instruction(const Label& label) {
  if (const auto* text = std::get_if<TextTokens>(&label)) return *text;
  return std::get<ReturnValue>(label);
}

const char* to_string(Modality m) {
  switch (m) {
    case Modality::Video: return "video";
    case Modality::Text: return "text";
    case Modality::Return: return "return";
  }
  return "?";
}

std::vector<Label> Trajectory::labels() const {
  std::vector<Label> out;
  if (text) out.emplace_back(*text);
  if (ret) out.emplace_back(*ret);
  return out;
}

Trajectory Trajectory::window(int64_t start, int64_t len) const {
  require(start >= 0 && len >= 1 && start + len <= length(), "trajectory window out of range");
  Trajectory out;
  out.observations = observations.narrow(0, start, len);
  out.actions.assign(actions.begin() + start, actions.begin() + start + len);
  out.text = text;
  out.ret = ret;
  return out;
}

void Trajectory::validate(int64_t num_actions, int64_t vocab_size) const {
  require(length() >= 1, "trajectory must contain at least one step");
  require(observations.defined() && observations.dim() == 4 &&
              observations.size(0) == length(),
          "observation count must equal action count");
  for (int64_t a : actions) require(a >= 0 && a < num_actions, "action id out of range");
  if (text) {
    require(!text->tokens.empty(), "text label must be nonempty");
    for (int64_t t : text->tokens) require(t >= 0 && t < vocab_size, "text token out of vocabulary");
  }
  if (ret) require(std::isfinite(ret->value), "return label must be finite");
}

LatentGaussian make_gaussian(torch::Tensor mean, torch::Tensor log_std) {
  require(mean.defined() && log_std.defined(), "gaussian parameters must be defined");
  require(mean.sizes() == log_std.sizes(), "mean and log_std shapes differ");
  require(mean.dim() >= 1 && mean.size(-1) >= 1, "gaussian needs a latent dimension");
  require(torch::isfinite(mean).all().item<bool>() && torch::isfinite(log_std).all().item<bool>(),
          "gaussian parameters must be finite");
  require(log_std.min().item<double>() >= kLogStdMin - 1e-6 &&
              log_std.max().item<double>() <= kLogStdMax + 1e-6,
          "log_std outside clamp range");
  return {std::move(mean), std::move(log_std)};
}

LatentGaussian standard_normal(int64_t d, torch::Dtype dtype) {
  auto opts = torch::TensorOptions().dtype(dtype);
  return {torch::zeros({d}, opts), torch::zeros({d}, opts)};
}

torch::Tensor kl_divergence(const LatentGaussian& p, const LatentGaussian& q) {
  require(p.mean.size(-1) == q.mean.size(-1), "kl_divergence: latent dimension mismatch");
  auto var_p = (2.0 * p.log_std).exp();
  auto var_q = (2.0 * q.log_std).exp();
  auto diff = p.mean - q.mean;
  auto per_dim = (q.log_std - p.log_std) + (var_p + diff * diff) / (2.0 * var_q) - 0.5;
  return per_dim.sum(-1);
}

torch::Tensor log_prob(const LatentGaussian& dist, const torch::Tensor& z) {
  require(dist.mean.size(-1) == z.size(-1), "log_prob: latent dimension mismatch");
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  auto scaled = (z - dist.mean) * (-dist.log_std).exp();
  auto per_dim = -half_log_2pi - dist.log_std - 0.5 * scaled * scaled;
  return per_dim.sum(-1);
}

LatentSample sample_reparameterized(const LatentGaussian& dist, const torch::Tensor& noise,
                                    LatentSource source) {
  require(noise.size(-1) == dist.mean.size(-1), "sample_reparameterized: noise dimension mismatch");
  return {dist.mean + dist.log_std.exp() * noise.to(dist.mean.scalar_type()), source};
}

torch::Tensor standard_noise(torch::IntArrayRef shape, std::mt19937_64& rng, torch::Dtype dtype) {
  auto out = torch::empty(shape, torch::TensorOptions().dtype(torch::kDouble));
  auto* data = out.data_ptr<double>();
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int64_t i = 0; i < out.numel(); ++i) data[i] = normal(rng);
  return out.to(dtype);
}

}  // namespace intent
