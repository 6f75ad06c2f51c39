#pragma once

#include "intent/core.hpp"

#include <random>

namespace intent {

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

/// Diagonal Gaussian over the latent space.
///
/// Both tensors share a shape `[..., d]`; leading dimensions are batch
/// dimensions and every operation below reduces over the last one only.
struct LatentGaussian {
  torch::Tensor mean;
  torch::Tensor log_std;

  int64_t dim() const { return mean.size(-1); }
  torch::Tensor std() const { return log_std.exp(); }
  LatentGaussian detached() const { return {mean.detach(), log_std.detach()}; }
  /// Selects item `i` along the leading batch dimension.
  LatentGaussian row(int64_t i) const { return {mean[i], log_std[i]}; }
};

/// Builds a validated distribution: equal shapes, finite entries and
/// log_std inside [kLogStdMin, kLogStdMax].
LatentGaussian make_gaussian(torch::Tensor mean, torch::Tensor log_std);
LatentGaussian standard_normal(int64_t d, torch::Dtype dtype = torch::kDouble);

enum class LatentSource : uint8_t { VideoPosterior, Prior, LabelEncoder };

struct LatentSample {
  torch::Tensor z;
  LatentSource source = LatentSource::VideoPosterior;
};

/// KL(p || q) in nats, closed form, summed over the latent dimension.
torch::Tensor kl_divergence(const LatentGaussian& p, const LatentGaussian& q);

/// log density of `z` under `dist`, summed over the latent dimension.
torch::Tensor log_prob(const LatentGaussian& dist, const torch::Tensor& z);

/// z = mean + exp(log_std) * noise. Differentiable in mean and log_std.
LatentSample sample_reparameterized(const LatentGaussian& dist, const torch::Tensor& noise,
                                    LatentSource source = LatentSource::VideoPosterior);

/// Standard-normal draws from a seeded engine, so noise is reproducible
/// independently of torch's global generator.
torch::Tensor standard_noise(torch::IntArrayRef shape, std::mt19937_64& rng,
                             torch::Dtype dtype = torch::kFloat);

}  // namespace intent
