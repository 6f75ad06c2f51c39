#pragma once

#include "intent/dataset.hpp"
#include "intent/latent.hpp"
#include "intent/model.hpp"

namespace intent {

/// Which training objectives are active. NoLab routes labeled items through
/// the demonstration objective; NoDem drops demonstration-only items.
enum class Objective : uint8_t { Full, NoLab, NoDem };

struct LossWeights {
  double beta1 = 0.1;
  double beta2 = 0.1;
  Objective objective = Objective::Full;
};

/// Telemetry view of a loss evaluation.
///   bc    - behaviour-cloning NLL per action (nats)
///   kl    - posterior/prior KL per timestep of demonstration items (nats)
///   align - mean alignment log-likelihood over labeled items (nats)
///   total - the optimised scalar
struct LossBreakdown {
  double bc = 0.0;
  double kl = 0.0;
  double align = 0.0;
  double total = 0.0;
};

/// Per-item pieces of a batch loss, in batch order (unlabeled first, then labeled).
struct BatchTerms {
  torch::Tensor bc_sum;      // [B] summed -log pi(a_t | o_{1:t}, z)
  torch::Tensor lengths;     // [B]
  torch::Tensor kl;          // [B] sequence KL, zero on the labeled route
  torch::Tensor align_logp;  // [B] log e(sg[z] | o_{1:N}), zero on the demonstration route
  torch::Tensor item_loss;   // [B]
  torch::Tensor lab_route;   // [B] bool
  torch::Tensor active;      // [B] bool
  LatentGaussian posterior;  // video posteriors, [B, d]
  LatentGaussian label;      // label-encoder distributions (rows valid on the labeled route)
  torch::Tensor z;           // [B, d] latents fed to the policy
  torch::Tensor total;       // scalar
  LossBreakdown breakdown;
};

struct LossResult {
  torch::Tensor total;
  LossBreakdown breakdown;
};

/// Sum over valid steps of -log softmax(logits)[action].
/// logits [B, L, A], actions [B, L] int64, mask [B, L] -> [B].
torch::Tensor bc_nll(const torch::Tensor& logits, const torch::Tensor& actions, const torch::Tensor& mask);

/// bc_nll of one trajectory under latent z.
torch::Tensor bc_nll(IntentModel& model, const Trajectory& trajectory, const LatentSample& z);

/// The loss contribution of the alignment log-likelihood: -beta2 * logp.
inline double alignment_term(double beta2, double log_likelihood) { return -beta2 * log_likelihood; }

/// Full batch evaluation. `noise` is [B, d] standard-normal, one row per item in batch order.
/// `align_target` [B, d], when given, replaces the detached label-encoder draw
/// inside the alignment term (finite differences need it held constant).
BatchTerms compute_terms(IntentModel& model, const Batch& batch, const torch::Tensor& noise,
                         const LossWeights& weights, const torch::Tensor& align_target = {});

LossResult total_loss(IntentModel& model, const Batch& batch, const torch::Tensor& noise, const LossWeights& weights,
                      const torch::Tensor& align_target = {});

/// Constrained self-imitation on one trajectory; any label is ignored.
LossResult loss_dem(IntentModel& model, const Trajectory& trajectory, const torch::Tensor& noise,
                    const LossWeights& weights);

/// Intention alignment on one labeled trajectory. Uses the trajectory's first
/// label; throws ContractViolation when it has none.
LossResult loss_lab(IntentModel& model, const Trajectory& trajectory, const torch::Tensor& noise,
                    const LossWeights& weights);
LossResult loss_lab(IntentModel& model, const Trajectory& trajectory, const Label& label, const torch::Tensor& noise,
                    const LossWeights& weights);

/// R = bc / (bc + kl). Throws DegenerateInput when bc + kl == 0.
double r_metric(double bc, double kl);

}  // namespace intent
