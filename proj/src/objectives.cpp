#include "intent/objectives.hpp"

#include <algorithm>

namespace intent {

torch::Tensor bc_nll(const torch::Tensor& logits, const torch::Tensor& actions, const torch::Tensor& mask) {
  require(logits.dim() == 3 && actions.dim() == 2 && logits.size(0) == actions.size(0) &&
              logits.size(1) == actions.size(1),
          "bc_nll: logits [B, L, A] and actions [B, L] disagree");
  auto logp = torch::log_softmax(logits, -1).gather(-1, actions.unsqueeze(-1)).squeeze(-1);
  return -(logp * mask.to(logp.scalar_type())).sum(-1);
}

torch::Tensor bc_nll(IntentModel& model, const Trajectory& trajectory, const LatentSample& z) {
  auto logits = model->action_logits(trajectory.observations, z.z).unsqueeze(0);
  auto actions = torch::tensor(trajectory.actions, torch::kLong).unsqueeze(0);
  return bc_nll(logits, actions, torch::ones_like(actions)).squeeze(0);
}

BatchTerms compute_terms(IntentModel& model, const Batch& batch, const torch::Tensor& noise,
                         const LossWeights& weights, const torch::Tensor& align_target) {
  const auto& cfg = model->config();
  const auto b = static_cast<int64_t>(batch.size());
  require(b >= 1, "loss needs a nonempty batch");
  require(noise.dim() == 2 && noise.size(0) == b && noise.size(1) == cfg.latent_dim,
          "noise must be [batch, latent_dim]");
  require(weights.beta1 >= 0.0 && weights.beta2 >= 0.0, "loss weights must be nonnegative");

  std::vector<const Trajectory*> trajs;
  std::vector<const Label*> labels;
  for (const auto& t : batch.unlabeled) {
    trajs.push_back(&t);
    labels.push_back(nullptr);
  }
  for (const auto& l : batch.labeled) {
    trajs.push_back(&l.chunk);
    labels.push_back(&l.label);
  }

  const auto dtype = model->dtype();
  int64_t max_len = 0;
  for (const auto* t : trajs) {
    require(t->length() >= 1 && t->length() <= cfg.chunk_len, "batch chunk length must be within [1, chunk_len]");
    max_len = std::max(max_len, t->length());
  }

  // Collate into padded [B, L] layouts.
  std::vector<torch::Tensor> frames;
  std::vector<int64_t> flat_index, lengths_v, text_rows, ret_rows;
  std::vector<uint8_t> lab_v, active_v;
  auto actions = torch::zeros({b, max_len}, torch::kLong);
  auto mask = torch::zeros({b, max_len}, dtype);
  auto actions_acc = actions.accessor<int64_t, 2>();
  int64_t max_text = 1;
  std::vector<const TextTokens*> texts;
  std::vector<double> ret_values;
  for (int64_t i = 0; i < b; ++i) {
    const auto& t = *trajs[static_cast<size_t>(i)];
    frames.push_back(t.observations);
    for (int64_t s = 0; s < t.length(); ++s) {
      flat_index.push_back(i * max_len + s);
      actions_acc[i][s] = t.actions[static_cast<size_t>(s)];
    }
    mask[i].narrow(0, 0, t.length()).fill_(1.0);
    lengths_v.push_back(t.length());
    const auto* label = labels[static_cast<size_t>(i)];
    const bool lab = label != nullptr && weights.objective != Objective::NoLab;
    lab_v.push_back(lab ? 1 : 0);
    active_v.push_back(lab || weights.objective != Objective::NoDem ? 1 : 0);
    if (!lab) continue;
    if (const auto* text = std::get_if<TextTokens>(label)) {
      text_rows.push_back(i);
      texts.push_back(text);
      max_text = std::max<int64_t>(max_text, static_cast<int64_t>(text->tokens.size()));
    } else {
      ret_rows.push_back(i);
      ret_values.push_back(std::get<ReturnValue>(*label).value);
    }
  }

  auto lengths = torch::tensor(lengths_v, torch::kLong);
  auto tokens_flat = model->embed_observations(torch::cat(frames, 0));
  const auto p = tokens_flat.size(1);
  const auto h = tokens_flat.size(2);
  auto tokens = torch::zeros({b * max_len, p, h}, tokens_flat.options())
                    .index_copy(0, torch::tensor(flat_index, torch::kLong), tokens_flat)
                    .view({b, max_len, p, h});
  auto pooled = IntentModelImpl::video_representation(tokens);

  auto posterior = model->encoder->encode_video(pooled, lengths);
  const auto k = std::min(cfg.prior_window, max_len);
  auto prior = model->encoder->encode_video(pooled.narrow(1, 0, k), lengths.clamp_max(k));

  auto label_mean = torch::zeros({b, cfg.latent_dim}, posterior.mean.options());
  auto label_log_std = torch::zeros({b, cfg.latent_dim}, posterior.mean.options());
  if (!text_rows.empty()) {
    auto tok = torch::zeros({static_cast<int64_t>(texts.size()), max_text}, torch::kLong);
    std::vector<int64_t> tlen;
    for (size_t r = 0; r < texts.size(); ++r) {
      const auto& tt = texts[r]->tokens;
      require(!tt.empty(), "text label must be nonempty");
      for (size_t j = 0; j < tt.size(); ++j) {
        require(tt[j] >= 0 && tt[j] < cfg.vocab_size, "text token out of vocabulary");
        tok[static_cast<int64_t>(r)][static_cast<int64_t>(j)] = tt[j];
      }
      tlen.push_back(static_cast<int64_t>(tt.size()));
    }
    auto dist = model->encoder->encode_text(tok, torch::tensor(tlen, torch::kLong));
    auto rows = torch::tensor(text_rows, torch::kLong);
    label_mean = label_mean.index_copy(0, rows, dist.mean);
    label_log_std = label_log_std.index_copy(0, rows, dist.log_std);
  }
  if (!ret_rows.empty()) {
    auto dist = model->encoder->encode_return(torch::tensor(ret_values, torch::TensorOptions().dtype(dtype)));
    auto rows = torch::tensor(ret_rows, torch::kLong);
    label_mean = label_mean.index_copy(0, rows, dist.mean);
    label_log_std = label_log_std.index_copy(0, rows, dist.log_std);
  }
  LatentGaussian label{label_mean, label_log_std};

  auto eps = noise.to(dtype);
  auto lab_route = torch::tensor(std::vector<int64_t>(lab_v.begin(), lab_v.end()), torch::kLong).to(torch::kBool);
  auto active = torch::tensor(std::vector<int64_t>(active_v.begin(), active_v.end()), torch::kLong).to(torch::kBool);
  auto z_post = sample_reparameterized(posterior, eps, LatentSource::VideoPosterior).z;
  auto z_label = sample_reparameterized(label, eps, LatentSource::LabelEncoder).z;
  auto z = torch::where(lab_route.unsqueeze(1), z_label, z_post);

  auto logits = model->policy->decode(model->policy->prefuse(z, tokens));
  auto bc_sum = bc_nll(logits, actions, mask);

  auto zero = torch::zeros({b}, bc_sum.options());
  auto kl = torch::where(lab_route, zero, kl_divergence(posterior, prior));
  // Stop gradient: the alignment target is a constant draw from the label encoder.
  auto target = z_label.detach();
  if (align_target.defined()) {
    require(align_target.sizes() == z_label.sizes(), "align_target must be [batch, latent_dim]");
    target = align_target.detach().to(dtype);
  }
  auto align = torch::where(lab_route, log_prob(posterior, target), zero);
  auto item_loss = torch::where(lab_route, bc_sum - weights.beta2 * align, bc_sum + weights.beta1 * kl);

  BatchTerms terms;
  terms.bc_sum = bc_sum;
  terms.lengths = lengths.to(dtype);
  terms.kl = kl;
  terms.align_logp = align;
  terms.item_loss = item_loss;
  terms.lab_route = lab_route;
  terms.active = active;
  terms.posterior = posterior;
  terms.label = label;
  terms.z = z;

  auto active_idx = active.nonzero().squeeze(1);
  const auto n_active = active_idx.numel();
  if (n_active == 0) {
    terms.total = torch::zeros({}, bc_sum.options());
    return terms;
  }
  // Summing in sorted order makes the total independent of batch order.
  auto active_items = item_loss.index_select(0, active_idx);
  auto order = std::get<1>(torch::sort(active_items.detach(), /*stable=*/true, 0, false));
  terms.total = active_items.index_select(0, order).sum() / static_cast<double>(n_active);

  auto d_bc = bc_sum.detach().to(torch::kDouble);
  auto d_len = terms.lengths.detach().to(torch::kDouble);
  auto d_active = active.to(torch::kDouble);
  auto d_dem = (active & lab_route.logical_not()).to(torch::kDouble);
  auto d_lab = (active & lab_route).to(torch::kDouble);
  auto& bd = terms.breakdown;
  bd.bc = ((d_bc * d_active).sum() / (d_len * d_active).sum()).item<double>();
  const double dem_len = (d_len * d_dem).sum().item<double>();
  // Single-precision roundoff can leave a vanishing KL slightly negative.
  bd.kl = dem_len > 0 ? std::max(0.0, ((kl.detach().to(torch::kDouble) * d_dem).sum() / dem_len).item<double>())
                      : 0.0;
  const double n_lab = d_lab.sum().item<double>();
  bd.align = n_lab > 0 ? ((align.detach().to(torch::kDouble) * d_lab).sum() / n_lab).item<double>() : 0.0;
  bd.total = terms.total.item<double>();
  return terms;
}

LossResult total_loss(IntentModel& model, const Batch& batch, const torch::Tensor& noise,
                      const LossWeights& weights, const torch::Tensor& align_target) {
  auto terms = compute_terms(model, batch, noise, weights, align_target);
  return {terms.total, terms.breakdown};
}

LossResult loss_dem(IntentModel& model, const Trajectory& trajectory, const torch::Tensor& noise,
                    const LossWeights& weights) {
  Batch batch;
  batch.unlabeled.push_back(trajectory);
  auto w = weights;
  w.objective = Objective::Full;
  return total_loss(model, batch, noise.reshape({1, -1}), w);
}

LossResult loss_lab(IntentModel& model, const Trajectory& trajectory, const Label& label, const torch::Tensor& noise,
                    const LossWeights& weights) {
  Batch batch;
  batch.labeled.push_back({trajectory, label});
  auto w = weights;
  w.objective = Objective::Full;
  return total_loss(model, batch, noise.reshape({1, -1}), w);
}

LossResult loss_lab(IntentModel& model, const Trajectory& trajectory, const torch::Tensor& noise,
                    const LossWeights& weights) {
  const auto labels = trajectory.labels();
  require(!labels.empty(), "loss_lab requires a labeled trajectory");
  return loss_lab(model, trajectory, labels.front(), noise, weights);
}

double r_metric(double bc, double kl) {
  require(bc >= 0.0 && kl >= -1e-9, "r_metric: bc and kl must be nonnegative");
  kl = std::max(kl, 0.0);
  if (bc + kl == 0.0) throw DegenerateInput("r_metric: bc + kl == 0");
  return bc / (bc + kl);
}

}  // namespace intent
