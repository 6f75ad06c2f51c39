#include "intent/objectives.hpp"

#include "doctest_torch.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace intent;

namespace {

IntentModel small_model(uint64_t seed = 0) {
  torch::manual_seed(seed);
  IntentModel m(ModelConfig{});
  m->to(torch::kDouble);
  return m;
}

Dataset tiny_dataset(uint64_t seed, int n = 8) {
  return normalize_returns(generate_demonstrations({}, {n / 2, n - n / 2, 0}, seed));
}

Trajectory chunk_of(const Demonstration& d, int64_t len) {
  return d.trajectory.window(0, std::min(len, d.trajectory.length()));
}

torch::Tensor noise_rows(int64_t b, uint64_t seed) {
  std::mt19937_64 rng(seed);
  return standard_noise({b, 16}, rng, torch::kDouble);
}

}  // namespace

TEST_CASE("uniform logits give n log |A| nats") {
  auto logits = torch::zeros({1, 4, 5}, torch::kDouble);
  auto actions = torch::tensor({{0, 3, 1, 4}}, torch::kLong);
  auto nll = bc_nll(logits, actions, torch::ones({1, 4}, torch::kDouble));
  CHECK(nll.item<double>() == doctest::Approx(4 * std::log(5.0)).epsilon(1e-12));
  CHECK(nll.item<double>() == doctest::Approx(6.43775).epsilon(1e-6));
}

TEST_CASE("bc_nll ignores masked steps and is never negative") {
  auto logits = torch::randn({3, 6, 5}, torch::kDouble);
  auto actions = torch::randint(0, 5, {3, 6}, torch::kLong);
  auto mask = torch::ones({3, 6}, torch::kDouble);
  mask[1].narrow(0, 2, 4).zero_();
  auto full = bc_nll(logits, actions, mask);
  CHECK((full >= 0).all().item<bool>());
  auto short_row = bc_nll(logits[1].narrow(0, 0, 2).unsqueeze(0), actions[1].narrow(0, 0, 2).unsqueeze(0),
                          torch::ones({1, 2}, torch::kDouble));
  CHECK(full[1].item<double>() == doctest::Approx(short_row.item<double>()).epsilon(1e-12));
}

TEST_CASE("alignment contribution of a standard normal at its mean") {
  const double lp = log_prob(standard_normal(2), torch::zeros({2}, torch::kDouble)).item<double>();
  CHECK(alignment_term(0.1, lp) == doctest::Approx(0.183788).epsilon(1e-5));
}

TEST_CASE("r_metric on a grid") {
  for (double bc : {0.0, 0.1, 1.0, 3.5})
    for (double kl : {0.0, 0.01, 0.5, 2.0}) {
      if (bc + kl == 0.0) {
        CHECK_THROWS_AS(r_metric(bc, kl), DegenerateInput);
        continue;
      }
      const double r = r_metric(bc, kl);
      CHECK(r >= 0.0);
      CHECK(r <= 1.0);
      CHECK(r == doctest::Approx(bc / (bc + kl)));
    }
  CHECK(r_metric(2.0, 0.0) == 1.0);
  CHECK(r_metric(0.0, 1.0) == 0.0);
  CHECK_THROWS_AS(r_metric(-1.0, 1.0), ContractViolation);
}

TEST_CASE("mixed batch total is the mean of per-item losses") {
  auto model = small_model(1);
  auto data = tiny_dataset(1);
  Batch batch;
  batch.unlabeled = {chunk_of(data.items[0], 6), chunk_of(data.items[1], 4)};
  batch.labeled = {{chunk_of(data.items[2], 5), *data.items[2].trajectory.text},
                   {chunk_of(data.items[3], 3), *data.items[3].trajectory.ret}};
  auto noise = noise_rows(4, 3);
  LossWeights w;
  auto batched = total_loss(model, batch, noise, w);
  const double l0 = loss_dem(model, batch.unlabeled[0], noise[0], w).total.item<double>();
  const double l1 = loss_dem(model, batch.unlabeled[1], noise[1], w).total.item<double>();
  const double l2 = loss_lab(model, batch.labeled[0].chunk, batch.labeled[0].label, noise[2], w).total.item<double>();
  const double l3 = loss_lab(model, batch.labeled[1].chunk, batch.labeled[1].label, noise[3], w).total.item<double>();
  CHECK(batched.total.item<double>() == doctest::Approx((l0 + l1 + l2 + l3) / 4).epsilon(1e-10));
}

TEST_CASE("per-item losses match an independent composition") {
  auto model = small_model(2);
  auto data = tiny_dataset(2);
  auto traj = chunk_of(data.items[0], 7);
  auto noise = noise_rows(1, 4)[0];
  LossWeights w{0.3, 0.2, Objective::Full};

  auto post = model->encode_instruction(VideoFrames{traj.observations});
  auto prior = model->prior(traj.observations);
  auto z = sample_reparameterized(post, noise).z;
  const double bc = bc_nll(model, traj, {z}).item<double>();
  const double kl = kl_divergence(post, prior).item<double>();
  CHECK(loss_dem(model, traj, noise, w).total.item<double>() == doctest::Approx(bc + 0.3 * kl).epsilon(1e-10));

  const Label label = *data.items[0].trajectory.text;
  auto enc = model->encode_instruction(as_instruction(label));
  auto zl = sample_reparameterized(enc, noise).z;
  const double bcl = bc_nll(model, traj, {zl}).item<double>();
  const double align = log_prob(post, zl).item<double>();
  CHECK(loss_lab(model, traj, label, noise, w).total.item<double>() ==
        doctest::Approx(bcl + alignment_term(0.2, align)).epsilon(1e-10));
}

TEST_CASE("alignment gradient stops at the label encoder") {
  auto model = small_model(3);
  auto data = tiny_dataset(3);
  Batch batch;
  batch.labeled = {{chunk_of(data.items[0], 5), *data.items[0].trajectory.text},
                   {chunk_of(data.items[1], 5), *data.items[1].trajectory.ret}};
  auto terms = compute_terms(model, batch, noise_rows(2, 5), {});
  auto adapters = model->encoder->label_adapter_parameters();
  auto grads = torch::autograd::grad({terms.align_logp.sum()}, adapters, {}, true, false, true);
  for (const auto& g : grads) CHECK((!g.defined() || g.abs().max().item<double>() == 0.0));
  // The posterior side does receive gradient from the same term.
  auto vis = model->vision->parameters();
  auto vg = torch::autograd::grad({terms.align_logp.sum()}, vis, {}, true, false, true);
  double norm = 0.0;
  for (const auto& g : vg)
    if (g.defined()) norm += g.pow(2).sum().item<double>();
  CHECK(norm > 0.0);
  // Label adapters still learn through behaviour cloning.
  auto bg = torch::autograd::grad({terms.bc_sum.sum()}, adapters, {}, true, false, true);
  double bnorm = 0.0;
  for (const auto& g : bg)
    if (g.defined()) bnorm += g.pow(2).sum().item<double>();
  CHECK(bnorm > 0.0);
}

TEST_CASE("batch total is invariant to item order") {
  auto model = small_model(4);
  auto data = tiny_dataset(4, 12);
  std::mt19937_64 rng(9);
  auto batch = make_batch(data, 8, 32, LabelMode::Mixed, rng);
  batch.labeled.resize(std::min<size_t>(batch.labeled.size(), 4));
  auto noise = noise_rows(static_cast<int64_t>(batch.size()), 6);
  LossWeights w;
  const double base = total_loss(model, batch, noise, w).total.item<double>();
  const auto nu = static_cast<int64_t>(batch.unlabeled.size());
  for (int trial = 0; trial < 5; ++trial) {
    Batch shuffled = batch;
    std::vector<int64_t> pu(batch.unlabeled.size()), pl(batch.labeled.size());
    std::iota(pu.begin(), pu.end(), 0);
    std::iota(pl.begin(), pl.end(), 0);
    std::shuffle(pu.begin(), pu.end(), rng);
    std::shuffle(pl.begin(), pl.end(), rng);
    std::vector<int64_t> rows;
    for (size_t i = 0; i < pu.size(); ++i) {
      shuffled.unlabeled[i] = batch.unlabeled[static_cast<size_t>(pu[i])];
      rows.push_back(pu[i]);
    }
    for (size_t i = 0; i < pl.size(); ++i) {
      shuffled.labeled[i] = batch.labeled[static_cast<size_t>(pl[i])];
      rows.push_back(nu + pl[i]);
    }
    auto perm_noise = noise.index_select(0, torch::tensor(rows, torch::kLong));
    CHECK(total_loss(model, shuffled, perm_noise, w).total.item<double>() == base);
  }
}

TEST_CASE("objective variants route items") {
  auto model = small_model(5);
  auto data = tiny_dataset(5);
  Batch batch;
  batch.unlabeled = {chunk_of(data.items[0], 6)};
  batch.labeled = {{chunk_of(data.items[1], 6), *data.items[1].trajectory.text}};
  auto noise = noise_rows(2, 7);
  LossWeights w;

  w.objective = Objective::NoLab;
  auto nolab = compute_terms(model, batch, noise, w);
  CHECK_FALSE(nolab.lab_route.any().item<bool>());
  const double d1 = loss_dem(model, batch.labeled[0].chunk, noise[1], w).total.item<double>();
  CHECK(nolab.item_loss[1].item<double>() == doctest::Approx(d1).epsilon(1e-10));

  w.objective = Objective::NoDem;
  auto nodem = compute_terms(model, batch, noise, w);
  CHECK_FALSE(nodem.active[0].item<bool>());
  CHECK(nodem.total.item<double>() == doctest::Approx(nodem.item_loss[1].item<double>()).epsilon(1e-12));

  Batch only_dem;
  only_dem.unlabeled = batch.unlabeled;
  auto empty = compute_terms(model, only_dem, noise.narrow(0, 0, 1), w);
  CHECK(empty.total.item<double>() == 0.0);
}

TEST_CASE("zero kl weight leaves pure behaviour cloning") {
  auto model = small_model(6);
  auto data = tiny_dataset(6);
  auto traj = chunk_of(data.items[0], 8);
  auto noise = noise_rows(1, 8)[0];
  Batch batch;
  batch.unlabeled = {traj};
  auto terms = compute_terms(model, batch, noise.unsqueeze(0), {0.0, 0.1, Objective::Full});
  CHECK(terms.total.item<double>() == doctest::Approx(terms.bc_sum[0].item<double>()).epsilon(1e-12));
  CHECK(terms.breakdown.bc == doctest::Approx(terms.bc_sum[0].item<double>() / static_cast<double>(traj.length())).epsilon(1e-12));
}

TEST_CASE("loss inputs are validated") {
  auto model = small_model(7);
  auto data = tiny_dataset(7);
  Batch batch;
  batch.unlabeled = {chunk_of(data.items[0], 4)};
  CHECK_THROWS_AS(total_loss(model, batch, noise_rows(2, 1), {}), ContractViolation);
  CHECK_THROWS_AS(total_loss(model, Batch{}, noise_rows(1, 1), {}), ContractViolation);
  CHECK_THROWS_AS(total_loss(model, batch, noise_rows(1, 1), {-0.1, 0.1, Objective::Full}), ContractViolation);
  Batch too_long;
  too_long.unlabeled = {data.items[0].trajectory};
  too_long.unlabeled[0].observations = torch::zeros({40, 13, 7, 7});
  too_long.unlabeled[0].actions.assign(40, 0);
  CHECK_THROWS_AS(total_loss(model, too_long, noise_rows(1, 1), {}), ContractViolation);
  auto unlabeled = data.items[0].trajectory;
  unlabeled.text.reset();
  unlabeled.ret.reset();
  CHECK_THROWS_AS(loss_lab(model, unlabeled, noise_rows(1, 1)[0], {}), ContractViolation);
}
