#include "intent/trainer.hpp"

#include "doctest_torch.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace intent;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "intent-tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

Dataset expert_data(int n, uint64_t seed, double rho = 0.5) {
  return strip_labels(normalize_returns(generate_demonstrations({}, {n, 0, 0}, seed)), rho, seed);
}

TrainConfig short_run(int64_t steps, uint64_t seed = 0) {
  TrainConfig tc;
  tc.steps = steps;
  tc.batch_size = 4;
  tc.seed = seed;
  return tc;
}

bool same_parameters(IntentModel& a, IntentModel& b, double tol) {
  auto pa = a->named_parameters(), pb = b->named_parameters();
  if (pa.size() != pb.size()) return false;
  for (const auto& item : pa) {
    const auto& other = pb[item.key()];
    if (tol == 0.0 ? !torch::equal(item.value(), other)
                   : (item.value() - other).abs().max().item<double>() > tol)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("warmup is scaled to the run length") {
  TrainConfig tc;
  tc.steps = 2000;
  tc.warmup_steps = 2000;
  tc.learning_rate = 1e-3;
  CHECK(tc.effective_warmup() == 400);
  CHECK(tc.learning_rate_at(0) == doctest::Approx(1e-3 / 400));
  CHECK(tc.learning_rate_at(199) == doctest::Approx(0.5e-3));
  CHECK(tc.learning_rate_at(399) == doctest::Approx(1e-3));
  CHECK(tc.learning_rate_at(1500) == doctest::Approx(1e-3));
  tc.steps = 50000;
  CHECK(tc.effective_warmup() == 2000);
  tc.steps = 1;
  CHECK(tc.effective_warmup() == 1);
  CHECK(tc.learning_rate_at(0) == doctest::Approx(1e-3));
}

TEST_CASE("train config validation") {
  TrainConfig tc;
  tc.beta1 = -1;
  CHECK_THROWS_AS(tc.validate(), ContractViolation);
  tc = {};
  tc.batch_size = 0;
  CHECK_THROWS_AS(tc.validate(), ContractViolation);
  tc = {};
  tc.learning_rate = NAN;
  CHECK_THROWS_AS(tc.validate(), ContractViolation);
  tc = {};
  tc.learning_rate = 0.0;
  CHECK_NOTHROW(tc.validate());
}

TEST_CASE("relative error formula and toy quadratic") {
  CHECK(gradient_relative_error(1.0, 1.0) == 0.0);
  CHECK(gradient_relative_error(2.0, 1.0) == doctest::Approx(0.5));
  CHECK(gradient_relative_error(0.0, 1e-12) == doctest::Approx(1e-4));
  auto a = torch::tensor({0.5, -1.5, 2.0}, torch::kDouble).requires_grad_();
  auto b = torch::tensor({{1.0, 2.0}, {-0.3, 0.7}}, torch::kDouble).requires_grad_();
  auto loss = [&] { return (a * a * torch::arange(1, 4, torch::kDouble)).sum() + (b * b).sum() * 0.5 + a.sum() * b.sum(); };
  auto r = grad_check(loss, {{"a", a}, {"b", b}}, 1e-5, 7, 0);
  CHECK(r.checked == 7);
  CHECK(r.max_relative_error < 1e-8);
  CHECK_THROWS_AS(grad_check(loss, {{"f", torch::zeros({2}).requires_grad_()}}), ContractViolation);
}

TEST_CASE("shift-invariant parameters count as agreeing zero gradients") {
  auto x = torch::tensor({0.3, -1.2, 0.8}, torch::kDouble).requires_grad_();
  auto shift = torch::tensor({0.7}, torch::kDouble).requires_grad_();
  // log_softmax is invariant to adding a constant to every logit.
  auto loss = [&] { return torch::log_softmax(x + shift, 0)[1] * 3.0; };
  auto r = grad_check(loss, {{"x", x}, {"shift", shift}}, 1e-5, 8, 0);
  CHECK(r.zero_entries >= 1);
  CHECK(r.zeros_agree);
  CHECK(r.checked + r.zero_entries == 8);
  CHECK(r.max_relative_error < 1e-8);
  CHECK(central_difference_roundoff(100.0, 1e-5) == doctest::Approx(256.0 * 2.220446049250313e-16 * 100.0 / 2e-5));
  CHECK(central_difference_roundoff(1e-3, 1e-5) == central_difference_roundoff(1.0, 1e-5));
}

TEST_CASE("analytic gradients of the training loss match finite differences") {
  auto data = expert_data(8, 3, 0.5);
  std::mt19937_64 rng(2);
  auto batch = make_batch(data, 4, 6, LabelMode::Mixed, rng);
  REQUIRE(!batch.labeled.empty());
  REQUIRE(!batch.unlabeled.empty());
  torch::manual_seed(1);
  // Unit initial latent scale; the loss at this point is O(10).
  ModelConfig mc;
  mc.log_std_init = 0.0;
  IntentModel model(mc);
  model->to(torch::kDouble);
  std::mt19937_64 nrng(5);
  auto noise = standard_noise({static_cast<int64_t>(batch.size()), 16}, nrng, torch::kDouble);
  auto r = grad_check(model, batch, noise, {}, 1e-5, 256, 0);
  MESSAGE("grad check worst " << r.max_relative_error << " at " << r.worst_parameter);
  CHECK(r.checked + r.zero_entries == 256);
  CHECK(r.checked >= 200);
  CHECK(r.zeros_agree);
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("a zero learning rate leaves parameters untouched") {
  auto data = expert_data(10, 4);
  auto tc = short_run(3);
  tc.learning_rate = 0.0;
  Trainer trainer(ModelConfig{}, tc, data.meta);
  torch::manual_seed(0);
  IntentModel before(ModelConfig{});
  {
    torch::NoGradGuard g;
    auto src = trainer.model()->named_parameters();
    for (auto& p : before->named_parameters()) p.value().copy_(src[p.key()]);
  }
  auto rng = trainer.step_rng();
  trainer.train_step(make_batch(data, 4, 32, LabelMode::Text, rng));
  CHECK(trainer.step() == 1);
  CHECK(same_parameters(trainer.model(), before, 0.0));
}

TEST_CASE("training is deterministic for a fixed seed") {
  auto data = expert_data(12, 5);
  auto dir = temp_dir("determinism");
  auto a = fit(data, ModelConfig{}, short_run(6, 3), {dir / "a.ndjson", std::nullopt});
  auto b = fit(data, ModelConfig{}, short_run(6, 3), {dir / "b.ndjson", std::nullopt});
  CHECK(same_parameters(a.model(), b.model(), 0.0));
  auto ta = read_telemetry(dir / "a.ndjson"), tb = read_telemetry(dir / "b.ndjson");
  REQUIRE(ta.size() == 6);
  REQUIRE(tb.size() == 6);
  for (size_t i = 0; i < ta.size(); ++i) {
    CHECK(ta[i].step == static_cast<int64_t>(i));
    CHECK(ta[i].total == tb[i].total);
    CHECK(ta[i].labeled + ta[i].unlabeled == 4);
  }
  auto c = fit(data, ModelConfig{}, short_run(6, 4));
  CHECK_FALSE(same_parameters(a.model(), c.model(), 0.0));
}

TEST_CASE("an interrupted run resumes to the uninterrupted result") {
  auto data = expert_data(12, 6);
  auto dir = temp_dir("resume");
  auto full = fit(data, ModelConfig{}, short_run(10, 1));
  auto part = fit(data, ModelConfig{}, short_run(10, 1), {dir / "t.ndjson", 4});
  CHECK(part.step() == 4);
  part.save_checkpoint(dir / "ckpt.bin");
  auto loaded = Trainer::load_checkpoint(dir / "ckpt.bin");
  CHECK(loaded.step() == 4);
  CHECK(same_parameters(loaded.model(), part.model(), 0.0));
  resume_fit(loaded, data, {dir / "t.ndjson", std::nullopt});
  CHECK(loaded.step() == 10);
  CHECK(same_parameters(loaded.model(), full.model(), 1e-6));
  auto rows = read_telemetry(dir / "t.ndjson");
  REQUIRE(rows.size() == 10);
  for (size_t i = 0; i < rows.size(); ++i) CHECK(rows[i].step == static_cast<int64_t>(i));
}

TEST_CASE("checkpoints refuse a different dataset and corrupt files") {
  auto data = expert_data(6, 7);
  auto dir = temp_dir("ckpt");
  auto trainer = fit(data, ModelConfig{}, short_run(2));
  trainer.save_checkpoint(dir / "c.bin");
  auto loaded = Trainer::load_checkpoint(dir / "c.bin");
  CHECK(loaded.dataset_meta() == data.meta);
  CHECK(loaded.train_config().steps == 2);
  auto other = expert_data(6, 8);
  CHECK_THROWS_AS(resume_fit(loaded, other), ContractViolation);
  {
    std::ofstream out(dir / "bad.bin", std::ios::binary);
    out << "garbage";
  }
  CHECK_THROWS(Trainer::load_checkpoint(dir / "bad.bin"));
  CHECK_THROWS(Trainer::load_checkpoint(dir / "missing.bin"));
}

TEST_CASE("a non-finite loss aborts with a dump") {
  auto data = expert_data(6, 9);
  auto dir = temp_dir("abort");
  Trainer trainer(ModelConfig{}, short_run(5), data.meta);
  trainer.set_dump_directory(dir);
  {
    torch::NoGradGuard g;
    trainer.model()->policy->named_parameters()["head.bias"].fill_(NAN);
  }
  auto rng = trainer.step_rng();
  try {
    trainer.train_step(make_batch(data, 4, 32, LabelMode::Text, rng));
    FAIL("expected TrainingAborted");
  } catch (const TrainingAborted& e) {
    CHECK(std::filesystem::exists(e.dump_path));
    CHECK(e.dump_path.parent_path() == dir);
  }
  CHECK(trainer.step() == 0);
}

TEST_CASE("telemetry rows round trip and encode NaN as null") {
  DiagnosticsRecord r{7, 1.25, 0.5, -3.0, NAN, 1.3, 1e-4, 3, 1};
  const auto line = to_ndjson(r);
  CHECK(line.find("\"R\":null") != std::string::npos);
  auto back = parse_diagnostics(line);
  CHECK(back.step == 7);
  CHECK(back.bc == 1.25);
  CHECK(back.kl == 0.5);
  CHECK(back.align == -3.0);
  CHECK(std::isnan(back.r));
  CHECK(back.labeled == 3);
  CHECK(back.unlabeled == 1);
  CHECK_THROWS(parse_diagnostics("{not json"));
}

TEST_CASE("behaviour cloning loss falls on expert data") {
  auto data = expert_data(200, 10, 1.0);
  TrainConfig tc;
  tc.steps = 500;
  tc.seed = 2;
  auto dir = temp_dir("learning");
  fit(data, ModelConfig{}, tc, {dir / "t.ndjson", std::nullopt});
  auto rows = read_telemetry(dir / "t.ndjson");
  REQUIRE(rows.size() == 500);
  double tail = 0.0;
  for (size_t i = rows.size() - 50; i < rows.size(); ++i) tail += rows[i].bc;
  tail /= 50.0;
  MESSAGE("bc start " << rows.front().bc << " tail " << tail);
  CHECK(tail < 0.5 * rows.front().bc);
}
