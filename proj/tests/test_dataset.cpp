#include "intent/dataset.hpp"

#include "doctest_torch.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace intent;

namespace {

Demonstration with_return(double r) {
  Demonstration d;
  d.trajectory.observations = torch::zeros({1, 13, 7, 7});
  d.trajectory.actions = {0};
  d.trajectory.ret = ReturnValue{r};
  d.raw_return = r;
  return d;
}

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "intent-tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("returns normalise to zero mean and unit std") {
  Dataset ds;
  for (double r : {1.0, 2.0, 3.0}) ds.items.push_back(with_return(r));
  auto n = normalize_returns(ds);
  CHECK(n.items[0].trajectory.ret->value == doctest::Approx(-1.2247).epsilon(1e-4));
  CHECK(n.items[1].trajectory.ret->value == doctest::Approx(0.0));
  CHECK(n.items[2].trajectory.ret->value == doctest::Approx(1.2247).epsilon(1e-4));
  CHECK(n.meta.return_mean == doctest::Approx(2.0));
  CHECK(n.meta.return_std == doctest::Approx(std::sqrt(2.0 / 3.0)));
  const auto [mean, sd] = return_label_stats(n);
  CHECK(std::abs(mean) < 1e-12);
  CHECK(sd == doctest::Approx(1.0).epsilon(1e-12));
  // Normalising twice keeps the labels and composes the affine map.
  auto twice = normalize_returns(n);
  for (size_t i = 0; i < 3; ++i)
    CHECK(twice.items[i].trajectory.ret->value == doctest::Approx(n.items[i].trajectory.ret->value).epsilon(1e-12));
  CHECK(twice.meta.return_mean == doctest::Approx(2.0));
  CHECK(twice.meta.return_std == doctest::Approx(std::sqrt(2.0 / 3.0)));
}

TEST_CASE("constant returns are degenerate") {
  Dataset ds;
  for (int i = 0; i < 3; ++i) ds.items.push_back(with_return(0.5));
  CHECK_THROWS_AS(normalize_returns(ds), DegenerateInput);
  Dataset single;
  single.items.push_back(with_return(1.0));
  CHECK_THROWS_AS(normalize_returns(single), ContractViolation);
}

TEST_CASE("normalised return labels are raw returns under the stored map") {
  auto ds = normalize_returns(generate_demonstrations({}, {20, 20, 20}, 3));
  for (const auto& d : ds.items)
    CHECK(d.trajectory.ret->value * ds.meta.return_std + ds.meta.return_mean ==
          doctest::Approx(d.raw_return).epsilon(1e-12));
}

TEST_CASE("strip_labels keeps floor(rho n) labeled items") {
  auto ds = generate_demonstrations({}, {100, 0, 0}, 1);
  for (double rho : {0.0, 0.29, 0.3, 0.5, 0.999, 1.0}) {
    auto s = strip_labels(ds, rho, 4);
    CHECK(s.labeled_count() == static_cast<size_t>(std::floor(rho * 100 + 1e-9)));
    CHECK(s.meta.labeled_fraction == rho);
    for (const auto& d : s.items) CHECK(d.trajectory.text.has_value() == d.trajectory.ret.has_value());
  }
  CHECK(strip_labels(ds, 0.5, 4).labeled_count() == 50);
  auto a = strip_labels(ds, 0.5, 4), b = strip_labels(ds, 0.5, 4);
  for (size_t i = 0; i < ds.size(); ++i) CHECK(a.items[i].trajectory.labeled() == b.items[i].trajectory.labeled());
  CHECK_THROWS_AS(strip_labels(ds, 1.5, 0), ContractViolation);
  CHECK_THROWS_AS(strip_labels(ds, -0.1, 0), ContractViolation);
}

TEST_CASE("batches carry the labeled share in expectation") {
  auto ds = strip_labels(generate_demonstrations({}, {200, 0, 0}, 2), 0.3, 5);
  std::mt19937_64 rng(11);
  size_t labeled = 0, total = 0;
  for (int i = 0; i < 400; ++i) {
    auto b = make_batch(ds, 16, 32, LabelMode::Text, rng);
    CHECK(b.size() == 16);
    labeled += b.labeled.size();
    total += b.size();
  }
  const double share = labeled / double(total);
  CHECK(std::abs(share - 0.3) < 4 * std::sqrt(0.3 * 0.7 / double(total)));
}

TEST_CASE("mixed label mode draws both modalities") {
  auto ds = generate_demonstrations({}, {50, 0, 0}, 6);
  std::mt19937_64 rng(3);
  size_t text = 0, ret = 0;
  for (int i = 0; i < 100; ++i)
    for (const auto& l : make_batch(ds, 16, 32, LabelMode::Mixed, rng).labeled)
      (std::holds_alternative<TextTokens>(l.label) ? text : ret)++;
  CHECK(text + ret == 1600);
  CHECK(std::abs(text / 1600.0 - 0.5) < 0.05);
  for (const auto& l : make_batch(ds, 8, 32, LabelMode::Return, rng).labeled)
    CHECK(std::holds_alternative<ReturnValue>(l.label));
}

TEST_CASE("batch chunks are contiguous windows that replay in the environment") {
  auto ds = generate_demonstrations({}, {30, 30, 30}, 7);
  std::mt19937_64 rng(8);
  for (int i = 0; i < 20; ++i) {
    auto b = make_batch(ds, 4, 5, LabelMode::Text, rng);
    for (const auto& item : b.labeled) {
      const auto& c = item.chunk;
      CHECK(c.length() >= 1);
      CHECK(c.length() <= 5);
      CHECK(static_cast<size_t>(c.observations.size(0)) == c.actions.size());
      // Locate the source trajectory and offset, then replay from there.
      bool found = false;
      for (const auto& d : ds.items) {
        const auto& t = d.trajectory;
        if (t.length() < c.length()) continue;
        for (int64_t s = 0; s + c.length() <= t.length() && !found; ++s) {
          if (!torch::equal(t.observations.narrow(0, s, c.length()), c.observations)) continue;
          if (!std::equal(c.actions.begin(), c.actions.end(), t.actions.begin() + s)) continue;
          GridEnv env(d.spec);
          for (int64_t k = 0; k < s; ++k) env.step(t.actions[static_cast<size_t>(k)]);
          bool replay_ok = true;
          for (int64_t k = 0; k < c.length(); ++k) {
            replay_ok = replay_ok && torch::equal(env.observe(), c.observations[k]);
            env.step(c.actions[static_cast<size_t>(k)]);
          }
          found = replay_ok;
        }
        if (found) break;
      }
      CHECK(found);
    }
  }
}

TEST_CASE("generation is deterministic per seed and labels every item") {
  auto a = generate_demonstrations({}, {5, 5, 5}, 42);
  auto b = generate_demonstrations({}, {5, 5, 5}, 42);
  REQUIRE(a.size() == 15);
  CHECK(a.labeled_count() == 15);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(torch::equal(a.items[i].trajectory.observations, b.items[i].trajectory.observations));
    CHECK(a.items[i].trajectory.actions == b.items[i].trajectory.actions);
    CHECK(a.items[i].raw_return == b.items[i].raw_return);
  }
  CHECK(a.items[0].quality == Quality::Expert);
  CHECK(a.items[14].quality == Quality::Novice);
  for (int i = 0; i < 5; ++i) CHECK(a.items[static_cast<size_t>(i)].success);
}

TEST_CASE("dataset file round trip") {
  auto ds = strip_labels(normalize_returns(generate_demonstrations({}, {6, 6, 6}, 9)), 0.5, 2);
  const auto path = temp_file("roundtrip.bin");
  save_dataset(ds, path);
  auto back = load_dataset(path);
  REQUIRE(back.size() == ds.size());
  CHECK(back.meta == ds.meta);
  CHECK(back.meta.hash() == ds.meta.hash());
  for (size_t i = 0; i < ds.size(); ++i) {
    const auto &x = ds.items[i], &y = back.items[i];
    CHECK(torch::equal(x.trajectory.observations, y.trajectory.observations));
    CHECK(x.trajectory.actions == y.trajectory.actions);
    CHECK(x.trajectory.text == y.trajectory.text);
    CHECK(x.trajectory.ret == y.trajectory.ret);
    CHECK(x.raw_return == y.raw_return);
    CHECK(x.quality == y.quality);
    CHECK(x.success == y.success);
    CHECK(x.spec.agent_start == y.spec.agent_start);
  }
}

TEST_CASE("corrupt dataset files are rejected") {
  const auto path = temp_file("corrupt.bin");
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTADATASET";
  }
  CHECK_THROWS(load_dataset(path));
  CHECK_THROWS(load_dataset(temp_file("does-not-exist.bin")));
  auto ds = generate_demonstrations({}, {2, 0, 0}, 1);
  save_dataset(ds, path);
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size / 2);
  CHECK_THROWS(load_dataset(path));
}

TEST_CASE("meta hash tracks every field") {
  DatasetMeta a;
  a.vocabulary = default_vocabulary().words();
  auto b = a;
  CHECK(a.hash() == b.hash());
  b.return_std = 2.0;
  CHECK(a.hash() != b.hash());
  b = a;
  b.obs_format = ObservationFormat::Rendered;
  CHECK(a.hash() != b.hash());
  b = a;
  b.labeled_fraction = 0.5;
  CHECK(a.hash() != b.hash());
}
