#include "intent/config.hpp"
#include "intent/trainer.hpp"

#include "doctest_torch.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

using namespace intent;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(INTENT_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  size_t n = 0;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string line_with(const std::string& text, const std::string& key) {
  const auto pos = text.find(key);
  if (pos == std::string::npos) return {};
  return text.substr(pos, text.find('\n', pos) - pos);
}

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / "intent-cli-tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

const char* kTinyConfig = R"({
  "data": {"expert": 12, "medium": 4, "novice": 4, "labeled_fraction": 0.5},
  "train": {"steps": 4, "batch_size": 2},
  "eval": {"episodes": 3}
})";

fs::path only_run_dir(const fs::path& parent) {
  for (const auto& e : fs::directory_iterator(parent))
    if (e.is_directory()) return e.path();
  return {};
}

}  // namespace

TEST_CASE("gen-data is deterministic and reports its summary") {
  auto dir = fresh_dir("gen");
  write_text(dir / "c.json", kTinyConfig);
  auto a = cli("gen-data --config " + (dir / "c.json").string() + " --out " + (dir / "a.bin").string() + " --seed 3");
  auto b = cli("gen-data --config " + (dir / "c.json").string() + " --out " + (dir / "b.bin").string() + " --seed 3");
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(line_with(a.out, "digest") == line_with(b.out, "digest"));
  CHECK(line_with(a.out, "labeled").find("10") != std::string::npos);
  CHECK(line_with(a.out, "n ").find("20") != std::string::npos);
  auto ds = load_dataset(dir / "a.bin");
  CHECK(ds.size() == 20);
  CHECK(ds.labeled_count() == 10);
  auto c = cli("gen-data --config " + (dir / "c.json").string() + " --out " + (dir / "c.bin").string() + " --seed 4");
  CHECK(line_with(a.out, "digest") != line_with(c.out, "digest"));
}

TEST_CASE("train, diagnose, eval and embed end to end") {
  auto dir = fresh_dir("e2e");
  const auto cfg = (dir / "c.json").string();
  write_text(cfg, kTinyConfig);
  const auto data = (dir / "d.bin").string();
  REQUIRE(cli("gen-data --config " + cfg + " --out " + data).code == 0);

  auto t1 = cli("train --config " + cfg + " --data " + data + " --out " + (dir / "r1").string() + " --seed 2");
  REQUIRE(t1.code == 0);
  const auto run = only_run_dir(dir / "r1");
  CHECK(run.filename().string().rfind("run-", 0) == 0);
  CHECK(run.filename().string().find("-s2") != std::string::npos);
  CHECK(fs::exists(run / "checkpoint.bin"));
  CHECK(fs::exists(run / "config.resolved.json"));
  CHECK(read_telemetry(run / "telemetry.ndjson").size() == 4);
  CHECK(load_run_config(run / "config.resolved.json").train.seed == 2);

  auto t2 = cli("train --config " + cfg + " --data " + data + " --out " + (dir / "r2").string() + " --seed 2");
  REQUIRE(t2.code == 0);
  CHECK(line_with(t1.out, "telemetry") == line_with(t2.out, "telemetry"));

  auto d = cli("diagnose --run " + run.string());
  CHECK(d.code == 0);
  CHECK(d.out.find("verdict") != std::string::npos);

  const auto ckpt = (run / "checkpoint.bin").string();
  auto e = cli("eval --checkpoint " + ckpt + " --config " + cfg + " --mode text --out " + (dir / "rep").string());
  CHECK(e.code == 0);
  CHECK(fs::exists(dir / "rep" / "report.txt"));
  CHECK(fs::exists(dir / "rep" / "report.json"));
  CHECK(cli("eval --checkpoint " + ckpt + " --config " + cfg + " --mode displaced --episodes 2 --out " +
            (dir / "rep2").string())
            .code == 0);

  auto m = cli("embed --checkpoint " + ckpt + " --data " + data + " --out " + (dir / "z.csv").string());
  CHECK(m.code == 0);
  std::ifstream csv(dir / "z.csv");
  std::string header, row;
  std::getline(csv, header);
  CHECK(header.rfind("index,", 0) == 0);
  int rows = 0;
  while (std::getline(csv, row)) rows += row.empty() ? 0 : 1;
  CHECK(rows == 20);
}

TEST_CASE("an interrupted cli run resumes") {
  auto dir = fresh_dir("resume");
  const auto cfg = (dir / "c.json").string();
  write_text(cfg, kTinyConfig);
  const auto data = (dir / "d.bin").string();
  REQUIRE(cli("gen-data --config " + cfg + " --out " + data).code == 0);
  const auto out = (dir / "r").string();
  REQUIRE(cli("train --config " + cfg + " --data " + data + " --out " + out + " --stop-at 2").code == 0);
  const auto run = only_run_dir(dir / "r");
  CHECK(read_telemetry(run / "telemetry.ndjson").size() == 2);
  auto r = cli("train --config " + cfg + " --data " + data + " --out " + out + " --resume");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("resuming") != std::string::npos);
  auto rows = read_telemetry(run / "telemetry.ndjson");
  REQUIRE(rows.size() == 4);
  for (size_t i = 0; i < rows.size(); ++i) CHECK(rows[i].step == static_cast<int64_t>(i));
}

TEST_CASE("exit codes for config and runtime errors") {
  auto dir = fresh_dir("errors");
  CHECK(cli("").code == 2);
  CHECK(cli("frobnicate").code == 2);
  CHECK(cli("gen-data").code == 2);
  write_text(dir / "bad.json", R"({"train": {"stepz": 3}})");
  CHECK(cli("gen-data --config " + (dir / "bad.json").string() + " --out " + (dir / "x.bin").string()).code == 2);
  write_text(dir / "rendered.json", R"({"env": {"format": "rendered"}, "data": {"expert": 4}})");
  write_text(dir / "tiny.json", R"({"data": {"expert": 4}})");
  const auto data = (dir / "d.bin").string();
  REQUIRE(cli("gen-data --config " + (dir / "tiny.json").string() + " --out " + data).code == 0);
  CHECK(cli("train --config " + (dir / "rendered.json").string() + " --data " + data + " --out " +
            (dir / "r").string())
            .code == 2);
  CHECK(cli("diagnose --run " + (dir / "nowhere").string()).code == 3);
  write_text(dir / "junk.bin", "junk");
  CHECK(cli("eval --checkpoint " + (dir / "junk.bin").string() + " --out " + (dir / "e").string()).code == 3);
}
