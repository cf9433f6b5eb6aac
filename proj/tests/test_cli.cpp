#include <doctest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "ptgan/image_io.hpp"
#include "ptgan/training.hpp"
#include "support.hpp"

using namespace ptgan;
using ptgan::testing::TempDir;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result ptgan_cli(const TempDir& ws, std::vector<std::string> args) {
  args.insert(args.begin(), {"--workspace", ws.path().string()});
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

void write(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kSynth = R"({"num_identities": 6, "images_per_identity_per_camera": 2, "image_size": 32, "seed": 4})";
const char* kTrain =
    R"({"image_size": 32, "base_channels": 4, "discriminator_channels": 4, "num_residual_blocks": 1,
        "epochs": 2, "mask_source": {"kind": "exact_synthetic"}})";

// synth + split + camera selection shared by several cases
void prepare(const TempDir& ws) {
  write(ws / "synth.json", kSynth);
  write(ws / "train.json", kTrain);
  REQUIRE(ptgan_cli(ws, {"synth", "--config", "synth.json", "--out", "data"}).code == 0);
  REQUIRE(ptgan_cli(ws, {"split", "--manifest", "data/synthB/manifest.jsonl", "--ratio", "0.5", "--out", "splitB"}).code ==
          0);
  REQUIRE(ptgan_cli(ws, {"select", "--manifest", "splitB/train.jsonl", "--camera", "1", "--redact", "--out", "b1.jsonl"})
              .code == 0);
}

}  // namespace

TEST_CASE("synth writes both domains deterministically and rejects bad fields") {
  TempDir ws("cli_synth");
  write(ws / "synth.json", kSynth);
  const auto r1 = ptgan_cli(ws, {"synth", "--config", "synth.json", "--out", "one"});
  REQUIRE(r1.code == 0);
  for (const char* tag : {"synthA", "synthB"}) {
    CHECK(std::filesystem::exists(ws / (std::string("one/") + tag + "/manifest.jsonl")));
    CHECK(std::filesystem::is_directory(ws / (std::string("one/") + tag + "/masks")));
  }
  CHECK(std::filesystem::exists(ws / "one/synth_config.json"));
  const auto r2 = ptgan_cli(ws, {"synth", "--config", "synth.json", "--out", "two"});
  REQUIRE(r2.code == 0);
  const auto a1 = load_manifest(ws / "one/synthA/manifest.jsonl");
  const auto a2 = load_manifest(ws / "two/synthA/manifest.jsonl");
  REQUIRE(a1.records.size() == 24);
  for (size_t i = 0; i < a1.records.size(); ++i) {
    CHECK(file_checksum(a1.records[i].image_path) == file_checksum(a2.records[i].image_path));
  }
  // the printed summary carries the same checksums, not paths
  CHECK(r1.out.substr(0, r1.out.find("manifest")) == r2.out.substr(0, r2.out.find("manifest")));

  write(ws / "bad.json", R"({"num_identities": 6, "imagesize": 32})");
  const auto bad = ptgan_cli(ws, {"synth", "--config", "bad.json"});
  CHECK(bad.code == cli::kValidation);
  CHECK(bad.err.find("imagesize") != std::string::npos);
  write(ws / "broken.json", "{\n  \"num_identities\": 6,\n  oops\n}");
  const auto broken = ptgan_cli(ws, {"synth", "--config", "broken.json"});
  CHECK(broken.code == cli::kValidation);
  CHECK(broken.err.find("line 3") != std::string::npos);
}

TEST_CASE("workspace comes from the environment when no flag is given") {
  TempDir ws("cli_env");
  write(ws / "synth.json", kSynth);
  ::setenv("PTGAN_WORKSPACE", ws.path().c_str(), 1);
  std::ostringstream out, err;
  CHECK(cli::run({"synth", "--config", "synth.json", "--out", "envdata"}, out, err) == 0);
  ::unsetenv("PTGAN_WORKSPACE");
  CHECK(std::filesystem::exists(ws / "envdata/synthA/manifest.jsonl"));
}

TEST_CASE("train, resume, transfer and conflicting flags") {
  TempDir ws("cli_train");
  prepare(ws);
  const auto t = ptgan_cli(ws, {"train", "--a", "data/synthA/manifest.jsonl", "--b", "b1.jsonl", "--config",
                                "train.json", "--out", "gan1"});
  REQUIRE(t.code == 0);
  CHECK(std::filesystem::exists(ws / "gan1/epoch_001.ckpt"));
  CHECK(std::filesystem::exists(ws / "gan1/epoch_002.ckpt"));
  CHECK(std::filesystem::exists(ws / "gan1/effective_config.json"));
  const long long steps = load_checkpoint(ws / "gan1/final.ckpt").info.step;
  CHECK(steps == 12);

  const auto resumed = ptgan_cli(ws, {"train", "--a", "data/synthA/manifest.jsonl", "--b", "b1.jsonl", "--config",
                                      "train.json", "--out", "gan1r", "--resume", "gan1/final.ckpt", "--epochs", "3"});
  REQUIRE(resumed.code == 0);
  const auto info = load_checkpoint(ws / "gan1r/final.ckpt").info;
  CHECK(info.step == steps + 6);
  CHECK(info.epoch == 3);
  const auto effective = nlohmann::json::parse(slurp(ws / "gan1r/effective_config.json"));
  CHECK(effective["epochs"].get<int>() == 3);

  const auto strict = ptgan_cli(ws, {"train", "--a", "data/synthA/manifest.jsonl", "--b", "b1.jsonl", "--config",
                                     "train.json", "--out", "x", "--strict-paper", "--history", "50"});
  CHECK(strict.code == cli::kValidation);
  CHECK(strict.err.find("history_buffer_size") != std::string::npos);

  const auto single = ptgan_cli(ws, {"transfer", "--src", "data/synthA/manifest.jsonl", "--checkpoint",
                                     "gan1/final.ckpt", "--out", "tr1"});
  REQUIRE(single.code == 0);
  CHECK(load_manifest(ws / "tr1/manifest.jsonl").records.size() == 24);
  CHECK(std::filesystem::exists(ws / "tr1/transfer_config.json"));
  const auto pc = ptgan_cli(ws, {"transfer", "--src", "data/synthA/manifest.jsonl", "--mode", "per_camera",
                                 "--checkpoint", "1=gan1/final.ckpt", "--checkpoint", "2=gan1r/final.ckpt", "--out",
                                 "trpc"});
  REQUIRE(pc.code == 0);
  CHECK(load_manifest(ws / "trpc/manifest.jsonl").records.size() == 48);

  const auto missing = ptgan_cli(ws, {"transfer", "--src", "data/synthA/manifest.jsonl", "--checkpoint", "nope.ckpt",
                                      "--out", "tr9"});
  CHECK(missing.code != 0);
  CHECK(missing.err.find("nope.ckpt") != std::string::npos);
  CHECK(ptgan_cli(ws, {"transfer", "--src", "data/synthA/manifest.jsonl", "--out", "tr9"}).code == cli::kValidation);
  CHECK(ptgan_cli(ws, {"frobnicate"}).code == cli::kValidation);
}

TEST_CASE("eval and report") {
  TempDir ws("cli_eval");
  prepare(ws);
  write(ws / "recipe.json", R"({"epochs": 8, "seed": 3})");
  std::vector<std::string> names;
  for (int i = 0; i < 4; ++i) {
    const std::string report = "reports/r" + std::to_string(i) + ".json";
    const auto e = ptgan_cli(ws, {"eval", "--train", "data/synthB/manifest.jsonl", "--eval", "splitB/test.jsonl", "--recipe",
                                  "recipe.json", "--report", report, "--seed", std::to_string(i % 2)});
    REQUIRE(e.code == 0);
    names.push_back(report);
  }
  // the embedder has seen the eval identities, so retrieval is perfect
  const auto r0 = load_report(ws / "reports/r0.json");
  CHECK(r0.rank(1) == 1.0);
  CHECK(r0.recipe.epochs == 8);
  CHECK(r0.recipe.seed == 0);
  const auto echoed = nlohmann::json::parse(slurp(ws / "reports/r0.json"));
  CHECK(echoed["recipe"]["epochs"].get<int>() == 8);
  CHECK(std::filesystem::exists(ws / "reports/r0.per_query.csv"));
  // same seed, same report
  CHECK(slurp(ws / "reports/r0.json") == slurp(ws / "reports/r2.json"));

  std::vector<std::string> args{"report"};
  args.insert(args.end(), names.begin(), names.end());
  args.insert(args.end(), {"--csv", "table.csv"});
  const auto rep = ptgan_cli(ws, args);
  REQUIRE(rep.code == 0);
  int lines = 0;
  for (char c : rep.out) lines += c == '\n';
  CHECK(lines == 5);
  CHECK(rep.out.find("Rank-10") != std::string::npos);
  CHECK(rep.out.find("mAP") != std::string::npos);
  const auto rows = cli::read_rows_csv(ws / "table.csv");
  REQUIRE(rows.size() == 4);
  CHECK(rows[1].name == "r1");
  CHECK(rows[0].rank1 == r0.rank(1));
  CHECK(rows[0].map == r0.map_score);
  cli::write_rows_csv(rows, ws / "again.csv");
  CHECK(slurp(ws / "again.csv") == slurp(ws / "table.csv"));

  const auto missing = ptgan_cli(ws, {"report", "reports/r0.json", "reports/gone.json"});
  CHECK(missing.code != 0);
  CHECK(missing.err.find("gone.json") != std::string::npos);
}

TEST_CASE("csv quoting survives awkward names") {
  TempDir ws("cli_csv");
  std::vector<cli::ReportRow> rows{{"a,b", "say \"hi\"", "plain", 0.125, 0.5, 1.0 / 3.0}};
  cli::write_rows_csv(rows, ws / "q.csv");
  const auto back = cli::read_rows_csv(ws / "q.csv");
  REQUIRE(back.size() == 1);
  CHECK(back[0].name == "a,b");
  CHECK(back[0].train == "say \"hi\"");
  CHECK(back[0].map == 1.0 / 3.0);
}
