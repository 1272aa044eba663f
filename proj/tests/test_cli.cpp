#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

int run(const std::string& args, const fs::path& out = {}) {
  std::string cmd = std::string(HDLM_CLI) + " " + args;
  cmd += out.empty() ? " > /dev/null 2>&1" : " > '" + out.string() + "' 2>/dev/null";
  int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("hdlm_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const std::string kTiny =
    " --set epsilon=0.01 --set d=8 --set num_real=4 --set train_seqs=64 --set eval_seqs=8 --set judge_seqs=64"
    " --set steps=20 --set batch=2 --set dim=16 --set heads=2 --set layers=1 --set num_samples=6 --set mc_samples=2"
    " --set hyperschedule=block --set omega=4 --set levels=4 --set warmup=2 --set log_every=5";

std::vector<nlohmann::json> records(const fs::path& manifest) {
  std::vector<nlohmann::json> out;
  std::ifstream f(manifest);
  std::string line;
  while (std::getline(f, line))
    if (!line.empty()) out.push_back(nlohmann::json::parse(line));
  return out;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("mask export matches the golden files") {
    auto dir = scratch("mask");
    for (std::string w : {"aligned", "shifted"})
      for (std::string k : {"block", "slide"}) {
        std::string starts = k == "block" ? "0,4,8" : "2,5,11";
        std::string stem = k + "_" + w;
        REQUIRE(run("export-mask --config " + w + " --kind " + k + " --d 12 --omega 4 --starts " + starts + " --pbm " +
                    (dir / "m.pbm").string() + " --csv " + (dir / "m.csv").string() + " --slots " +
                    (dir / "s.csv").string()) == 0);
        std::string g = std::string(HDLM_GOLDEN_DIR) + "/" + stem;
        CHECK(slurp(dir / "m.pbm") == slurp(g + ".pbm"));
        CHECK(slurp(dir / "m.csv") == slurp(g + ".csv"));
        CHECK(slurp(dir / "s.csv") == slurp(g + "_slots.csv"));
      }
    CHECK(run("export-mask --config aligned --kind flat --d 12 --omega 4 --starts 0") == 2);
    CHECK(run("export-mask --config aligned --kind slide --d 12 --omega 4 --starts 5,2") == 2);
  }

  TEST_CASE("kv table row") {
    auto dir = scratch("kv");
    REQUIRE(run("kv-table --L 12 --omega 4 --rho 2", dir / "kv.csv") == 0);
    CHECK(slurp(dir / "kv.csv") == "L,omega,rho,calls,cost_nocache,cost_cache\n12,4,2,5,20,12\n");
    REQUIRE(run("kv-table --L 8-9 --omega 1,2 --rho 1", dir / "kv2.csv") == 0);
    std::istringstream is(slurp(dir / "kv2.csv"));
    int lines = 0;
    for (std::string l; std::getline(is, l);) ++lines;
    CHECK(lines == 5);
  }

  TEST_CASE("quench hyperschedule export is lower triangular") {
    auto dir = scratch("hs");
    REQUIRE(run("export-hyperschedule --kind quench --d 8 --levels 1 --csv " + (dir / "q.csv").string() + " --pgm " +
                (dir / "q.pgm").string()) == 0);
    std::istringstream is(slurp(dir / "q.csv"));
    std::string line;
    for (int t = 0; t <= 8; ++t) {
      REQUIRE(std::getline(is, line));
      std::string want;
      for (int i = 0; i < 8; ++i) want += std::string(i ? "," : "") + (i >= t ? "1" : "0");
      CHECK(line == want);
    }
    CHECK(slurp(dir / "q.pgm").rfind("P2", 0) == 0);
  }

  TEST_CASE("config errors exit with 2") {
    auto dir = scratch("cfg");
    CHECK(run("gen-corpus --out " + dir.string()) == 2);
    CHECK(run("gen-corpus --set epsilon=0.1 --set gamma=0.5 --out " + dir.string()) == 2);
    CHECK(run("gen-corpus --set epsilon=0.1 --set bogus=1 --out " + dir.string()) == 2);
    CHECK(run("gen-corpus --set epsilon=0.1 --set omega=0 --out " + dir.string()) == 2);
    CHECK(run("gen-corpus --set epsilon=0.1 --set lr=abc --out " + dir.string()) == 2);
    CHECK(run("no-such-command") != 0);
    auto err = dir / "err.txt";
    std::system((std::string(HDLM_CLI) + " gen-corpus --set epsilon=0.1 --set heads=3 --set dim=64 --out " +
                 dir.string() + " 2> " + err.string())
                    .c_str());
    CHECK(slurp(err).find("heads") != std::string::npos);
  }

  TEST_CASE("zero training steps keep the initialization") {
    auto dir = scratch("zero");
    REQUIRE(run("gen-corpus" + kTiny + " --out " + dir.string()) == 0);
    auto m = dir / "manifest.jsonl";
    REQUIRE(run("train" + kTiny + " --set steps=0 --corpus " + (dir / "train.bin").string() + " --checkpoint " +
                (dir / "a.ckpt").string() + " --manifest " + m.string()) == 0);
    REQUIRE(run("train" + kTiny + " --set steps=0 --corpus " + (dir / "train.bin").string() + " --checkpoint " +
                (dir / "b.ckpt").string()) == 0);
    CHECK(slurp(dir / "a.ckpt") == slurp(dir / "b.ckpt"));
    auto recs = records(m);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0]["metrics"]["steps"] == 0);
    CHECK(recs[0]["status"] == "ok");
    // a short stage-2 run under a different hyperschedule from that checkpoint
    REQUIRE(run("train" + kTiny + " --set hyperschedule=slide --corpus " + (dir / "train.bin").string() + " --init " +
                (dir / "a.ckpt").string() + " --checkpoint " + (dir / "c.ckpt").string() + " --manifest " +
                m.string()) == 0);
    recs = records(m);
    CHECK(std::isfinite(recs.back()["metrics"]["final_loss"].get<double>()));
    CHECK(recs.back().contains("init_checkpoint_crc32"));
  }

  TEST_CASE("short overfit run lowers the loss") {
    auto dir = scratch("overfit");
    REQUIRE(run("gen-corpus" + kTiny + " --set train_seqs=4 --out " + dir.string()) == 0);
    auto m = dir / "m.jsonl";
    REQUIRE(run("train" + kTiny +
                " --set train_seqs=4 --set steps=200 --set lr=0.1 --set hyperschedule=quench --set omega=1 "
                "--set levels=1 --set wiring=shifted --set checkpoint_every=100 --corpus " +
                (dir / "train.bin").string() + " --checkpoint " + (dir / "m.ckpt").string() + " --loss-csv " +
                (dir / "loss.csv").string() + " --manifest " + m.string()) == 0);
    auto r = records(m).back();
    CHECK(r["metrics"]["final_loss"].get<double>() < r["metrics"]["first_loss"].get<double>());
    CHECK(fs::exists(dir / "m.ckpt.step100"));
    CHECK(slurp(dir / "loss.csv").rfind("step,ce_settled,active_term,total\n", 0) == 0);
  }

  TEST_CASE("numerical failure exits with 3 and is recorded") {
    auto dir = scratch("nan");
    REQUIRE(run("gen-corpus" + kTiny + " --out " + dir.string()) == 0);
    auto m = dir / "m.jsonl";
    CHECK(run("train" + kTiny + " --set lr=1e300 --set clip=1e300 --set warmup=0 --set init_scale=100 --corpus " +
              (dir / "train.bin").string() + " --checkpoint " + (dir / "x.ckpt").string() + " --manifest " +
              m.string()) == 3);
    auto recs = records(m);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0]["status"] == "failed");
    CHECK_FALSE(fs::exists(dir / "x.ckpt"));
  }

  TEST_CASE("pipeline is deterministic and acs with eta 0 matches the original sampler") {
    auto a = scratch("pipe_a"), b = scratch("pipe_b"), c = scratch("pipe_c");
    REQUIRE(run("pipeline" + kTiny + " --out " + a.string()) == 0);
    REQUIRE(run("pipeline" + kTiny + " --out " + b.string()) == 0);
    REQUIRE(run("pipeline" + kTiny + " --set sampler=acs --set eta=0 --out " + c.string()) == 0);
    CHECK(slurp(a / "samples.txt") == slurp(b / "samples.txt"));
    CHECK(slurp(a / "model.ckpt") == slurp(b / "model.ckpt"));
    CHECK(slurp(a / "samples.txt") == slurp(c / "samples.txt"));
    auto ra = records(a / "manifest.jsonl"), rb = records(b / "manifest.jsonl");
    REQUIRE(ra.size() == 6);
    REQUIRE(rb.size() == 6);
    for (size_t i = 0; i < ra.size(); ++i) {
      ra[i].erase("timing");
      rb[i].erase("timing");
      CHECK(ra[i] == rb[i]);
    }
    std::vector<std::string> kinds;
    for (auto& r : ra) kinds.push_back(r["kind"]);
    CHECK(kinds == std::vector<std::string>{"gen-corpus", "train", "sample", "eval", "eval", "eval"});
    CHECK(ra[3]["metrics"].contains("mc_ppl"));
    CHECK(ra[4]["metrics"].contains("gen_ppl"));
    CHECK(ra[5]["metrics"].contains("entropy"));
    CHECK(ra[1].contains("checkpoint_crc32"));
    CHECK(ra[0]["checksums"].contains("train"));
    CHECK(ra[0]["tool_version"] == "hdlm 0.1.0");
  }

  TEST_CASE("sample command flags and cache ledger") {
    auto dir = scratch("sample");
    REQUIRE(run("pipeline" + kTiny + " --out " + dir.string()) == 0);
    auto m = dir / "s.jsonl";
    std::string base = "sample" + kTiny + " --checkpoint " + (dir / "model.ckpt").string() +
                       " --hyperschedule block --omega 4 --steps 4 --seed 3 --manifest " + m.string();
    REQUIRE(run(base + " --cache on --out " + (dir / "on.txt").string()) == 0);
    REQUIRE(run(base + " --cache off --out " + (dir / "off.txt").string()) == 0);
    CHECK(slurp(dir / "on.txt") == slurp(dir / "off.txt"));
    auto recs = records(m);
    REQUIRE(recs.size() == 2);
    CHECK(recs[0]["ledger"]["calls"] == recs[1]["ledger"]["calls"]);
    CHECK(recs[0]["ledger"]["tokens"].get<int>() < recs[1]["ledger"]["tokens"].get<int>());
    CHECK(run(base + " --sampler bogus --out " + (dir / "x.txt").string()) == 2);
  }
}
