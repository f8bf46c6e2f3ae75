#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "dplab/serialization.hpp"

namespace fs = std::filesystem;
using dplab::Json;

namespace {

const fs::path kWork = fs::path("cli_test_work");

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Run cli(const std::string& args) {
  fs::create_directories(kWork);
  const auto out = kWork / "stdout.txt", err = kWork / "stderr.txt";
  const std::string cmd = std::string("\"") + DPLAB_CLI + "\" " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string work(const std::string& name) { return (kWork / name).string(); }

std::string config(const std::string& name) { return std::string(DPLAB_SOURCE_DIR) + "/configs/" + name; }

/// Tiny experiment config with edits applied to the train block.
std::string tiny_config(const std::string& name, const Json& train_edits) {
  std::ifstream in(config("tiny.json"));
  Json j = Json::parse(in);
  j["train"].update(train_edits);
  fs::create_directories(kWork);
  std::ofstream(work(name)) << j.dump(2);
  return work(name);
}

int count_lines(const std::string& text, bool skip_comments = true) {
  std::istringstream in(text);
  int n = 0;
  for (std::string line; std::getline(in, line);)
    if (!(skip_comments && !line.empty() && line[0] == '#')) ++n;
  return n;
}

}  // namespace

TEST_CASE("gen-data is deterministic, tags its generator and validates flags") {
  const std::string args = "gen-data --family mab --n 10 --horizon 20 --seed 7 --out ";
  REQUIRE(cli(args + work("a.jsonl")).code == 0);
  const auto second = cli(args + work("b.jsonl"));
  REQUIRE(second.code == 0);
  CHECK(second.out == "10\n");
  CHECK(slurp(work("a.jsonl")) == slurp(work("b.jsonl")));
  CHECK(count_lines(slurp(work("a.jsonl"))) == 11);  // header + 10 sequences

  const auto header = Json::parse(slurp(work("a.jsonl")).substr(0, slurp(work("a.jsonl")).find('\n')));
  CHECK(header.at("header").at("seed") == 7);
  CHECK(header.at("header").contains("prior"));

  CHECK(cli(args + work("c.jsonl") + " --jobs 3").code == 0);
  CHECK(slurp(work("a.jsonl")) == slurp(work("c.jsonl")));

  CHECK(cli("gen-data --family mab --n 10").code == 2);
  CHECK(cli("gen-data --family nope --out " + work("x.jsonl")).code == 2);
  CHECK(cli("gen-data --family mab --n 2 --out " + work("no/such/dir/x.jsonl")).code == 1);
  CHECK(cli("gen-data --family mab --policy " + work("missing.bin") + " --out " + work("x.jsonl")).code == 1);
}

TEST_CASE("train: dry run, telemetry, determinism and error codes") {
  const auto cfg = config("tiny.json");
  const auto dry = cli("train --config " + cfg + " --dry-run --out " + work("dry.bin") + " --telemetry " +
                         work("dry.csv"));
  CHECK(dry.code == 0);
  CHECK(dry.out.find("m,T_tilde,phase,f_sequences,policy_sequences") != std::string::npos);
  CHECK(dry.out.find("3,6,mixed,2,4") != std::string::npos);
  CHECK_FALSE(fs::exists(work("dry.bin")));
  CHECK_FALSE(fs::exists(work("dry.csv")));

  const auto a = cli("train --config " + cfg + " --out " + work("t1.bin") + " --telemetry " + work("t1.csv"));
  REQUIRE(a.code == 0);
  REQUIRE(cli("train --config " + cfg + " --out " + work("t2.bin") + " --telemetry " + work("t2.csv")).code == 0);
  CHECK(slurp(work("t1.csv")) == slurp(work("t2.csv")));
  CHECK(slurp(work("t1.bin")) == slurp(work("t2.bin")));
  CHECK(a.err.find("m=3") != std::string::npos);
  const auto telemetry = slurp(work("t1.csv"));
  CHECK(telemetry.rfind("# ", 0) == 0);
  CHECK(telemetry.find("\"seed\":3") != std::string::npos);
  CHECK(count_lines(telemetry) == 4);

  // --seed overrides the config seed and changes the run.
  REQUIRE(cli("train --config " + cfg + " --seed 4 --out " + work("t3.bin") + " --telemetry " + work("t3.csv"))
              .code == 0);
  CHECK(slurp(work("t3.csv")) != slurp(work("t1.csv")));

  // M0 = M: no mixed-phase rows, so the rollout-loss column stays empty.
  const auto no_mix = tiny_config("nomix.json", Json{{"M0", 3}});
  REQUIRE(cli("train --config " + no_mix + " --out " + work("nm.bin") + " --telemetry " + work("nm.csv")).code == 0);
  std::istringstream rows(slurp(work("nm.csv")));
  int data_rows = 0;
  for (std::string line; std::getline(rows, line);) {
    if (line.empty() || line[0] == '#' || line[0] == 'm') continue;
    ++data_rows;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    REQUIRE(cells.size() >= 5);
    CHECK(cells[4].empty());
  }
  CHECK(data_rows == 3);

  const auto diverge = tiny_config("diverge.json", Json{{"lr", 1e200}});
  const auto d = cli("train --config " + diverge + " --out " + work("d.bin") + " --telemetry " + work("d.csv"));
  CHECK(d.code == 3);
  CHECK(d.err.find("iteration 1") != std::string::npos);

  CHECK(cli("train --config " + work("missing.json")).code == 1);
  std::ofstream(work("typo.json")) << R"({"prior": {"family": "mab"}, "trian": {}})";
  CHECK(cli("train --config " + work("typo.json") + " --dry-run").code == 2);
  std::ofstream(work("broken.json")) << "{not json";
  CHECK(cli("train --config " + work("broken.json") + " --dry-run").code == 2);
  CHECK(cli("train").code == 2);

  // A trained checkpoint drives gen-data and tags its sequences.
  const std::string prior = work("tiny_prior.json");
  std::ofstream(prior) << R"({"family": "mab", "mode": "pool", "dim": 3, "pool_size": 4, "pool_seed": 7})";
  REQUIRE(cli("gen-data --prior " + prior + " --policy " + work("t1.bin") + " --n 3 --horizon 6 --out " +
                work("p.jsonl"))
              .code == 0);
  std::istringstream lines(slurp(work("p.jsonl")));
  std::string line;
  std::getline(lines, line);
  int tagged = 0;
  while (std::getline(lines, line)) tagged += Json::parse(line).at("generator") == "policy";
  CHECK(tagged == 3);
  CHECK(cli("gen-data --family pricing --policy " + work("t1.bin") + " --out " + work("x.jsonl")).code == 2);

  // ...and the tf algorithm in bench.
  const auto b = cli("bench --config " + cfg + " --checkpoint " + work("t1.bin"));
  CHECK(b.code == 0);
  CHECK(b.out.find("tf") != std::string::npos);
}

TEST_CASE("bench writes shaped outputs and validates algorithms") {
  const auto r = cli("bench --algos ucb,ts --family mab --runs 10 --horizon 50 --seed 5 --out-csv " +
                       work("bench.csv") + " --summary " + work("bench.json") + " --plot " + work("plot.csv"));
  REQUIRE(r.code == 0);
  CHECK(r.out.find("ucb") != std::string::npos);
  const auto csv = slurp(work("bench.csv"));
  CHECK(count_lines(csv) == 1 + 2 * 10 * 50);
  CHECK(csv.find("\"seed\":5") != std::string::npos);
  const auto summary = Json::parse(slurp(work("bench.json")));
  CHECK(summary.at("algorithms").size() == 2);
  CHECK(summary.at("header").at("seed") == 5);
  CHECK(count_lines(slurp(work("plot.csv"))) == 1 + 2 * 50);

  REQUIRE(cli("bench --algos ucb,ts --family mab --runs 10 --horizon 50 --seed 5 --jobs 2 --out-csv " +
                work("bench2.csv"))
              .code == 0);
  CHECK(slurp(work("bench2.csv")) == csv);

  const auto oracle = cli("bench --algos oracle --family pricing --runs 5 --horizon 20 --summary " + work("o.json"));
  REQUIRE(oracle.code == 0);
  const auto o = Json::parse(slurp(work("o.json")));
  CHECK(o.at("algorithms")[0].at("final_mean").get<double>() == 0.0);

  const auto unknown = cli("bench --algos ucb,bogus --family mab");
  CHECK(unknown.code == 2);
  CHECK(unknown.err.find("linucb") != std::string::npos);
  CHECK(cli("bench --algos alg-star --family mab --runs 2 --horizon 5").code == 2);
  CHECK(cli("bench --algos alg-star --family mab --pool 4 --runs 2 --horizon 5").code == 0);
  CHECK(cli("bench --algos tf --family mab --runs 2 --horizon 5").code == 2);
  CHECK(cli("bench --algos ucb --family mab --rule median --pool 4 --runs 2").code == 0);
  CHECK(cli("bench --algos ucb --family mab --ucb-bonus sideways").code == 2);
  CHECK(cli("bench --algos ucb --family mab --runs 2 --out-csv " + work("none/x.csv")).code == 1);
}

TEST_CASE("counterexample reports the analytic regret") {
  const auto lb = cli("counterexample --kind linear-bandit --horizon 100 --out-csv " + work("ce.csv"));
  CHECK(lb.code == 0);
  CHECK(lb.out.find("gamma1: regret 50 vs expected 50") != std::string::npos);
  CHECK(lb.out.find("gamma2: regret 50 vs expected 50") != std::string::npos);
  CHECK(count_lines(slurp(work("ce.csv"))) == 1 + 2 * 100);

  const auto pr = cli("counterexample --kind pricing --horizon 100");
  CHECK(pr.code == 0);
  CHECK(pr.out.find("gamma1: regret 25 vs expected 25") != std::string::npos);
  CHECK(pr.out.find("gamma2: regret 5 vs expected 5") != std::string::npos);

  CHECK(cli("counterexample --kind newsvendor").code == 2);
  CHECK(cli("counterexample").code == 2);
}

TEST_CASE("gradcheck passes, honors --coords and catches a corrupted gradient") {
  const auto ok = cli("gradcheck");
  CHECK(ok.code == 0);
  CHECK(ok.out.find("over 200 coordinates") != std::string::npos);
  const auto fifty = cli("gradcheck --coords 50");
  CHECK(fifty.code == 0);
  CHECK(fifty.out.find("over 50 coordinates") != std::string::npos);
  CHECK(fifty.out.find("over 200 coordinates") == std::string::npos);
  const auto bad = cli("gradcheck --coords 50 --corrupt 1.0");
  CHECK(bad.code == 4);
  CHECK(bad.err.find("worst slice") != std::string::npos);
}

TEST_CASE("usage errors") {
  CHECK(cli("").code == 2);
  CHECK(cli("frobnicate").code == 2);
  CHECK(cli("--help").code == 0);
}
