#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "qlouvain/file_io.hpp"
#include "qlouvain/graph_io.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace qlouvain {
namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / "qlouvain_cli" /
           ::testing::UnitTest::GetInstance()->current_test_info()->name();
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }

  fs::path file(const std::string& name, const std::string& content) {
    std::ofstream(dir_ / name, std::ios::binary) << content;
    return dir_ / name;
  }

  Result run(const std::string& args) {
    const auto out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = std::string(QLOUVAIN_CLI) + " " + args + " > " + out.string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_text_file(out), read_text_file(err)};
  }

  json read_json(const fs::path& p) { return json::parse(read_text_file(p)); }

  fs::path ring() { return file("ring.mtx", to_matrix_market(testing::ring_of_cliques(5, 5))); }

  fs::path dir_;
};

TEST_F(Cli, ClusterTwoCliques) {
  auto g = testing::two_cliques();
  auto input = file("cliques.mtx", to_matrix_market(g));
  auto r = run("cluster-louvain --input " + input.string() + " --out-dir " + (dir_ / "out").string());
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = read_json(dir_ / "out" / "louvain.json");
  EXPECT_EQ(j["levels"][0]["communities"], 2);
  EXPECT_NEAR(j["final_modularity"].get<double>(), testing::best_partition_modularity(g), 1e-12);
  EXPECT_TRUE(fs::exists(dir_ / "out" / "dendrogram.txt"));
}

TEST_F(Cli, MissingFileLeavesNoOutputs) {
  auto r = run("cluster-louvain --input " + (dir_ / "nope.mtx").string() + " --out-dir " + (dir_ / "out").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("nope.mtx"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir_ / "out"));
}

TEST_F(Cli, ParseErrorReportsLine) {
  auto input = file("bad.mtx", "%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n1 2 x\n");
  auto r = run("cluster-louvain --input " + input.string() + " --out-dir " + dir_.string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("line 3"), std::string::npos);
}

TEST_F(Cli, MinGainStopsEarly) {
  auto input = file("ring.mtx", to_matrix_market(testing::ring_of_cliques(8, 3)));
  auto r = run("cluster-louvain --input " + input.string() + " --min-gain 0.5 --out-dir " + dir_.string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_json(dir_ / "louvain.json")["levels"].size(), 1u);
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("train --epochs 0 --input " + ring().string()).code, 1);
  EXPECT_EQ(run("jet --input x --p 2").code, 1);
}

TEST_F(Cli, TrainWritesRowsAndIsDeterministic) {
  auto input = ring();
  const std::string args = "train --input " + input.string() + " --epochs 150 --hidden 16 --seed 7 --out-dir ";
  auto a = run(args + (dir_ / "a").string());
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_NE(a.out.find("final hit rate"), std::string::npos);
  auto csv = read_text_file(dir_ / "a" / "metrics.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 151);
  auto b = run(args + (dir_ / "b").string());
  ASSERT_EQ(b.code, 0);
  EXPECT_EQ(csv, read_text_file(dir_ / "b" / "metrics.csv"));
  EXPECT_EQ(read_text_file(dir_ / "a" / "checkpoint.json"), read_text_file(dir_ / "b" / "checkpoint.json"));
}

TEST_F(Cli, NodeLimitClampedWithWarning) {
  auto r = run("train --input " + ring().string() + " --epochs 1 --hidden 8 --node-limit 1000 --out-dir " +
               dir_.string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("warning"), std::string::npos);
}

TEST_F(Cli, ConfigFileWithFlagOverride) {
  auto cfg = file("cfg.json", R"({"epochs": 3, "hidden": 8, "seed": 4})");
  auto r = run("train --config " + cfg.string() + " --input " + ring().string() + " --epochs 2 --out-dir " +
               dir_.string());
  ASSERT_EQ(r.code, 0) << r.err;
  auto csv = read_text_file(dir_ / "metrics.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  auto meta = read_json(dir_ / "checkpoint.json")["meta"];
  EXPECT_EQ(meta["agent"]["hidden"], 8);
  EXPECT_EQ(meta["seed"], 4);
}

TEST_F(Cli, SeedFromEnvironment) {
  ::setenv("QLOUVAIN_SEED", "99", 1);
  auto r = run("train --input " + ring().string() + " --epochs 1 --hidden 8 --out-dir " + dir_.string());
  ::unsetenv("QLOUVAIN_SEED");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_json(dir_ / "checkpoint.json")["meta"]["seed"], 99);
}

TEST_F(Cli, EvalOracleIsPerfect) {
  auto r = run("eval --oracle --input " + ring().string() + " --out-dir " + dir_.string());
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = read_json(dir_ / "report.json");
  EXPECT_EQ(j["precision"], 1.0);
  EXPECT_EQ(j["negatives"], 0);
  for (const char* key : {"positives", "modularity_agent", "modularity_louvain", "ratio"}) EXPECT_TRUE(j.contains(key));
}

TEST_F(Cli, EvalRejectsCorruptedCheckpoint) {
  auto ck = file("ck.json", "{\"format\": \"qlouvain-checkpoint\", \"version\": 1");
  auto r = run("eval --input " + ring().string() + " --checkpoint " + ck.string() + " --out-dir " + dir_.string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("schema error"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir_ / "report.json"));
}

TEST_F(Cli, EvalNamesArchitectureMismatch) {
  auto input = ring();
  ASSERT_EQ(run("train --input " + input.string() + " --epochs 1 --hidden 8 --out-dir " + dir_.string()).code, 0);
  auto r = run("eval --input " + input.string() + " --checkpoint " + (dir_ / "checkpoint.json").string() +
               " --action-size 5 --out-dir " + dir_.string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("(5, 5)"), std::string::npos);
  EXPECT_NE(r.err.find("(5, 4)"), std::string::npos);
}

TEST_F(Cli, JetSingleParticle) {
  auto input = file("one.txt", "10 0.5 1.0\n");
  auto r = run("jet --input " + input.string() + " --out-dir " + dir_.string());
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = read_json(dir_ / "jet.json");
  EXPECT_EQ(j["sequential"]["jets"].size(), 1u);
}

TEST_F(Cli, JetOracleCheck) {
  auto input = file("six.txt", "12 0.1 0.2\n3 0.4 0.5\n40 -1 3\n1 -0.8 3.3\n7 2 5\n2 1.7 5.2\n");
  auto r = run("jet --input " + input.string() + " --oracle-check --out-dir " + dir_.string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("oracle: match"), std::string::npos);
}

TEST_F(Cli, JetExponentChangesMergeOrder) {
  auto input = file("hs.txt", "1 0.3 1.2\n100 0 1.0\n1.2 -0.25 0.9\n0.9 0.1 0.7\n");
  auto kt = run("jet --input " + input.string() + " --p 1 --method sequential --out-dir " + (dir_ / "kt").string());
  auto anti = run("jet --input " + input.string() + " --p -1 --method sequential --out-dir " + (dir_ / "anti").string());
  ASSERT_EQ(kt.code, 0);
  ASSERT_EQ(anti.code, 0);
  EXPECT_NE(kt.out, anti.out);
  EXPECT_NE(anti.out.find("merge order: (1,2)"), std::string::npos);
}

TEST_F(Cli, JetEmptyEvent) {
  auto input = file("empty.txt", "# nothing\n");
  EXPECT_EQ(run("jet --input " + input.string() + " --out-dir " + dir_.string()).code, 2);
}

TEST_F(Cli, IngestSummary) {
  auto r = run("ingest --input " + ring().string() + " --out-dir " + dir_.string());
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = read_json(dir_ / "graph.json");
  EXPECT_EQ(j["nodes"], 25);
  EXPECT_EQ(j["edges"], 55);
  EXPECT_TRUE(fs::exists(dir_ / "normalized.mtx"));
}

}  // namespace
}  // namespace qlouvain
