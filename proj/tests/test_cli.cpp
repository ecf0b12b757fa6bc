#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "saros/persist.hpp"

using namespace saros;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("saros_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream log(dir_ / "ratings.dat");
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> rating(1, 5);
    std::vector<int> items(30);
    std::iota(items.begin(), items.end(), 0);
    for (int u = 0; u < 12; ++u) {
      std::shuffle(items.begin(), items.end(), rng);
      for (int t = 0; t < 15; ++t) log << u << "::" << items[t] << "::" << rating(rng) << "::" << 100 * u + t << "\n";
    }
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Runs the CLI with stdout and stderr captured; returns the exit code.
  int run(const std::string& args) {
    const std::string cmd = std::string(SAROS_CLI_PATH) + " " + args + " > " + (dir_ / "stdout").string() + " 2> " +
                            (dir_ / "stderr").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  std::string out() const { return slurp(dir_ / "stdout"); }
  std::string err() const { return slurp(dir_ / "stderr"); }
  std::string p(const std::string& name) const { return (dir_ / name).string(); }

  void prepare() { ASSERT_EQ(run("prepare " + p("ratings.dat") + " --out " + p("data")), 0) << err(); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, PrepareWritesArtifacts) {
  prepare();
  for (const char* f : {"dataset.tsv", "discarded.tsv", "stats.json", "blocks_block_size.csv",
                        "blocks_blocks_per_user.csv"}) {
    EXPECT_TRUE(fs::exists(dir_ / "data" / f)) << f;
  }
  const auto stats = nlohmann::json::parse(slurp(dir_ / "data" / "stats.json"));
  EXPECT_TRUE(stats.contains("sparsity"));
  EXPECT_TRUE(stats.contains("thresholds"));
}

TEST_F(Cli, EmptyInputIsDataError) {
  std::ofstream(dir_ / "empty.tsv").close();
  EXPECT_EQ(run("prepare " + p("empty.tsv") + " --out " + p("d")), 2);
}

TEST_F(Cli, MalformedLineIsDataError) {
  std::ofstream(dir_ / "bad.tsv") << "u1\ti1\t1\t1\nu1\ti2\t0\n";
  EXPECT_EQ(run("prepare " + p("bad.tsv") + " --schema binary --out " + p("d")), 2);
  EXPECT_NE(err().find("line 2"), std::string::npos) << err();
}

TEST_F(Cli, BinarySchemaUsesClicks) {
  std::ofstream(dir_ / "clicks.tsv") << "a\tx\t1\t1\na\ty\t0\t2\nb\tx\t0\t1\nb\ty\t1\t2\nb\tz\t1\t3\n";
  ASSERT_EQ(run("prepare " + p("clicks.tsv") + " --schema binary --train-fraction 0.5 --out " + p("d")), 0) << err();
  const auto ds = read_dataset(dir_ / "d" / "dataset.tsv");
  std::size_t pos = 0;
  for (const auto& h : ds.histories)
    for (const auto& x : h.interactions) pos += is_positive(x.feedback);
  EXPECT_EQ(pos, 3u);
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run("train --data nowhere"), 1);
  EXPECT_EQ(run("frobnicate"), 1);
  prepare();
  EXPECT_EQ(run("train --data " + p("data") + " --trainer nope --out " + p("m.ck")), 1);
  EXPECT_EQ(run("train --data " + p("data") + " --k 0 --out " + p("m.ck")), 1);
}

TEST_F(Cli, NumericAbort) {
  prepare();
  EXPECT_EQ(run("train --data " + p("data") + " --eta 1e300 --lambda 1 --epochs 5 --out " + p("m.ck")), 3);
}

TEST_F(Cli, ZeroStepKeepsLoss) {
  prepare();
  ASSERT_EQ(run("train --data " + p("data") + " --eta 0 --epochs 2 --trace-period 5 --out " + p("m.ck")), 0);
  std::istringstream trace(slurp(p("m.ck.trace.csv")));
  std::string line, first_loss, loss;
  std::getline(trace, line);
  while (std::getline(trace, line)) {
    loss = line.substr(line.rfind(',') + 1);
    if (first_loss.empty()) first_loss = loss;
    EXPECT_EQ(loss, first_loss);
  }
  EXPECT_FALSE(first_loss.empty());
}

TEST_F(Cli, TrainIsDeterministicAndAutoThresholdsLogged) {
  prepare();
  for (const char* t : {"saros_b", "saros_m", "bpr", "bpr_batch"}) {
    const std::string base = "train --data " + p("data") + " --trainer " + t + " --epochs 2 --seed 9 ";
    ASSERT_EQ(run(base + "--out " + p("a.ck")), 0) << err();
    ASSERT_EQ(run(base + "--out " + p("b.ck")), 0) << err();
    EXPECT_EQ(slurp(p("a.ck")), slurp(p("b.ck"))) << t;
    EXPECT_EQ(slurp(p("a.ck.json")), slurp(p("b.ck.json"))) << t;
  }
  ASSERT_EQ(run("train --data " + p("data") + " --thresholds auto --out " + p("c.ck")), 0) << err();
  EXPECT_NE(err().find("thresholds: b="), std::string::npos);
}

TEST_F(Cli, ConfigFileWithFlagOverride) {
  prepare();
  std::ofstream(dir_ / "cfg.json") << R"({"eta": 0.01, "k": 3, "lambda": 0.5})";
  ASSERT_EQ(run("train --data " + p("data") + " --config " + p("cfg.json") + " --k 5 --out " + p("m.ck")), 0)
      << err();
  const auto ck = load_checkpoint(p("m.ck"));
  EXPECT_EQ(ck.config.k, 5u);
  EXPECT_EQ(ck.config.eta, 0.01);
  EXPECT_EQ(ck.config.lambda, 0.5);
}

TEST_F(Cli, EvalReportHasRequestedCutoffs) {
  prepare();
  ASSERT_EQ(run("train --data " + p("data") + " --out " + p("m.ck")), 0) << err();
  ASSERT_EQ(run("eval --checkpoint " + p("m.ck") + " --data " + p("data") + " --k-at 5,10 --out " + p("r.json")), 0)
      << err();
  const auto rep = nlohmann::json::parse(slurp(p("r.json")));
  std::vector<std::string> keys;
  for (const auto& [k, v] : rep["K"].items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"10", "5"}));
  EXPECT_EQ(rep["dataset"], "data");
  EXPECT_TRUE(fs::exists(p("r.csv")));
  // reports are reproducible
  ASSERT_EQ(run("eval --checkpoint " + p("m.ck") + " --data " + p("data") + " --k-at 5,10 --out " + p("r2.json")), 0);
  EXPECT_EQ(slurp(p("r.json")), slurp(p("r2.json")));
}

TEST_F(Cli, PerfectCheckpointScoresOne) {
  prepare();
  const auto ds = read_dataset(dir_ / "data" / "dataset.tsv");
  // One embedding dimension per user; an item scores 1 for u iff it is one of u's test positives.
  ModelParams params{Matrix::Identity(static_cast<Eigen::Index>(ds.n_users()), static_cast<Eigen::Index>(ds.n_users())),
                     Matrix::Zero(static_cast<Eigen::Index>(ds.n_items()), static_cast<Eigen::Index>(ds.n_users()))};
  for (std::uint32_t u = 0; u < ds.n_users(); ++u) {
    for (const auto& x : ds.history(UserId{u}).test()) {
      if (is_positive(x.feedback)) params.items(x.item.value, u) = 1.0;
    }
  }
  TrainConfig c;
  c.k = ds.n_users();
  save_checkpoint(params, c, CheckpointMeta{TrainerKind::saros_b, 0, 0, ds.users.raw_ids(), ds.items.raw_ids()},
                  p("perfect.ck"));
  ASSERT_EQ(run("eval --checkpoint " + p("perfect.ck") + " --data " + p("data") + " --out " + p("r.json")), 0) << err();
  const auto rep = nlohmann::json::parse(slurp(p("r.json")));
  for (const auto& [k, v] : rep["K"].items()) {
    EXPECT_EQ(v["map"].get<double>(), 1.0) << k;
    EXPECT_EQ(v["ndcg"].get<double>(), 1.0) << k;
  }
}

TEST_F(Cli, CorruptCheckpointIsDataError) {
  prepare();
  ASSERT_EQ(run("train --data " + p("data") + " --out " + p("m.ck")), 0);
  const std::string bytes = slurp(p("m.ck"));
  std::ofstream(p("m.ck"), std::ios::binary | std::ios::trunc) << bytes.substr(0, 20);
  EXPECT_EQ(run("eval --checkpoint " + p("m.ck") + " --data " + p("data")), 2);
  EXPECT_NE(err().find("dimensions"), std::string::npos) << err();
}

TEST_F(Cli, CompareTagsRows) {
  std::ofstream(p("x.trace.csv")) << "seconds,epoch,updates,loss\n0,0,0,0.69\n1,1,10,0.5\n";
  std::ofstream(p("y.trace.csv")) << "seconds,epoch,updates,loss\n0,0,0,0.69\n";
  ASSERT_EQ(run("compare " + p("x.trace.csv") + " " + p("y.trace.csv")), 0) << err();
  EXPECT_EQ(out(), "trainer,seconds,epoch,updates,loss\nx,0,0,0,0.69\nx,1,1,10,0.5\ny,0,0,0,0.69\n");
  ASSERT_EQ(run("compare " + p("y.trace.csv") + " --tags bpr --out " + p("m.csv")), 0);
  EXPECT_EQ(slurp(p("m.csv")), "trainer,seconds,epoch,updates,loss\nbpr,0,0,0,0.69\n");
  EXPECT_EQ(run("compare " + p("x.trace.csv") + " " + p("missing.trace.csv")), 2);
  EXPECT_NE(err().find("missing.trace.csv"), std::string::npos);
}

TEST_F(Cli, BlocksCommand) {
  prepare();
  ASSERT_EQ(run("blocks --data " + p("data") + " --out " + p("h")), 0) << err();
  EXPECT_TRUE(fs::exists(p("h_block_size.csv")));
  EXPECT_EQ(slurp(p("h_blocks_per_user.csv")).rfind("blocks_per_user,count\n", 0), 0u) << slurp(p("h_blocks_per_user.csv"));
}
