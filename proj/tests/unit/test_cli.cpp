#include <gtest/gtest.h>

#include <fstream>
#include <iterator>
#include <sstream>

#include "fixtures.hpp"
#include "tpap/checkpoint.hpp"
#include "tpap/cli.hpp"
#include "tpap/report.hpp"

using namespace tpap;
using tpap::testing::TempDir;

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "tpap");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> small_run(const std::filesystem::path& out) {
  return {"--output", out.string(), "--data", "blobs", "--arch", "mlp", "--epochs", "3", "--batch-size", "32",
          "--set", "model.hidden=[16]", "--set", "train.lr_drops=scaled", "--set", "eval.max_examples=100",
          "--set", "train.eval_train_examples=100", "--set", "train.eval_test_examples=100",
          "--set", "eval.attacks=[{name: clean, kind: none}, {name: FGSM, kind: fgsm, epsilon: 8/255}]"};
}

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST(Cli, TrainEvaluatePurifyReport) {
  TempDir dir;
  const auto run_dir = dir / "run";
  const CliRun t = cli(cat({"train"}, small_run(run_dir)));
  ASSERT_EQ(t.code, kExitOk) << t.err;
  for (const char* f : {"config.yaml", "history.csv", "final.ckpt", "best.ckpt", "verdict.json"})
    EXPECT_TRUE(std::filesystem::exists(run_dir / f)) << f;
  EXPECT_EQ(read_history(run_dir / "history.csv").size(), 3u);
  const LoadedCheckpoint ck = load_checkpoint(run_dir / "final.ckpt");
  EXPECT_EQ(ck.meta.epoch, 3);
  EXPECT_EQ(ck.meta.tag, "final");

  const CliRun e = cli(cat({"evaluate", "--checkpoint", (run_dir / "final.ckpt").string(), "--timing"},
                        small_run(dir / "eval")));
  ASSERT_EQ(e.code, kExitOk) << e.err;
  const RunReport rep = read_report(dir / "eval" / "report.json");
  EXPECT_EQ(rep.rows.size(), 4u);
  EXPECT_TRUE(std::filesystem::exists(dir / "eval" / "timing.json"));
  EXPECT_NE(e.out.find("TPAP %"), std::string::npos);

  const CliRun p = cli(cat({"purify", "--checkpoint", (run_dir / "final.ckpt").string(), "--count", "10",
                         "--save-purified", (dir / "pur.bin").string()},
                        small_run(dir / "pur")));
  ASSERT_EQ(p.code, kExitOk) << p.err;
  const std::string trace = slurp(dir / "pur" / "purify_trace.csv");
  EXPECT_EQ(std::count(trace.begin(), trace.end(), '\n'), 11);
  EXPECT_EQ(load_tensors(dir / "pur.bin").at("images").dim(0), 10u);

  const CliRun r = cli({"report", (dir / "eval" / "report.json").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("FGSM"), std::string::npos);
  const CliRun h = cli({"report", (run_dir / "history.csv").string()});
  ASSERT_EQ(h.code, kExitOk) << h.err;
  EXPECT_NE(h.out.find("pgd te"), std::string::npos);
}

TEST(Cli, IdenticalRunsWriteIdenticalCheckpoints) {
  TempDir dir;
  ASSERT_EQ(cli(cat({"train", "--no-verdict"}, small_run(dir / "a"))).code, kExitOk);
  ASSERT_EQ(cli(cat({"train", "--no-verdict", "--threads", "3"}, small_run(dir / "b"))).code, kExitOk);
  EXPECT_EQ(slurp(dir / "a" / "final.ckpt"), slurp(dir / "b" / "final.ckpt"));
  EXPECT_EQ(slurp(dir / "a" / "best.ckpt"), slurp(dir / "b" / "best.ckpt"));
  ASSERT_EQ(cli(cat({"train", "--no-verdict", "--seed", "8"}, small_run(dir / "c"))).code, kExitOk);
  EXPECT_NE(slurp(dir / "a" / "final.ckpt"), slurp(dir / "c" / "final.ckpt"));
}

TEST(Cli, AblateWritesCellsCurvesAndVerdicts) {
  TempDir dir;
  const CliRun a = cli(cat({"ablate", "--set", "ablate.batch_sizes=[16, 32]"}, small_run(dir / "abl")));
  ASSERT_EQ(a.code, kExitOk) << a.err;
  const std::string cells = slurp(dir / "abl" / "ablation_cells.csv");
  EXPECT_EQ(std::count(cells.begin(), cells.end(), '\n'), 5);
  const std::string curves = slurp(dir / "abl" / "ablation_curves.csv");
  EXPECT_EQ(std::count(curves.begin(), curves.end(), '\n'), 1 + 4 * 3);
  EXPECT_TRUE(std::filesystem::exists(dir / "abl" / "verdicts.json"));
}

TEST(Cli, ExitCodesAndMessages) {
  TempDir dir;
  EXPECT_EQ(cli({}).code, kExitUsage);
  EXPECT_EQ(cli({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(cli({"train", "--no-such-flag"}).code, kExitUsage);
  EXPECT_EQ(cli({"--help"}).code, kExitOk);

  const CliRun missing = cli({"evaluate", "--checkpoint", (dir / "missing.ckpt").string()});
  EXPECT_EQ(missing.code, kExitFailure);
  EXPECT_EQ(missing.err.rfind("error: ", 0), 0u) << missing.err;

  const CliRun eps = cli(cat({"train", "--set", "attack.epsilon=-1"}, small_run(dir / "x")));
  EXPECT_EQ(eps.code, kExitFailure);
  EXPECT_NE(eps.err.find("attack.epsilon"), std::string::npos) << eps.err;

  const CliRun key = cli(cat({"train", "--set", "train.foo=1"}, small_run(dir / "x")));
  EXPECT_EQ(key.code, kExitFailure);
  EXPECT_NE(key.err.find("train.foo: unknown key"), std::string::npos) << key.err;

  const CliRun data = cli({"train", "--data", "cifar10", "--data-path", (dir / "none").string()});
  EXPECT_EQ(data.code, kExitFailure);
  EXPECT_NE(data.err.find("data.path"), std::string::npos) << data.err;
}
