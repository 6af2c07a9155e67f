#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "helpers.hpp"
#include "wsimil/slide/cohort.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Run run(const std::string& args, const fs::path& scratch, const std::string& env = {}) {
  const fs::path out = scratch / "stdout.txt", err = scratch / "stderr.txt";
  const std::string cmd = env + " " + WSIMIL_CLI + std::string(" ") + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WEXITSTATUS(status), slurp(out), slurp(err)};
}

nlohmann::json json_file(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

}  // namespace

TEST(Cli, HelpDocumentsFlagsAndExitCodes) {
  testing_support::TempDir dir("cli_help");
  const auto help = run("--help", dir.path());
  EXPECT_EQ(help.code, 0);
  EXPECT_NE(help.out.find("--seed"), std::string::npos);
  EXPECT_NE(help.out.find("WMK_SEED"), std::string::npos);
  EXPECT_NE(help.out.find("--workers"), std::string::npos);
  const auto train_help = run("train --help", dir.path());
  EXPECT_EQ(train_help.code, 0);
  EXPECT_NE(train_help.out.find("--filter"), std::string::npos);
  EXPECT_NE(train_help.out.find("--config"), std::string::npos);
  EXPECT_EQ(run("", dir.path()).code, 1);
  EXPECT_EQ(run("train --no-such-flag", dir.path()).code, 1);
  EXPECT_EQ(run("--version", dir.path()).code, 0);
}

TEST(Cli, TrainWithoutEmbedNamesTheStage) {
  testing_support::TempDir dir("cli_noembed");
  const auto work = dir.path() / "w";
  ASSERT_EQ(run("synth --preset pixels --patients 6 --slides 6 --out " + work.string() + " -q", dir.path()).code, 0);
  const auto r = run("train --work " + work.string() + " -k 2", dir.path());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("missing embedding bags"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("embed"), std::string::npos);
}

TEST(Cli, SeedFromEnvironmentAndConfigFile) {
  testing_support::TempDir dir("cli_seed");
  const auto work = dir.path() / "w";
  ASSERT_EQ(run("synth --preset small --out " + work.string() + " -q", dir.path(), "WMK_SEED=77").code, 0);
  EXPECT_EQ(json_file(work / "run.json")["options"]["config"]["seed"], 77);
  {
    std::ofstream cfg(dir.path() / "split.ini");
    cfg << "folds = 3\ntask = diagnosis\n";
  }
  ASSERT_EQ(run("split --work " + work.string() + " --config " + (dir.path() / "split.ini").string() + " -q --seed 5",
                dir.path())
                .code,
            0);
  const auto split = json_file(work / "splits" / "run.json");
  EXPECT_EQ(split["options"]["folds"], 3);
  EXPECT_EQ(split["options"]["task"], "diagnosis");
  EXPECT_EQ(split["options"]["seed"], 5);
  EXPECT_EQ(split["version"], std::string(WSIMIL_VERSION));
}

TEST(Cli, PipelineAndFilteredEval) {
  testing_support::TempDir dir("cli_pipeline");
  const auto work = dir.path() / "w";
  const auto r = run("pipeline --synth small --out " + work.string() +
                         " -k 3 --dsmil-epochs 15 --transformer-epochs 3 -q --workers 2",
                     dir.path());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto cv = json_file(work / "cv_result.json");
  EXPECT_EQ(cv["heads"]["dsmil"]["fold_auroc"].size(), 3u);
  EXPECT_TRUE(cv.contains("comparison"));
  for (const auto* f : {"report/index.html", "report/cv_table.csv", "hif/hif_tests.csv", "hif/hif_report.csv",
                        "models/macroscopic_dsmil/fold0.ckpt", "models/macroscopic_transformer/predictions.csv",
                        "attention/macroscopic_dsmil/summary.csv", "cells/summary.csv"})
    EXPECT_TRUE(fs::exists(work / f)) << f;

  const auto manifest = wsimil::slide::load_manifest(work / "manifest.csv");
  int uc = 0;
  for (const auto& rec : manifest.records) uc += rec.diagnosis == wsimil::slide::Diagnosis::UC;
  const auto ev = run("eval --run " + (work / "models" / "macroscopic_dsmil").string() + " --filter diagnosis=UC -q",
                      dir.path());
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_EQ(nlohmann::json::parse(ev.out)["n_slides"], uc);

  const auto bad = run("eval --run " + (work / "models" / "macroscopic_dsmil").string() + " --filter colour=red -q",
                       dir.path());
  EXPECT_EQ(bad.code, 2);
}
