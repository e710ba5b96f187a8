#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "geosdg/dino/train.hpp"
#include "geosdg/io.hpp"
#include "geosdg/vit/checkpoint.hpp"

#ifndef GEOSDG_CLI
#error "GEOSDG_CLI must name the geosdg binary"
#endif

namespace {

namespace fs = std::filesystem;
using geosdg::io::read_file;

const fs::path& root() {
  static const fs::path p = [] {
    auto d = fs::temp_directory_path() / ("geosdg_cli_test_" + std::to_string(getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return p;
}

int run(const std::string& args) {
  const std::string cmd = std::string("cd '") + root().string() + "' && '" GEOSDG_CLI "' " + args + " >>cli.log 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::size_t line_count(const fs::path& p) {
  const auto s = read_file(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

std::string first_line(const fs::path& p) {
  const auto s = read_file(p);
  return s.substr(0, s.find('\n'));
}

// small corpus and a 10-step model shared by the tests below
class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    ASSERT_EQ(run("synth-data --out-dir ds --n-tiles 24 --image-size 16 --seed 3"), 0);
    ASSERT_EQ(run("pretrain --out-dir pre --manifest ds/manifest.csv --seed 1 --steps 10 --batch-size 4 "
                  "--image-size 16"),
              0);
  }
};

TEST(CliArgs, ExitCodesForUsageErrors) {
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run("pretrain --help"), 0);
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("frobnicate --out-dir x"), 2);
  EXPECT_EQ(run("synth-data --out-dir x --n-tiles 4 --bogus 1"), 2);
  EXPECT_EQ(run("synth-data --out-dir x --n-tiles 4"), 2);  // no --seed
  EXPECT_EQ(run("pretrain --out-dir x --seed 1"), 2);       // no --manifest
  EXPECT_EQ(run("embed --out-dir x --checkpoint none.gsdg --manifest none.csv"), 2);
}

TEST_F(Cli, MissingManifestIsConfigError) {
  EXPECT_EQ(run("pretrain --out-dir x --manifest nowhere.csv --seed 1"), 2);
  EXPECT_EQ(run("knn-eval --out-dir x --embeddings nowhere.csv --split 0.2 --seed 1"), 2);
}

TEST_F(Cli, MissingDataInputsAreIngestErrors) {
  EXPECT_EQ(run("infer --out-dir x --index nowhere.csv --queries nowhere.csv --manifest ds/manifest.csv"), 3);
  EXPECT_EQ(run("aggregate --out-dir x --locations nowhere.csv --population ds/population.csv"), 3);
  EXPECT_EQ(run("validate --out-dir x --estimates nowhere.csv --official ds/official.csv"), 3);
}

TEST_F(Cli, PretrainLogHasOneRowPerStep) {
  const auto log = root() / "pre" / "loss_log.csv";
  EXPECT_EQ(first_line(log), geosdg::dino::kLossLogHeader);
  EXPECT_EQ(line_count(log), 11u);
  EXPECT_TRUE(fs::exists(root() / "pre" / "model.gsdg"));
  EXPECT_TRUE(fs::exists(root() / "pre" / "state.gsdg"));
}

TEST_F(Cli, NonFiniteTrainingIsNumericalError) {
  EXPECT_EQ(run("pretrain --out-dir nan --manifest ds/manifest.csv --seed 1 --steps 3 --batch-size 4 "
                "--image-size 16 --lr 1e38"),
            4);
}

TEST_F(Cli, SinglePairValidationIsDegenerate) {
  geosdg::io::write_file_atomic(root() / "one_est.csv",
                                "country,task,access_fraction,population_covered,n_locations\n"
                                "XAA,piped_water,0.5,10,1\n");
  EXPECT_EQ(run("validate --out-dir deg --estimates one_est.csv --official ds/official.csv --task piped_water"), 5);
}

TEST_F(Cli, EmptyManifestEmbedsHeaderOnly) {
  geosdg::io::write_file_atomic(root() / "empty.csv", first_line(root() / "ds" / "manifest.csv") + "\n");
  ASSERT_EQ(run("embed --out-dir e0 --checkpoint pre/model.gsdg --manifest empty.csv"), 0);
  const auto out = root() / "e0" / "embeddings.csv";
  EXPECT_EQ(line_count(out), 1u);
  EXPECT_EQ(first_line(out).substr(0, 22), "row_id,task,label,dim,");
}

TEST_F(Cli, FullChainWritesEveryOutput) {
  ASSERT_EQ(run("embed --out-dir emb --checkpoint pre/model.gsdg --manifest ds/manifest.csv --survey ds/survey.csv"),
            0);
  ASSERT_EQ(run("knn-eval --out-dir knn --embeddings emb/embeddings.csv --split 0.25 --manifest ds/manifest.csv "
                "--seed 2 --ks 1,3"),
            0);
  for (const char* f : {"split.csv", "sweep_piped.csv", "sweep_sewage.csv"}) EXPECT_TRUE(fs::exists(root() / "knn" / f));
  EXPECT_EQ(line_count(root() / "knn" / "sweep_piped.csv"), 3u);
  ASSERT_EQ(run("infer --out-dir inf --index emb/embeddings.csv --queries emb/embeddings.csv "
                "--manifest ds/manifest.csv --k 3"),
            0);
  ASSERT_EQ(run("aggregate --out-dir agg --locations inf/locations.csv --population ds/population.csv "
                "--survey ds/survey.csv"),
            0);
  for (const char* f : {"country_estimates.csv", "coverage_piped.csv", "coverage_sewage.csv", "urban_rural.csv"})
    EXPECT_TRUE(fs::exists(root() / "agg" / f)) << f;
  ASSERT_EQ(run("validate --out-dir val --estimates agg/country_estimates.csv --official ds/official.csv "
                "--population ds/population.csv"),
            0);
  EXPECT_EQ(line_count(root() / "val" / "validation.csv"), 3u);
}

std::vector<double> grid_values(const fs::path& csv) {
  std::istringstream in(read_file(csv));
  std::string line;
  std::getline(in, line);
  std::vector<double> out;
  while (std::getline(in, line)) out.push_back(std::stod(line.substr(line.rfind(',') + 1)));
  return out;
}

TEST_F(Cli, ZeroedQueriesGiveUniformMaps) {
  auto ckpt = geosdg::vit::read_checkpoint(root() / "pre" / "model.gsdg");
  for (auto& r : ckpt.records)
    if (r.name == "blocks.3.attn.q.weight" || r.name == "blocks.3.attn.q.bias") r.value.fill(0.0f);
  geosdg::vit::write_checkpoint(root() / "zero_q.gsdg", ckpt);
  ASSERT_EQ(run("attn-viz --out-dir zq --checkpoint zero_q.gsdg --tile ds/tiles/T00003.gtil"), 0);
  for (int h = 0; h < 4; ++h) {
    const auto v = grid_values(root() / "zq" / ("head_0" + std::to_string(h) + ".csv"));
    ASSERT_EQ(v.size(), 4u);  // 16 px tile, 8 px patches
    for (double x : v) EXPECT_NEAR(x, 1.0 / 5.0, 1e-7);
  }
  EXPECT_FALSE(fs::exists(root() / "zq" / "head_04.csv"));
}

TEST_F(Cli, BasePresetWritesTwelveHeads) {
  ASSERT_EQ(run("attn-viz --out-dir base --preset base --image-size 32 --seed 1 --tile ds/tiles/T00000.gtil"), 0);
  for (int h = 0; h < 12; ++h) {
    char name[16];
    std::snprintf(name, sizeof name, "head_%02d.csv", h);
    EXPECT_TRUE(fs::exists(root() / "base" / name)) << name;
  }
  EXPECT_EQ(line_count(root() / "base" / "attention_summary.csv"), 13u);
}

TEST_F(Cli, RerunsAreByteIdentical) {
  ASSERT_EQ(run("synth-data --out-dir ds2 --n-tiles 24 --image-size 16 --seed 3"), 0);
  for (const char* f : {"manifest.csv", "survey.csv", "population.csv", "official.csv", "manifest_stats.csv"})
    EXPECT_EQ(read_file(root() / "ds" / f), read_file(root() / "ds2" / f)) << f;
  ASSERT_EQ(run("pretrain --out-dir pre2 --manifest ds/manifest.csv --seed 1 --steps 10 --batch-size 4 "
                "--image-size 16"),
            0);
  for (const char* f : {"model.gsdg", "state.gsdg", "loss_log.csv"})
    EXPECT_EQ(read_file(root() / "pre" / f), read_file(root() / "pre2" / f)) << f;
}

}  // namespace
