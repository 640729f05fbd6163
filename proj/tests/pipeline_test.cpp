#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "slim/error.hpp"
#include "slim/pipeline/pipeline.hpp"

using namespace slim;
using namespace slim::pipeline;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("slim_pipeline_test_" + name);
  fs::remove_all(p);
  return p;
}

PipelineConfig small_config(const fs::path& wd) {
  return parse_config_text(R"({
    "backend": "synthetic", "seed": 3,
    "properties": ["MW", "HBA", "HBD"],
    "data": {"scan_molecules": 150, "sae_molecules": 300, "pairs_per_property": 60, "validation": 10, "test": 10},
    "sae": {"epochs": 4, "batch": 64},
    "steer": {"alpha_grid": [0, 1, 2], "n": 3},
    "interpret_top_n": 10,
    "work_dir": ")" + wd.string() + R"("})");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(Config, EmptyObjectFillsDefaults) {
  const auto cfg = parse_config_text("{}");
  EXPECT_EQ(cfg.backend, Backend::Synthetic);
  EXPECT_EQ(cfg.properties.size(), 5u);
  EXPECT_EQ(cfg.sae.d, cfg.synthetic.width);
  EXPECT_EQ(cfg.steer.alpha_grid, (std::vector<double>{0.0, 0.5, 1.0, 2.0, 5.0}));
  EXPECT_EQ(cfg.data.test, 100);
}

TEST(Config, CanonicalFormRoundTrips) {
  const auto cfg = small_config("rt");
  EXPECT_EQ(to_json(parse_config(to_json(cfg))), to_json(cfg));
}

TEST(Config, TransformerBackendSizesTheSae) {
  const auto cfg = parse_config_text(R"({"backend": "tiny-transformer", "transformer": {"width": 48, "heads": 4}})");
  EXPECT_EQ(cfg.sae.d, 48);
}

TEST(Config, UnknownKeyNamesThePath) {
  try {
    parse_config_text(R"({"sae": {"epochs": 3, "lamda": {}}})");
    FAIL() << "accepted an unknown key";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("sae.lamda"), std::string::npos) << e.what();
  }
}

TEST(Config, SyntaxErrorReportsTheLine) {
  try {
    parse_config_text("{\n  \"seed\": 1,\n  \"backend\": synthetic\n}");
    FAIL() << "accepted malformed JSON";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Config, RejectsBadValues) {
  EXPECT_THROW(parse_config_text(R"({"backend": "gpt"})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"properties": ["MW", "Weight"]})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"seed": "one"})"), ConfigError);
}

TEST(Stages, NamesRoundTripInOrder) {
  const auto stages = all_stages();
  ASSERT_EQ(stages.size(), 12u);
  EXPECT_EQ(name(stages.front()), "gen-pairs");
  EXPECT_EQ(name(stages.back()), "report");
  for (auto s : stages) EXPECT_EQ(stage_from_name(name(s)), s);
  EXPECT_FALSE(stage_from_name("scan"));
}

TEST(Stages, TrainSaeBeforeScanNamesTheScan) {
  const auto cfg = small_config(scratch("missing").string());
  try {
    run_stage(cfg, Stage::TrainSae);
    FAIL() << "train-sae ran without a layer scan";
  } catch (const MissingArtifact& e) {
    EXPECT_EQ(e.stage(), "scan-layers");
  }
}

TEST(Stages, ScanThenTrainSaeSucceedsAndRerunIsNoop) {
  const auto wd = scratch("order");
  const auto cfg = small_config(wd);
  EXPECT_FALSE(run_stage(cfg, Stage::ScanLayers).skipped);
  EXPECT_FALSE(run_stage(cfg, Stage::TrainSae).skipped);
  EXPECT_TRUE(fs::exists(wd / "sae.json"));
  EXPECT_TRUE(fs::exists(wd / "directions" / "grad_MW.json"));

  const auto stamp = fs::last_write_time(wd / "sae.json");
  EXPECT_TRUE(run_stage(cfg, Stage::TrainSae).skipped);
  EXPECT_EQ(fs::last_write_time(wd / "sae.json"), stamp);
  EXPECT_FALSE(run_stage(cfg, Stage::TrainSae, /*force=*/true).skipped);
}

TEST(Stages, ChangedConfigMakesStagesStale) {
  const auto wd = scratch("stale");
  auto cfg = small_config(wd);
  run_stage(cfg, Stage::ScanLayers);
  cfg.seed = 4;
  EXPECT_FALSE(run_stage(cfg, Stage::ScanLayers).skipped);
  cfg.seed = 5;
  EXPECT_THROW(run_stage(cfg, Stage::ExtractActs), MissingArtifact);
}

TEST(Stages, FullRunIsByteDeterministic) {
  const auto a = scratch("det_a");
  const auto b = scratch("det_b");
  const auto results = run_all(small_config(a));
  ASSERT_EQ(results.size(), 12u);
  for (std::size_t i = 0; i < results.size(); ++i) EXPECT_EQ(results[i].stage, all_stages()[i]);
  run_all(small_config(b));
  for (const auto& f : report_files()) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  const std::string md = slurp(a / "report.md");
  EXPECT_NE(md.find("Selected layer: 3"), std::string::npos);

  for (const auto& r : run_all(small_config(a))) EXPECT_TRUE(r.skipped) << name(r.stage);
}
