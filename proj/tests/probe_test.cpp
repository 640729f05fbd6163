#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "slim/chem/sampler.hpp"
#include "slim/chem/smiles.hpp"
#include "slim/editor/synthetic.hpp"
#include "slim/numcore/rng.hpp"
#include "slim/probe/probe.hpp"

using namespace slim;
using chem::Property;

namespace {

std::vector<chem::Molecule> molecules(int n, std::uint64_t seed) {
  Rng rng(seed, "probe-mols");
  std::vector<chem::Molecule> out;
  for (int i = 0; i < n; ++i) out.push_back(chem::sample_molecule(rng, {2, 12}));
  return out;
}

const std::vector<Property> kAll{chem::kAllProperties.begin(), chem::kAllProperties.end()};

}  // namespace

TEST(Probe, FindsPlantedLayer) {
  editor::SyntheticLinearEditor ed;
  const auto mols = molecules(400, 1);
  const auto res = probe::layer_scan(ed, mols, kAll);
  EXPECT_EQ(res.best_layer, 3);
  ASSERT_EQ(res.r2.rows(), 6);
  ASSERT_EQ(res.r2.cols(), 5);
  for (int l = 0; l < 6; ++l) {
    for (int p = 0; p < 5; ++p) {
      if (l == 3) {
        EXPECT_GE(res.r2(l, p), 0.99) << "layer " << l << " property " << p;
      } else {
        EXPECT_LE(res.r2(l, p), 0.2) << "layer " << l << " property " << p;
      }
    }
  }
}

TEST(Probe, PlantedLayerAcrossSeeds) {
  const auto mols = molecules(300, 2);
  int hits = 0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    editor::SyntheticConfig cfg;
    cfg.seed = 100 + s;
    editor::SyntheticLinearEditor ed(cfg);
    hits += probe::layer_scan(ed, mols, kAll, {1.0, 0.2, s}).best_layer == 3;
  }
  EXPECT_EQ(hits, 5);
}

TEST(Probe, SingleLayerIsTrivialWinner) {
  editor::SyntheticLinearEditor ed;
  const auto mols = molecules(150, 3);
  const auto acts = probe::extract_activations(ed, mols, 1, kAll);
  const std::vector<probe::ActivationMatrix> one{acts};
  EXPECT_EQ(probe::scan_layers(one).best_layer, 0);
}

TEST(Probe, RowOrderDoesNotMatter) {
  editor::SyntheticLinearEditor ed;
  const auto mols = molecules(200, 4);
  auto layers = probe::extract_all_layers(ed, mols, kAll);
  const auto base = probe::scan_layers(layers);
  std::vector<Eigen::Index> perm(200);
  for (int i = 0; i < 200; ++i) perm[static_cast<std::size_t>(i)] = (i * 37) % 200;
  for (auto& a : layers) {
    a.hidden = Matrix(a.hidden(perm, Eigen::all));
    a.labels = Matrix(a.labels(perm, Eigen::all));
  }
  const auto shuffled = probe::scan_layers(layers);
  EXPECT_EQ(shuffled.best_layer, base.best_layer);
  EXPECT_LE((shuffled.r2 - base.r2).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Probe, AppendedNoiseLayersDoNotMoveWinner) {
  editor::SyntheticLinearEditor ed;
  const auto mols = molecules(200, 5);
  auto layers = probe::extract_all_layers(ed, mols, kAll);
  Rng rng(6, "noise");
  for (int extra = 0; extra < 3; ++extra) {
    probe::ActivationMatrix a = layers.front();
    a.layer = static_cast<int>(layers.size());
    for (Eigen::Index i = 0; i < a.hidden.size(); ++i) a.hidden.data()[i] = rng.normal();
    layers.push_back(a);
  }
  EXPECT_EQ(probe::scan_layers(layers).best_layer, 3);
}

TEST(Probe, LabelsAreOracleValues) {
  editor::SyntheticLinearEditor ed;
  const auto mols = molecules(120, 7);
  const auto acts = probe::extract_activations(ed, mols, 3, kAll);
  ASSERT_EQ(acts.rows(), 120);
  EXPECT_EQ(acts.hidden.cols(), ed.width());
  for (std::size_t i = 0; i < mols.size(); ++i) {
    for (auto p : kAll) {
      EXPECT_EQ(acts.label(p)(static_cast<Eigen::Index>(i)), chem::property(mols[i], p));
    }
  }
}

TEST(Probe, CaptureTaskCyclesProperties) {
  EXPECT_EQ(probe::capture_task(0, kAll).property, kAll[0]);
  EXPECT_EQ(probe::capture_task(6, kAll).property, kAll[1]);
  EXPECT_EQ(probe::capture_task(6, kAll).dir, editor::Dir::Up);
}

TEST(Probe, Errors) {
  editor::SyntheticLinearEditor ed;
  EXPECT_THROW(probe::extract_activations(ed, {}, 0, kAll), ConfigError);
  const auto few = molecules(50, 8);
  EXPECT_THROW(probe::layer_scan(ed, few, kAll), ConfigError);
  EXPECT_THROW(probe::extract_activations(ed, few, 6, kAll), ConfigError);
  const std::vector<chem::Molecule> same(10, chem::parse_smiles("CCO"));
  EXPECT_THROW(probe::extract_activations(ed, same, 0, kAll), NumericError);
  EXPECT_THROW(probe::scan_layers({}), ConfigError);
}

TEST(Probe, CsvAndActivationFiles) {
  editor::SyntheticLinearEditor ed;
  const auto mols = molecules(150, 9);
  const auto res = probe::layer_scan(ed, mols, kAll);
  const auto dir = std::filesystem::temp_directory_path() / "slim_probe_io";
  std::filesystem::create_directories(dir);
  probe::write_r2_csv(dir / "r2.csv", res);
  std::ifstream in(dir / "r2.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "layer,MW,HBA,HBD,RotBond,LogPHat,mean");
  int lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  EXPECT_EQ(lines, 6);

  const auto acts = probe::extract_activations(ed, mols, 3, kAll);
  probe::save_activations(dir / "acts.json", acts);
  const auto back = probe::load_activations(dir / "acts.json");
  EXPECT_EQ(back.layer, 3);
  EXPECT_EQ(back.properties, acts.properties);
  EXPECT_TRUE(back.hidden == acts.hidden);
  EXPECT_TRUE(back.labels == acts.labels);
}
