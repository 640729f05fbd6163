#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "slim/chem/sampler.hpp"
#include "slim/chem/smiles.hpp"
#include "slim/editor/synthetic.hpp"
#include "slim/eval/benchmark.hpp"
#include "slim/numcore/rng.hpp"
#include "support/metric_oracles.hpp"

using namespace slim;
using namespace slim::eval;
using chem::Property;
using editor::Dir;
using editor::Task;
using slim::testing::brute_acc;
using slim::testing::brute_spearman;
using slim::testing::random_records;

namespace {

EditRecord record(std::size_t src, bool valid, double before, double after, double sim, Property p = Property::MW) {
  EditRecord r;
  r.source_index = src;
  r.valid = valid;
  r.before[static_cast<std::size_t>(p)] = before;
  r.after[static_cast<std::size_t>(p)] = after;
  if (valid) r.similarity = sim;
  return r;
}



std::vector<chem::Molecule> molecules(int n, std::uint64_t seed) {
  Rng rng(seed, "eval-mols");
  std::vector<chem::Molecule> out;
  for (int i = 0; i < n; ++i) out.push_back(chem::sample_molecule(rng, {2, 10}));
  return out;
}

}  // namespace

TEST(AccAtTau, Examples) {
  const Task up{Property::MW, Dir::Up};
  const std::vector<EditRecord> good{record(0, true, 10, 12, 0.7)};
  EXPECT_EQ(acc_at_tau(good, 0.65, up), 100.0);
  const std::vector<EditRecord> far{record(0, true, 10, 12, 0.5)};
  EXPECT_EQ(acc_at_tau(far, 0.65, up), 0.0);
  EXPECT_EQ(acc_at_tau(far, 0.15, up), 100.0);
  const std::vector<EditRecord> flat{record(0, true, 10, 10, 0.9)};
  EXPECT_EQ(acc_at_tau(flat, 0.15, up), 0.0);
  const std::vector<EditRecord> invalid{record(0, false, 10, 99, 0)};
  EXPECT_EQ(acc_at_tau(invalid, 0.0, up), 0.0);
  const std::vector<EditRecord> down{record(0, true, 10, 8, 0.9), record(1, true, 10, 12, 0.9)};
  EXPECT_EQ(acc_at_tau(down, 0.15, {Property::MW, Dir::Down}), 50.0);
  EXPECT_THROW(acc_at_tau(std::vector<EditRecord>{}, 0.15, up), ConfigError);
}

TEST(AccAtTau, MatchesBruteForce) {
  Rng rng(1, "acc");
  for (int t = 0; t < 200; ++t) {
    const auto recs = random_records(rng);
    const Task task{chem::kAllProperties[rng.below(5)], rng.bernoulli(0.5) ? Dir::Up : Dir::Down};
    for (double tau : {0.0, 0.15, 0.5, 0.65, 1.0}) {
      EXPECT_EQ(acc_at_tau(recs, tau, task), brute_acc(recs, tau, {task}));
    }
    EXPECT_GE(acc_at_tau(recs, 0.15, task), acc_at_tau(recs, 0.65, task));
  }
}

TEST(JointSuccess, ExamplesAndBruteForce) {
  EditRecord both;
  both.valid = true;
  both.similarity = 0.8;
  both.before = {1, 1, 1, 1, 1};
  both.after = {2, 2, 1, 1, 1};
  const std::vector<Task> tasks{{Property::MW, Dir::Up}, {Property::HBA, Dir::Up}};
  EXPECT_EQ(joint_success(std::vector<EditRecord>{both}, tasks, 0.65), 100.0);
  EditRecord one = both;
  one.after[1] = 1;
  EXPECT_EQ(joint_success(std::vector<EditRecord>{one}, tasks, 0.65), 0.0);

  Rng rng(2, "joint");
  for (int t = 0; t < 200; ++t) {
    const auto recs = random_records(rng);
    std::vector<Task> ts;
    for (auto p : chem::kAllProperties)
      if (rng.bernoulli(0.4)) ts.push_back({p, rng.bernoulli(0.5) ? Dir::Up : Dir::Down});
    if (ts.empty()) ts.push_back({Property::HBD, Dir::Up});
    EXPECT_EQ(joint_success(recs, ts, 0.3), brute_acc(recs, 0.3, ts));
  }
}

TEST(Spearman, ExamplesAndBruteForce) {
  const std::vector<double> x{1, 2, 3, 4}, y{10, 20, 30, 40}, r{4, 3, 2, 1};
  EXPECT_NEAR(*spearman(x, y), 1.0, 1e-15);
  EXPECT_NEAR(*spearman(x, r), -1.0, 1e-15);
  const std::vector<double> a{1, 2, 2, 3}, b{1, 3, 2, 4};
  EXPECT_EQ(mean_ranks(a), (std::vector<double>{1, 2.5, 2.5, 4}));
  // ranks (1,2.5,2.5,4) vs (1,3,2,4): cov 4.5, var 4.5 and 5 -> 4.5/sqrt(22.5)
  EXPECT_NEAR(*spearman(a, b), 4.5 / std::sqrt(22.5), 1e-15);
  EXPECT_FALSE(spearman(std::vector<double>{2, 2, 2}, std::vector<double>{1, 2, 3}));

  Rng rng(3, "rho");
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + rng.below(20);
    std::vector<double> u(n), v(n);
    for (std::size_t i = 0; i < n; ++i) {
      u[i] = static_cast<double>(rng.below(6));
      v[i] = static_cast<double>(rng.below(6));
    }
    const auto got = spearman(u, v);
    const double want = brute_spearman(u, v);
    if (!std::isfinite(want)) {
      EXPECT_FALSE(got);
    } else {
      ASSERT_TRUE(got);
      EXPECT_NEAR(*got, want, 1e-12);
    }
  }
}

TEST(Records, OracleRecomputation) {
  const auto src = chem::parse_smiles("CCO");
  editor::Candidate c{"CCOC", chem::parse_smiles("CCOC")};
  const auto r = make_record(3, src, c);
  EXPECT_TRUE(r.valid);
  for (auto p : chem::kAllProperties) {
    EXPECT_EQ(r.value_before(p), chem::property(src, p));
    EXPECT_EQ(r.value_after(p), chem::property(*c.molecule, p));
  }
  ASSERT_TRUE(r.similarity);
  EXPECT_GT(*r.similarity, 0.0);
  EXPECT_LT(*r.similarity, 1.0);
  const auto bad = make_record(0, src, {"C(", std::nullopt});
  EXPECT_FALSE(bad.valid);
  EXPECT_FALSE(bad.similarity);
}

TEST(Benchmark, SharedStreamsAndNeutralZeroAlpha) {
  editor::SyntheticLinearEditor ed;
  const auto mols = molecules(20, 4);
  BenchmarkSpec spec{{Property::HBA, Dir::Up}, 3, 5, {}, 9};
  const auto sft = run_benchmark(ed, mols, {}, spec);
  EXPECT_EQ(sft.size(), 100u);
  const Arm zero{"slim", steer::random_direction(32, 1), 0.0};
  const auto steered = run_benchmark(ed, mols, zero, spec);
  ASSERT_EQ(steered.size(), sft.size());
  for (std::size_t i = 0; i < sft.size(); ++i) {
    EXPECT_EQ(steered[i].candidate, sft[i].candidate);
    EXPECT_EQ(steered[i].after, sft[i].after);
  }
  EXPECT_THROW(run_benchmark(ed, mols, Arm{"sft", std::nullopt, 1.0}, spec), ConfigError);
  EXPECT_THROW(run_benchmark(ed, mols, Arm{"caa", std::nullopt, 1.0}, spec), ConfigError);
}

TEST(Benchmark, AlphaSearchPrefersSteering) {
  editor::SyntheticLinearEditor ed;
  const auto mols = molecules(40, 5);
  steer::Direction g;
  g.kind = steer::DirectionKind::Grad;
  g.vector = ed.ascent_direction(Property::HBD);
  BenchmarkSpec spec{{Property::HBD, Dir::Up}, 3, 5, {}, 10};
  const std::vector<double> grid{0, 0.5, 1, 2, 5};
  const auto s = tune_alpha(ed, mols, g, grid, spec);
  ASSERT_EQ(s.acc.size(), 5u);
  EXPECT_GT(s.best_alpha, 0.0);
  EXPECT_GE(*std::max_element(s.acc.begin(), s.acc.end()), s.acc[0]);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (s.acc[i] == *std::max_element(s.acc.begin(), s.acc.end())) {
      EXPECT_EQ(s.best_alpha, grid[i]);
      break;
    }
  }
}

TEST(Ablation, GridIsCompleteAndDeterministic) {
  editor::SyntheticLinearEditor ed;
  const auto mols = molecules(10, 6);
  const std::vector<Property> props{Property::MW, Property::HBD};
  std::vector<AblationArm> arms(2);
  arms[0].name = "sft";
  arms[1].name = "random";
  for (auto p : props) {
    arms[0].per_property[p] = Arm{};
    arms[1].per_property[p] = Arm{"random", steer::random_direction(32, 3), 1.0};
  }
  BenchmarkSpec spec{{Property::MW, Dir::Up}, 3, 3, {}, 11};
  const auto rep = ablation_matrix(ed, mols, arms, props, spec);
  EXPECT_EQ(rep.cells.size(), 2u * 2u * 2u);
  for (std::size_t i = 0; i + 1 < rep.cells.size(); i += 2) EXPECT_GE(rep.cells[i].acc, rep.cells[i + 1].acc);

  const auto dir = std::filesystem::temp_directory_path() / "slim_ablation";
  std::filesystem::remove_all(dir);
  write_grid_csv(dir / "a.csv", rep);
  write_grid_csv(dir / "b.csv", ablation_matrix(ed, mols, arms, props, spec));
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  };
  EXPECT_EQ(slurp(dir / "a.csv"), slurp(dir / "b.csv"));
  write_grid_json(dir / "a.json", rep);
  write_delta_svg(dir / "a.svg", rep);
  EXPECT_NE(slurp(dir / "a.svg").find("<svg"), std::string::npos);

  std::vector<AblationArm> missing(1);
  missing[0].name = "x";
  EXPECT_THROW(ablation_matrix(ed, mols, missing, props, spec), ConfigError);

  sae::SaeConfig c;
  const auto v = vanilla_config(c);
  EXPECT_EQ(v.lambda.contrast, 0.0);
  EXPECT_EQ(v.lambda.sup, 0.0);
  EXPECT_EQ(v.lambda.grad, 0.0);
  EXPECT_EQ(v.lambda.sparse, c.lambda.sparse);
  EXPECT_EQ(no_grad_config(c).lambda.grad, 0.0);
  EXPECT_EQ(no_grad_config(c).lambda.sup, c.lambda.sup);
}

TEST(FeatureReport, PlantedFeatureAndConstantFeature) {
  sae::SaeConfig c;
  c.d = 3;
  c.expansion = 2;
  c.properties = {Property::MW};
  sae::GatedSae s(c, Matrix::Zero(1, 3));
  auto& t = s.tensors();
  t[0] = Matrix::Constant(6, 3, 0.0);
  t[0].col(0).setConstant(100.0);  // gate open for positive first coordinate
  t[1].setZero();
  t[1](0, 0) = 1.0;                // feature 0 reads coordinate 0
  t[1](1, 1) = 1.0;                // feature 1 reads coordinate 1 (always zero below)
  t[static_cast<std::size_t>(s.slot(0, sae::GatedSae::Gate))] << 5, 4, -1, -2, -3, -4;

  probe::ActivationMatrix acts;
  acts.properties = {Property::MW};
  acts.hidden = Matrix::Zero(8, 3);
  acts.labels.resize(8, 1);
  for (int i = 0; i < 8; ++i) {
    acts.hidden(i, 0) = i + 1;
    acts.labels(i, 0) = 10.0 * (i + 1);
  }
  const auto rep = feature_report(s, acts, 2);
  ASSERT_EQ(rep.best.size(), 1u);
  EXPECT_EQ(rep.best[0].feature, 0);
  EXPECT_NEAR(rep.best[0].rho, 1.0, 1e-12);
  EXPECT_NEAR(rep.best[0].top_mean, 75.0, 1e-12);
  EXPECT_NEAR(rep.best[0].bottom_mean, 15.0, 1e-12);
  EXPECT_NEAR(rep.best[0].delta, 60.0, 1e-12);
  ASSERT_EQ(rep.constant.size(), 1u);
  EXPECT_EQ(rep.constant[0].second, 1);
  for (std::size_t i = 1; i < rep.rows.size(); ++i) EXPECT_GE(std::abs(rep.rows[i - 1].rho), std::abs(rep.rows[i].rho));
}
