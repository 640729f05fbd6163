#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "slim/chem/properties.hpp"
#include "slim/chem/sampler.hpp"
#include "slim/chem/smiles.hpp"
#include "slim/editor/pairs.hpp"
#include "slim/editor/synthetic.hpp"

namespace slim::editor {
namespace {

using chem::Property;

const SyntheticLinearEditor& shared_editor() {
  static const SyntheticLinearEditor editor{};
  return editor;
}

std::vector<chem::Molecule> molecules(std::uint64_t seed, int n) {
  Rng rng(seed, "editor-test-molecules");
  std::vector<chem::Molecule> out;
  for (int i = 0; i < n; ++i) out.push_back(chem::sample_molecule(rng, {2, 12}));
  return out;
}

double mean_delta(const Editor& ed, const std::vector<chem::Molecule>& mols, Property p, const Injection* inj,
                  int n) {
  double total = 0;
  int count = 0;
  for (std::size_t i = 0; i < mols.size(); ++i) {
    const auto cands = ed.generate(mols[i], {p, Dir::Up}, n, {}, Rng(99).fork(i), inj);
    for (const auto& c : cands) {
      total += chem::property(*c.molecule, p) - chem::property(mols[i], p);
      ++count;
    }
  }
  return total / count;
}

TEST(Nucleus, SmallTopPPicksArgmax) {
  Rng rng(1);
  const std::vector<double> logits{0.1, 2.0, 1.9, -1.0};
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_nucleus(logits, 1.0, 1e-6, rng), 1);
}

TEST(Nucleus, MaskedEntriesNeverDrawn) {
  Rng rng(2);
  const double ninf = -std::numeric_limits<double>::infinity();
  const std::vector<double> logits{ninf, 0.0, ninf, 0.0};
  for (int i = 0; i < 500; ++i) {
    const int k = sample_nucleus(logits, 0.8, 0.95, rng);
    EXPECT_TRUE(k == 1 || k == 3);
  }
}

TEST(Nucleus, FullNucleusMatchesSoftmaxFrequencies) {
  Rng rng(3);
  const std::vector<double> logits{0.0, std::log(2.0), std::log(5.0)};
  std::array<int, 3> counts{};
  const int draws = 80000;
  for (int i = 0; i < draws; ++i) ++counts[static_cast<std::size_t>(sample_nucleus(logits, 1.0, 1.0, rng))];
  EXPECT_NEAR(counts[0] / double(draws), 1.0 / 8, 0.01);
  EXPECT_NEAR(counts[1] / double(draws), 2.0 / 8, 0.01);
  EXPECT_NEAR(counts[2] / double(draws), 5.0 / 8, 0.01);
}

TEST(Nucleus, TopPDropsTail) {
  // Probabilities 5/8, 2/8, 1/8: top_p = 0.8 keeps the first two.
  Rng rng(4);
  const std::vector<double> logits{0.0, std::log(2.0), std::log(5.0)};
  for (int i = 0; i < 2000; ++i) EXPECT_NE(sample_nucleus(logits, 1.0, 0.8, rng), 0);
}

TEST(Pairs, DonorUpOnEthane) {
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    const auto src = chem::parse_smiles("CC");
    const auto pair = make_edit_pair(src, {Property::HBD, Dir::Up}, rng);
    EXPECT_GE(chem::hbond_donors(pair.target) - chem::hbond_donors(src), 1);
    EXPECT_GE(pair.actions.size(), 1u);
    EXPECT_LE(pair.actions.size(), 3u);
  }
}

TEST(Pairs, WeightUpIncreasesWeight) {
  Rng rng(6);
  for (const auto& m : molecules(6, 50)) {
    const auto pair = make_edit_pair(m, {Property::MW, Dir::Up}, rng);
    EXPECT_GT(chem::molecular_weight(pair.target), chem::molecular_weight(m));
  }
}

TEST(Pairs, EveryTaskStrictlyImproves) {
  Rng rng(7);
  for (const auto& m : molecules(7, 200)) {
    for (Property p : chem::kAllProperties) {
      for (Dir d : {Dir::Up, Dir::Down}) {
        try {
          const auto pair = make_edit_pair(m, {p, d}, rng);
          const double delta = chem::property(pair.target, p) - chem::property(m, p);
          EXPECT_GT(sign(d) * delta, 0.0);
        } catch (const chem::ChemError&) {
        }
      }
    }
  }
}

TEST(Pairs, NothingToDeleteFromSingleAtom) {
  Rng rng(8);
  EXPECT_THROW(make_edit_pair(chem::parse_smiles("C"), {Property::MW, Dir::Down}, rng), chem::ChemError);
}

TEST(Pairs, OffTargetFractionInCorpus) {
  Rng rng(10);
  CorpusOptions opts;
  opts.pairs = 2000;
  opts.off_target = 0.6;
  const auto pairs = make_corpus(opts, rng);
  int missed = 0;
  for (const auto& pr : pairs) {
    const double delta = chem::property(pr.target, pr.task.property) - chem::property(pr.source, pr.task.property);
    missed += sign(pr.task.dir) * delta <= 0;
  }
  // Off-target draws that happen to serve the stated task are discarded,
  // so the realized share differs somewhat from the requested one.
  const double share = static_cast<double>(missed) / static_cast<double>(pairs.size());
  EXPECT_GT(share, 0.4);
  EXPECT_LT(share, 0.65);

  Rng a(11), b(11);
  opts.off_target = 0.0;
  opts.pairs = 30;
  CorpusOptions plain;
  plain.pairs = 30;
  const auto x = make_corpus(opts, a), y = make_corpus(plain, b);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(chem::to_smiles(x[i].target), chem::to_smiles(y[i].target));
}

TEST(Pairs, CorpusRoundTrip) {
  Rng rng(9);
  CorpusOptions opts;
  opts.pairs = 50;
  const auto pairs = make_corpus(opts, rng);
  const auto path = std::filesystem::temp_directory_path() / "slim_corpus_test.tsv";
  write_corpus(path, pairs);
  const auto back = read_corpus(path);
  ASSERT_EQ(back.size(), pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    EXPECT_EQ(chem::to_smiles(back[i].target), chem::to_smiles(pairs[i].target));
    EXPECT_EQ(back[i].task.property, pairs[i].task.property);
    EXPECT_EQ(back[i].task.dir, pairs[i].task.dir);
    EXPECT_EQ(back[i].actions, pairs[i].actions);
  }
  std::filesystem::remove(path);
}

TEST(Synthetic, NoiselessCaptureIsLinearMap) {
  SyntheticConfig cfg;
  cfg.noise = 0.0;
  const SyntheticLinearEditor ed(cfg);
  for (const auto& m : molecules(10, 20)) {
    const auto layers = ed.forward_capture(m, {});
    ASSERT_EQ(layers.size(), 6u);
    for (int l = 0; l < 6; ++l) {
      ASSERT_EQ(layers[l].rows(), 1);
      ASSERT_EQ(layers[l].cols(), 32);
      EXPECT_EQ(layers[l].transpose(), ed.layer_map(l) * ed.phi(m));
    }
  }
}

TEST(Synthetic, CaptureIsRepeatable) {
  const auto& ed = shared_editor();
  const auto m = chem::parse_smiles("CC(O)CN");
  EXPECT_EQ(ed.forward_capture(m, {})[3], ed.forward_capture(m, {})[3]);
}

TEST(Synthetic, PlantedDirectionsAreOrthonormal) {
  const auto& ed = shared_editor();
  for (Property p : chem::kAllProperties) {
    for (Property q : chem::kAllProperties) {
      EXPECT_NEAR(ed.ascent_direction(p).dot(ed.ascent_direction(q)), p == q ? 1.0 : 0.0, 1e-12);
    }
  }
}

TEST(Synthetic, AscentRaisesLogitsOfImprovingActions) {
  const auto& ed = shared_editor();
  const auto m = chem::parse_smiles("CCN");
  const Vector h = ed.forward_capture(m, {})[3].transpose();
  for (Property p : chem::kAllProperties) {
    const Task task{p, Dir::Up};
    const Vector shift = ed.logits(h + ed.ascent_direction(p), task) - ed.logits(h, task);
    for (Eigen::Index a = 0; a < shift.size(); ++a) {
      if (ed.action_effects()(static_cast<Eigen::Index>(p), a) > 0) EXPECT_GT(shift(a), 0.0);
    }
  }
}

TEST(Synthetic, ZeroInjectionIsNeutral) {
  const auto& ed = shared_editor();
  const Injection zero{3, Vector::Zero(32)};
  for (const auto& m : molecules(11, 20)) {
    const auto a = ed.generate(m, {Property::MW, Dir::Up}, 5, {}, Rng(4));
    const auto b = ed.generate(m, {Property::MW, Dir::Up}, 5, {}, Rng(4), &zero);
    ASSERT_EQ(a.size(), 5u);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].text, b[i].text);
  }
}

TEST(Synthetic, SteeringRaisesWeight) {
  const auto& ed = shared_editor();
  const auto mols = molecules(12, 40);
  const Injection push{3, 2.0 * ed.ascent_direction(Property::MW)};
  EXPECT_GT(mean_delta(ed, mols, Property::MW, &push, 5), mean_delta(ed, mols, Property::MW, nullptr, 5));
}

TEST(Synthetic, SteeringIsMonotoneInAlpha) {
  const auto& ed = shared_editor();
  const auto mols = molecules(13, 40);
  for (Property p : chem::kAllProperties) {
    double previous = -std::numeric_limits<double>::infinity();
    for (double alpha : {0.0, 0.5, 1.0, 2.0}) {
      const Injection inj{3, alpha * ed.ascent_direction(p)};
      const double m = mean_delta(ed, mols, p, &inj, 5);
      EXPECT_GT(m, previous) << chem::name(p) << " alpha " << alpha;
      previous = m;
    }
  }
}

Matrix closed_form_grad(const SyntheticLinearEditor& ed, const EditPair& pair) {
  const Vector h = ed.forward_capture(pair.source, pair.task)[3].transpose();
  const Vector l = ed.logits(h, pair.task);
  Vector p = (l.array() - l.maxCoeff()).exp();
  p /= p.sum();
  const Matrix u = ed.config().logit_scale * ed.readout(pair.task);
  const auto& catalog = chem::standard_catalog();
  Vector g = Vector::Zero(ed.width());
  for (const auto& a : pair.actions) {
    Vector e = Vector::Zero(l.size());
    e(std::find(catalog.begin(), catalog.end(), a) - catalog.begin()) = 1.0;
    g += u.transpose() * (e - p);
  }
  return g.transpose();
}

TEST(Synthetic, GradientMatchesClosedForm) {
  for (double scale : {1.0, 2.0}) {
    SyntheticConfig cfg;
    cfg.logit_scale = scale;
    const SyntheticLinearEditor ed(cfg);
    Rng rng(14);
    for (const auto& m : molecules(14, 30)) {
      EditPair pair;
      try {
        pair = make_edit_pair(m, {chem::kAllProperties[rng.below(5)], Dir::Up}, rng);
      } catch (const chem::ChemError&) {
        continue;
      }
      const Matrix tape = ed.grad_logprob_at_layer(pair, 3);
      const Matrix exact = closed_form_grad(ed, pair);
      EXPECT_LE((tape - exact).norm(), 1e-10 * std::max(1.0, exact.norm()));
    }
  }
}

TEST(Synthetic, GradientMatchesFiniteDifferenceOfLogProb) {
  const auto& ed = shared_editor();
  Rng rng(15);
  const auto pair = make_edit_pair(chem::parse_smiles("CCOC"), {Property::HBA, Dir::Up}, rng);
  const Matrix g = ed.grad_logprob_at_layer(pair, 3);
  const Vector h = ed.forward_capture(pair.source, pair.task)[3].transpose();
  const auto& catalog = chem::standard_catalog();
  auto logp = [&](const Vector& x) {
    const Vector l = ed.logits(x, pair.task);
    const double lse = l.maxCoeff() + std::log((l.array() - l.maxCoeff()).exp().sum());
    double t = 0;
    for (const auto& a : pair.actions) t += l(std::find(catalog.begin(), catalog.end(), a) - catalog.begin()) - lse;
    return t;
  };
  EXPECT_NEAR(logp(h), ed.log_prob(pair), 1e-12);
  for (Eigen::Index i = 0; i < h.size(); ++i) {
    Vector hp = h, hm = h;
    hp(i) += 1e-5;
    hm(i) -= 1e-5;
    EXPECT_NEAR(g(0, i), (logp(hp) - logp(hm)) / 2e-5, 1e-7);
  }
}

TEST(Synthetic, OffLayerGradientIsDegenerate) {
  const auto& ed = shared_editor();
  Rng rng(16);
  const auto pair = make_edit_pair(chem::parse_smiles("CC"), {Property::MW, Dir::Up}, rng);
  EXPECT_THROW(ed.grad_logprob_at_layer(pair, 1), DegenerateError);
}

}  // namespace
}  // namespace slim::editor
