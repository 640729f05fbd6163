#include "slim/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "slim/chem/fingerprint.hpp"
#include "slim/chem/properties.hpp"
#include "slim/chem/smiles.hpp"

namespace slim::eval {

namespace {

std::size_t source_count(std::span<const EditRecord> records) {
  if (records.empty()) throw ConfigError("metrics: empty record set");
  std::vector<std::size_t> ids;
  for (const auto& r : records) ids.push_back(r.source_index);
  std::sort(ids.begin(), ids.end());
  return static_cast<std::size_t>(std::unique(ids.begin(), ids.end()) - ids.begin());
}

template <typename Pred>
double percent_sources(std::span<const EditRecord> records, Pred success) {
  const std::size_t n = source_count(records);
  std::map<std::size_t, bool> hit;
  for (const auto& r : records) hit[r.source_index] = hit[r.source_index] || success(r);
  const auto wins = std::count_if(hit.begin(), hit.end(), [](const auto& kv) { return kv.second; });
  return 100.0 * static_cast<double>(wins) / static_cast<double>(n);
}

}  // namespace

PropertyValues all_properties(const chem::Molecule& m) {
  PropertyValues v{};
  for (auto p : chem::kAllProperties) v[static_cast<std::size_t>(p)] = chem::property(m, p);
  return v;
}

bool EditRecord::improves(const editor::Task& task) const {
  if (!valid) return false;
  const double b = value_before(task.property), a = value_after(task.property);
  return task.dir == editor::Dir::Up ? a > b : a < b;
}

EditRecord make_record(std::size_t source_index, const chem::Molecule& source, const editor::Candidate& cand) {
  EditRecord r;
  r.source_index = source_index;
  r.source = chem::to_smiles(source);
  r.candidate = cand.text;
  r.before = all_properties(source);
  if (cand.molecule) {
    r.valid = true;
    r.after = all_properties(*cand.molecule);
    r.similarity = chem::tanimoto(chem::morgan_fingerprint(source), chem::morgan_fingerprint(*cand.molecule));
  }
  return r;
}

double acc_at_tau(std::span<const EditRecord> records, double tau, const editor::Task& task) {
  return percent_sources(records,
                         [&](const EditRecord& r) { return r.improves(task) && *r.similarity >= tau; });
}

double joint_success(std::span<const EditRecord> records, std::span<const editor::Task> tasks, double tau) {
  if (tasks.empty()) throw ConfigError("joint_success: no tasks");
  return percent_sources(records, [&](const EditRecord& r) {
    if (!r.valid || *r.similarity < tau) return false;
    return std::all_of(tasks.begin(), tasks.end(), [&](const editor::Task& t) { return r.improves(t); });
  });
}

std::vector<double> mean_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> rank(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) rank[order[t]] = r;
    i = j + 1;
  }
  return rank;
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("spearman: length mismatch");
  if (x.size() < 2) return std::nullopt;
  const auto rx = mean_ranks(x), ry = mean_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx <= 0 || syy <= 0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace slim::eval
