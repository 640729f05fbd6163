#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "slim/editor/editor.hpp"
#include "slim/probe/probe.hpp"
#include "slim/sae/sae.hpp"

namespace slim::steer {

enum class DirectionKind { Grad, Caa, Random, Slim, Feature, Multi };

std::string_view name(DirectionKind k);
std::optional<DirectionKind> kind_from_name(std::string_view s);

struct Direction {
  Vector vector;
  DirectionKind kind = DirectionKind::Random;
  std::vector<chem::Property> properties;
  int k = 0;                        // slim only
  std::string source;               // checkpoint or artifact id
  double raw_norm = 1.0;            // magnitude before the final normalization
  std::vector<int> support;         // slim: surviving features, by magnitude descending
  std::vector<double> magnitudes;   // slim: code values of `support`
  int feature = -1;                 // feature only
  std::vector<double> alphas;       // multi only

  Eigen::Index size() const { return vector.size(); }
};

/// Mean over pairs of the unit-normalized, token-pooled gradient of
/// log p(target | source) at `layer`, normalized again.
Direction grad_direction(const editor::Editor& ed, std::span<const editor::EditPair> pairs, int layer);

/// Unit mean difference between two groups of rows.
Direction caa_direction(const Matrix& high, const Matrix& low);
/// Groups are the label quartiles of `property` (contrastive grouping rule).
Direction caa_direction(const probe::ActivationMatrix& acts, chem::Property property);

Direction random_direction(int d, std::uint64_t seed);

/// normalize(W_d top_k(enc(d_grad), k)).
Direction slim_direction(const sae::GatedSae& sae, const Direction& grad, int k);

/// Decoder column j.
Direction feature_direction(const sae::GatedSae& sae, int j);

/// sum_i alphas[i] * directions[i], without normalization.
Direction combine(std::span<const Direction> directions, std::span<const double> alphas);

/// h + alpha * d on every row.
Matrix apply_steering(const Matrix& h, const Direction& d, double alpha);

editor::Injection injection(const Direction& d, int layer, double alpha);

void save_direction(const std::filesystem::path& manifest, const Direction& d);
Direction load_direction(const std::filesystem::path& manifest);

}  // namespace slim::steer
