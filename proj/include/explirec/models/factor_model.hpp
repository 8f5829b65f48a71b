#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "explirec/error.hpp"
#include "explirec/matrix.hpp"

namespace explirec {

enum class ModelKind : std::uint8_t { ncf = 1, svd_mf = 2, nmf = 3, knn = 4 };

inline std::string_view kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::ncf:
      return "ncf";
    case ModelKind::svd_mf:
      return "svd";
    case ModelKind::nmf:
      return "nmf";
    case ModelKind::knn:
      return "knn";
  }
  return "unknown";
}

inline ModelKind parse_model_kind(std::string_view name) {
  if (name == "ncf") return ModelKind::ncf;
  if (name == "svd" || name == "svd_mf") return ModelKind::svd_mf;
  if (name == "nmf") return ModelKind::nmf;
  if (name == "knn") return ModelKind::knn;
  throw Error(ErrorCode::usage, "unknown model '" + std::string(name) + "'");
}

inline constexpr double kMinStars = 1.0;
inline constexpr double kMaxStars = 5.0;

inline double clamp_rating(double r) { return std::clamp(r, kMinStars, kMaxStars); }

// Interaction layer of the NCF model: hidden = relu(H (p ⊙ q) + h0),
// output = w · hidden.
struct DenseLayer {
  Matrix weights;                   // hidden_units × latent_dim
  std::vector<double> bias;         // hidden_units
  std::vector<double> output;       // hidden_units

  std::size_t units() const noexcept { return bias.size(); }
  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// User/item embeddings with biases. Shared by NCF (optionally with a dense
// interaction layer), biased MF and NMF (no biases, nonnegative factors).
struct FactorModel {
  ModelKind kind = ModelKind::ncf;
  Matrix user_vectors;
  Matrix item_vectors;
  std::vector<double> user_bias;
  std::vector<double> item_bias;
  double global_mean = 0;
  std::vector<std::uint8_t> known_users;  // 1 if the user had training data
  std::vector<std::uint8_t> known_items;
  std::optional<DenseLayer> dense;

  std::size_t num_users() const noexcept { return user_vectors.rows(); }
  std::size_t num_items() const noexcept { return item_vectors.rows(); }
  std::size_t latent_dim() const noexcept { return user_vectors.cols(); }

  bool user_known(std::size_t u) const { return u < known_users.size() && known_users[u]; }
  bool item_known(std::size_t i) const { return i < known_items.size() && known_items[i]; }

  // Interaction term between user and item vectors.
  double interaction(std::size_t u, std::size_t i) const {
    auto p = user_vectors.row(u);
    auto q = item_vectors.row(i);
    if (!dense || dense->units() == 0) return dot(p, q);
    double out = 0;
    for (std::size_t h = 0; h < dense->units(); ++h) {
      double a = dense->bias[h];
      auto wrow = dense->weights.row(h);
      for (std::size_t k = 0; k < p.size(); ++k) a += wrow[k] * p[k] * q[k];
      if (a > 0) out += dense->output[h] * a;
    }
    return out;
  }

  // Unclamped model output for a warm pair.
  double raw_score(std::size_t u, std::size_t i) const {
    if (kind == ModelKind::nmf) return interaction(u, i);
    return global_mean + user_bias[u] + item_bias[i] + interaction(u, i);
  }

  // Clamped prediction with cold-start fallbacks to the global mean plus
  // whichever bias is known.
  double predict(std::size_t u, std::size_t i) const {
    const bool ku = user_known(u), ki = item_known(i);
    double r;
    if (ku && ki)
      r = raw_score(u, i);
    else if (ki)
      r = global_mean + item_bias[i];
    else if (ku)
      r = global_mean + user_bias[u];
    else
      r = global_mean;
    return clamp_rating(r);
  }

  friend bool operator==(const FactorModel&, const FactorModel&) = default;
};

// Rows of the user embedding matrix, biases excluded.
inline const Matrix& user_embeddings(const FactorModel& model) { return model.user_vectors; }

struct LearningCurveRow {
  std::size_t epoch = 0;
  double train_rmse = 0;
  std::optional<double> validation_rmse;
  double objective = 0;  // training loss on the full training set after the epoch

  friend bool operator==(const LearningCurveRow&, const LearningCurveRow&) = default;
};

using LearningCurve = std::vector<LearningCurveRow>;

}  // namespace explirec
