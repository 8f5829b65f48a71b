#pragma once

#include <cmath>
#include <ostream>
#include <utility>
#include <vector>

#include "explirec/data_ingest.hpp"
#include "explirec/error.hpp"
#include "explirec/models/factor_model.hpp"
#include "explirec/models/sgd_factorization.hpp"
#include "explirec/models/train_config.hpp"
#include "explirec/random.hpp"

namespace explirec {

namespace detail {

inline constexpr double kNmfEpsilon = 1e-12;

// ½ Σ_obs (y − p·q)² + ½λ(‖W‖² + ‖H‖²) over observed entries only.
inline double nmf_objective(const FactorModel& m, const InteractionDataset& train, double l2) {
  double total = 0;
  for (const auto& o : train.observations()) {
    double e = dot(m.user_vectors.row(o.user), m.item_vectors.row(o.poi)) - o.stars;
    total += 0.5 * e * e;
  }
  if (l2 > 0) {
    double reg = 0;
    for (double x : m.user_vectors.values()) reg += x * x;
    for (double x : m.item_vectors.values()) reg += x * x;
    total += 0.5 * l2 * reg;
  }
  return total;
}

// One multiplicative update of `update` with `fixed` held constant, over the
// observed entries. `by_row` lists observation positions for each row of
// `update`; `col_of` picks the row of `fixed` paired with an observation.
template <typename ColOf>
void nmf_half_step(Matrix& update, const Matrix& fixed, const InteractionDataset& train,
                   const std::vector<std::vector<std::size_t>>& by_row, ColOf col_of, double l2) {
  const std::size_t d = update.cols();
  std::vector<double> num(d), den(d);
  for (std::size_t r = 0; r < update.rows(); ++r) {
    std::fill(num.begin(), num.end(), 0.0);
    std::fill(den.begin(), den.end(), 0.0);
    auto w = update.row(r);
    for (std::size_t k : by_row[r]) {
      const auto& o = train.observations()[k];
      auto h = fixed.row(col_of(o));
      const double pred = dot(w, h);
      for (std::size_t j = 0; j < d; ++j) {
        num[j] += o.stars * h[j];
        den[j] += pred * h[j];
      }
    }
    for (std::size_t j = 0; j < d; ++j) w[j] *= num[j] / (den[j] + l2 * w[j] + kNmfEpsilon);
  }
}

}  // namespace detail

// Nonnegative factorization ŷ = p_u · q_i fitted to raw star values with
// multiplicative updates restricted to observed entries. No biases. Each epoch
// updates all user factors, then all item factors.
inline std::pair<FactorModel, LearningCurve> train_nmf(const InteractionDataset& train,
                                                       const TrainConfig& cfg,
                                                       const InteractionDataset* validation = nullptr,
                                                       std::ostream* progress = nullptr) {
  cfg.validate();
  if (train.empty()) throw Error(ErrorCode::empty_input, "training set is empty");
  Rng rng(cfg.seed);
  const std::size_t d = cfg.latent_dim;
  FactorModel m;
  m.kind = ModelKind::nmf;
  m.global_mean = train.global_mean();
  m.user_vectors = Matrix(train.num_users(), d);
  m.item_vectors = Matrix(train.num_pois(), d);
  // start near ŷ ≈ μ
  const double scale = std::sqrt(m.global_mean / static_cast<double>(d));
  for (double& x : m.user_vectors.values()) x = scale * rng.uniform(0.5, 1.5);
  for (double& x : m.item_vectors.values()) x = scale * rng.uniform(0.5, 1.5);
  m.user_bias.assign(train.num_users(), 0.0);
  m.item_bias.assign(train.num_pois(), 0.0);
  m.known_users.assign(train.num_users(), 0);
  m.known_items.assign(train.num_pois(), 0);
  std::vector<std::vector<std::size_t>> by_user(train.num_users()), by_item(train.num_pois());
  for (std::size_t k = 0; k < train.size(); ++k) {
    const auto& o = train.observations()[k];
    m.known_users[o.user] = 1;
    m.known_items[o.poi] = 1;
    by_user[o.user].push_back(k);
    by_item[o.poi].push_back(k);
  }

  const InteractionDataset none;
  const InteractionDataset& val = validation ? *validation : none;
  LearningCurve curve;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    detail::nmf_half_step(m.user_vectors, m.item_vectors, train, by_user,
                          [](const Observation& o) { return o.poi; }, cfg.l2_reg);
    detail::nmf_half_step(m.item_vectors, m.user_vectors, train, by_item,
                          [](const Observation& o) { return o.user; }, cfg.l2_reg);
    LearningCurveRow row;
    row.epoch = epoch;
    row.objective = detail::nmf_objective(m, train, cfg.l2_reg);
    if (!std::isfinite(row.objective))
      throw Error(ErrorCode::non_finite_loss,
                  "nmf objective became non-finite at epoch " + std::to_string(epoch));
    row.train_rmse = *detail::dataset_rmse(m, train);
    row.validation_rmse = detail::dataset_rmse(m, val);
    curve.push_back(row);
    if (progress) *progress << "nmf epoch " << epoch << '/' << cfg.epochs << " train_rmse "
                            << row.train_rmse << '\n';
  }
  return {std::move(m), std::move(curve)};
}

}  // namespace explirec
