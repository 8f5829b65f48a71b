#pragma once

#include <cmath>
#include <numeric>
#include <sstream>
#include <utility>
#include <vector>

#include "explirec/data_ingest.hpp"
#include "explirec/error.hpp"
#include "explirec/metrics.hpp"
#include "explirec/models/factor_model.hpp"
#include "explirec/models/train_config.hpp"
#include "explirec/random.hpp"

namespace explirec {

// Gradient of the single-observation loss
//   ½(ŷ − y)² + ½λ(‖p‖² + ‖q‖² + b_u² + b_i² + ‖H‖² + ‖w‖²)
// with respect to every parameter it touches.
struct ExampleGradient {
  std::vector<double> user_vector;
  std::vector<double> item_vector;
  double user_bias = 0;
  double item_bias = 0;
  Matrix dense_weights;
  std::vector<double> dense_bias;
  std::vector<double> dense_output;
  double residual = 0;  // ŷ − y
};

inline double example_loss(const FactorModel& m, std::size_t u, std::size_t i, double y,
                           double l2) {
  double e = m.raw_score(u, i) - y;
  double reg = m.user_bias[u] * m.user_bias[u] + m.item_bias[i] * m.item_bias[i];
  for (double x : m.user_vectors.row(u)) reg += x * x;
  for (double x : m.item_vectors.row(i)) reg += x * x;
  if (m.dense) {
    for (double x : m.dense->weights.values()) reg += x * x;
    for (double x : m.dense->output) reg += x * x;
  }
  return 0.5 * e * e + 0.5 * l2 * reg;
}

// With dense_penalty false the ½λ(‖H‖² + ‖w‖²) term is left out, for callers
// that apply it once per batch.
inline void example_gradient(const FactorModel& m, std::size_t u, std::size_t i, double y,
                             double l2, ExampleGradient& g, bool dense_penalty = true) {
  const std::size_t d = m.latent_dim();
  auto p = m.user_vectors.row(u);
  auto q = m.item_vectors.row(i);
  g.user_vector.assign(d, 0.0);
  g.item_vector.assign(d, 0.0);

  // dℓ/dz for z = p ⊙ q
  std::vector<double> dz(d, 0.0);
  double out = 0;
  const bool has_dense = m.dense && m.dense->units() > 0;
  if (has_dense) {
    const auto& L = *m.dense;
    const std::size_t hu = L.units();
    std::vector<double> act(hu);
    for (std::size_t h = 0; h < hu; ++h) {
      double a = L.bias[h];
      auto wrow = L.weights.row(h);
      for (std::size_t k = 0; k < d; ++k) a += wrow[k] * p[k] * q[k];
      act[h] = a;
      if (a > 0) out += L.output[h] * a;
    }
    const double e = m.global_mean + m.user_bias[u] + m.item_bias[i] + out - y;
    const double dl2 = dense_penalty ? l2 : 0.0;
    g.residual = e;
    g.dense_weights = Matrix(hu, d);
    g.dense_bias.assign(hu, 0.0);
    g.dense_output.assign(hu, 0.0);
    for (std::size_t h = 0; h < hu; ++h) {
      const double relu = act[h] > 0 ? act[h] : 0.0;
      g.dense_output[h] = e * relu + dl2 * L.output[h];
      const double delta = act[h] > 0 ? e * L.output[h] : 0.0;
      g.dense_bias[h] = delta;
      auto wrow = L.weights.row(h);
      auto grow = g.dense_weights.row(h);
      for (std::size_t k = 0; k < d; ++k) {
        grow[k] = delta * p[k] * q[k] + dl2 * wrow[k];
        dz[k] += delta * wrow[k];
      }
    }
  } else {
    out = dot(p, q);
    const double e = m.global_mean + m.user_bias[u] + m.item_bias[i] + out - y;
    g.residual = e;
    std::fill(dz.begin(), dz.end(), e);
  }
  for (std::size_t k = 0; k < d; ++k) {
    g.user_vector[k] = dz[k] * q[k] + l2 * p[k];
    g.item_vector[k] = dz[k] * p[k] + l2 * q[k];
  }
  g.user_bias = g.residual + l2 * m.user_bias[u];
  g.item_bias = g.residual + l2 * m.item_bias[i];
}

namespace detail {

inline FactorModel init_biased_model(const InteractionDataset& train, const TrainConfig& cfg,
                                     ModelKind kind, std::size_t hidden_units, Rng& rng) {
  FactorModel m;
  m.kind = kind;
  const std::size_t d = cfg.latent_dim;
  m.user_vectors = Matrix(train.num_users(), d);
  m.item_vectors = Matrix(train.num_pois(), d);
  for (double& x : m.user_vectors.values()) x = rng.uniform(-0.05, 0.05);
  for (double& x : m.item_vectors.values()) x = rng.uniform(-0.05, 0.05);
  m.user_bias.assign(train.num_users(), 0.0);
  m.item_bias.assign(train.num_pois(), 0.0);
  m.global_mean = train.global_mean();
  m.known_users.assign(train.num_users(), 0);
  m.known_items.assign(train.num_pois(), 0);
  for (const auto& o : train.observations()) {
    m.known_users[o.user] = 1;
    m.known_items[o.poi] = 1;
  }
  if (kind == ModelKind::ncf && hidden_units > 0) {
    // Glorot-uniform dense layer. A positive hidden bias keeps the relu units
    // alive while the embedding products are still tiny.
    DenseLayer L;
    L.weights = Matrix(hidden_units, d);
    const double lim_w = std::sqrt(6.0 / static_cast<double>(d + hidden_units));
    for (double& x : L.weights.values()) x = rng.uniform(-lim_w, lim_w);
    L.bias.assign(hidden_units, 0.5);
    L.output.resize(hidden_units);
    const double lim_o = std::sqrt(6.0 / static_cast<double>(hidden_units + 1));
    for (double& x : L.output) x = rng.uniform(-lim_o, lim_o);
    m.dense = std::move(L);
  }
  return m;
}

inline std::optional<double> dataset_rmse(const FactorModel& m, const InteractionDataset& data) {
  if (data.empty()) return std::nullopt;
  std::vector<double> pred, truth;
  pred.reserve(data.size());
  truth.reserve(data.size());
  for (const auto& o : data.observations()) {
    pred.push_back(m.predict(o.user, o.poi));
    truth.push_back(o.stars);
  }
  return rmse(pred, truth);
}

inline double training_objective(const FactorModel& m, const InteractionDataset& train,
                                 double l2) {
  double total = 0;
  for (const auto& o : train.observations()) {
    double e = m.raw_score(o.user, o.poi) - o.stars;
    double reg = m.user_bias[o.user] * m.user_bias[o.user] + m.item_bias[o.poi] * m.item_bias[o.poi];
    for (double x : m.user_vectors.row(o.user)) reg += x * x;
    for (double x : m.item_vectors.row(o.poi)) reg += x * x;
    total += 0.5 * e * e + 0.5 * l2 * reg;
  }
  if (m.dense) {
    double reg = 0;
    for (double x : m.dense->weights.values()) reg += x * x;
    for (double x : m.dense->output) reg += x * x;
    total += 0.5 * l2 * reg;
  }
  return total;
}

// Minibatch SGD on the summed per-observation loss. Gradients for a batch are
// all taken at the parameters from before the batch and applied together; the
// dense-layer penalty, a single term of the objective, is spread over the
// batches of an epoch in proportion to their size.
inline std::pair<FactorModel, LearningCurve> train_biased(const InteractionDataset& train,
                                                          const InteractionDataset& validation,
                                                          const TrainConfig& cfg, ModelKind kind,
                                                          std::size_t hidden_units,
                                                          std::ostream* progress) {
  cfg.validate();
  if (train.empty()) throw Error(ErrorCode::empty_input, "training set is empty");
  Rng rng(cfg.seed);
  FactorModel m = init_biased_model(train, cfg, kind, hidden_units, rng);
  const std::size_t d = cfg.latent_dim;
  const double lr = cfg.learning_rate;
  const double l2 = cfg.l2_reg;
  const auto& obs = train.observations();

  std::vector<std::size_t> order(obs.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<ExampleGradient> grads(std::min(cfg.batch_size, obs.size()));
  LearningCurve curve;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      for (std::size_t b = start; b < end; ++b) {
        const auto& o = obs[order[b]];
        auto& g = grads[b - start];
        example_gradient(m, o.user, o.poi, o.stars, l2, g, false);
        if (!std::isfinite(g.residual)) {
          std::ostringstream msg;
          msg << "non-finite residual at epoch " << epoch << ", batch starting at " << start
              << " (user " << o.user << ", poi " << o.poi << ")";
          throw Error(ErrorCode::non_finite_loss, msg.str());
        }
      }
      if (m.dense) {
        auto& L = *m.dense;
        Matrix dw(L.units(), d);
        std::vector<double> db(L.units(), 0.0), dout(L.units(), 0.0);
        for (std::size_t b = 0; b < end - start; ++b) {
          const auto& g = grads[b];
          for (std::size_t h = 0; h < L.units(); ++h) {
            dout[h] += g.dense_output[h];
            db[h] += g.dense_bias[h];
            auto gw = g.dense_weights.row(h);
            auto acc = dw.row(h);
            for (std::size_t k = 0; k < d; ++k) acc[k] += gw[k];
          }
        }
        const double share = l2 * static_cast<double>(end - start) / static_cast<double>(obs.size());
        for (std::size_t h = 0; h < L.units(); ++h) {
          dout[h] += share * L.output[h];
          auto acc = dw.row(h);
          auto wr = L.weights.row(h);
          for (std::size_t k = 0; k < d; ++k) acc[k] += share * wr[k];
        }
        for (std::size_t h = 0; h < L.units(); ++h) {
          L.output[h] -= lr * dout[h];
          L.bias[h] -= lr * db[h];
          auto acc = dw.row(h);
          auto wr = L.weights.row(h);
          for (std::size_t k = 0; k < d; ++k) wr[k] -= lr * acc[k];
        }
      }
      for (std::size_t b = start; b < end; ++b) {
        const auto& o = obs[order[b]];
        const auto& g = grads[b - start];
        auto p = m.user_vectors.row(o.user);
        auto q = m.item_vectors.row(o.poi);
        for (std::size_t k = 0; k < d; ++k) {
          p[k] -= lr * g.user_vector[k];
          q[k] -= lr * g.item_vector[k];
        }
        m.user_bias[o.user] -= lr * g.user_bias;
        m.item_bias[o.poi] -= lr * g.item_bias;
      }
    }
    LearningCurveRow row;
    row.epoch = epoch;
    row.objective = training_objective(m, train, l2);
    if (!std::isfinite(row.objective)) {
      std::ostringstream msg;
      msg << "training loss became non-finite at epoch " << epoch;
      throw Error(ErrorCode::non_finite_loss, msg.str());
    }
    row.train_rmse = *dataset_rmse(m, train);
    row.validation_rmse = dataset_rmse(m, validation);
    curve.push_back(row);
    if (progress) *progress << kind_name(kind) << " epoch " << epoch << '/' << cfg.epochs
                            << " train_rmse " << row.train_rmse << '\n';
  }
  return {std::move(m), std::move(curve)};
}

}  // namespace detail

// Embedding-plus-bias model with a one-hidden-layer interaction:
//   ŷ = μ + b_u + b_i + wᵀ relu(H (p_u ⊙ q_i) + h0)
inline std::pair<FactorModel, LearningCurve> train_ncf(const InteractionDataset& train,
                                                       const InteractionDataset& validation,
                                                       const TrainConfig& cfg,
                                                       std::ostream* progress = nullptr) {
  return detail::train_biased(train, validation, cfg, ModelKind::ncf, cfg.hidden_units, progress);
}

// Biased matrix factorization ŷ = μ + b_u + b_i + p_u · q_i.
inline std::pair<FactorModel, LearningCurve> train_svd_mf(const InteractionDataset& train,
                                                          const InteractionDataset& validation,
                                                          const TrainConfig& cfg,
                                                          std::ostream* progress = nullptr) {
  return detail::train_biased(train, validation, cfg, ModelKind::svd_mf, 0, progress);
}

}  // namespace explirec
