#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>
#include <vector>

#include "explirec/data_ingest.hpp"
#include "explirec/error.hpp"
#include "explirec/models/factor_model.hpp"
#include "explirec/models/train_config.hpp"

namespace explirec {

// User-based neighborhood model over mean-centered ratings.
struct KnnModel {
  struct Entry {
    std::size_t item = 0;
    double centered = 0;
    friend bool operator==(const Entry&, const Entry&) = default;
  };

  std::vector<std::vector<Entry>> centered_ratings;  // per user, sorted by item
  std::vector<double> user_means;
  std::vector<std::uint8_t> known_users;
  std::size_t num_items = 0;
  double global_mean = 0;
  std::size_t k = 40;
  std::size_t min_overlap = 1;

  std::size_t num_users() const noexcept { return user_means.size(); }
  bool user_known(std::size_t u) const { return u < known_users.size() && known_users[u]; }

  // Centered cosine: dot product of the centered rating vectors over co-rated
  // items, divided by the norms of each user's full centered vector. Also
  // returns the number of co-rated items. Zero when either norm is zero.
  std::pair<double, std::size_t> similarity(std::size_t u, std::size_t v) const {
    const auto& a = centered_ratings[u];
    const auto& b = centered_ratings[v];
    double ab = 0, aa = 0, bb = 0;
    for (const auto& e : a) aa += e.centered * e.centered;
    for (const auto& e : b) bb += e.centered * e.centered;
    std::size_t overlap = 0;
    for (std::size_t i = 0, j = 0; i < a.size() && j < b.size();) {
      if (a[i].item < b[j].item) {
        ++i;
      } else if (b[j].item < a[i].item) {
        ++j;
      } else {
        ab += a[i].centered * b[j].centered;
        ++overlap;
        ++i;
        ++j;
      }
    }
    if (aa == 0 || bb == 0) return {0.0, overlap};
    return {ab / (std::sqrt(aa) * std::sqrt(bb)), overlap};
  }

  const Entry* rating(std::size_t u, std::size_t item) const {
    const auto& row = centered_ratings[u];
    auto it = std::lower_bound(row.begin(), row.end(), item,
                               [](const Entry& e, std::size_t i) { return e.item < i; });
    return it != row.end() && it->item == item ? &*it : nullptr;
  }

  // r̂ = mean(u) + Σ_N sim·(r_v,i − mean(v)) / Σ_N |sim| over the top-k users
  // with positive similarity and enough co-rated items who rated the item.
  double predict(std::size_t u, std::size_t item) const {
    if (!user_known(u)) return clamp_rating(global_mean);
    std::vector<std::pair<double, std::size_t>> candidates;
    for (std::size_t v = 0; v < num_users(); ++v) {
      if (v == u || !known_users[v]) continue;
      if (!rating(v, item)) continue;
      auto [sim, overlap] = similarity(u, v);
      if (overlap < min_overlap || !(sim > 0)) continue;
      candidates.emplace_back(sim, v);
    }
    std::sort(candidates.begin(), candidates.end(), [](const auto& x, const auto& y) {
      return x.first != y.first ? x.first > y.first : x.second < y.second;
    });
    if (candidates.size() > k) candidates.resize(k);
    if (candidates.empty()) return clamp_rating(user_means[u]);
    double num = 0, den = 0;
    for (const auto& [sim, v] : candidates) {
      num += sim * rating(v, item)->centered;
      den += std::abs(sim);
    }
    return clamp_rating(user_means[u] + num / den);
  }

  friend bool operator==(const KnnModel&, const KnnModel&) = default;
};

// Repeated (user, item) observations are averaged before centering.
inline KnnModel fit_knn(const InteractionDataset& train, const TrainConfig& cfg) {
  cfg.validate();
  if (train.empty()) throw Error(ErrorCode::empty_input, "training set is empty");
  KnnModel m;
  m.k = cfg.knn_k;
  m.min_overlap = cfg.knn_min_overlap;
  m.global_mean = train.global_mean();
  m.num_items = train.num_pois();
  const std::size_t nu = train.num_users();
  m.centered_ratings.resize(nu);
  m.user_means.assign(nu, train.global_mean());
  m.known_users.assign(nu, 0);
  for (std::size_t u = 0; u < nu; ++u) {
    std::map<std::size_t, std::pair<double, int>> items;
    for (std::size_t k : train.user_observations(u)) {
      auto& slot = items[train.observations()[k].poi];
      slot.first += train.observations()[k].stars;
      slot.second += 1;
    }
    if (items.empty()) continue;
    double sum = 0;
    for (const auto& [i, acc] : items) sum += acc.first / acc.second;
    const double mean = sum / static_cast<double>(items.size());
    m.user_means[u] = mean;
    m.known_users[u] = 1;
    for (const auto& [i, acc] : items) m.centered_ratings[u].push_back({i, acc.first / acc.second - mean});
  }
  return m;
}

inline double predict_knn(const KnnModel& model, std::size_t u, std::size_t item) {
  return model.predict(u, item);
}

}  // namespace explirec
