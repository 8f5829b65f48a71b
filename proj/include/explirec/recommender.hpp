#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "explirec/data_ingest.hpp"
#include "explirec/error.hpp"
#include "explirec/lexical_resources.hpp"
#include "explirec/matrix.hpp"
#include "explirec/pair_extraction.hpp"
#include "explirec/random.hpp"

namespace explirec {

struct Recommendation {
  std::size_t user_idx = 0;
  std::vector<std::pair<std::size_t, double>> items;  // (poi, predicted rating), best first
};

// Any model exposing `double predict(user, poi) const`.
template <typename M>
concept RatingPredictor = requires(const M& m, std::size_t u, std::size_t i) {
  { m.predict(u, i) } -> std::convertible_to<double>;
};

// Scores every POI the user has no training observation for and keeps the k
// best; ties go to the lower POI index.
template <RatingPredictor Model>
Recommendation recommend_top_k(const Model& model, const InteractionDataset& train,
                               std::size_t user, std::size_t k) {
  if (k == 0) throw Error(ErrorCode::usage, "k must be at least 1");
  std::vector<std::uint8_t> visited(train.num_pois(), 0);
  for (std::size_t o : train.user_observations(user)) visited[train.observations()[o].poi] = 1;
  Recommendation rec{user, {}};
  for (std::size_t i = 0; i < train.num_pois(); ++i)
    if (!visited[i]) rec.items.emplace_back(i, model.predict(user, i));
  std::sort(rec.items.begin(), rec.items.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (rec.items.size() > k) rec.items.resize(k);
  return rec;
}

// Users other than `target` with a training review of `poi`, ranked by cosine
// similarity of their embedding rows to the target's (ties by user index).
// A zero candidate row ranks with similarity 0.
inline std::vector<std::size_t> top_similar_users(const Matrix& embeddings, std::size_t target,
                                                  std::size_t k, std::size_t poi,
                                                  const InteractionDataset& train) {
  if (k == 0) throw Error(ErrorCode::usage, "k must be at least 1");
  if (target >= embeddings.rows())
    throw Error(ErrorCode::usage, "target user outside the embedding matrix");
  auto t = embeddings.row(target);
  if (std::all_of(t.begin(), t.end(), [](double x) { return x == 0.0; }))
    throw Error(ErrorCode::zero_vector, "target user's embedding is the zero vector");

  std::set<std::size_t> reviewers;
  for (std::size_t o : train.poi_observations(poi)) reviewers.insert(train.observations()[o].user);
  reviewers.erase(target);

  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t v : reviewers) {
    if (v >= embeddings.rows()) continue;
    auto row = embeddings.row(v);
    double sim = 0;
    if (std::any_of(row.begin(), row.end(), [](double x) { return x != 0.0; }))
      sim = cosine(t, row);
    ranked.emplace_back(sim, v);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < ranked.size() && r < k; ++r) out.push_back(ranked[r].second);
  return out;
}

// Positions of the pairs of a table grouped by (user, poi) and by poi.
class PairIndex {
 public:
  explicit PairIndex(const PairTable& table) : table_(&table) {
    for (std::size_t k = 0; k < table.size(); ++k) {
      by_cell_[{table[k].user_idx, table[k].poi_idx}].push_back(k);
      by_poi_[table[k].poi_idx].push_back(k);
    }
  }

  const PairTable& table() const noexcept { return *table_; }

  const std::vector<std::size_t>& cell(std::size_t user, std::size_t poi) const {
    auto it = by_cell_.find({user, poi});
    return it == by_cell_.end() ? none_ : it->second;
  }
  const std::vector<std::size_t>& poi(std::size_t p) const {
    auto it = by_poi_.find(p);
    return it == by_poi_.end() ? none_ : it->second;
  }
  const std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>>& cells() const {
    return by_cell_;
  }

 private:
  const PairTable* table_;
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> by_cell_;
  std::map<std::size_t, std::vector<std::size_t>> by_poi_;
  std::vector<std::size_t> none_;
};

// Median number of pairs per (user, poi) group; the lower middle value for an
// even number of groups.
inline std::size_t median_pair_count(const PairTable& pairs) {
  if (pairs.empty()) throw Error(ErrorCode::empty_input, "median of an empty pair table");
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> groups;
  for (const auto& p : pairs) ++groups[{p.user_idx, p.poi_idx}];
  std::vector<std::size_t> sizes;
  sizes.reserve(groups.size());
  for (const auto& [cell, n] : groups) sizes.push_back(n);
  auto mid = sizes.begin() + static_cast<std::ptrdiff_t>((sizes.size() - 1) / 2);
  std::nth_element(sizes.begin(), mid, sizes.end());
  return *mid;
}

enum class ExplanationSource { similar_users, random_baseline };

inline std::string_view source_name(ExplanationSource s) {
  return s == ExplanationSource::similar_users ? "similar_users" : "random_baseline";
}

struct ExplanationSet {
  std::size_t user_idx = 0;
  std::size_t poi_idx = 0;
  PairTable pairs;
  ExplanationSource source = ExplanationSource::similar_users;
  std::uint64_t seed = 0;
  bool empty_pool = false;
};

struct SamplingOptions {
  // Draw pairs with probability proportional to how often they occur in the
  // pool instead of uniformly over distinct pairs.
  bool frequency_weighted = false;
};

namespace detail {

// Distinct (opinion, aspect) pairs of the pool in first-seen order with their
// occurrence counts.
inline std::pair<PairTable, std::vector<std::size_t>> dedup_pool(const PairTable& table,
                                                                  const std::vector<std::size_t>& positions) {
  PairTable distinct;
  std::vector<std::size_t> counts;
  std::map<std::pair<std::string, std::string>, std::size_t> seen;
  for (std::size_t k : positions) {
    const auto& p = table[k];
    auto [it, inserted] = seen.try_emplace({p.opinion, p.aspect}, distinct.size());
    if (inserted) {
      distinct.push_back(p);
      counts.push_back(1);
    } else {
      ++counts[it->second];
    }
  }
  return {std::move(distinct), std::move(counts)};
}

inline PairTable sample_pool(const PairTable& table, const std::vector<std::size_t>& positions,
                             std::size_t m, std::uint64_t seed, const SamplingOptions& opts) {
  auto [pool, counts] = dedup_pool(table, positions);
  Rng rng(seed);
  const std::size_t take = std::min(m, pool.size());
  PairTable out;
  out.reserve(take);
  if (!opts.frequency_weighted) {
    std::vector<std::size_t> idx(pool.size());
    for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
    for (std::size_t k = 0; k < take; ++k) {
      std::size_t j = k + static_cast<std::size_t>(rng.below(idx.size() - k));
      std::swap(idx[k], idx[j]);
      out.push_back(pool[idx[k]]);
    }
    return out;
  }
  std::vector<double> weight(counts.begin(), counts.end());
  double total = 0;
  for (double w : weight) total += w;
  for (std::size_t k = 0; k < take; ++k) {
    double x = rng.uniform() * total;
    std::size_t pick = weight.size();
    for (std::size_t j = 0; j < weight.size(); ++j) {
      if (weight[j] == 0) continue;
      pick = j;  // last positive weight absorbs rounding
      if (x < weight[j]) break;
      x -= weight[j];
    }
    out.push_back(pool[pick]);
    total -= weight[pick];
    weight[pick] = 0;
  }
  return out;
}

}  // namespace detail

// Samples up to m_pairs distinct pairs from what the k_users most similar
// reviewers of the POI wrote about it.
inline ExplanationSet generate_explanation(std::size_t user, std::size_t poi,
                                           const Matrix& embeddings,
                                           const InteractionDataset& train,
                                           const PairIndex& train_pairs, std::size_t k_users,
                                           std::size_t m_pairs, std::uint64_t seed,
                                           const SamplingOptions& opts = {}) {
  if (m_pairs == 0) throw Error(ErrorCode::usage, "explanation size must be at least 1");
  ExplanationSet set{user, poi, {}, ExplanationSource::similar_users, seed, false};
  std::vector<std::size_t> positions;
  for (std::size_t v : top_similar_users(embeddings, user, k_users, poi, train)) {
    const auto& cell = train_pairs.cell(v, poi);
    positions.insert(positions.end(), cell.begin(), cell.end());
  }
  set.pairs = detail::sample_pool(train_pairs.table(), positions, m_pairs, seed, opts);
  set.empty_pool = set.pairs.empty();
  return set;
}

// Same sampling over every training pair written about the POI.
inline ExplanationSet random_baseline_explanation(std::size_t user, std::size_t poi,
                                                  const PairIndex& train_pairs,
                                                  std::size_t m_pairs, std::uint64_t seed,
                                                  const SamplingOptions& opts = {}) {
  if (m_pairs == 0) throw Error(ErrorCode::usage, "explanation size must be at least 1");
  ExplanationSet set{user, poi, {}, ExplanationSource::random_baseline, seed, false};
  set.pairs = detail::sample_pool(train_pairs.table(), train_pairs.poi(poi), m_pairs, seed, opts);
  set.empty_pool = set.pairs.empty();
  return set;
}

inline nlohmann::ordered_json explanation_json(const ExplanationSet& e, const IdIndex& users,
                                               const IdIndex& pois) {
  nlohmann::ordered_json j;
  j["user_id"] = users.id(e.user_idx);
  j["poi_id"] = pois.id(e.poi_idx);
  j["source"] = source_name(e.source);
  j["seed"] = e.seed;
  auto pairs = nlohmann::ordered_json::array();
  for (const auto& p : e.pairs) pairs.push_back({p.opinion, p.aspect});
  j["pairs"] = std::move(pairs);
  return j;
}

inline void write_explanations_jsonl(std::ostream& out, const std::vector<ExplanationSet>& sets,
                                     const IdIndex& users, const IdIndex& pois) {
  for (const auto& e : sets) out << explanation_json(e, users, pois).dump() << '\n';
}

}  // namespace explirec
