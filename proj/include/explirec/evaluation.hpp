#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "explirec/data_ingest.hpp"
#include "explirec/error.hpp"
#include "explirec/lexical_resources.hpp"
#include "explirec/metrics.hpp"
#include "explirec/models/checkpoint.hpp"
#include "explirec/models/knn.hpp"
#include "explirec/models/nmf.hpp"
#include "explirec/models/sgd_factorization.hpp"
#include "explirec/pair_extraction.hpp"
#include "explirec/random.hpp"
#include "explirec/recommender.hpp"

namespace explirec {

// Outcome of checking one predicted pair against the reference pairs of its
// (user, poi) cell.
struct PairJudgement {
  OpinionAspectPair predicted_pair;
  double best_similarity = -1;  // -1 when nothing was comparable
  bool matched = false;
  bool polarity_ok = false;  // polarity agreement with the matching (or most similar) reference
};

struct PrfScores {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::size_t true_positives = 0;
  std::size_t predicted = 0;
  std::size_t reference = 0;
  double macro_precision = 0;
  double macro_recall = 0;
  double macro_f1 = 0;
  std::size_t cells = 0;            // cells aggregated
  std::size_t undefined_cells = 0;  // no predictions and no references
  bool recall_exceeds_one = false;
};

struct ExplanationEvaluation {
  PrfScores scores;
  std::vector<PairJudgement> decisions;
};

inline double f1_score(double precision, double recall) {
  return precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
}

// A predicted pair counts as a true positive when it matches at least one
// reference pair of its cell; references may be matched repeatedly. Scores are
// micro-averaged over cells, with per-cell macro averages alongside.
inline ExplanationEvaluation evaluate_explanations(const std::vector<ExplanationSet>& predicted,
                                                   const PairTable& reference,
                                                   const WordVectorTable& table,
                                                   const SentimentLexicon& lexicon,
                                                   double threshold, bool penalty) {
  PairIndex ref(reference);
  ExplanationEvaluation out;
  auto& s = out.scores;
  double macro_p = 0, macro_r = 0, macro_f = 0;
  for (const auto& set : predicted) {
    const auto& refs = ref.cell(set.user_idx, set.poi_idx);
    if (set.pairs.empty() && refs.empty()) {
      ++s.undefined_cells;
      continue;
    }
    std::size_t tp = 0;
    for (const auto& p : set.pairs) {
      PairJudgement j{p, -1, false, false};
      bool have_best = false;
      for (std::size_t k : refs) {
        auto d = pair_match(p, reference[k], table, lexicon, threshold, penalty);
        if (!d.embeddable) continue;
        if (d.matched && !j.matched) {
          j.matched = true;
          j.polarity_ok = d.same_polarity;
        }
        if (!have_best || d.similarity > j.best_similarity) {
          j.best_similarity = d.similarity;
          if (!j.matched) j.polarity_ok = d.same_polarity;
          have_best = true;
        }
      }
      if (j.matched) ++tp;
      out.decisions.push_back(std::move(j));
    }
    s.true_positives += tp;
    s.predicted += set.pairs.size();
    s.reference += refs.size();
    ++s.cells;
    const double cp = set.pairs.empty() ? 0.0 : double(tp) / double(set.pairs.size());
    const double cr = refs.empty() ? 0.0 : double(tp) / double(refs.size());
    macro_p += cp;
    macro_r += cr;
    macro_f += f1_score(cp, cr);
  }
  s.precision = s.predicted ? double(s.true_positives) / double(s.predicted) : 0.0;
  s.recall = s.reference ? double(s.true_positives) / double(s.reference) : 0.0;
  s.f1 = f1_score(s.precision, s.recall);
  s.recall_exceeds_one = s.recall > 1.0;
  if (s.cells) {
    macro_p /= double(s.cells);
    macro_r /= double(s.cells);
    macro_f /= double(s.cells);
  }
  s.macro_precision = macro_p;
  s.macro_recall = macro_r;
  s.macro_f1 = macro_f;
  return out;
}

// Splits [0, n) into `folds` seeded random shards whose sizes differ by at
// most one.
inline std::vector<std::vector<std::size_t>> cv_shards(std::size_t n, std::size_t folds,
                                                       std::uint64_t seed) {
  if (folds < 2) throw Error(ErrorCode::usage, "cross-validation needs at least 2 folds");
  if (n < folds)
    throw Error(ErrorCode::too_few_records, "need at least " + std::to_string(folds) +
                                                " records for " + std::to_string(folds) + " folds");
  std::vector<std::size_t> perm(n);
  for (std::size_t k = 0; k < n; ++k) perm[k] = k;
  Rng rng(seed);
  rng.shuffle(perm);
  std::vector<std::vector<std::size_t>> shards(folds);
  for (std::size_t f = 0; f < folds; ++f) {
    const std::size_t lo = f * n / folds, hi = (f + 1) * n / folds;
    shards[f].assign(perm.begin() + static_cast<std::ptrdiff_t>(lo),
                     perm.begin() + static_cast<std::ptrdiff_t>(hi));
  }
  return shards;
}

struct ModelConfigs {
  TrainConfig ncf;
  TrainConfig svd;
  TrainConfig nmf;
  TrainConfig knn;
};

struct ExperimentConfig {
  ModelConfigs models;
  double threshold = 0.8;
  std::size_t k_users = 10;
  std::size_t folds = 10;
  std::uint64_t seed = 20180101;
  SamplingOptions sampling;
  DedupPolicy dedup = DedupPolicy::keep_latest;
};

struct ModelScore {
  std::string model;
  double rmse = 0;
  std::optional<double> warm_rmse;  // test observations whose user and POI both appear in training
};

struct ModelComparison {
  std::vector<ModelScore> scores;
  FactorModel ncf;
  LearningCurve ncf_curve;
};

// Trains NCF, KNN, SVD-MF and NMF on `train` and scores each on `test`.
inline ModelComparison compare_models(const InteractionDataset& train,
                                      const InteractionDataset& test, const ModelConfigs& cfg,
                                      std::ostream* progress = nullptr) {
  ModelComparison out;
  auto [ncf, curve] = train_ncf(train, test, cfg.ncf, progress);
  auto [svd, svd_curve] = train_svd_mf(train, test, cfg.svd, progress);
  auto [nmf, nmf_curve] = train_nmf(train, cfg.nmf, &test, progress);
  KnnModel knn = fit_knn(train, cfg.knn);

  std::vector<std::uint8_t> warm_user(train.num_users(), 0), warm_poi(train.num_pois(), 0);
  for (const auto& o : train.observations()) {
    warm_user[o.user] = 1;
    warm_poi[o.poi] = 1;
  }
  auto score = [&](const std::string& name, auto const& model) {
    ModelScore s{name, 0, std::nullopt};
    std::vector<double> pred, truth, wpred, wtruth;
    for (const auto& o : test.observations()) {
      const double p = model.predict(o.user, o.poi);
      pred.push_back(p);
      truth.push_back(o.stars);
      if (o.user < warm_user.size() && warm_user[o.user] && o.poi < warm_poi.size() &&
          warm_poi[o.poi]) {
        wpred.push_back(p);
        wtruth.push_back(o.stars);
      }
    }
    if (!pred.empty()) s.rmse = rmse(pred, truth);
    if (!wpred.empty()) s.warm_rmse = rmse(wpred, wtruth);
    out.scores.push_back(s);
  };
  score("ncf", ncf);
  score("knn", knn);
  score("svd", svd);
  score("nmf", nmf);
  out.ncf = std::move(ncf);
  out.ncf_curve = std::move(curve);
  return out;
}

struct ExplanationScores {
  PrfScores method_penalty;
  PrfScores method_no_penalty;
  PrfScores baseline_penalty;
  PrfScores baseline_no_penalty;
  std::size_t explanation_size = 0;  // M
  std::size_t empty_method_pools = 0;
  std::size_t empty_baseline_pools = 0;
};

struct FoldResult {
  std::size_t fold = 0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::vector<ModelScore> rmse;
  std::optional<ExplanationScores> explanations;
};

struct EvalReport {
  std::string mode;  // "cv" or "temporal"
  std::size_t fold_count = 0;
  std::vector<FoldResult> folds;
  std::vector<ModelScore> mean_rmse;
  std::optional<ExplanationScores> mean_explanations;
  nlohmann::ordered_json config;
};

// Everything an experiment reads. Pairs and records share one global index.
struct ExperimentInputs {
  const std::vector<ReviewRecord>* records = nullptr;
  const IdIndex* users = nullptr;
  const IdIndex* pois = nullptr;
  const PairTable* pairs = nullptr;
  const WordVectorTable* vectors = nullptr;
  const SentimentLexicon* lexicon = nullptr;
};

// Explanation experiment for one train/test partition: for every test cell
// with reference pairs, explain it from the NCF user embeddings and from the
// random baseline, and score both with and without the sentiment penalty.
inline std::optional<ExplanationScores> explanation_experiment(
    const InteractionDataset& train, const InteractionDataset& test, const FactorModel& ncf,
    const PairTable& train_pairs, const PairTable& test_pairs, const WordVectorTable& vectors,
    const SentimentLexicon& lexicon, const ExperimentConfig& cfg) {
  if (train_pairs.empty() || test_pairs.empty()) return std::nullopt;
  ExplanationScores out;
  out.explanation_size = median_pair_count(train_pairs);
  PairIndex train_index(train_pairs);
  PairIndex test_index(test_pairs);
  std::vector<ExplanationSet> method, baseline;
  std::set<std::pair<std::size_t, std::size_t>> done;
  for (const auto& o : test.observations()) {
    if (test_index.cell(o.user, o.poi).empty() || !done.insert({o.user, o.poi}).second) continue;
    const std::uint64_t seed = cfg.seed ^ static_cast<std::uint64_t>(o.user);
    ExplanationSet e;
    try {
      e = generate_explanation(o.user, o.poi, user_embeddings(ncf), train, train_index,
                               cfg.k_users, out.explanation_size, seed, cfg.sampling);
    } catch (const Error& err) {
      if (err.code() != ErrorCode::zero_vector) throw;
      e = ExplanationSet{o.user, o.poi, {}, ExplanationSource::similar_users, seed, true};
    }
    out.empty_method_pools += e.empty_pool;
    method.push_back(std::move(e));
    auto b = random_baseline_explanation(o.user, o.poi, train_index, out.explanation_size, seed,
                                         cfg.sampling);
    out.empty_baseline_pools += b.empty_pool;
    baseline.push_back(std::move(b));
  }
  auto eval = [&](const std::vector<ExplanationSet>& sets, bool penalty) {
    return evaluate_explanations(sets, test_pairs, vectors, lexicon, cfg.threshold, penalty).scores;
  };
  out.method_penalty = eval(method, true);
  out.method_no_penalty = eval(method, false);
  out.baseline_penalty = eval(baseline, true);
  out.baseline_no_penalty = eval(baseline, false);
  return out;
}

namespace detail {

inline PairTable pairs_of_reviews(const PairTable& pairs,
                                  const std::unordered_set<std::string>& review_ids) {
  PairTable out;
  for (const auto& p : pairs)
    if (review_ids.count(p.review_id)) out.push_back(p);
  return out;
}

inline std::unordered_set<std::string> review_ids(const std::vector<ReviewRecord>& records) {
  std::unordered_set<std::string> ids;
  for (const auto& r : records)
    if (r.text_ref) ids.insert(*r.text_ref);
  return ids;
}

inline FoldResult run_partition(std::size_t fold, const std::vector<ReviewRecord>& train_records,
                                const std::vector<ReviewRecord>& test_records,
                                const ExperimentInputs& in, const ExperimentConfig& cfg,
                                std::ostream* progress) {
  FoldResult r;
  r.fold = fold;
  auto train = build_dataset_indexed(train_records, *in.users, *in.pois, cfg.dedup);
  auto test = build_dataset_indexed(test_records, *in.users, *in.pois, cfg.dedup);
  if (train.empty()) throw Error(ErrorCode::too_few_records, "training partition is empty");
  r.train_size = train.size();
  r.test_size = test.size();
  auto cmp = compare_models(train, test, cfg.models, progress);
  r.rmse = cmp.scores;
  if (in.pairs && in.vectors && in.lexicon) {
    auto train_pairs = pairs_of_reviews(*in.pairs, review_ids(train_records));
    auto test_pairs = pairs_of_reviews(*in.pairs, review_ids(test_records));
    r.explanations = explanation_experiment(train, test, cmp.ncf, train_pairs, test_pairs,
                                            *in.vectors, *in.lexicon, cfg);
  }
  return r;
}

inline PrfScores mean_scores(const std::vector<const PrfScores*>& xs) {
  PrfScores m;
  if (xs.empty()) return m;
  const double n = static_cast<double>(xs.size());
  for (const auto* x : xs) {
    m.precision += x->precision / n;
    m.recall += x->recall / n;
    m.macro_precision += x->macro_precision / n;
    m.macro_recall += x->macro_recall / n;
    m.macro_f1 += x->macro_f1 / n;
    m.true_positives += x->true_positives;
    m.predicted += x->predicted;
    m.reference += x->reference;
    m.cells += x->cells;
    m.undefined_cells += x->undefined_cells;
    m.recall_exceeds_one = m.recall_exceeds_one || x->recall_exceeds_one;
  }
  // F1 of the mean precision and recall, so the reported triple stays consistent.
  m.f1 = f1_score(m.precision, m.recall);
  return m;
}

inline void summarize(EvalReport& report) {
  std::map<std::string, std::pair<double, std::size_t>> acc, wacc;
  std::vector<std::string> order;
  for (const auto& f : report.folds)
    for (const auto& s : f.rmse) {
      if (!acc.count(s.model)) order.push_back(s.model);
      acc[s.model].first += s.rmse;
      acc[s.model].second += 1;
      if (s.warm_rmse) {
        wacc[s.model].first += *s.warm_rmse;
        wacc[s.model].second += 1;
      }
    }
  report.mean_rmse.clear();
  for (const auto& name : order) {
    ModelScore s{name, acc[name].first / double(acc[name].second), std::nullopt};
    if (wacc.count(name)) s.warm_rmse = wacc[name].first / double(wacc[name].second);
    report.mean_rmse.push_back(s);
  }
  std::vector<const ExplanationScores*> ex;
  for (const auto& f : report.folds)
    if (f.explanations) ex.push_back(&*f.explanations);
  if (ex.empty()) return;
  auto collect = [&](PrfScores ExplanationScores::*field) {
    std::vector<const PrfScores*> v;
    for (const auto* e : ex) v.push_back(&(e->*field));
    return mean_scores(v);
  };
  ExplanationScores m;
  m.method_penalty = collect(&ExplanationScores::method_penalty);
  m.method_no_penalty = collect(&ExplanationScores::method_no_penalty);
  m.baseline_penalty = collect(&ExplanationScores::baseline_penalty);
  m.baseline_no_penalty = collect(&ExplanationScores::baseline_no_penalty);
  for (const auto* e : ex) {
    m.explanation_size = std::max(m.explanation_size, e->explanation_size);
    m.empty_method_pools += e->empty_method_pools;
    m.empty_baseline_pools += e->empty_baseline_pools;
  }
  report.mean_explanations = m;
}

}  // namespace detail

// Random interaction-level k-fold cross-validation over the review records.
inline EvalReport cross_validate(const ExperimentInputs& in, const ExperimentConfig& cfg,
                                 std::ostream* progress = nullptr) {
  const auto& records = *in.records;
  auto shards = cv_shards(records.size(), cfg.folds, cfg.seed);
  EvalReport report;
  report.mode = "cv";
  report.fold_count = cfg.folds;
  for (std::size_t f = 0; f < shards.size(); ++f) {
    std::vector<std::uint8_t> held(records.size(), 0);
    for (std::size_t k : shards[f]) held[k] = 1;
    std::vector<ReviewRecord> train, test;
    for (std::size_t k = 0; k < records.size(); ++k) (held[k] ? test : train).push_back(records[k]);
    if (progress) *progress << "fold " << f + 1 << '/' << shards.size() << '\n';
    report.folds.push_back(detail::run_partition(f, train, test, in, cfg, progress));
  }
  detail::summarize(report);
  return report;
}

// Single train/test evaluation on the temporal split.
inline EvalReport temporal_evaluation(const ExperimentInputs& in, Date cutoff,
                                      const ExperimentConfig& cfg,
                                      std::ostream* progress = nullptr) {
  std::vector<ReviewRecord> train, test;
  for (const auto& r : *in.records) (r.date < cutoff ? train : test).push_back(r);
  EvalReport report;
  report.mode = "temporal";
  report.fold_count = 1;
  report.folds.push_back(detail::run_partition(0, train, test, in, cfg, progress));
  detail::summarize(report);
  return report;
}

// ---- serialization ----

inline nlohmann::ordered_json to_json(const PrfScores& s) {
  nlohmann::ordered_json j;
  j["precision"] = s.precision;
  j["recall"] = s.recall;
  j["f1"] = s.f1;
  j["true_positives"] = s.true_positives;
  j["predicted"] = s.predicted;
  j["reference"] = s.reference;
  j["macro_precision"] = s.macro_precision;
  j["macro_recall"] = s.macro_recall;
  j["macro_f1"] = s.macro_f1;
  j["cells"] = s.cells;
  j["undefined_cells"] = s.undefined_cells;
  j["recall_exceeds_one"] = s.recall_exceeds_one;
  return j;
}

inline nlohmann::ordered_json rmse_rows_json(const std::vector<ModelScore>& scores) {
  auto rows = nlohmann::ordered_json::array();
  for (const auto& s : scores) {
    nlohmann::ordered_json j;
    j["model"] = s.model;
    j["rmse"] = s.rmse;
    j["warm_rmse"] = s.warm_rmse ? nlohmann::ordered_json(*s.warm_rmse) : nullptr;
    rows.push_back(j);
  }
  return rows;
}

inline nlohmann::ordered_json explanation_rows_json(const ExplanationScores& e) {
  auto rows = nlohmann::ordered_json::array();
  nlohmann::ordered_json m;
  m["method"] = "similar_users";
  m["penalty_on"] = to_json(e.method_penalty);
  m["penalty_off"] = to_json(e.method_no_penalty);
  m["empty_pools"] = e.empty_method_pools;
  rows.push_back(m);
  nlohmann::ordered_json b;
  b["method"] = "random_baseline";
  b["penalty_on"] = to_json(e.baseline_penalty);
  b["penalty_off"] = to_json(e.baseline_no_penalty);
  b["empty_pools"] = e.empty_baseline_pools;
  rows.push_back(b);
  return rows;
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["mode"] = r.mode;
  j["fold_count"] = r.fold_count;
  j["rmse"] = rmse_rows_json(r.mean_rmse);
  if (r.mean_explanations) {
    j["explanation_size"] = r.mean_explanations->explanation_size;
    j["explanations"] = explanation_rows_json(*r.mean_explanations);
  } else {
    j["explanations"] = nlohmann::ordered_json::array();
  }
  auto folds = nlohmann::ordered_json::array();
  for (const auto& f : r.folds) {
    nlohmann::ordered_json fj;
    fj["fold"] = f.fold;
    fj["train_size"] = f.train_size;
    fj["test_size"] = f.test_size;
    fj["rmse"] = rmse_rows_json(f.rmse);
    fj["explanations"] = f.explanations ? explanation_rows_json(*f.explanations)
                                        : nlohmann::ordered_json::array();
    folds.push_back(fj);
  }
  j["folds"] = folds;
  j["config"] = r.config;
  return j;
}

namespace detail {

inline std::string fmt_double(double x) {
  std::ostringstream s;
  s.precision(17);
  s << x;
  return s.str();
}

inline void csv_rows(std::ostream& out, const std::string& fold, const std::vector<ModelScore>& rmse,
                     const std::optional<ExplanationScores>& ex) {
  for (const auto& s : rmse) {
    out << s.model << ",rmse," << fold << ',' << fmt_double(s.rmse) << '\n';
    if (s.warm_rmse) out << s.model << ",warm_rmse," << fold << ',' << fmt_double(*s.warm_rmse) << '\n';
  }
  if (!ex) return;
  auto prf = [&](const std::string& name, const PrfScores& p) {
    out << name << ",precision," << fold << ',' << fmt_double(p.precision) << '\n';
    out << name << ",recall," << fold << ',' << fmt_double(p.recall) << '\n';
    out << name << ",f1," << fold << ',' << fmt_double(p.f1) << '\n';
  };
  prf("similar_users_penalty", ex->method_penalty);
  prf("similar_users_no_penalty", ex->method_no_penalty);
  prf("random_baseline_penalty", ex->baseline_penalty);
  prf("random_baseline_no_penalty", ex->baseline_no_penalty);
}

}  // namespace detail

// Flat CSV: one row per model/metric/fold, fold "mean" for the aggregate.
inline void write_report_csv(std::ostream& out, const EvalReport& r) {
  out << "model,metric,fold,value\n";
  detail::csv_rows(out, "mean", r.mean_rmse, r.mean_explanations);
  for (const auto& f : r.folds) detail::csv_rows(out, std::to_string(f.fold), f.rmse, f.explanations);
}

}  // namespace explirec
