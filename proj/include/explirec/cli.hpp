#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "explirec/pipeline.hpp"

namespace explirec {

namespace detail {

inline std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::unreadable_file, "cannot write '" + path.string() + "'");
  return out;
}

// Turns leftover `--dotted.key value` / `--dotted.key=value` tokens into
// override pairs.
inline std::vector<std::pair<std::string, std::string>> parse_overrides(
    const std::vector<std::string>& extras) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t k = 0; k < extras.size(); ++k) {
    const std::string& tok = extras[k];
    if (tok.rfind("--", 0) != 0 || tok.size() == 2)
      throw Error(ErrorCode::usage, "unexpected argument '" + tok + "'");
    std::string key = tok.substr(2);
    if (auto eq = key.find('='); eq != std::string::npos) {
      out.emplace_back(key.substr(0, eq), key.substr(eq + 1));
      continue;
    }
    if (k + 1 >= extras.size())
      throw Error(ErrorCode::usage, "option --" + key + " needs a value");
    out.emplace_back(key, extras[++k]);
  }
  return out;
}

inline std::size_t lookup_id(const IdIndex& index, const std::string& id, const char* what) {
  auto k = index.find(id);
  if (!k) throw Error(ErrorCode::unknown_id, std::string("unknown ") + what + " id '" + id + "'");
  return *k;
}

inline PairTable pairs_before_cutoff(const PipelineData& d, Date cutoff) {
  std::unordered_set<std::string> ids;
  for (const auto& r : d.records)
    if (r.date < cutoff && r.text_ref) ids.insert(*r.text_ref);
  return pairs_of_reviews(d.pairs, ids);
}

inline std::pair<RatingModel, LearningCurve> train_kind(ModelKind kind, const TemporalSplit& split,
                                                        const PipelineConfig& cfg,
                                                        std::ostream* progress) {
  const auto& tc = cfg.model_config(kind);
  switch (kind) {
    case ModelKind::ncf: {
      auto [m, c] = train_ncf(split.train, split.test, tc, progress);
      return {std::move(m), std::move(c)};
    }
    case ModelKind::svd_mf: {
      auto [m, c] = train_svd_mf(split.train, split.test, tc, progress);
      return {std::move(m), std::move(c)};
    }
    case ModelKind::nmf: {
      auto [m, c] = train_nmf(split.train, tc, &split.test, progress);
      return {std::move(m), std::move(c)};
    }
    case ModelKind::knn:
      return {fit_knn(split.train, tc), {}};
  }
  throw Error(ErrorCode::usage, "unknown model kind");
}

inline fs::path model_path(const PipelineConfig& cfg, ModelKind kind) {
  return cfg.paths.output_dir / ("model_" + std::string(kind_name(kind)) + ".bin");
}

// Uses the checkpoint in the output directory when `train` has written one,
// otherwise trains in memory.
inline RatingModel model_for(ModelKind kind, const TemporalSplit& split, const PipelineConfig& cfg,
                             std::ostream* progress) {
  const auto path = model_path(cfg, kind);
  if (fs::exists(path)) {
    auto m = load_model(path.string(), kind);
    const std::size_t users =
        std::visit([](const auto& x) { return x.num_users(); }, m);
    if (users != split.train.num_users())
      throw Error(ErrorCode::corrupt_file,
                  "checkpoint '" + path.string() + "' does not match the current reviews");
    return m;
  }
  return train_kind(kind, split, cfg, progress).first;
}

struct CommandContext {
  PipelineConfig cfg;
  std::ostream& out;
  std::ostream& err;
  std::ostream* progress;
};

inline void cmd_ingest(CommandContext& c) {
  auto d = load_pipeline_data(c.cfg, false);
  auto all = build_dataset_indexed(d.records, d.users, d.pois, c.cfg.dedup);
  for (const auto& w : d.split.warnings) c.err << "warning: " << w << '\n';
  nlohmann::ordered_json j;
  j["records"] = d.records.size();
  j["observations"] = all.size();
  j["users"] = d.users.size();
  j["pois"] = d.pois.size();
  j["global_mean"] = all.global_mean();
  j["cutoff"] = c.cfg.cutoff.to_string();
  j["train_observations"] = d.split.train.size();
  j["test_observations"] = d.split.test.size();
  j["warnings"] = d.split.warnings;
  auto hist = rating_histogram(all);
  j["stars_histogram"] = hist;
  open_output(c.cfg.paths.output_dir / "dataset_summary.json") << j.dump(2) << '\n';
  auto h = open_output(c.cfg.paths.output_dir / "stars_histogram.csv");
  write_histogram_csv(h, hist);
  c.out << "ingested " << d.records.size() << " records: " << d.users.size() << " users, "
        << d.pois.size() << " pois, " << d.split.train.size() << " train / "
        << d.split.test.size() << " test observations\n";
}

inline void cmd_extract(CommandContext& c) {
  auto d = load_pipeline_data(c.cfg, true);
  auto out = open_output(c.cfg.paths.output_dir / "pairs.tsv");
  write_pairs_tsv(out, d.pairs, d.users, d.pois);
  if (d.unlinked_sentences)
    c.err << "warning: " << d.unlinked_sentences << " sentences matched no review\n";
  c.out << "extracted " << d.pairs.size() << " opinion-aspect pairs\n";
}

inline void cmd_train(CommandContext& c, const std::string& model) {
  const auto kind = parse_model_kind(model);
  auto d = load_pipeline_data(c.cfg, false);
  for (const auto& w : d.split.warnings) c.err << "warning: " << w << '\n';
  if (d.split.train.empty())
    throw Error(ErrorCode::too_few_records, "no training records before the cutoff");
  auto [m, curve] = train_kind(kind, d.split, c.cfg, c.progress);
  save_model(m, model_path(c.cfg, kind).string(), c.cfg.model_config(kind));
  const std::string name(kind_name(kind));
  if (kind != ModelKind::knn) {
    auto lc = open_output(c.cfg.paths.output_dir / ("learning_curve_" + name + ".csv"));
    write_learning_curve_csv(lc, curve);
  }
  c.out << "trained " << name;
  if (!curve.empty()) {
    c.out << ": train_rmse " << fmt_double(curve.back().train_rmse);
    if (curve.back().validation_rmse) c.out << ", val_rmse " << fmt_double(*curve.back().validation_rmse);
  }
  c.out << '\n';
}

inline void cmd_recommend(CommandContext& c, const std::string& user, std::size_t k,
                          const std::string& model) {
  const auto kind = parse_model_kind(model);
  auto d = load_pipeline_data(c.cfg, false);
  const auto u = lookup_id(d.users, user, "user");
  auto m = model_for(kind, d.split, c.cfg, c.progress);
  auto rec = std::visit([&](const auto& x) { return recommend_top_k(x, d.split.train, u, k); }, m);
  std::ostringstream csv;
  csv << "rank,poi_id,predicted_stars\n";
  for (std::size_t r = 0; r < rec.items.size(); ++r)
    csv << r + 1 << ',' << d.pois.id(rec.items[r].first) << ',' << fmt_double(rec.items[r].second)
        << '\n';
  open_output(c.cfg.paths.output_dir / "recommendations.csv") << csv.str();
  c.out << csv.str();
}

inline void cmd_explain(CommandContext& c, const std::string& user, const std::string& poi) {
  auto d = load_pipeline_data(c.cfg, true);
  const auto u = lookup_id(d.users, user, "user");
  const auto p = lookup_id(d.pois, poi, "poi");
  auto train_pairs = pairs_before_cutoff(d, c.cfg.cutoff);
  if (train_pairs.empty()) throw Error(ErrorCode::empty_input, "no training pairs before the cutoff");
  auto m = std::get<FactorModel>(model_for(ModelKind::ncf, d.split, c.cfg, c.progress));
  PairIndex index(train_pairs);
  const std::size_t size = median_pair_count(train_pairs);
  const std::uint64_t seed = c.cfg.seed ^ static_cast<std::uint64_t>(u);
  std::vector<ExplanationSet> sets;
  sets.push_back(generate_explanation(u, p, user_embeddings(m), d.split.train, index,
                                      c.cfg.k_users, size, seed, c.cfg.sampling));
  sets.push_back(random_baseline_explanation(u, p, index, size, seed, c.cfg.sampling));
  std::ostringstream lines;
  write_explanations_jsonl(lines, sets, d.users, d.pois);
  open_output(c.cfg.paths.output_dir / "explanations.jsonl") << lines.str();
  c.out << lines.str();
  if (sets.front().empty_pool) c.err << "warning: no similar reviewer wrote pairs about " << poi << '\n';
}

inline void cmd_evaluate(CommandContext& c, bool cv) {
  auto d = load_pipeline_data(c.cfg, true);
  auto vectors = load_vectors(c.cfg.paths.vectors.string(), c.cfg.vector_dim);
  if (vectors.skipped_lines())
    c.err << "warning: skipped " << vectors.skipped_lines() << " malformed vector lines\n";
  auto lexicon = load_sentiwordnet(c.cfg.paths.lexicon.string(), c.cfg.lexicon_classes);
  ExperimentInputs in{&d.records, &d.users, &d.pois, &d.pairs, &vectors, &lexicon};
  const auto ex = c.cfg.experiment();
  EvalReport report = cv ? cross_validate(in, ex, c.progress)
                         : temporal_evaluation(in, c.cfg.cutoff, ex, c.progress);
  report.config = c.cfg.snapshot;
  open_output(c.cfg.paths.output_dir / "report.json") << to_json(report).dump(2) << '\n';
  auto csv = open_output(c.cfg.paths.output_dir / "report.csv");
  write_report_csv(csv, report);
  c.out << "model rmse (" << report.mode << ", " << report.fold_count << " fold"
        << (report.fold_count == 1 ? "" : "s") << ")\n";
  for (const auto& s : report.mean_rmse) c.out << "  " << s.model << ' ' << fmt_double(s.rmse) << '\n';
  if (report.mean_explanations) {
    const auto& e = *report.mean_explanations;
    c.out << "explanation f1 (penalty on / off)\n"
          << "  similar_users " << fmt_double(e.method_penalty.f1) << " / "
          << fmt_double(e.method_no_penalty.f1) << '\n'
          << "  random_baseline " << fmt_double(e.baseline_penalty.f1) << " / "
          << fmt_double(e.baseline_no_penalty.f1) << '\n';
  }
}

inline void cmd_report(CommandContext& c) {
  auto d = load_pipeline_data(c.cfg, true);
  auto all = build_dataset_indexed(d.records, d.users, d.pois, DedupPolicy::keep_all);
  {
    auto h = open_output(c.cfg.paths.output_dir / "figure_stars_histogram.csv");
    write_histogram_csv(h, rating_histogram(all));
  }
  {
    auto s = open_output(c.cfg.paths.output_dir / "figure_pair_stats.csv");
    write_pair_stats_csv(s, pair_statistics(d.pairs, all, c.cfg.min_pair_freq));
  }
  LearningCurve curve;
  const auto saved = c.cfg.paths.output_dir / "learning_curve_ncf.csv";
  auto lc = open_output(c.cfg.paths.output_dir / "figure_learning_curve.csv");
  if (fs::exists(saved) && fs::exists(model_path(c.cfg, ModelKind::ncf))) {
    std::ifstream in(saved, std::ios::binary);
    lc << in.rdbuf();
  } else {
    curve = train_kind(ModelKind::ncf, d.split, c.cfg, c.progress).second;
    write_learning_curve_csv(lc, curve);
  }
  c.out << "wrote figure_stars_histogram.csv, figure_pair_stats.csv, figure_learning_curve.csv\n";
}

}  // namespace detail

// Parses a command line, runs the subcommand and maps failures to exit codes:
// 0 success, 1 usage, 2 data, 3 numerical.
inline int run_command(int argc, const char* const* argv, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
  CLI::App app{"Explainable POI recommender: rating models and opinion-aspect explanations",
               "explirec"};
  app.require_subcommand(1);

  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> threshold;
  bool quiet = false;
  std::string model = "ncf", user, poi;
  std::size_t k = 10;
  bool cv = false;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file (default: $EXPLIREC_CONFIG)");
    sub->add_option("--seed", seed, "Seed for every random stream");
    sub->add_option("--threshold", threshold, "Pair similarity threshold");
    sub->add_flag("--quiet", quiet, "Do not print the epoch counter");
    sub->allow_extras();
    sub->footer("Any config key can be overridden as --dotted.key value.");
    return sub;
  };
  auto* ingest = common(app.add_subcommand("ingest", "Load reviews and write dataset statistics"));
  auto* extract = common(app.add_subcommand("extract", "Extract opinion-aspect pairs"));
  auto* train = common(app.add_subcommand("train", "Train one rating model on the temporal split"));
  train->add_option("--model", model, "ncf, knn, svd or nmf")->required();
  auto* recommend = common(app.add_subcommand("recommend", "Top-k POIs a user has not reviewed"));
  recommend->add_option("--user", user, "User id")->required();
  recommend->add_option("--k", k, "Number of POIs");
  recommend->add_option("--model", model, "ncf, knn, svd or nmf");
  auto* explain = common(app.add_subcommand("explain", "Explain a POI to a user"));
  explain->add_option("--user", user, "User id")->required();
  explain->add_option("--poi", poi, "POI id")->required();
  auto* evaluate = common(app.add_subcommand("evaluate", "RMSE and explanation scores"));
  evaluate->add_flag("--cv", cv, "Cross-validate instead of the temporal split");
  auto* report = common(app.add_subcommand("report", "Write the figure datasets"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    auto overrides = detail::parse_overrides(sub->remaining());
    if (seed) overrides.emplace_back("seed", std::to_string(*seed));
    if (threshold) overrides.emplace_back("threshold", detail::fmt_double(*threshold));
    if (!config_path)
      if (const char* env = std::getenv("EXPLIREC_CONFIG"); env && *env) config_path = env;

    detail::CommandContext c{load_pipeline_config(config_path, overrides), out, err,
                             quiet ? nullptr : &err};
    require_inputs(c.cfg);
    fs::create_directories(c.cfg.paths.output_dir);

    if (sub == ingest)
      detail::cmd_ingest(c);
    else if (sub == extract)
      detail::cmd_extract(c);
    else if (sub == train)
      detail::cmd_train(c, model);
    else if (sub == recommend)
      detail::cmd_recommend(c, user, k, model);
    else if (sub == explain)
      detail::cmd_explain(c, user, poi);
    else if (sub == evaluate)
      detail::cmd_evaluate(c, cv);
    else if (sub == report)
      detail::cmd_report(c);
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    switch (e.category()) {
      case ErrorCategory::usage:
        err << '\n' << sub->help();
        return 1;
      case ErrorCategory::data:
        return 2;
      case ErrorCategory::numerical:
        return 3;
    }
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace explirec
