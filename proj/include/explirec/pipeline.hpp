#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "explirec/data_ingest.hpp"
#include "explirec/error.hpp"
#include "explirec/evaluation.hpp"
#include "explirec/lexical_resources.hpp"
#include "explirec/pair_extraction.hpp"
#include "explirec/rating_models.hpp"
#include "explirec/recommender.hpp"

namespace explirec {

namespace fs = std::filesystem;

inline constexpr std::uint64_t kDefaultSeed = 20180101;

// Every key the config file may carry, with its default value. Overrides
// must name one of these keys.
inline nlohmann::ordered_json default_config_json() {
  nlohmann::ordered_json models;
  for (const char* name : {"ncf", "svd", "nmf", "knn"}) {
    nlohmann::json m = TrainConfig{};
    m.erase("seed");  // derived from the top-level seed
    models[name] = nlohmann::ordered_json::parse(m.dump());
  }
  return {
      {"paths",
       {{"reviews", "reviews.jsonl"},
        {"annotated", "annotated.conll"},
        {"vectors", "vectors.txt"},
        {"lexicon", "lexicon.tsv"},
        {"output_dir", "out"}}},
      {"reviews_format", "jsonl"},
      {"cutoff", "2018-01-01"},
      {"seed", kDefaultSeed},
      {"threshold", 0.8},
      {"k_users", 10},
      {"folds", 10},
      {"vector_dim", 100},
      {"min_pair_freq", 700},
      {"dedup", "keep_latest"},
      {"amod_labels", {"amod"}},
      {"lexicon_pos_classes", {"a"}},
      {"frequency_weighted_sampling", false},
      {"models", models},
  };
}

struct PipelinePaths {
  fs::path reviews;
  fs::path annotated;
  fs::path vectors;
  fs::path lexicon;
  fs::path output_dir;
};

struct PipelineConfig {
  PipelinePaths paths;
  ReviewFormat reviews_format = ReviewFormat::jsonl;
  Date cutoff = Date::from_ymd(2018, 1, 1);
  std::uint64_t seed = kDefaultSeed;
  double threshold = 0.8;
  std::size_t k_users = 10;
  std::size_t folds = 10;
  std::size_t vector_dim = 100;
  std::size_t min_pair_freq = 700;
  DedupPolicy dedup = DedupPolicy::keep_latest;
  AmodLabels amod;
  std::unordered_set<std::string> lexicon_classes{"a"};
  SamplingOptions sampling;
  ModelConfigs models;
  nlohmann::ordered_json snapshot;  // resolved config as JSON

  const TrainConfig& model_config(ModelKind kind) const {
    switch (kind) {
      case ModelKind::ncf:
        return models.ncf;
      case ModelKind::svd_mf:
        return models.svd;
      case ModelKind::nmf:
        return models.nmf;
      case ModelKind::knn:
        return models.knn;
    }
    return models.ncf;
  }

  ExperimentConfig experiment() const {
    ExperimentConfig e;
    e.models = models;
    e.threshold = threshold;
    e.k_users = k_users;
    e.folds = folds;
    e.seed = seed;
    e.sampling = sampling;
    e.dedup = dedup;
    return e;
  }
};

namespace detail {

// splitmix64 finalizer; gives each model its own stream from one seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline nlohmann::ordered_json* find_dotted(nlohmann::ordered_json& root, const std::string& key) {
  nlohmann::ordered_json* node = &root;
  std::size_t start = 0;
  while (true) {
    std::size_t dot = key.find('.', start);
    std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
    if (!node->is_object() || !node->contains(part)) return nullptr;
    node = &(*node)[part];
    if (dot == std::string::npos) return node;
    start = dot + 1;
  }
}

// Converts a flag value to the JSON type of the key it overrides.
inline void set_from_string(nlohmann::ordered_json& slot, const std::string& key,
                            const std::string& value) {
  auto bad = [&] {
    return Error(ErrorCode::usage, "invalid value '" + value + "' for --" + key);
  };
  try {
    std::size_t used = 0;
    if (slot.is_boolean()) {
      if (value == "true" || value == "1")
        slot = true;
      else if (value == "false" || value == "0")
        slot = false;
      else
        throw bad();
    } else if (slot.is_number_unsigned() || slot.is_number_integer()) {
      if (!value.empty() && value.front() == '-') throw bad();
      slot = std::stoull(value, &used);
      if (used != value.size()) throw bad();
    } else if (slot.is_number_float()) {
      slot = std::stod(value, &used);
      if (used != value.size()) throw bad();
    } else if (slot.is_array()) {
      auto arr = nlohmann::ordered_json::array();
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) arr.push_back(item);
      slot = arr;
    } else if (slot.is_string()) {
      slot = value;
    } else {
      throw bad();
    }
  } catch (const std::logic_error&) {
    throw bad();
  }
}

inline std::uint64_t json_u64(const nlohmann::ordered_json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<long long>() < 0))
    throw Error(ErrorCode::usage, std::string("config key '") + key + "' must be a non-negative integer");
  return v.get<std::uint64_t>();
}

}  // namespace detail

// Builds the config from defaults, an optional JSON file and dotted-key
// overrides. Relative paths resolve against the config file's directory
// (the working directory when there is no file).
inline PipelineConfig load_pipeline_config(const std::optional<std::string>& config_path,
                                           const std::vector<std::pair<std::string, std::string>>& overrides) {
  auto j = default_config_json();
  fs::path base = fs::current_path();
  if (config_path) {
    std::ifstream in(*config_path);
    if (!in) throw Error(ErrorCode::missing_path, "cannot read config file '" + *config_path + "'");
    nlohmann::ordered_json user;
    try {
      user = nlohmann::ordered_json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::malformed_record,
                  "config file '" + *config_path + "' is not valid JSON: " + e.what());
    }
    if (!user.is_object()) throw Error(ErrorCode::malformed_record, "config must be a JSON object");
    // reject unknown keys so typos do not pass silently
    std::function<void(const nlohmann::ordered_json&, nlohmann::ordered_json&, const std::string&)>
        merge = [&](const nlohmann::ordered_json& src, nlohmann::ordered_json& dst,
                    const std::string& prefix) {
          for (auto it = src.begin(); it != src.end(); ++it) {
            const std::string key = prefix + it.key();
            if (!dst.contains(it.key())) {
              // per-model seeds are accepted but ignored; they derive from the top-level seed
              if (prefix.rfind("models.", 0) == 0 && it.key() == "seed") continue;
              throw Error(ErrorCode::usage, "unknown config key '" + key + "'");
            }
            auto& slot = dst[it.key()];
            if (slot.is_object() && it->is_object())
              merge(*it, slot, key + ".");
            else
              slot = *it;
          }
        };
    merge(user, j, "");
    base = fs::absolute(fs::path(*config_path)).parent_path();
  }
  for (const auto& [key, value] : overrides) {
    auto* slot = detail::find_dotted(j, key);
    if (!slot || slot->is_object()) throw Error(ErrorCode::usage, "unknown option --" + key);
    detail::set_from_string(*slot, key, value);
  }

  PipelineConfig cfg;
  try {
    auto path = [&](const char* key) {
      fs::path p = j.at("paths").at(key).get<std::string>();
      return p.is_absolute() ? p : (base / p).lexically_normal();
    };
    cfg.paths = {path("reviews"), path("annotated"), path("vectors"), path("lexicon"),
                 path("output_dir")};
    cfg.reviews_format = parse_review_format(j.at("reviews_format").get<std::string>());
    auto cutoff = Date::parse(j.at("cutoff").get<std::string>());
    if (!cutoff) throw Error(ErrorCode::usage, "cutoff is not a YYYY-MM-DD date");
    cfg.cutoff = *cutoff;
    cfg.seed = detail::json_u64(j, "seed");
    cfg.threshold = j.at("threshold").get<double>();
    cfg.k_users = detail::json_u64(j, "k_users");
    cfg.folds = detail::json_u64(j, "folds");
    cfg.vector_dim = detail::json_u64(j, "vector_dim");
    cfg.min_pair_freq = detail::json_u64(j, "min_pair_freq");
    const auto dedup = j.at("dedup").get<std::string>();
    if (dedup == "keep_latest")
      cfg.dedup = DedupPolicy::keep_latest;
    else if (dedup == "keep_all")
      cfg.dedup = DedupPolicy::keep_all;
    else
      throw Error(ErrorCode::usage, "dedup must be keep_latest or keep_all");
    cfg.amod.labels.clear();
    for (const auto& l : j.at("amod_labels")) cfg.amod.labels.insert(to_lower(l.get<std::string>()));
    cfg.lexicon_classes.clear();
    for (const auto& c : j.at("lexicon_pos_classes")) cfg.lexicon_classes.insert(c.get<std::string>());
    cfg.sampling.frequency_weighted = j.at("frequency_weighted_sampling").get<bool>();
    const auto& m = j.at("models");
    auto model = [&](const char* name, std::uint64_t tag) {
      TrainConfig t = nlohmann::json::parse(m.at(name).dump()).get<TrainConfig>();
      t.seed = detail::mix_seed(cfg.seed, tag);
      t.validate();
      return t;
    };
    cfg.models = {model("ncf", 1), model("svd", 2), model("nmf", 3), model("knn", 4)};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::usage, std::string("bad config value: ") + e.what());
  }
  if (cfg.k_users == 0 || cfg.vector_dim == 0)
    throw Error(ErrorCode::usage, "k_users and vector_dim must be positive");
  if (!(cfg.threshold >= -1 && cfg.threshold <= 1))
    throw Error(ErrorCode::usage, "threshold must lie in [-1, 1]");
  cfg.snapshot = j;
  cfg.snapshot["seed"] = cfg.seed;
  return cfg;
}

// Loaded inputs shared by the subcommands. Everything is indexed by one
// user/POI index built over all records in file order.
struct PipelineData {
  std::vector<ReviewRecord> records;
  IdIndex users;
  IdIndex pois;
  TemporalSplit split;
  PairTable pairs;
  std::size_t unlinked_sentences = 0;
};

inline void require_inputs(const PipelineConfig& cfg) {
  for (const auto* p : {&cfg.paths.reviews, &cfg.paths.annotated, &cfg.paths.vectors,
                        &cfg.paths.lexicon})
    if (!fs::exists(*p)) throw Error(ErrorCode::missing_path, "input file not found: " + p->string());
}

inline PipelineData load_pipeline_data(const PipelineConfig& cfg, bool with_pairs) {
  PipelineData d;
  d.records = load_reviews(cfg.paths.reviews.string(), cfg.reviews_format);
  if (d.records.empty()) throw Error(ErrorCode::empty_input, "no review records in " + cfg.paths.reviews.string());
  intern_records(d.records, d.users, d.pois);
  d.split = temporal_split(d.records, cfg.cutoff, cfg.dedup);
  if (with_pairs) {
    auto sentences = parse_annotated(cfg.paths.annotated.string());
    auto ex = extract_review_pairs(sentences, d.records, d.users, d.pois, cfg.amod);
    d.pairs = std::move(ex.pairs);
    d.unlinked_sentences = ex.unlinked_sentences;
  }
  return d;
}

inline void write_learning_curve_csv(std::ostream& out, const LearningCurve& curve) {
  out << "epoch,train_rmse,val_rmse\n";
  for (const auto& r : curve) {
    out << r.epoch << ',' << detail::fmt_double(r.train_rmse) << ',';
    if (r.validation_rmse) out << detail::fmt_double(*r.validation_rmse);
    out << '\n';
  }
}

}  // namespace explirec
