#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "explirec/date.hpp"
#include "explirec/error.hpp"

namespace explirec {

struct ReviewRecord {
  std::string user_id;
  std::string poi_id;
  int stars = 0;
  Date date;
  std::optional<std::string> text_ref;  // review id in the annotated-text file

  friend bool operator==(const ReviewRecord&, const ReviewRecord&) = default;
};

enum class ReviewFormat { jsonl, csv };

inline ReviewFormat parse_review_format(std::string_view name) {
  if (name == "jsonl" || name == "json") return ReviewFormat::jsonl;
  if (name == "csv") return ReviewFormat::csv;
  throw Error(ErrorCode::unknown_format, "unknown review format '" + std::string(name) + "'");
}

namespace detail {

inline int checked_stars(double value, std::size_t line) {
  if (!std::isfinite(value) || value != std::floor(value) || value < 1 || value > 5)
    throw Error(ErrorCode::stars_out_of_range,
                "stars must be an integer in [1,5], got " + std::to_string(value), line);
  return static_cast<int>(value);
}

inline Date checked_date(std::string_view text, std::size_t line) {
  auto d = Date::parse(text);
  if (!d) throw Error(ErrorCode::bad_date, "unparseable date '" + std::string(text) + "'", line);
  return *d;
}

// RFC 4180 style split of one CSV line. Quoted fields may contain commas and
// doubled quotes; embedded newlines are not supported.
inline std::vector<std::string> split_csv_line(std::string_view line, std::size_t lineno) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  if (quoted) throw Error(ErrorCode::malformed_record, "unterminated quoted field", lineno);
  fields.push_back(std::move(cur));
  return fields;
}

inline ReviewRecord record_from_json(std::string_view line, std::size_t lineno) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::malformed_record, std::string("invalid JSON: ") + e.what(), lineno);
  }
  if (!j.is_object()) throw Error(ErrorCode::malformed_record, "record is not an object", lineno);
  auto text = [&](std::initializer_list<const char*> keys) -> std::optional<std::string> {
    for (const char* k : keys) {
      auto it = j.find(k);
      if (it == j.end() || it->is_null()) continue;
      if (it->is_string()) return it->get<std::string>();
      if (it->is_number_integer()) return std::to_string(it->get<long long>());
      throw Error(ErrorCode::malformed_record, std::string("field '") + k + "' is not a string",
                  lineno);
    }
    return std::nullopt;
  };
  ReviewRecord r;
  auto user = text({"user_id"});
  auto poi = text({"business_id", "poi_id"});
  auto date = text({"date"});
  if (!user || !poi || !date || !j.contains("stars"))
    throw Error(ErrorCode::malformed_record,
                "record needs user_id, business_id, stars and date fields", lineno);
  const auto& stars = j["stars"];
  double value = 0;
  if (stars.is_number()) {
    value = stars.get<double>();
  } else if (stars.is_string()) {
    try {
      value = std::stod(stars.get<std::string>());
    } catch (const std::exception&) {
      throw Error(ErrorCode::stars_out_of_range, "stars is not a number", lineno);
    }
  } else {
    throw Error(ErrorCode::stars_out_of_range, "stars is not a number", lineno);
  }
  r.user_id = *user;
  r.poi_id = *poi;
  r.stars = checked_stars(value, lineno);
  r.date = checked_date(*date, lineno);
  r.text_ref = text({"review_id"});
  return r;
}

}  // namespace detail

inline std::vector<ReviewRecord> load_reviews(const std::string& path, ReviewFormat format) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::unreadable_file, "cannot read reviews file '" + path + "'");
  std::vector<ReviewRecord> out;
  std::string line;
  std::size_t lineno = 0;

  if (format == ReviewFormat::jsonl) {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      out.push_back(detail::record_from_json(line, lineno));
    }
    return out;
  }

  std::unordered_map<std::string, std::size_t> col;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fields = detail::split_csv_line(line, lineno);
    if (col.empty()) {
      for (std::size_t k = 0; k < fields.size(); ++k) col[fields[k]] = k;
      if (!col.count("poi_id") && col.count("business_id")) col["poi_id"] = col["business_id"];
      for (const char* need : {"user_id", "poi_id", "stars", "date"})
        if (!col.count(need))
          throw Error(ErrorCode::malformed_record, std::string("CSV header lacks '") + need + "'",
                      lineno);
      continue;
    }
    auto get = [&](const char* name) -> const std::string& {
      std::size_t k = col.at(name);
      if (k >= fields.size())
        throw Error(ErrorCode::malformed_record, std::string("missing field '") + name + "'",
                    lineno);
      return fields[k];
    };
    ReviewRecord r;
    r.user_id = get("user_id");
    r.poi_id = get("poi_id");
    double stars = 0;
    try {
      std::size_t used = 0;
      stars = std::stod(get("stars"), &used);
      if (used != get("stars").size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error(ErrorCode::stars_out_of_range, "stars is not a number", lineno);
    }
    r.stars = detail::checked_stars(stars, lineno);
    r.date = detail::checked_date(get("date"), lineno);
    if (col.count("review_id") && col["review_id"] < fields.size() &&
        !fields[col["review_id"]].empty())
      r.text_ref = fields[col["review_id"]];
    out.push_back(std::move(r));
  }
  return out;
}

// Bijection between opaque ids and [0, n), assigned in first-seen order.
class IdIndex {
 public:
  std::size_t intern(const std::string& id) {
    auto [it, inserted] = lookup_.try_emplace(id, ids_.size());
    if (inserted) ids_.push_back(id);
    return it->second;
  }

  std::optional<std::size_t> find(const std::string& id) const {
    auto it = lookup_.find(id);
    if (it == lookup_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& id(std::size_t idx) const { return ids_.at(idx); }
  std::size_t size() const noexcept { return ids_.size(); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

struct Observation {
  std::size_t user = 0;
  std::size_t poi = 0;
  double stars = 0;
  Date date;
  std::string review_id;  // empty when the record carried none
};

enum class DedupPolicy { keep_all, keep_latest };

// Indexed user-POI rating observations. Immutable once built.
class InteractionDataset {
 public:
  InteractionDataset() = default;
  InteractionDataset(IdIndex users, IdIndex pois, std::vector<Observation> observations)
      : users_(std::move(users)), pois_(std::move(pois)), obs_(std::move(observations)) {
    by_user_.resize(users_.size());
    by_poi_.resize(pois_.size());
    double sum = 0;
    for (std::size_t k = 0; k < obs_.size(); ++k) {
      sum += obs_[k].stars;
      by_user_[obs_[k].user].push_back(k);
      by_poi_[obs_[k].poi].push_back(k);
    }
    global_mean_ = obs_.empty() ? 0.0 : sum / static_cast<double>(obs_.size());
  }

  const IdIndex& users() const noexcept { return users_; }
  const IdIndex& pois() const noexcept { return pois_; }
  std::size_t num_users() const noexcept { return users_.size(); }
  std::size_t num_pois() const noexcept { return pois_.size(); }
  const std::vector<Observation>& observations() const noexcept { return obs_; }
  std::size_t size() const noexcept { return obs_.size(); }
  bool empty() const noexcept { return obs_.empty(); }
  double global_mean() const noexcept { return global_mean_; }

  // Observation positions for one user / POI, in dataset order.
  const std::vector<std::size_t>& user_observations(std::size_t user) const {
    static const std::vector<std::size_t> none;
    return user < by_user_.size() ? by_user_[user] : none;
  }
  const std::vector<std::size_t>& poi_observations(std::size_t poi) const {
    static const std::vector<std::size_t> none;
    return poi < by_poi_.size() ? by_poi_[poi] : none;
  }

  bool has_observation(std::size_t user, std::size_t poi) const {
    for (std::size_t k : user_observations(user))
      if (obs_[k].poi == poi) return true;
    return false;
  }

 private:
  IdIndex users_;
  IdIndex pois_;
  std::vector<Observation> obs_;
  std::vector<std::vector<std::size_t>> by_user_;
  std::vector<std::vector<std::size_t>> by_poi_;
  double global_mean_ = 0.0;
};

// Builds a dataset over pre-assigned index maps (every record id must already
// be interned). Used wherever several datasets must share one indexing.
inline InteractionDataset build_dataset_indexed(const std::vector<ReviewRecord>& records,
                                                const IdIndex& users, const IdIndex& pois,
                                                DedupPolicy dedup) {
  std::vector<Observation> obs;
  obs.reserve(records.size());
  std::unordered_map<std::uint64_t, std::size_t> cell;
  for (const auto& r : records) {
    Observation o{*users.find(r.user_id), *pois.find(r.poi_id), static_cast<double>(r.stars),
                  r.date, r.text_ref.value_or("")};
    if (dedup == DedupPolicy::keep_latest) {
      std::uint64_t key = (static_cast<std::uint64_t>(o.user) << 32) | o.poi;
      auto [it, inserted] = cell.try_emplace(key, obs.size());
      if (!inserted) {
        // ties on date go to the later record
        if (!(o.date < obs[it->second].date)) obs[it->second] = std::move(o);
        continue;
      }
    }
    obs.push_back(std::move(o));
  }
  return InteractionDataset(users, pois, std::move(obs));
}

inline void intern_records(const std::vector<ReviewRecord>& records, IdIndex& users,
                           IdIndex& pois) {
  for (const auto& r : records) {
    users.intern(r.user_id);
    pois.intern(r.poi_id);
  }
}

inline InteractionDataset build_dataset(const std::vector<ReviewRecord>& records,
                                        DedupPolicy dedup = DedupPolicy::keep_latest) {
  if (records.empty()) throw Error(ErrorCode::empty_input, "cannot build a dataset from no records");
  IdIndex users, pois;
  intern_records(records, users, pois);
  return build_dataset_indexed(records, users, pois, dedup);
}

struct TemporalSplit {
  InteractionDataset train;
  InteractionDataset test;
  Date cutoff;
  std::vector<std::string> warnings;
};

// Train takes records strictly before the cutoff, test the rest. Both sides
// share the index maps built over all records.
inline TemporalSplit temporal_split(const std::vector<ReviewRecord>& records, Date cutoff,
                                    DedupPolicy dedup = DedupPolicy::keep_latest) {
  IdIndex users, pois;
  intern_records(records, users, pois);
  std::vector<ReviewRecord> before, after;
  for (const auto& r : records) (r.date < cutoff ? before : after).push_back(r);

  TemporalSplit split;
  split.cutoff = cutoff;
  split.train = build_dataset_indexed(before, users, pois, dedup);
  split.test = build_dataset_indexed(after, users, pois, dedup);
  if (before.empty()) split.warnings.push_back("no records before cutoff " + cutoff.to_string());
  if (after.empty()) split.warnings.push_back("no records on or after cutoff " + cutoff.to_string());
  return split;
}

using StarHistogram = std::array<std::size_t, 5>;

inline StarHistogram rating_histogram(const InteractionDataset& dataset) {
  StarHistogram counts{};
  for (const auto& o : dataset.observations()) {
    int s = static_cast<int>(std::lround(o.stars));
    if (s >= 1 && s <= 5) ++counts[static_cast<std::size_t>(s - 1)];
  }
  return counts;
}

inline void write_histogram_csv(std::ostream& out, const StarHistogram& counts) {
  out << "stars,count\n";
  for (std::size_t s = 0; s < counts.size(); ++s) out << s + 1 << ',' << counts[s] << '\n';
}

}  // namespace explirec
