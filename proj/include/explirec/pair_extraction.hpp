#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "explirec/data_ingest.hpp"
#include "explirec/error.hpp"

namespace explirec {

struct TaggedToken {
  std::string form;
  std::string lemma;
  std::string upos;
  std::optional<std::size_t> head;  // 1-based, 0 = root
  std::optional<std::string> deprel;
};

struct TaggedSentence {
  std::vector<TaggedToken> tokens;
  std::string review_id;

  bool annotated() const { return !tokens.empty() && tokens.front().head.has_value(); }
};

struct OpinionAspectPair {
  std::string opinion;
  std::string aspect;
  std::string review_id;
  std::size_t user_idx = 0;
  std::size_t poi_idx = 0;

  friend bool operator==(const OpinionAspectPair&, const OpinionAspectPair&) = default;
};

using PairTable = std::vector<OpinionAspectPair>;

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> cols;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    cols.push_back(line.substr(start, tab == std::string_view::npos ? tab : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return cols;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace detail

// Reads the tab-separated `INDEX FORM LEMMA UPOS HEAD DEPREL` format. A
// `# review_id = <id>` comment sets the review for the sentences after it.
inline std::vector<TaggedSentence> parse_annotated(std::istream& in) {
  std::vector<TaggedSentence> out;
  TaggedSentence cur;
  std::vector<std::size_t> token_lines;
  std::string review_id;
  std::string line;
  std::size_t lineno = 0;

  auto flush = [&] {
    if (cur.tokens.empty()) return;
    const std::size_t n = cur.tokens.size();
    const bool annotated = cur.tokens.front().head.has_value();
    for (std::size_t k = 0; k < n; ++k) {
      const auto& t = cur.tokens[k];
      if (t.head.has_value() != annotated)
        throw Error(ErrorCode::malformed_record,
                    "sentence mixes annotated and unannotated tokens", token_lines[k]);
      if (t.head && *t.head > n)
        throw Error(ErrorCode::head_out_of_range,
                    "head " + std::to_string(*t.head) + " outside sentence of " +
                        std::to_string(n) + " tokens",
                    token_lines[k]);
    }
    cur.review_id = review_id;
    out.push_back(std::move(cur));
    cur = {};
    token_lines.clear();
  };

  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) {
      flush();
      continue;
    }
    if (line.front() == '#') {
      std::string_view body = detail::trim(std::string_view(line).substr(1));
      constexpr std::string_view key = "review_id";
      if (body.substr(0, key.size()) == key) {
        body = detail::trim(body.substr(key.size()));
        if (!body.empty() && body.front() == '=') {
          flush();
          review_id = std::string(detail::trim(body.substr(1)));
        }
      }
      continue;
    }
    auto cols = detail::split_tabs(line);
    if (cols.size() != 6)
      throw Error(ErrorCode::column_count,
                  "expected 6 tab-separated columns, found " + std::to_string(cols.size()),
                  lineno);
    TaggedToken t;
    t.form = std::string(cols[1]);
    t.lemma = to_lower(cols[2] == "_" || cols[2].empty() ? cols[1] : cols[2]);
    t.upos = std::string(cols[3]);
    if (cols[4] != "_") {
      std::size_t head = 0;
      auto res = std::from_chars(cols[4].data(), cols[4].data() + cols[4].size(), head);
      if (res.ec != std::errc{} || res.ptr != cols[4].data() + cols[4].size())
        throw Error(ErrorCode::bad_head, "head '" + std::string(cols[4]) + "' is not an integer",
                    lineno);
      t.head = head;
      if (cols[5] == "_")
        throw Error(ErrorCode::malformed_record, "head given without a relation label", lineno);
      t.deprel = std::string(cols[5]);
    } else if (cols[5] != "_") {
      throw Error(ErrorCode::malformed_record, "relation label given without a head", lineno);
    }
    cur.tokens.push_back(std::move(t));
    token_lines.push_back(lineno);
  }
  flush();
  return out;
}

inline std::vector<TaggedSentence> parse_annotated(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::unreadable_file, "cannot read annotated text '" + path + "'");
  return parse_annotated(static_cast<std::istream&>(in));
}

inline bool is_noun_tag(std::string_view upos) { return upos == "NOUN" || upos == "PROPN"; }

// Relation labels accepted as adjectival modifiers, compared case-insensitively.
struct AmodLabels {
  std::set<std::string> labels{"amod"};

  bool contains(std::string_view label) const { return labels.count(to_lower(label)) > 0; }
};

// One pair per ADJ token attached by an amod relation to a NOUN/PROPN head.
// User and POI indices are left at zero; see extract_review_pairs.
inline PairTable extract_pairs_dependency(const TaggedSentence& sentence,
                                          const AmodLabels& amod = {}) {
  if (!sentence.annotated())
    throw Error(ErrorCode::unannotated_sentence,
                "sentence of review '" + sentence.review_id + "' has no dependency annotation");
  PairTable pairs;
  for (const auto& t : sentence.tokens) {
    if (!t.deprel || !amod.contains(*t.deprel) || t.upos != "ADJ") continue;
    if (*t.head == 0) continue;
    const auto& head = sentence.tokens[*t.head - 1];
    if (!is_noun_tag(head.upos)) continue;
    pairs.push_back({t.lemma, head.lemma, sentence.review_id, 0, 0});
  }
  return pairs;
}

// Fallback for plain tagged text: every adjective in a maximal ADJ run pairs
// with the noun directly after the run.
inline PairTable extract_pairs_adjacent(const TaggedSentence& sentence) {
  PairTable pairs;
  const auto& toks = sentence.tokens;
  std::size_t k = 0;
  while (k < toks.size()) {
    if (toks[k].upos != "ADJ") {
      ++k;
      continue;
    }
    std::size_t end = k;
    while (end < toks.size() && toks[end].upos == "ADJ") ++end;
    if (end < toks.size() && is_noun_tag(toks[end].upos))
      for (std::size_t a = k; a < end; ++a)
        pairs.push_back({toks[a].lemma, toks[end].lemma, sentence.review_id, 0, 0});
    k = end;
  }
  return pairs;
}

inline PairTable extract_pairs(const TaggedSentence& sentence, const AmodLabels& amod = {}) {
  return sentence.annotated() ? extract_pairs_dependency(sentence, amod)
                              : extract_pairs_adjacent(sentence);
}

struct ExtractionResult {
  PairTable pairs;
  std::size_t unlinked_sentences = 0;  // review id absent from the records
};

// Extracts pairs from every sentence and resolves each review id to the
// user/POI indices of its record. Sentences of unknown reviews are counted
// and dropped.
inline ExtractionResult extract_review_pairs(const std::vector<TaggedSentence>& sentences,
                                             const std::vector<ReviewRecord>& records,
                                             const IdIndex& users, const IdIndex& pois,
                                             const AmodLabels& amod = {}) {
  std::unordered_map<std::string, std::pair<std::size_t, std::size_t>> owner;
  for (const auto& r : records)
    if (r.text_ref) owner[*r.text_ref] = {*users.find(r.user_id), *pois.find(r.poi_id)};
  ExtractionResult result;
  for (const auto& s : sentences) {
    auto it = owner.find(s.review_id);
    if (it == owner.end()) {
      ++result.unlinked_sentences;
      continue;
    }
    for (auto& p : extract_pairs(s, amod)) {
      p.user_idx = it->second.first;
      p.poi_idx = it->second.second;
      result.pairs.push_back(std::move(p));
    }
  }
  return result;
}

struct PairStatRow {
  std::string opinion;
  std::string aspect;
  std::size_t frequency = 0;
  double mean_stars = 0;
};

// Frequency and mean star rating per distinct pair, keeping rows with
// frequency > min_freq, sorted by frequency descending then lexically.
inline std::vector<PairStatRow> pair_statistics(const PairTable& pairs,
                                                const InteractionDataset& dataset,
                                                std::size_t min_freq) {
  std::unordered_map<std::string, double> by_review;
  for (const auto& o : dataset.observations())
    if (!o.review_id.empty()) by_review[o.review_id] = o.stars;

  std::map<std::pair<std::string, std::string>, std::pair<std::size_t, double>> acc;
  for (const auto& p : pairs) {
    std::optional<double> stars;
    if (auto it = by_review.find(p.review_id); it != by_review.end()) {
      stars = it->second;
    } else {
      for (std::size_t k : dataset.user_observations(p.user_idx))
        if (dataset.observations()[k].poi == p.poi_idx) stars = dataset.observations()[k].stars;
    }
    if (!stars)
      throw Error(ErrorCode::dangling_review,
                  "pair from review '" + p.review_id + "' has no rated observation");
    auto& slot = acc[{p.opinion, p.aspect}];
    ++slot.first;
    slot.second += *stars;
  }
  std::vector<PairStatRow> rows;
  for (const auto& [key, val] : acc)
    if (val.first > min_freq)
      rows.push_back({key.first, key.second, val.first, val.second / static_cast<double>(val.first)});
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return a.frequency > b.frequency; });
  return rows;
}

inline void write_pair_stats_csv(std::ostream& out, const std::vector<PairStatRow>& rows) {
  out << "opinion,aspect,frequency,mean_stars\n";
  for (const auto& r : rows) {
    std::ostringstream mean;
    mean.precision(17);
    mean << r.mean_stars;
    out << r.opinion << ',' << r.aspect << ',' << r.frequency << ',' << mean.str() << '\n';
  }
}

// TSV persistence: `user_id  poi_id  review_id  opinion  aspect`.
inline void write_pairs_tsv(std::ostream& out, const PairTable& pairs, const IdIndex& users,
                            const IdIndex& pois) {
  out << "user_id\tpoi_id\treview_id\topinion\taspect\n";
  for (const auto& p : pairs)
    out << users.id(p.user_idx) << '\t' << pois.id(p.poi_idx) << '\t' << p.review_id << '\t'
        << p.opinion << '\t' << p.aspect << '\n';
}

inline PairTable read_pairs_tsv(std::istream& in, const IdIndex& users, const IdIndex& pois) {
  PairTable pairs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || lineno == 1) continue;
    auto cols = detail::split_tabs(line);
    if (cols.size() != 5)
      throw Error(ErrorCode::column_count, "pair table rows need 5 columns", lineno);
    auto u = users.find(std::string(cols[0]));
    auto p = pois.find(std::string(cols[1]));
    if (!u || !p)
      throw Error(ErrorCode::dangling_review, "pair row names an unknown user or POI", lineno);
    pairs.push_back({std::string(cols[3]), std::string(cols[4]), std::string(cols[2]), *u, *p});
  }
  return pairs;
}

}  // namespace explirec
