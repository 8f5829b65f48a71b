#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "explirec/error.hpp"
#include "explirec/pair_extraction.hpp"

namespace explirec {

// Word vectors in GloVe text format, keyed by lowercase word.
class WordVectorTable {
 public:
  explicit WordVectorTable(std::size_t dimension = 100) : dimension_(dimension) {}

  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t skipped_lines() const noexcept { return skipped_; }

  // Returns false when the word is already present (first entry wins).
  bool insert(const std::string& word, std::vector<double> vec) {
    if (vec.size() != dimension_)
      throw Error(ErrorCode::length_mismatch, "vector for '" + word + "' has wrong dimension");
    return entries_.try_emplace(to_lower(word), std::move(vec)).second;
  }

  const std::vector<double>* lookup(const std::string& word) const {
    auto it = entries_.find(word);
    return it == entries_.end() ? nullptr : &it->second;
  }

  // Multiplies every stored vector by factor.
  void scale(double factor) {
    for (auto& [w, v] : entries_)
      for (double& x : v) x *= factor;
  }

 private:
  friend WordVectorTable load_vectors(std::istream&, std::size_t, const std::string&);
  std::size_t dimension_;
  std::unordered_map<std::string, std::vector<double>> entries_;
  std::size_t skipped_ = 0;
};

// Lines with the wrong component count are skipped and counted; a file with
// no usable line is an error.
inline WordVectorTable load_vectors(std::istream& in, std::size_t dimension = 100,
                                    const std::string& name = "stream") {
  WordVectorTable table(dimension);
  std::string line;
  std::vector<double> vec;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t sp = line.find(' ');
    if (sp == std::string::npos || sp == 0) {
      ++table.skipped_;
      continue;
    }
    vec.clear();
    const char* p = line.data() + sp;
    const char* end = line.data() + line.size();
    bool ok = true;
    while (p < end) {
      while (p < end && *p == ' ') ++p;
      if (p == end) break;
      double x = 0;
      auto res = std::from_chars(p, end, x);
      if (res.ec != std::errc{} || (res.ptr != end && *res.ptr != ' ')) {
        ok = false;
        break;
      }
      vec.push_back(x);
      p = res.ptr;
    }
    if (!ok || vec.size() != dimension) {
      ++table.skipped_;
      continue;
    }
    table.entries_.try_emplace(to_lower(std::string_view(line).substr(0, sp)), vec);
  }
  if (table.size() == 0)
    throw Error(ErrorCode::no_valid_vectors,
                "no valid " + std::to_string(dimension) + "-dimensional vectors in " + name);
  return table;
}

inline WordVectorTable load_vectors(const std::string& path, std::size_t dimension = 100) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::unreadable_file, "cannot read vectors file '" + path + "'");
  return load_vectors(in, dimension, "'" + path + "'");
}

// Opinion vector followed by aspect vector.
struct TupleEmbedding {
  std::vector<double> vector;
};

inline std::optional<TupleEmbedding> embed_pair(const std::string& opinion,
                                                const std::string& aspect,
                                                const WordVectorTable& table) {
  const auto* o = table.lookup(opinion);
  const auto* a = table.lookup(aspect);
  if (!o || !a) return std::nullopt;
  TupleEmbedding e;
  e.vector.reserve(o->size() + a->size());
  e.vector.insert(e.vector.end(), o->begin(), o->end());
  e.vector.insert(e.vector.end(), a->begin(), a->end());
  return e;
}

inline std::optional<TupleEmbedding> embed_pair(const OpinionAspectPair& pair,
                                                const WordVectorTable& table) {
  return embed_pair(pair.opinion, pair.aspect, table);
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw Error(ErrorCode::length_mismatch, "cosine of vectors with different lengths");
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ab += a[k] * b[k];
    aa += a[k] * a[k];
    bb += b[k] * b[k];
  }
  if (aa == 0 || bb == 0) throw Error(ErrorCode::zero_vector, "cosine of a zero vector");
  double c = ab / (std::sqrt(aa) * std::sqrt(bb));
  return std::clamp(c, -1.0, 1.0);
}

// Per-word sentiment senses, (positive, negative) score per sense.
class SentimentLexicon {
 public:
  struct Sense {
    double positive = 0;
    double negative = 0;
  };

  void add_sense(const std::string& word, double positive, double negative) {
    if (positive < 0 || positive > 1 || negative < 0 || negative > 1)
      throw Error(ErrorCode::malformed_record, "sentiment scores must lie in [0,1]");
    senses_[to_lower(word)].push_back({positive, negative});
  }

  const std::vector<Sense>* senses(const std::string& word) const {
    auto it = senses_.find(word);
    return it == senses_.end() ? nullptr : &it->second;
  }

  std::size_t size() const noexcept { return senses_.size(); }

 private:
  std::unordered_map<std::string, std::vector<Sense>> senses_;
};

// SentiWordNet 3.0 TSV: `POS ID PosScore NegScore SynsetTerms Gloss`, `#`
// comments. Only rows whose POS is in `classes` are kept.
inline SentimentLexicon load_sentiwordnet(std::istream& in,
                                          const std::unordered_set<std::string>& classes = {"a"}) {
  SentimentLexicon lex;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    auto cols = detail::split_tabs(line);
    if (cols.size() < 5) throw Error(ErrorCode::column_count, "lexicon rows need 5+ columns", lineno);
    if (!classes.count(std::string(cols[0]))) continue;
    double pos = 0, neg = 0;
    auto num = [&](std::string_view s, double& out) {
      auto res = std::from_chars(s.data(), s.data() + s.size(), out);
      if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw Error(ErrorCode::malformed_record, "bad sentiment score '" + std::string(s) + "'",
                    lineno);
    };
    num(cols[2], pos);
    num(cols[3], neg);
    std::istringstream terms{std::string(cols[4])};
    std::string term;
    while (terms >> term) {
      std::size_t hash = term.rfind('#');
      std::string lemma = term.substr(0, hash);
      if (lemma.empty()) continue;
      try {
        lex.add_sense(lemma, pos, neg);
      } catch (const Error& e) {
        throw Error(e.code(), e.what(), lineno);
      }
    }
  }
  return lex;
}

inline SentimentLexicon load_sentiwordnet(const std::string& path,
                                          const std::unordered_set<std::string>& classes = {"a"}) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::unreadable_file, "cannot read lexicon file '" + path + "'");
  return load_sentiwordnet(in, classes);
}

// Unweighted mean over senses of (positive - negative); 0 for unknown words.
inline double sentiment_score(const std::string& word, const SentimentLexicon& lexicon) {
  const auto* s = lexicon.senses(word);
  if (!s || s->empty()) return 0.0;
  double sum = 0;
  for (const auto& sense : *s) sum += sense.positive - sense.negative;
  return sum / static_cast<double>(s->size());
}

struct MatchDecision {
  bool matched = false;
  double similarity = 0;
  bool same_polarity = false;
  bool embeddable = false;
};

// A match needs tuple-embedding cosine strictly above threshold and, with the
// penalty on, opinion sentiments whose product is strictly positive.
inline MatchDecision pair_match(const OpinionAspectPair& p, const OpinionAspectPair& q,
                                const WordVectorTable& table, const SentimentLexicon& lexicon,
                                double threshold, bool penalty) {
  MatchDecision d;
  d.same_polarity =
      sentiment_score(p.opinion, lexicon) * sentiment_score(q.opinion, lexicon) > 0;
  auto ep = embed_pair(p, table);
  auto eq = embed_pair(q, table);
  if (!ep || !eq) return d;
  d.embeddable = true;
  try {
    d.similarity = cosine(ep->vector, eq->vector);
  } catch (const Error&) {
    return d;  // a zero tuple embedding matches nothing
  }
  d.matched = d.similarity > threshold && (!penalty || d.same_polarity);
  return d;
}

}  // namespace explirec
