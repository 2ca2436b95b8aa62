#include "clarifyir/lexical.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "clarifyir/error.hpp"
#include "io.hpp"

namespace clarifyir {

using nlohmann::json;

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

InvertedIndex InvertedIndex::build(const Corpus& corpus, Execution exec) {
  const auto& docs = corpus.docs();
  const auto n = static_cast<std::int64_t>(docs.size());

  // Per-document term counts, computed independently per document.
  std::vector<std::map<std::string, std::uint32_t>> counts(docs.size());
  std::vector<std::uint32_t> lens(docs.size());
  auto count_doc = [&](std::int64_t i) {
    const auto tokens = tokenize(docs[i].text);
    lens[i] = static_cast<std::uint32_t>(tokens.size());
    for (const auto& t : tokens) ++counts[i][t];
  };
  if (exec == Execution::kParallel) {
#pragma omp parallel for schedule(dynamic, 64)
    for (std::int64_t i = 0; i < n; ++i) count_doc(i);
  } else {
    for (std::int64_t i = 0; i < n; ++i) count_doc(i);
  }

  std::map<std::string, std::vector<Posting>> merged;
  for (std::size_t i = 0; i < docs.size(); ++i)
    for (const auto& [term, tf] : counts[i])
      merged[term].push_back({static_cast<std::uint32_t>(i), tf});

  InvertedIndex index;
  index.doc_ids_.reserve(docs.size());
  for (const auto& d : docs) {
    index.doc_ids_.push_back(d.id);
    index.ordinals_.push_back(d.ordinal);
  }
  index.doc_lens_ = std::move(lens);
  for (auto& [term, postings] : merged) {
    index.terms_.push_back(term);
    index.postings_.push_back(std::move(postings));
  }
  index.finalize();
  return index;
}

void InvertedIndex::finalize() {
  doc_lookup_.clear();
  term_lookup_.clear();
  for (std::uint32_t i = 0; i < doc_ids_.size(); ++i) {
    if (!doc_lookup_.emplace(doc_ids_[i], i).second)
      fail(ErrorCode::kIntegrity, "duplicate document id " + doc_ids_[i]);
  }
  cf_.assign(terms_.size(), 0);
  for (std::uint32_t t = 0; t < terms_.size(); ++t) {
    term_lookup_.emplace(terms_[t], t);
    for (const auto& p : postings_[t]) cf_[t] += p.tf;
  }
  total_tokens_ = 0;
  for (auto len : doc_lens_) total_tokens_ += len;
  avg_len_ = doc_ids_.empty() ? 0.0
                              : static_cast<double>(total_tokens_) /
                                    static_cast<double>(doc_ids_.size());
}

std::optional<std::uint32_t> InvertedIndex::doc_index(const std::string& doc_id) const {
  auto it = doc_lookup_.find(doc_id);
  if (it == doc_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::uint32_t> InvertedIndex::term_id(std::string_view token) const {
  auto it = term_lookup_.find(std::string(token));
  if (it == term_lookup_.end()) return std::nullopt;
  return it->second;
}

std::size_t InvertedIndex::df(std::string_view token) const {
  auto t = term_id(token);
  return t ? postings_[*t].size() : 0;
}

std::uint64_t InvertedIndex::cf(std::string_view token) const {
  auto t = term_id(token);
  return t ? cf_[*t] : 0;
}

std::uint32_t InvertedIndex::tf(std::string_view token, std::uint32_t doc) const {
  auto t = term_id(token);
  if (!t) return 0;
  const auto& list = postings_[*t];
  auto it = std::lower_bound(list.begin(), list.end(), doc,
                             [](const Posting& p, std::uint32_t d) { return p.doc < d; });
  return (it != list.end() && it->doc == doc) ? it->tf : 0;
}

bool operator==(const InvertedIndex& a, const InvertedIndex& b) {
  if (a.doc_ids_ != b.doc_ids_ || a.ordinals_ != b.ordinals_ || a.doc_lens_ != b.doc_lens_ ||
      a.terms_ != b.terms_ || a.postings_.size() != b.postings_.size())
    return false;
  for (std::size_t t = 0; t < a.postings_.size(); ++t) {
    const auto& x = a.postings_[t];
    const auto& y = b.postings_[t];
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i].doc != y[i].doc || x[i].tf != y[i].tf) return false;
  }
  return true;
}

// Layout: the tag line, then one JSON object on the second line holding
// only integer data. Derived statistics are recomputed on load, so scores
// from a loaded index are bit-identical to the original.
std::string InvertedIndex::serialize() const {
  json docs = json::array();
  for (std::size_t i = 0; i < doc_ids_.size(); ++i)
    docs.push_back(json::array({doc_ids_[i], ordinals_[i], doc_lens_[i]}));
  json terms = json::array();
  for (std::size_t t = 0; t < terms_.size(); ++t) {
    json postings = json::array();
    for (const auto& p : postings_[t]) {
      postings.push_back(p.doc);
      postings.push_back(p.tf);
    }
    terms.push_back(json::array({terms_[t], std::move(postings)}));
  }
  json body{{"docs", std::move(docs)}, {"terms", std::move(terms)}};
  return std::string(kFormatTag) + "\n" + body.dump() + "\n";
}

InvertedIndex InvertedIndex::deserialize(const std::string& text) {
  const auto newline = text.find('\n');
  if (newline == std::string::npos || text.compare(0, newline, kFormatTag) != 0)
    fail(ErrorCode::kParse, "index: missing \"" + std::string(kFormatTag) + "\" header");
  const auto body = detail::parse_json(text.substr(newline + 1), "index");
  InvertedIndex index;
  try {
    for (const auto& d : body.at("docs")) {
      index.doc_ids_.push_back(d.at(0).get<std::string>());
      index.ordinals_.push_back(d.at(1).get<std::uint64_t>());
      index.doc_lens_.push_back(d.at(2).get<std::uint32_t>());
    }
    for (const auto& t : body.at("terms")) {
      index.terms_.push_back(t.at(0).get<std::string>());
      const auto& flat = t.at(1);
      if (flat.size() % 2 != 0) fail(ErrorCode::kParse, "index: odd postings array");
      std::vector<Posting> postings;
      for (std::size_t i = 0; i < flat.size(); i += 2) {
        Posting p{flat[i].get<std::uint32_t>(), flat[i + 1].get<std::uint32_t>()};
        if (p.doc >= index.doc_ids_.size()) fail(ErrorCode::kParse, "index: posting out of range");
        postings.push_back(p);
      }
      index.postings_.push_back(std::move(postings));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("index: ") + e.what());
  }
  if (!std::is_sorted(index.terms_.begin(), index.terms_.end()))
    fail(ErrorCode::kParse, "index: vocabulary is not sorted");
  index.finalize();
  return index;
}

void InvertedIndex::save(const std::filesystem::path& path) const {
  detail::write_file(path, serialize());
}

InvertedIndex InvertedIndex::load(const std::filesystem::path& path) {
  return deserialize(detail::read_file(path));
}

// ---------------------------------------------------------------------------
// Scoring

const char* rank_model_name(RankModel model) {
  return model == RankModel::kBm25 ? "bm25" : "ql";
}

RankModel parse_rank_model(const std::string& name) {
  if (name == "bm25") return RankModel::kBm25;
  if (name == "ql") return RankModel::kQl;
  fail(ErrorCode::kInvalidArgument, "unknown ranking model \"" + name + "\"");
}

double bm25_idf(std::size_t num_docs, std::size_t df) {
  const double n = static_cast<double>(num_docs);
  const double d = static_cast<double>(df);
  return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

namespace {

double bm25_term(double idf, double tf, double len, double avg_len, const Bm25Params& p) {
  const double norm = avg_len > 0.0 ? len / avg_len : 1.0;
  return idf * tf * (p.k1 + 1.0) / (tf + p.k1 * (1.0 - p.b + p.b * norm));
}

std::uint32_t require_doc(const InvertedIndex& index, const std::string& doc_id) {
  auto doc = index.doc_index(doc_id);
  if (!doc) fail(ErrorCode::kNotFound, "unknown document " + doc_id);
  return *doc;
}

RankedList top_k(const InvertedIndex& index, std::vector<std::pair<std::uint32_t, double>> scored,
                 std::size_t k) {
  auto before = [&](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return index.ordinal(a.first) < index.ordinal(b.first);
  };
  const auto keep = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(),
                    before);
  RankedList out;
  out.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i)
    out.push_back({index.doc_id(scored[i].first), scored[i].second, index.ordinal(scored[i].first)});
  return out;
}

// Flattened (term, weight) occurrences for query likelihood. Weights are
// normalized over fields; out-of-collection tokens are dropped.
struct QlTerm {
  std::uint32_t term;
  double weight;
  double background;  // mu * cf / |C|
};

std::vector<QlTerm> ql_terms(const InvertedIndex& index, const std::vector<WeightedField>& fields,
                             const QlParams& params) {
  if (!(params.mu > 0.0)) fail(ErrorCode::kInvalidArgument, "ql: mu must be positive");
  double total = 0.0;
  for (const auto& f : fields) {
    if (f.weight < 0.0) fail(ErrorCode::kInvalidArgument, "ql: negative field weight");
    total += f.weight;
  }
  if (!(total > 0.0)) fail(ErrorCode::kInvalidArgument, "ql: field weights must sum to > 0");
  std::vector<QlTerm> terms;
  const double collection = static_cast<double>(index.total_tokens());
  for (const auto& f : fields) {
    for (const auto& token : f.tokens) {
      auto t = index.term_id(token);
      if (!t) continue;
      const double cf = static_cast<double>(index.cf(token));
      terms.push_back({*t, f.weight / total, params.mu * cf / collection});
    }
  }
  return terms;
}

// score(d) = sum_t w_t * log((tf + bg_t) / (len + mu)), evaluated as
//   sum_{t: tf>0} w_t * (log(tf + bg_t) - log(bg_t))
//   + sum_t w_t * log(bg_t) - (sum_t w_t) * log(len + mu)
// so that ranking only touches postings. ql_score uses the same
// evaluation order and therefore returns bit-identical values.
struct QlConstants {
  double background_sum = 0.0;
  double weight_sum = 0.0;
};

QlConstants ql_constants(const std::vector<QlTerm>& terms) {
  QlConstants c;
  for (const auto& t : terms) {
    c.background_sum += t.weight * std::log(t.background);
    c.weight_sum += t.weight;
  }
  return c;
}

double ql_finish(double sparse, const QlConstants& c, double len, const QlParams& params) {
  return sparse + c.background_sum - c.weight_sum * std::log(len + params.mu);
}

double ql_delta(const QlTerm& t, double tf) {
  return t.weight * (std::log(tf + t.background) - std::log(t.background));
}

}  // namespace

double bm25_score(const InvertedIndex& index, const TokenStream& query, const std::string& doc_id,
                  const Bm25Params& params) {
  const auto doc = require_doc(index, doc_id);
  double score = 0.0;
  for (const auto& token : query) {
    const auto tf = index.tf(token, doc);
    if (tf == 0) continue;
    score += bm25_term(bm25_idf(index.num_docs(), index.df(token)), tf, index.doc_len(doc),
                       index.avg_len(), params);
  }
  return score;
}

double ql_score(const InvertedIndex& index, const std::vector<WeightedField>& fields,
                const std::string& doc_id, const QlParams& params) {
  const auto doc = require_doc(index, doc_id);
  const auto terms = ql_terms(index, fields, params);
  double sparse = 0.0;
  for (const auto& t : terms) {
    const auto tf = index.tf(index.terms()[t.term], doc);
    if (tf > 0) sparse += ql_delta(t, tf);
  }
  return ql_finish(sparse, ql_constants(terms), index.doc_len(doc), params);
}

RankedList search_fields(const InvertedIndex& index, const std::vector<WeightedField>& fields,
                         std::size_t k, const QlParams& params) {
  if (k == 0) fail(ErrorCode::kInvalidArgument, "search: k must be >= 1");
  const auto terms = ql_terms(index, fields, params);
  const auto constants = ql_constants(terms);
  std::vector<double> sparse(index.num_docs(), 0.0);
  for (const auto& t : terms)
    for (const auto& p : index.postings(t.term)) sparse[p.doc] += ql_delta(t, p.tf);
  std::vector<std::pair<std::uint32_t, double>> scored;
  scored.reserve(index.num_docs());
  for (std::uint32_t d = 0; d < index.num_docs(); ++d)
    scored.emplace_back(d, ql_finish(sparse[d], constants, index.doc_len(d), params));
  return top_k(index, std::move(scored), k);
}

RankedList search(const InvertedIndex& index, const TokenStream& query, std::size_t k,
                  RankModel model, const Bm25Params& bm25, const QlParams& ql) {
  if (k == 0) fail(ErrorCode::kInvalidArgument, "search: k must be >= 1");
  if (model == RankModel::kQl) return search_fields(index, {{query, 1.0}}, k, ql);

  // Term-at-a-time accumulation in query order, matching bm25_score.
  std::unordered_map<std::uint32_t, double> acc;
  for (const auto& token : query) {
    auto t = index.term_id(token);
    if (!t) continue;
    const auto list = index.postings(*t);
    const double idf = bm25_idf(index.num_docs(), list.size());
    for (const auto& p : list)
      acc[p.doc] += bm25_term(idf, p.tf, index.doc_len(p.doc), index.avg_len(), bm25);
  }
  std::vector<std::pair<std::uint32_t, double>> scored(acc.begin(), acc.end());
  return top_k(index, std::move(scored), k);
}

std::vector<RankedList> batch_search(const InvertedIndex& index,
                                     std::span<const TokenStream> queries, std::size_t k,
                                     RankModel model, Execution exec, const Bm25Params& bm25,
                                     const QlParams& ql) {
  if (k == 0) fail(ErrorCode::kInvalidArgument, "search: k must be >= 1");
  if (model == RankModel::kQl && !(ql.mu > 0.0))
    fail(ErrorCode::kInvalidArgument, "ql: mu must be positive");
  std::vector<RankedList> out(queries.size());
  const auto n = static_cast<std::int64_t>(queries.size());
  if (exec == Execution::kParallel) {
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < n; ++i) out[i] = search(index, queries[i], k, model, bm25, ql);
  } else {
    for (std::int64_t i = 0; i < n; ++i) out[i] = search(index, queries[i], k, model, bm25, ql);
  }
  return out;
}

}  // namespace clarifyir
