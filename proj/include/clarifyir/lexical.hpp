#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "clarifyir/corpus.hpp"
#include "clarifyir/parallel.hpp"
#include "clarifyir/text.hpp"

namespace clarifyir {

struct Posting {
  std::uint32_t doc = 0;  // dense document index, ascending ordinal
  std::uint32_t tf = 0;
};

// Immutable term -> postings index over a corpus. Documents are addressed by
// a dense index in ascending-ordinal order.
class InvertedIndex {
 public:
  static constexpr std::string_view kFormatTag = "CLARIFYIR-IDX v1";

  InvertedIndex() = default;

  static InvertedIndex build(const Corpus& corpus, Execution exec = Execution::kParallel);

  std::size_t num_docs() const { return doc_ids_.size(); }
  std::size_t num_terms() const { return terms_.size(); }
  double avg_len() const { return avg_len_; }
  std::uint64_t total_tokens() const { return total_tokens_; }

  std::optional<std::uint32_t> doc_index(const std::string& doc_id) const;
  const std::string& doc_id(std::uint32_t doc) const { return doc_ids_[doc]; }
  std::uint64_t ordinal(std::uint32_t doc) const { return ordinals_[doc]; }
  std::uint32_t doc_len(std::uint32_t doc) const { return doc_lens_[doc]; }

  std::optional<std::uint32_t> term_id(std::string_view token) const;
  const std::vector<std::string>& terms() const { return terms_; }
  std::span<const Posting> postings(std::uint32_t term) const { return postings_[term]; }

  std::size_t df(std::string_view token) const;
  std::uint64_t cf(std::string_view token) const;
  std::uint32_t tf(std::string_view token, std::uint32_t doc) const;

  std::string serialize() const;
  static InvertedIndex deserialize(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static InvertedIndex load(const std::filesystem::path& path);

  friend bool operator==(const InvertedIndex& a, const InvertedIndex& b);

 private:
  void finalize();

  std::vector<std::string> doc_ids_;
  std::vector<std::uint64_t> ordinals_;
  std::vector<std::uint32_t> doc_lens_;
  std::vector<std::string> terms_;  // sorted
  std::vector<std::vector<Posting>> postings_;
  std::vector<std::uint64_t> cf_;
  std::unordered_map<std::string, std::uint32_t> doc_lookup_;
  std::unordered_map<std::string, std::uint32_t> term_lookup_;
  double avg_len_ = 0.0;
  std::uint64_t total_tokens_ = 0;
};

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

struct QlParams {
  double mu = 2000.0;
};

enum class RankModel { kBm25, kQl };

const char* rank_model_name(RankModel model);
RankModel parse_rank_model(const std::string& name);

struct ScoredDoc {
  std::string doc_id;
  double score = 0.0;
  std::uint64_t ordinal = 0;

  friend bool operator==(const ScoredDoc&, const ScoredDoc&) = default;
};

// Descending score, ties by ascending ordinal.
using RankedList = std::vector<ScoredDoc>;

// Robertson idf with the +1 inside the log so it never goes negative.
double bm25_idf(std::size_t num_docs, std::size_t df);

// Sums over query tokens in order; repeated tokens count repeatedly.
double bm25_score(const InvertedIndex& index, const TokenStream& query,
                  const std::string& doc_id, const Bm25Params& params = {});

struct WeightedField {
  TokenStream tokens;
  double weight = 1.0;
};

// Dirichlet-smoothed query likelihood over weighted fields. Weights are
// normalized to sum to 1. Tokens absent from the collection are skipped
// because they would add log(0) to every document alike.
double ql_score(const InvertedIndex& index, const std::vector<WeightedField>& fields,
                const std::string& doc_id, const QlParams& params = {});

inline constexpr std::size_t kDefaultFirstStageDepth = 100;

// bm25 ranks documents sharing at least one token with the query; ql ranks
// every document.
RankedList search(const InvertedIndex& index, const TokenStream& query, std::size_t k,
                  RankModel model, const Bm25Params& bm25 = {}, const QlParams& ql = {});

RankedList search_fields(const InvertedIndex& index, const std::vector<WeightedField>& fields,
                         std::size_t k, const QlParams& params = {});

// One search per query; parallel and serial paths return identical lists.
std::vector<RankedList> batch_search(const InvertedIndex& index,
                                     std::span<const TokenStream> queries, std::size_t k,
                                     RankModel model, Execution exec = Execution::kParallel,
                                     const Bm25Params& bm25 = {}, const QlParams& ql = {});

}  // namespace clarifyir
