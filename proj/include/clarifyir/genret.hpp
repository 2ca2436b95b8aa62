#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "clarifyir/corpus.hpp"
#include "clarifyir/lexical.hpp"
#include "clarifyir/parallel.hpp"
#include "clarifyir/text.hpp"

namespace clarifyir {

// Separator between concatenated identifiers in training targets. Never
// inserted into a trie.
inline constexpr std::string_view kSepToken = "[SEP]";
inline constexpr std::size_t kIdentifierLength = 5;

enum class IdentifierStrategy {
  kDocN,   // "d<ordinal>"
  kDocF5,  // first five tokens of the text
  kDocK,   // top five tf-idf keywords
};

const char* strategy_name(IdentifierStrategy s);
IdentifierStrategy parse_strategy(const std::string& name);

struct Identifier {
  std::string doc_id;
  std::uint64_t ordinal = 0;
  TokenStream tokens;

  friend bool operator==(const Identifier&, const Identifier&) = default;
};

// Top-k tokens by tf * ln(N / df), stopwords removed, ties broken
// lexicographically. Throws when the document has no eligible token.
TokenStream extract_keywords(const Document& doc, const InvertedIndex& index, std::size_t k);

std::string docn_token(std::uint64_t ordinal);

Identifier make_identifier(const Document& doc, IdentifierStrategy strategy,
                           const InvertedIndex& index);

// Identifiers in corpus order (one per document).
std::vector<Identifier> make_identifiers(const Corpus& corpus, IdentifierStrategy strategy,
                                         const InvertedIndex& index,
                                         Execution exec = Execution::kParallel);

class IdentifierTable {
 public:
  IdentifierTable() = default;
  explicit IdentifierTable(std::vector<Identifier> entries);

  const std::vector<Identifier>& entries() const { return entries_; }
  const Identifier* find(const std::string& doc_id) const;

 private:
  std::vector<Identifier> entries_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

// JSON-lines {"doc_id","tokens","strategy"}; ordinals come from the corpus.
void save_identifiers(const std::vector<Identifier>& ids, IdentifierStrategy strategy,
                      const std::filesystem::path& path);
std::vector<Identifier> load_identifiers(const std::filesystem::path& path, const Corpus& corpus);

class IdentifierTrie {
 public:
  using NodeId = std::uint32_t;

  struct Next {
    std::vector<std::string> tokens;  // lexicographic
    std::optional<std::string> terminal;
  };

  IdentifierTrie();

  // Inserts in ascending ordinal order. A token sequence that is already
  // taken gets "d<ordinal>" appended until it is unique.
  static IdentifierTrie build(std::vector<Identifier> identifiers);

  Next allowed_next(std::span<const std::string> prefix) const;
  std::string resolve(std::span<const std::string> tokens) const;
  // Same as resolve, returning the position in identifiers().
  std::size_t resolve_index(std::span<const std::string> tokens) const;

  // Stored sequences after deduplication, in insertion order.
  const std::vector<Identifier>& identifiers() const { return identifiers_; }
  std::size_t size() const { return identifiers_.size(); }
  bool empty() const { return identifiers_.empty(); }
  std::size_t depth() const { return depth_; }

  static constexpr NodeId root() { return 0; }
  const std::map<std::string, NodeId>& children(NodeId node) const { return nodes_[node].children; }
  // Index into identifiers(), or nullopt.
  std::optional<std::size_t> terminal(NodeId node) const;

 private:
  struct Node {
    std::map<std::string, NodeId> children;
    std::int64_t terminal = -1;
  };

  std::optional<NodeId> walk(std::span<const std::string> tokens) const;

  std::vector<Node> nodes_;
  std::vector<Identifier> identifiers_;
  std::size_t depth_ = 0;
};

// Pluggable next-token distribution. Returns one log-probability per entry
// of `allowed`, in the same order. -inf marks a token the scorer forbids.
// Implementations must be deterministic and stateless per call.
class SequenceScorer {
 public:
  virtual ~SequenceScorer() = default;
  virtual std::vector<double> next_token_logprobs(std::span<const std::string> context,
                                                  std::span<const std::string> prefix,
                                                  std::span<const std::string> allowed) const = 0;
};

struct ScorerLambdas {
  double bigram = 0.4;
  double unigram = 0.2;
  double overlap = 0.4;
};

struct TrainingPair {
  TokenStream context;
  TokenStream target;
};

// Count-based stand-in for a trained decoder:
//   log(l1 * P_bigram(tok | prev) + l2 * P_unigram(tok) + l3 * overlap(tok, ctx))
// Each component is add-1 smoothed and normalized over `allowed`; overlap
// is proportional to 1 + count(tok in context). "[SEP]" in a target resets
// the bigram history to the start symbol.
class ReferenceScorer final : public SequenceScorer {
 public:
  static constexpr std::string_view kFormatTag = "CLARIFYIR-SCORER v1";
  static constexpr std::string_view kStartToken = "<s>";

  ReferenceScorer() = default;

  static ReferenceScorer train(std::span<const TrainingPair> pairs, const ScorerLambdas& lambdas = {});

  std::vector<double> next_token_logprobs(std::span<const std::string> context,
                                          std::span<const std::string> prefix,
                                          std::span<const std::string> allowed) const override;

  const ScorerLambdas& lambdas() const { return lambdas_; }

  nlohmann::json to_json() const;
  static ReferenceScorer from_json(const nlohmann::json& doc);
  void save(const std::filesystem::path& path) const;
  static ReferenceScorer load(const std::filesystem::path& path);

  friend bool operator==(const ReferenceScorer& a, const ReferenceScorer& b);

 private:
  ScorerLambdas lambdas_;
  std::map<std::string, std::uint64_t> unigram_;
  std::map<std::string, std::map<std::string, std::uint64_t>> bigram_;
};

void validate_lambdas(const ScorerLambdas& lambdas);

struct BeamHypothesis {
  TokenStream tokens;
  double score = 0.0;

  friend bool operator==(const BeamHypothesis&, const BeamHypothesis&) = default;
};

// Score descending, then lexicographic token order.
bool hypothesis_before(const BeamHypothesis& a, const BeamHypothesis& b);

inline constexpr std::size_t kDefaultBeamSize = 15;

// Beam search whose expansions are restricted to trie children. A
// hypothesis that reaches a terminal node is emitted as a completed
// sequence; if that node also has children it keeps expanding. Scores are
// raw log-probability sums. Returns at most beam_size completed sequences.
std::vector<BeamHypothesis> constrained_beam_search(const SequenceScorer& scorer,
                                                    std::span<const std::string> context,
                                                    const IdentifierTrie& trie,
                                                    std::size_t beam_size, std::size_t max_len);

// Identifiers of the top_n relevant documents (grade desc, ordinal asc)
// joined by "[SEP]". Relevant documents without an identifier are skipped.
TokenStream make_training_targets(const std::string& facet_id, const Qrels& qrels,
                                  const IdentifierTable& identifiers, std::size_t top_n = 5);

struct GenScoredDoc {
  std::string doc_id;
  double score = -std::numeric_limits<double>::infinity();
};

using GenRanking = std::vector<GenScoredDoc>;

// Documents produced by the beams, ranked by their best sequence score
// (ties: first-stage rank, then ordinal), followed by the remaining
// first-stage candidates in first-stage order with score -inf.
GenRanking rank_candidates(std::span<const BeamHypothesis> beams, const IdentifierTrie& trie,
                           const RankedList& first_stage);

}  // namespace clarifyir
