#include "clarifyir/genret.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>

#include "clarifyir/error.hpp"
#include "io.hpp"

namespace clarifyir {

using nlohmann::json;

const char* strategy_name(IdentifierStrategy s) {
  switch (s) {
    case IdentifierStrategy::kDocN: return "docn";
    case IdentifierStrategy::kDocF5: return "docf5";
    case IdentifierStrategy::kDocK: return "dock";
  }
  return "?";
}

IdentifierStrategy parse_strategy(const std::string& name) {
  if (name == "docn") return IdentifierStrategy::kDocN;
  if (name == "docf5") return IdentifierStrategy::kDocF5;
  if (name == "dock") return IdentifierStrategy::kDocK;
  fail(ErrorCode::kInvalidArgument, "unknown identifier strategy \"" + name + "\"");
}

TokenStream extract_keywords(const Document& doc, const InvertedIndex& index, std::size_t k) {
  if (k == 0) fail(ErrorCode::kInvalidArgument, "extract_keywords: k must be >= 1");
  if (!index.doc_index(doc.id)) fail(ErrorCode::kNotFound, "document " + doc.id + " is not indexed");

  std::map<std::string, std::uint32_t> tf;
  for (auto& token : tokenize(doc.text))
    if (!is_stopword(token)) ++tf[token];
  if (tf.empty())
    fail(ErrorCode::kInvalidArgument, "document " + doc.id + " has no keyword-eligible tokens");

  const double n = static_cast<double>(index.num_docs());
  std::vector<std::pair<double, std::string>> ranked;
  ranked.reserve(tf.size());
  for (const auto& [token, count] : tf) {
    const auto df = std::max<std::size_t>(index.df(token), 1);
    ranked.emplace_back(count * std::log(n / static_cast<double>(df)), token);
  }
  const auto keep = std::min(k, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep), ranked.end(),
                    [](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first > b.first;
                      return a.second < b.second;
                    });
  TokenStream out;
  for (std::size_t i = 0; i < keep; ++i) out.push_back(std::move(ranked[i].second));
  return out;
}

std::string docn_token(std::uint64_t ordinal) { return "d" + std::to_string(ordinal); }

Identifier make_identifier(const Document& doc, IdentifierStrategy strategy,
                           const InvertedIndex& index) {
  Identifier id{doc.id, doc.ordinal, {}};
  switch (strategy) {
    case IdentifierStrategy::kDocN:
      id.tokens = {docn_token(doc.ordinal)};
      break;
    case IdentifierStrategy::kDocF5: {
      auto tokens = tokenize(doc.text);
      if (tokens.empty())
        fail(ErrorCode::kInvalidArgument, "document " + doc.id + " has no tokens");
      if (tokens.size() > kIdentifierLength) tokens.resize(kIdentifierLength);
      id.tokens = std::move(tokens);
      break;
    }
    case IdentifierStrategy::kDocK:
      id.tokens = extract_keywords(doc, index, kIdentifierLength);
      break;
  }
  return id;
}

std::vector<Identifier> make_identifiers(const Corpus& corpus, IdentifierStrategy strategy,
                                         const InvertedIndex& index, Execution exec) {
  const auto& docs = corpus.docs();
  std::vector<Identifier> out(docs.size());
  std::vector<std::optional<Error>> errors(docs.size());
  auto one = [&](std::int64_t i) {
    try {
      out[i] = make_identifier(docs[i], strategy, index);
    } catch (const Error& e) {
      errors[i] = e;
    }
  };
  const auto n = static_cast<std::int64_t>(docs.size());
  if (exec == Execution::kParallel) {
#pragma omp parallel for schedule(dynamic, 64)
    for (std::int64_t i = 0; i < n; ++i) one(i);
  } else {
    for (std::int64_t i = 0; i < n; ++i) one(i);
  }
  for (auto& e : errors)
    if (e) throw *e;
  return out;
}

IdentifierTable::IdentifierTable(std::vector<Identifier> entries) : entries_(std::move(entries)) {
  std::sort(entries_.begin(), entries_.end(),
            [](const Identifier& a, const Identifier& b) { return a.ordinal < b.ordinal; });
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (!lookup_.emplace(entries_[i].doc_id, i).second)
      fail(ErrorCode::kIntegrity, "duplicate identifier for document " + entries_[i].doc_id);
}

const Identifier* IdentifierTable::find(const std::string& doc_id) const {
  auto it = lookup_.find(doc_id);
  return it == lookup_.end() ? nullptr : &entries_[it->second];
}

void save_identifiers(const std::vector<Identifier>& ids, IdentifierStrategy strategy,
                      const std::filesystem::path& path) {
  std::string out;
  for (const auto& id : ids) {
    out += json{{"doc_id", id.doc_id}, {"tokens", id.tokens}, {"strategy", strategy_name(strategy)}}
               .dump();
    out += '\n';
  }
  detail::write_file(path, out);
}

std::vector<Identifier> load_identifiers(const std::filesystem::path& path, const Corpus& corpus) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<Identifier> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = path.string() + ":" + std::to_string(line_no);
    json row;
    try {
      row = json::parse(line);
    } catch (const json::parse_error&) {
      fail(ErrorCode::kParse, where + ": invalid JSON");
    }
    Identifier id;
    id.doc_id = detail::require_string(row, "doc_id", where);
    const auto& tokens = detail::require_field(row, "tokens", where);
    if (!tokens.is_array() || tokens.empty())
      fail(ErrorCode::kParse, where + ".tokens: expected a non-empty array");
    for (const auto& t : tokens) {
      if (!t.is_string() || t.get<std::string>().empty())
        fail(ErrorCode::kParse, where + ".tokens: expected non-empty strings");
      id.tokens.push_back(t.get<std::string>());
    }
    const auto* doc = corpus.find(id.doc_id);
    if (!doc) fail(ErrorCode::kIntegrity, where + ": unknown document " + id.doc_id);
    id.ordinal = doc->ordinal;
    out.push_back(std::move(id));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Trie

IdentifierTrie::IdentifierTrie() : nodes_(1) {}

IdentifierTrie IdentifierTrie::build(std::vector<Identifier> identifiers) {
  std::stable_sort(identifiers.begin(), identifiers.end(),
                   [](const Identifier& a, const Identifier& b) { return a.ordinal < b.ordinal; });
  IdentifierTrie trie;
  for (auto& id : identifiers) {
    if (id.tokens.empty())
      fail(ErrorCode::kInvalidArgument, "empty identifier for document " + id.doc_id);
    for (const auto& t : id.tokens)
      if (t == kSepToken) fail(ErrorCode::kInvalidArgument, "identifier contains [SEP]");

    while (true) {
      auto existing = trie.walk(id.tokens);
      if (!existing || trie.nodes_[*existing].terminal < 0) break;
      id.tokens.push_back(docn_token(id.ordinal));
    }

    NodeId node = root();
    for (const auto& token : id.tokens) {
      auto it = trie.nodes_[node].children.find(token);
      if (it == trie.nodes_[node].children.end()) {
        const auto next = static_cast<NodeId>(trie.nodes_.size());
        trie.nodes_[node].children.emplace(token, next);
        trie.nodes_.emplace_back();
        node = next;
      } else {
        node = it->second;
      }
    }
    trie.nodes_[node].terminal = static_cast<std::int64_t>(trie.identifiers_.size());
    trie.depth_ = std::max(trie.depth_, id.tokens.size());
    trie.identifiers_.push_back(std::move(id));
  }
  return trie;
}

std::optional<IdentifierTrie::NodeId> IdentifierTrie::walk(std::span<const std::string> tokens) const {
  NodeId node = root();
  for (const auto& token : tokens) {
    auto it = nodes_[node].children.find(token);
    if (it == nodes_[node].children.end()) return std::nullopt;
    node = it->second;
  }
  return node;
}

std::optional<std::size_t> IdentifierTrie::terminal(NodeId node) const {
  const auto t = nodes_[node].terminal;
  if (t < 0) return std::nullopt;
  return static_cast<std::size_t>(t);
}

IdentifierTrie::Next IdentifierTrie::allowed_next(std::span<const std::string> prefix) const {
  auto node = walk(prefix);
  if (!node) fail(ErrorCode::kInvalidArgument, "invalid identifier prefix");
  Next next;
  for (const auto& [token, child] : nodes_[*node].children) next.tokens.push_back(token);
  if (auto t = terminal(*node)) next.terminal = identifiers_[*t].doc_id;
  return next;
}

std::size_t IdentifierTrie::resolve_index(std::span<const std::string> tokens) const {
  auto node = walk(tokens);
  if (!node) fail(ErrorCode::kNotFound, "unknown identifier sequence");
  auto t = terminal(*node);
  if (!t) fail(ErrorCode::kInvalidArgument, "incomplete identifier sequence");
  return *t;
}

std::string IdentifierTrie::resolve(std::span<const std::string> tokens) const {
  return identifiers_[resolve_index(tokens)].doc_id;
}

// ---------------------------------------------------------------------------
// Reference scorer

void validate_lambdas(const ScorerLambdas& l) {
  if (l.bigram < 0 || l.unigram < 0 || l.overlap < 0)
    fail(ErrorCode::kInvalidArgument, "scorer lambdas must be non-negative");
  if (std::abs(l.bigram + l.unigram + l.overlap - 1.0) > 1e-9)
    fail(ErrorCode::kInvalidArgument, "scorer lambdas must sum to 1");
}

ReferenceScorer ReferenceScorer::train(std::span<const TrainingPair> pairs,
                                       const ScorerLambdas& lambdas) {
  validate_lambdas(lambdas);
  ReferenceScorer scorer;
  scorer.lambdas_ = lambdas;
  for (const auto& pair : pairs) {
    std::string prev(kStartToken);
    for (const auto& token : pair.target) {
      if (token == kSepToken) {
        prev = kStartToken;
        continue;
      }
      ++scorer.unigram_[token];
      ++scorer.bigram_[prev][token];
      prev = token;
    }
  }
  return scorer;
}

std::vector<double> ReferenceScorer::next_token_logprobs(std::span<const std::string> context,
                                                         std::span<const std::string> prefix,
                                                         std::span<const std::string> allowed) const {
  const std::size_t n = allowed.size();
  std::vector<double> out(n);
  if (n == 0) return out;

  std::string_view prev = kStartToken;
  if (!prefix.empty() && prefix.back() != kSepToken) prev = prefix.back();
  const std::map<std::string, std::uint64_t>* follow = nullptr;
  if (auto it = bigram_.find(std::string(prev)); it != bigram_.end()) follow = &it->second;

  std::unordered_map<std::string_view, std::uint64_t> ctx;
  for (const auto& t : context) ++ctx[t];

  std::vector<double> bi(n), uni(n), ov(n);
  double bi_sum = 0, uni_sum = 0, ov_sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t b = 0;
    if (follow)
      if (auto it = follow->find(allowed[i]); it != follow->end()) b = it->second;
    std::uint64_t u = 0;
    if (auto it = unigram_.find(allowed[i]); it != unigram_.end()) u = it->second;
    std::uint64_t c = 0;
    if (auto it = ctx.find(allowed[i]); it != ctx.end()) c = it->second;
    bi[i] = static_cast<double>(b + 1);
    uni[i] = static_cast<double>(u + 1);
    ov[i] = static_cast<double>(c + 1);
    bi_sum += bi[i];
    uni_sum += uni[i];
    ov_sum += ov[i];
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double p = lambdas_.bigram * bi[i] / bi_sum + lambdas_.unigram * uni[i] / uni_sum +
                     lambdas_.overlap * ov[i] / ov_sum;
    out[i] = std::log(p);
  }
  return out;
}

json ReferenceScorer::to_json() const {
  json bigram = json::object();
  for (const auto& [prev, next] : bigram_) bigram[prev] = next;
  return {{"format", kFormatTag},
          {"lambdas", {lambdas_.bigram, lambdas_.unigram, lambdas_.overlap}},
          {"unigram", unigram_},
          {"bigram", std::move(bigram)}};
}

ReferenceScorer ReferenceScorer::from_json(const json& doc) {
  if (!doc.is_object() || doc.value("format", "") != kFormatTag)
    fail(ErrorCode::kParse, "scorer: missing \"" + std::string(kFormatTag) + "\" tag");
  ReferenceScorer scorer;
  try {
    const auto& l = doc.at("lambdas");
    scorer.lambdas_ = {l.at(0).get<double>(), l.at(1).get<double>(), l.at(2).get<double>()};
    scorer.unigram_ = doc.at("unigram").get<std::map<std::string, std::uint64_t>>();
    scorer.bigram_ =
        doc.at("bigram").get<std::map<std::string, std::map<std::string, std::uint64_t>>>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("scorer: ") + e.what());
  }
  validate_lambdas(scorer.lambdas_);
  return scorer;
}

void ReferenceScorer::save(const std::filesystem::path& path) const {
  detail::write_file(path, to_json().dump(1) + "\n");
}

ReferenceScorer ReferenceScorer::load(const std::filesystem::path& path) {
  return from_json(detail::parse_json(detail::read_file(path), path.string()));
}

bool operator==(const ReferenceScorer& a, const ReferenceScorer& b) {
  return a.lambdas_.bigram == b.lambdas_.bigram && a.lambdas_.unigram == b.lambdas_.unigram &&
         a.lambdas_.overlap == b.lambdas_.overlap && a.unigram_ == b.unigram_ &&
         a.bigram_ == b.bigram_;
}

// ---------------------------------------------------------------------------
// Constrained beam search

bool hypothesis_before(const BeamHypothesis& a, const BeamHypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.tokens < b.tokens;
}

std::vector<BeamHypothesis> constrained_beam_search(const SequenceScorer& scorer,
                                                    std::span<const std::string> context,
                                                    const IdentifierTrie& trie,
                                                    std::size_t beam_size, std::size_t max_len) {
  if (beam_size == 0) fail(ErrorCode::kInvalidArgument, "beam size must be >= 1");
  if (trie.empty()) return {};
  if (max_len < trie.depth())
    fail(ErrorCode::kInvalidArgument, "max_len " + std::to_string(max_len) +
                                          " is shorter than the longest identifier (" +
                                          std::to_string(trie.depth()) + ")");

  struct Live {
    IdentifierTrie::NodeId node;
    BeamHypothesis hyp;
  };
  std::vector<Live> live{{IdentifierTrie::root(), {}}};
  std::vector<BeamHypothesis> finished;
  std::vector<std::string> allowed;

  for (std::size_t step = 0; step < max_len && !live.empty(); ++step) {
    std::vector<Live> candidates;
    for (const auto& l : live) {
      const auto& children = trie.children(l.node);
      allowed.clear();
      for (const auto& [token, child] : children) allowed.push_back(token);
      const auto logprobs = scorer.next_token_logprobs(context, l.hyp.tokens, allowed);
      if (logprobs.size() != allowed.size())
        fail(ErrorCode::kIntegrity, "scorer returned the wrong number of log-probabilities");
      std::size_t i = 0;
      for (const auto& [token, child] : children) {
        const double lp = logprobs[i++];
        if (std::isnan(lp) || lp == std::numeric_limits<double>::infinity())
          fail(ErrorCode::kIntegrity, "scorer returned a non-finite log-probability");
        if (lp == -std::numeric_limits<double>::infinity()) continue;
        Live next{child, l.hyp};
        next.hyp.tokens.push_back(token);
        next.hyp.score += lp;
        candidates.push_back(std::move(next));
      }
    }
    const auto keep = std::min(beam_size, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                      candidates.end(),
                      [](const Live& a, const Live& b) { return hypothesis_before(a.hyp, b.hyp); });
    candidates.resize(keep);

    live.clear();
    for (auto& c : candidates) {
      if (trie.terminal(c.node)) finished.push_back(c.hyp);
      if (!trie.children(c.node).empty()) live.push_back(std::move(c));
    }
  }

  std::sort(finished.begin(), finished.end(), hypothesis_before);
  if (finished.size() > beam_size) finished.resize(beam_size);
  return finished;
}

// ---------------------------------------------------------------------------
// Targets and ranking

TokenStream make_training_targets(const std::string& facet_id, const Qrels& qrels,
                                  const IdentifierTable& identifiers, std::size_t top_n) {
  if (top_n == 0) fail(ErrorCode::kInvalidArgument, "top_n must be >= 1");
  auto it = qrels.find(facet_id);
  if (it == qrels.end()) fail(ErrorCode::kNotFound, "facet " + facet_id + " is not judged");

  std::vector<std::pair<int, const Identifier*>> relevant;
  for (const auto& [doc, grade] : it->second) {
    if (grade <= 0) continue;
    if (const auto* id = identifiers.find(doc)) relevant.emplace_back(grade, id);
  }
  if (relevant.empty())
    fail(ErrorCode::kInvalidArgument, "facet " + facet_id + " has no relevant document");
  std::sort(relevant.begin(), relevant.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second->ordinal < b.second->ordinal;
  });
  if (relevant.size() > top_n) relevant.resize(top_n);

  TokenStream target;
  for (std::size_t i = 0; i < relevant.size(); ++i) {
    if (i > 0) target.emplace_back(kSepToken);
    const auto& tokens = relevant[i].second->tokens;
    target.insert(target.end(), tokens.begin(), tokens.end());
  }
  return target;
}

GenRanking rank_candidates(std::span<const BeamHypothesis> beams, const IdentifierTrie& trie,
                           const RankedList& first_stage) {
  std::unordered_map<std::string, std::size_t> first_rank;
  for (std::size_t i = 0; i < first_stage.size(); ++i) first_rank.emplace(first_stage[i].doc_id, i);

  struct Hit {
    std::string doc_id;
    double score;
    std::size_t rank;
    std::uint64_t ordinal;
  };
  std::unordered_map<std::string, std::size_t> hit_index;
  std::vector<Hit> hits;
  for (const auto& beam : beams) {
    std::size_t resolved = 0;
    try {
      resolved = trie.resolve_index(beam.tokens);
    } catch (const Error& e) {
      fail(ErrorCode::kIntegrity, std::string("beam does not resolve to a document: ") + e.what());
    }
    const auto& doc_id = trie.identifiers()[resolved].doc_id;
    auto [pos, inserted] = hit_index.emplace(doc_id, hits.size());
    if (inserted) {
      const auto fr = first_rank.find(doc_id);
      const auto ordinal = trie.identifiers()[resolved].ordinal;
      hits.push_back({doc_id, beam.score,
                      fr == first_rank.end() ? std::numeric_limits<std::size_t>::max() : fr->second,
                      ordinal});
    } else {
      hits[pos->second].score = std::max(hits[pos->second].score, beam.score);
    }
  }
  std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.rank != b.rank) return a.rank < b.rank;
    return a.ordinal < b.ordinal;
  });

  GenRanking out;
  out.reserve(hits.size() + first_stage.size());
  for (const auto& h : hits) out.push_back({h.doc_id, h.score});
  for (const auto& c : first_stage)
    if (!hit_index.contains(c.doc_id)) out.push_back({c.doc_id, -std::numeric_limits<double>::infinity()});
  return out;
}

}  // namespace clarifyir
