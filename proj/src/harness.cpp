#include "clarifyir/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <set>
#include <sstream>

#include "clarifyir/error.hpp"
#include "io.hpp"

namespace clarifyir {

using nlohmann::json;

const char* run_mode_name(RunMode m) {
  switch (m) {
    case RunMode::kOriginalQuery: return "original_query";
    case RunMode::kLexicalBaseline: return "lexical_baseline";
    case RunMode::kGenRerankTextOnly: return "gen_rerank_text_only";
    case RunMode::kGenRerankMultimodal: return "gen_rerank_multimodal";
  }
  return "?";
}

const char* classification_mode_name(ClassificationMode m) {
  switch (m) {
    case ClassificationMode::kOff: return "off";
    case ClassificationMode::kOracleWeakLabels: return "oracle_weak_labels";
    case ClassificationMode::kReferenceClassifier: return "reference_classifier";
  }
  return "?";
}

namespace {

RunMode parse_run_mode(const std::string& s) {
  for (auto m : {RunMode::kOriginalQuery, RunMode::kLexicalBaseline, RunMode::kGenRerankTextOnly,
                 RunMode::kGenRerankMultimodal})
    if (s == run_mode_name(m)) return m;
  fail(ErrorCode::kInvalidArgument, "config: unknown mode \"" + s + "\"");
}

ClassificationMode parse_classification(const std::string& s) {
  for (auto m : {ClassificationMode::kOff, ClassificationMode::kOracleWeakLabels,
                 ClassificationMode::kReferenceClassifier})
    if (s == classification_mode_name(m)) return m;
  fail(ErrorCode::kInvalidArgument, "config: unknown classification \"" + s + "\"");
}

const char* eval_split_name(EvalSplit s) {
  switch (s) {
    case EvalSplit::kTrain: return "train";
    case EvalSplit::kValidation: return "validation";
    case EvalSplit::kTest: return "test";
    case EvalSplit::kAll: return "all";
  }
  return "?";
}

EvalSplit parse_eval_split(const std::string& s) {
  for (auto e : {EvalSplit::kTrain, EvalSplit::kValidation, EvalSplit::kTest, EvalSplit::kAll})
    if (s == eval_split_name(e)) return e;
  fail(ErrorCode::kInvalidArgument, "config: unknown split \"" + s + "\"");
}

bool in_split(EvalSplit wanted, Split actual) {
  switch (wanted) {
    case EvalSplit::kTrain: return actual == Split::kTrain;
    case EvalSplit::kValidation: return actual == Split::kValidation;
    case EvalSplit::kTest: return actual == Split::kTest;
    case EvalSplit::kAll: return true;
  }
  return false;
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) fail(ErrorCode::kParse, "config: " + where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) fail(ErrorCode::kParse, "config: unknown key " + where + "." + key);
  }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::kParse, "config: " + where + "." + key + " has the wrong type");
  }
}

const json& sub(const json& doc, const char* key) {
  static const json empty = json::object();
  auto it = doc.find(key);
  return it == doc.end() ? empty : *it;
}

}  // namespace

std::filesystem::path ExperimentConfig::resolve(const std::string& path) const {
  if (path.empty()) return {};
  std::filesystem::path p(path);
  return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
}

ExperimentConfig config_from_json(const json& doc, std::filesystem::path base_dir) {
  check_keys(doc,
             {"name", "paths", "seed", "split_ratios", "bm25", "ql", "first_stage", "baseline_model",
              "identifiers", "beam_size", "scorer", "mode", "classification",
              "images_per_question", "classifier_alpha", "eval_split", "train_split", "gain",
              "g_max"},
             "$");
  ExperimentConfig c;
  c.base_dir = std::move(base_dir);
  c.name = get_or<std::string>(doc, "name", c.name, "$");

  const auto& paths = sub(doc, "paths");
  check_keys(paths,
             {"dataset", "corpus", "qrels", "embeddings", "split", "output_dir", "index",
              "identifiers", "scorer", "classifier", "weak_labels", "baseline_report", "compare_a",
              "compare_b"},
             "$.paths");
  auto& p = c.paths;
  for (auto [key, field] : std::initializer_list<std::pair<const char*, std::string*>>{
           {"dataset", &p.dataset}, {"corpus", &p.corpus}, {"qrels", &p.qrels},
           {"embeddings", &p.embeddings}, {"split", &p.split}, {"output_dir", &p.output_dir},
           {"index", &p.index}, {"identifiers", &p.identifiers}, {"scorer", &p.scorer},
           {"classifier", &p.classifier}, {"weak_labels", &p.weak_labels},
           {"baseline_report", &p.baseline_report}, {"compare_a", &p.compare_a},
           {"compare_b", &p.compare_b}})
    *field = get_or<std::string>(paths, key, "", "$.paths");

  c.seed = get_or<std::uint64_t>(doc, "seed", c.seed, "$");

  const auto& ratios = sub(doc, "split_ratios");
  check_keys(ratios, {"train", "validation", "test"}, "$.split_ratios");
  c.split_ratios.train = get_or<double>(ratios, "train", c.split_ratios.train, "$.split_ratios");
  c.split_ratios.validation =
      get_or<double>(ratios, "validation", c.split_ratios.validation, "$.split_ratios");
  c.split_ratios.test = get_or<double>(ratios, "test", c.split_ratios.test, "$.split_ratios");

  const auto& bm25 = sub(doc, "bm25");
  check_keys(bm25, {"k1", "b"}, "$.bm25");
  c.bm25.k1 = get_or<double>(bm25, "k1", c.bm25.k1, "$.bm25");
  c.bm25.b = get_or<double>(bm25, "b", c.bm25.b, "$.bm25");

  const auto& ql = sub(doc, "ql");
  check_keys(ql, {"mu", "weights"}, "$.ql");
  c.ql.mu = get_or<double>(ql, "mu", c.ql.mu, "$.ql");
  const auto& weights = sub(ql, "weights");
  check_keys(weights, {"query", "question", "answer"}, "$.ql.weights");
  c.ql_query_weight = get_or<double>(weights, "query", c.ql_query_weight, "$.ql.weights");
  c.ql_question_weight = get_or<double>(weights, "question", c.ql_question_weight, "$.ql.weights");
  c.ql_answer_weight = get_or<double>(weights, "answer", c.ql_answer_weight, "$.ql.weights");

  const auto& fs = sub(doc, "first_stage");
  check_keys(fs, {"model", "k", "query"}, "$.first_stage");
  c.first_stage_model = parse_rank_model(get_or<std::string>(fs, "model", "bm25", "$.first_stage"));
  c.first_stage_k = get_or<std::size_t>(fs, "k", c.first_stage_k, "$.first_stage");
  const auto query = get_or<std::string>(fs, "query", "topic", "$.first_stage");
  if (query == "topic") c.first_stage_query = FirstStageQuery::kTopic;
  else if (query == "full") c.first_stage_query = FirstStageQuery::kFull;
  else fail(ErrorCode::kInvalidArgument, "config: first_stage.query must be \"topic\" or \"full\"");

  c.baseline_model = parse_rank_model(get_or<std::string>(doc, "baseline_model", "ql", "$"));

  const auto& ids = sub(doc, "identifiers");
  check_keys(ids, {"strategy", "trie_scope"}, "$.identifiers");
  c.identifier_strategy = parse_strategy(get_or<std::string>(ids, "strategy", "dock", "$.identifiers"));
  const auto scope = get_or<std::string>(ids, "trie_scope", "facet", "$.identifiers");
  if (scope == "facet") c.trie_scope = TrieScope::kFacet;
  else if (scope == "corpus") c.trie_scope = TrieScope::kCorpus;
  else fail(ErrorCode::kInvalidArgument, "config: identifiers.trie_scope must be \"facet\" or \"corpus\"");

  c.beam_size = get_or<std::size_t>(doc, "beam_size", c.beam_size, "$");

  const auto& scorer = sub(doc, "scorer");
  check_keys(scorer, {"lambdas", "target_top_n"}, "$.scorer");
  const auto lambdas = get_or<std::vector<double>>(
      scorer, "lambdas", {c.scorer_lambdas.bigram, c.scorer_lambdas.unigram, c.scorer_lambdas.overlap},
      "$.scorer");
  if (lambdas.size() != 3) fail(ErrorCode::kInvalidArgument, "config: scorer.lambdas needs 3 values");
  c.scorer_lambdas = {lambdas[0], lambdas[1], lambdas[2]};
  validate_lambdas(c.scorer_lambdas);
  c.target_top_n = get_or<std::size_t>(scorer, "target_top_n", c.target_top_n, "$.scorer");

  c.mode = parse_run_mode(get_or<std::string>(doc, "mode", run_mode_name(c.mode), "$"));
  c.classification = parse_classification(
      get_or<std::string>(doc, "classification", classification_mode_name(c.classification), "$"));
  c.images_per_question = get_or<std::size_t>(doc, "images_per_question", c.images_per_question, "$");
  c.classifier_alpha = get_or<double>(doc, "classifier_alpha", c.classifier_alpha, "$");
  c.eval_split = parse_eval_split(get_or<std::string>(doc, "eval_split", "test", "$"));
  c.train_split = parse_eval_split(get_or<std::string>(doc, "train_split", "train", "$"));
  c.gain = parse_gain(get_or<std::string>(doc, "gain", "exponential", "$"));
  if (auto it = doc.find("g_max"); it != doc.end() && !it->is_null()) {
    if (!it->is_number_integer() || it->get<int>() < 0)
      fail(ErrorCode::kInvalidArgument, "config: g_max must be a non-negative integer");
    c.g_max = it->get<int>();
  }

  if (c.beam_size < 1) fail(ErrorCode::kInvalidArgument, "config: beam_size must be >= 1");
  if (c.first_stage_k < 1) fail(ErrorCode::kInvalidArgument, "config: first_stage.k must be >= 1");
  if (c.images_per_question > kMaxImagesPerQuestion)
    fail(ErrorCode::kInvalidArgument, "config: images_per_question must be in 0..3");
  if (c.target_top_n < 1) fail(ErrorCode::kInvalidArgument, "config: scorer.target_top_n must be >= 1");
  if (!(c.ql.mu > 0.0)) fail(ErrorCode::kInvalidArgument, "config: ql.mu must be positive");
  if (!(c.classifier_alpha > 0.0))
    fail(ErrorCode::kInvalidArgument, "config: classifier_alpha must be positive");
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  const auto doc = detail::parse_json(detail::read_file(path), path.string());
  try {
    return config_from_json(doc, path.parent_path());
  } catch (const Error& e) {
    fail(e.code(), path.string() + ": " + e.what());
  }
}

json config_to_json(const ExperimentConfig& c) {
  const auto& p = c.paths;
  json out;
  out["name"] = c.name;
  out["paths"] = {{"dataset", p.dataset},     {"corpus", p.corpus},
                  {"qrels", p.qrels},         {"embeddings", p.embeddings},
                  {"split", p.split},         {"output_dir", p.output_dir},
                  {"index", p.index},         {"identifiers", p.identifiers},
                  {"scorer", p.scorer},       {"classifier", p.classifier},
                  {"weak_labels", p.weak_labels}, {"baseline_report", p.baseline_report},
                  {"compare_a", p.compare_a}, {"compare_b", p.compare_b}};
  out["seed"] = c.seed;
  out["split_ratios"] = {{"train", c.split_ratios.train},
                         {"validation", c.split_ratios.validation},
                         {"test", c.split_ratios.test}};
  out["bm25"] = {{"k1", c.bm25.k1}, {"b", c.bm25.b}};
  out["ql"] = {{"mu", c.ql.mu},
               {"weights",
                {{"query", c.ql_query_weight},
                 {"question", c.ql_question_weight},
                 {"answer", c.ql_answer_weight}}}};
  out["first_stage"] = {{"model", rank_model_name(c.first_stage_model)},
                        {"k", c.first_stage_k},
                        {"query", c.first_stage_query == FirstStageQuery::kTopic ? "topic" : "full"}};
  out["baseline_model"] = rank_model_name(c.baseline_model);
  out["identifiers"] = {{"strategy", strategy_name(c.identifier_strategy)},
                        {"trie_scope", c.trie_scope == TrieScope::kFacet ? "facet" : "corpus"}};
  out["beam_size"] = c.beam_size;
  out["scorer"] = {{"lambdas", {c.scorer_lambdas.bigram, c.scorer_lambdas.unigram, c.scorer_lambdas.overlap}},
                   {"target_top_n", c.target_top_n}};
  out["mode"] = run_mode_name(c.mode);
  out["classification"] = classification_mode_name(c.classification);
  out["images_per_question"] = c.images_per_question;
  out["classifier_alpha"] = c.classifier_alpha;
  out["eval_split"] = eval_split_name(c.eval_split);
  out["train_split"] = eval_split_name(c.train_split);
  out["gain"] = gain_name(c.gain);
  out["g_max"] = c.g_max ? json(*c.g_max) : json(nullptr);
  return out;
}

// ---------------------------------------------------------------------------
// Pipeline

Pipeline::Pipeline(ExperimentConfig config, Inputs inputs)
    : config_(std::move(config)), inputs_(std::move(inputs)) {}

namespace {

std::filesystem::path require_path(const ExperimentConfig& c, const std::string& configured,
                                   const char* what) {
  if (configured.empty())
    fail(ErrorCode::kMissingArtifact, std::string("config: paths.") + what + " is not set");
  auto path = c.resolve(configured);
  if (!std::filesystem::exists(path))
    fail(ErrorCode::kMissingArtifact, std::string(what) + " not found at " + path.string());
  return path;
}

}  // namespace

Pipeline Pipeline::load(const ExperimentConfig& config, Skip skip) {
  Inputs in;
  in.dataset = load_dataset(require_path(config, config.paths.dataset, "dataset"));
  in.corpus = load_corpus(require_path(config, config.paths.corpus, "corpus"));
  in.qrels = load_qrels(require_path(config, config.paths.qrels, "qrels"));
  in.split = load_split(require_path(config, config.paths.split, "split"));
  in.index = InvertedIndex::load(require_path(config, config.paths.index, "index"));
  if (in.index.num_docs() != in.corpus.size())
    fail(ErrorCode::kIntegrity, "index does not match the corpus (" +
                                    std::to_string(in.index.num_docs()) + " vs " +
                                    std::to_string(in.corpus.size()) + " documents)");
  for (const auto& f : in.dataset.facets())
    if (!in.split.contains(f.id))
      fail(ErrorCode::kIntegrity, "split file does not assign facet " + f.id);

  if (!skip.identifiers && !config.paths.identifiers.empty()) {
    auto loaded = load_identifiers(require_path(config, config.paths.identifiers, "identifiers"),
                                   in.corpus);
    // Deduplicate once over the whole corpus so that every document keeps
    // one identifier in training targets and in every per-facet trie.
    auto trie = IdentifierTrie::build(std::move(loaded));
    in.identifiers = IdentifierTable(trie.identifiers());
    if (config.trie_scope == TrieScope::kCorpus) in.corpus_trie = std::move(trie);
  }
  if (!skip.scorer && !config.paths.scorer.empty())
    in.scorer = ReferenceScorer::load(require_path(config, config.paths.scorer, "scorer"));
  if (!config.paths.embeddings.empty())
    in.embeddings = load_embeddings(require_path(config, config.paths.embeddings, "embeddings"));
  if (!skip.classifier && !config.paths.classifier.empty())
    in.classifier = ReferenceClassifier::load(require_path(config, config.paths.classifier, "classifier"));
  if (!skip.weak_labels && !config.paths.weak_labels.empty())
    in.weak_labels = load_weak_labels(require_path(config, config.paths.weak_labels, "weak_labels"));
  return Pipeline(config, std::move(in));
}

void Pipeline::require_mode_artifacts() const {
  const auto mode = config_.mode;
  auto missing = [&](const char* what) {
    fail(ErrorCode::kMissingArtifact,
         std::string("mode ") + run_mode_name(mode) + " requires " + what);
  };
  if (mode == RunMode::kGenRerankTextOnly || mode == RunMode::kGenRerankMultimodal) {
    if (!inputs_.identifiers) missing("identifiers");
    if (!inputs_.scorer) missing("scorer");
  }
  if (mode == RunMode::kGenRerankMultimodal && config_.images_per_question > 0) {
    if (!inputs_.embeddings) missing("embeddings");
    if (config_.classification == ClassificationMode::kReferenceClassifier && !inputs_.classifier)
      missing("classifier");
    if (config_.classification == ClassificationMode::kOracleWeakLabels && config_.paths.weak_labels.empty())
      missing("weak_labels");
  }
}

int Pipeline::g_max() const { return config_.g_max ? *config_.g_max : max_grade(inputs_.qrels); }

const Grades& Pipeline::grades(const std::string& facet_id) const {
  static const Grades empty;
  auto it = inputs_.qrels.find(facet_id);
  return it == inputs_.qrels.end() ? empty : it->second;
}

namespace {

bool judged(const Qrels& qrels, const std::string& facet) {
  auto it = qrels.find(facet);
  if (it == qrels.end()) return false;
  return std::any_of(it->second.begin(), it->second.end(), [](const auto& kv) { return kv.second > 0; });
}

void append_tokens(TokenStream& out, std::string_view text) {
  auto tokens = tokenize(text);
  out.insert(out.end(), std::make_move_iterator(tokens.begin()), std::make_move_iterator(tokens.end()));
}

}  // namespace

std::vector<Sample> Pipeline::samples(EvalSplit split, std::vector<std::string>* skipped) const {
  const auto& ds = inputs_.dataset;
  std::vector<Sample> out;
  std::set<std::string> skipped_set;
  for (const auto& a : ds.answers()) {
    const auto* facet = ds.find_facet(a.facet_id);
    auto s = inputs_.split.find(a.facet_id);
    if (s == inputs_.split.end())
      fail(ErrorCode::kIntegrity, "split file does not assign facet " + a.facet_id);
    if (!in_split(split, s->second)) continue;
    if (!judged(inputs_.qrels, a.facet_id)) {
      skipped_set.insert(a.facet_id);
      continue;
    }
    out.push_back({ds.find_topic(a.topic_id), facet, ds.find_question(a.question_id), &a});
  }
  if (skipped) skipped->assign(skipped_set.begin(), skipped_set.end());
  return out;
}

RankedList Pipeline::first_stage(const Sample& s) const {
  TokenStream query = tokenize(s.topic->query);
  if (config_.first_stage_query == FirstStageQuery::kFull) {
    append_tokens(query, s.question->text);
    append_tokens(query, s.answer->text);
  }
  return search(inputs_.index, query, config_.first_stage_k, config_.first_stage_model, config_.bm25,
                config_.ql);
}

SampleResult Pipeline::decide_images(const Sample& s, bool force_attach) const {
  SampleResult r;
  const auto& q = *s.question;
  bool attach = false;
  if (force_attach) {
    attach = !q.images.empty();
  } else if (config_.mode == RunMode::kGenRerankMultimodal && config_.images_per_question > 0 &&
             q.multimodal && !q.images.empty()) {
    switch (config_.classification) {
      case ClassificationMode::kOff:
        attach = true;
        break;
      case ClassificationMode::kOracleWeakLabels: {
        auto it = inputs_.weak_labels.find(q.id);
        r.label = it == inputs_.weak_labels.end() ? ClassLabel::kTeq : it->second.label;
        attach = *r.label == ClassLabel::kVeq;
        break;
      }
      case ClassificationMode::kReferenceClassifier:
        if (!inputs_.classifier) fail(ErrorCode::kMissingArtifact, "classifier is not loaded");
        r.label = inputs_.classifier->classify(s.topic->query, q.text).label;
        attach = *r.label == ClassLabel::kVeq;
        break;
    }
  }
  if (!attach) return r;
  if (!inputs_.embeddings) fail(ErrorCode::kMissingArtifact, "embeddings are not loaded");
  std::vector<std::string> candidates;
  for (const auto& im : q.images) candidates.push_back(im.id);
  const auto k = std::max<std::size_t>(1, config_.images_per_question);
  r.images = select_images(*inputs_.embeddings, q.id, candidates, k);
  r.images_attached = true;
  return r;
}

TokenStream Pipeline::context(const Sample& s, const std::vector<std::string>& image_ids) const {
  TokenStream ctx = tokenize(s.topic->query);
  ctx.emplace_back(kSepToken);
  append_tokens(ctx, s.question->text);
  ctx.emplace_back(kSepToken);
  append_tokens(ctx, s.answer->text);
  for (const auto& id : image_ids) {
    for (const auto& im : s.question->images) {
      if (im.id != id) continue;
      ctx.emplace_back(kSepToken);
      append_tokens(ctx, im.aspect);
    }
  }
  return ctx;
}

std::vector<std::string> Pipeline::generative_rerank(const Sample& s, const TokenStream& ctx) const {
  if (!inputs_.identifiers) fail(ErrorCode::kMissingArtifact, "identifiers are not loaded");
  if (!inputs_.scorer) fail(ErrorCode::kMissingArtifact, "scorer is not loaded");
  const auto candidates = first_stage(s);

  IdentifierTrie local;
  const IdentifierTrie* trie = nullptr;
  if (config_.trie_scope == TrieScope::kCorpus) {
    trie = &*inputs_.corpus_trie;
  } else {
    std::vector<Identifier> ids;
    ids.reserve(candidates.size());
    for (const auto& c : candidates) {
      const auto* id = inputs_.identifiers->find(c.doc_id);
      if (!id) fail(ErrorCode::kIntegrity, "no identifier for document " + c.doc_id);
      ids.push_back(*id);
    }
    local = IdentifierTrie::build(std::move(ids));
    trie = &local;
  }
  const auto beams = constrained_beam_search(*inputs_.scorer, ctx, *trie, config_.beam_size,
                                             std::max<std::size_t>(trie->depth(), 1));
  const auto ranked = rank_candidates(beams, *trie, candidates);
  std::vector<std::string> out;
  out.reserve(ranked.size());
  for (const auto& r : ranked) out.push_back(r.doc_id);
  return out;
}

SampleResult Pipeline::rank(const Sample& s) const {
  SampleResult r;
  auto ids = [](const RankedList& list) {
    std::vector<std::string> out;
    out.reserve(list.size());
    for (const auto& d : list) out.push_back(d.doc_id);
    return out;
  };
  switch (config_.mode) {
    case RunMode::kOriginalQuery:
      r.ranking = ids(search(inputs_.index, tokenize(s.topic->query), config_.first_stage_k,
                             config_.first_stage_model, config_.bm25, config_.ql));
      break;
    case RunMode::kLexicalBaseline:
      if (config_.baseline_model == RankModel::kQl) {
        std::vector<WeightedField> fields{{tokenize(s.topic->query), config_.ql_query_weight},
                                          {tokenize(s.question->text), config_.ql_question_weight},
                                          {tokenize(s.answer->text), config_.ql_answer_weight}};
        r.ranking = ids(search_fields(inputs_.index, fields, config_.first_stage_k, config_.ql));
      } else {
        TokenStream q = tokenize(s.topic->query);
        append_tokens(q, s.question->text);
        append_tokens(q, s.answer->text);
        r.ranking = ids(search(inputs_.index, q, config_.first_stage_k, RankModel::kBm25, config_.bm25));
      }
      break;
    case RunMode::kGenRerankTextOnly:
      r.ranking = generative_rerank(s, context(s, {}));
      break;
    case RunMode::kGenRerankMultimodal: {
      r = decide_images(s);
      r.ranking = generative_rerank(s, context(s, r.images));
      break;
    }
  }
  return r;
}

std::vector<SampleResult> Pipeline::rank_all(std::span<const Sample> samples, Execution exec) const {
  std::vector<SampleResult> out(samples.size());
  std::vector<std::optional<Error>> errors(samples.size());
  auto one = [&](std::int64_t i) {
    try {
      out[i] = rank(samples[i]);
    } catch (const Error& e) {
      errors[i] = e;
    }
  };
  const auto n = static_cast<std::int64_t>(samples.size());
  if (exec == Execution::kParallel) {
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < n; ++i) one(i);
  } else {
    for (std::int64_t i = 0; i < n; ++i) one(i);
  }
  for (auto& e : errors)
    if (e) throw *e;
  return out;
}

// ---------------------------------------------------------------------------
// Runs and reports

std::string format_run(std::span<const RunEntry> entries, const std::string& system) {
  std::string out;
  char score[32];
  for (const auto& e : entries) {
    for (std::size_t r = 0; r < e.ranking.size(); ++r) {
      // Reciprocal-rank score so the file sorts the same way by score.
      std::snprintf(score, sizeof score, "%.6f", 1.0 / static_cast<double>(r + 1));
      out += e.facet_id + " " + e.question_id + " " + e.ranking[r] + " " + std::to_string(r + 1) +
             " " + score + " " + system + "\n";
    }
    if (e.ranking.empty()) out += e.facet_id + " " + e.question_id + " - 0 0 " + system + "\n";
  }
  return out;
}

std::vector<RunEntry> parse_run(const std::string& text) {
  std::vector<RunEntry> out;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    std::string facet, question, doc, score, system;
    long long rank = 0;
    if (!(fields >> facet >> question >> doc >> rank >> score >> system))
      fail(ErrorCode::kParse, "run line " + std::to_string(line_no) + ": expected 6 columns");
    auto key = std::make_pair(facet, question);
    auto [it, inserted] = index.emplace(key, out.size());
    if (inserted) out.push_back({facet, question, {}});
    if (doc == "-" && rank == 0) continue;
    auto& ranking = out[it->second].ranking;
    if (rank != static_cast<long long>(ranking.size()) + 1)
      fail(ErrorCode::kParse, "run line " + std::to_string(line_no) + ": ranks must be consecutive");
    ranking.push_back(doc);
  }
  return out;
}

RunReport evaluate_run(const ExperimentConfig& config, std::span<const RunEntry> entries,
                       const Qrels& qrels, std::vector<std::string> log) {
  const int g_max = config.g_max ? *config.g_max : max_grade(qrels);
  std::map<std::string, std::vector<MetricsRecord>> per_facet;
  std::set<std::string> unjudged;
  for (const auto& e : entries) {
    if (!judged(qrels, e.facet_id)) {
      unjudged.insert(e.facet_id);
      continue;
    }
    per_facet[e.facet_id].push_back(evaluate_ranking(e.ranking, qrels.at(e.facet_id), g_max, config.gain));
  }
  for (const auto& f : unjudged) log.push_back("skipped facet " + f + ": no relevance judgments");

  json facets = json::array();
  std::vector<MetricsRecord> facet_means;
  std::size_t samples = 0;
  for (const auto& [facet, records] : per_facet) {
    auto mean = macro_average(records);
    samples += records.size();
    facets.push_back({{"facet_id", facet}, {"samples", records.size()}, {"metrics", metrics_to_json(mean)}});
    facet_means.push_back(mean);
  }

  RunReport report;
  auto& body = report.body;
  body["format"] = kReportFormatTag;
  body["system"] = config.name;
  body["config"] = config_to_json(config);
  body["ranker"] = {{"first_stage", rank_model_name(config.first_stage_model)},
                    {"baseline", rank_model_name(config.baseline_model)},
                    {"gain", gain_name(config.gain)},
                    {"g_max", g_max},
                    {"unjudged_documents", "grade 0"}};
  body["samples"] = samples;
  body["facets"] = std::move(facets);
  body["macro"] = facet_means.empty() ? json(nullptr) : metrics_to_json(macro_average(facet_means));
  body["significance"] = nullptr;
  body["log"] = log;
  return report;
}

std::vector<FacetMetrics> RunReport::facets() const {
  std::vector<FacetMetrics> out;
  try {
    for (const auto& f : body.at("facets"))
      out.push_back({f.at("facet_id").get<std::string>(), f.at("samples").get<std::size_t>(),
                     metrics_from_json(f.at("metrics"))});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("report: ") + e.what());
  }
  return out;
}

MetricsRecord RunReport::macro() const {
  if (!body.contains("macro") || body["macro"].is_null())
    fail(ErrorCode::kInvalidArgument, "report has no evaluated facets");
  return metrics_from_json(body["macro"]);
}

std::vector<SignificanceRow> compare_runs(const RunReport& a, const RunReport& b) {
  const auto fa = a.facets();
  const auto fb = b.facets();
  std::map<std::string, const MetricsRecord*> by_facet_b;
  for (const auto& f : fb) by_facet_b.emplace(f.facet_id, &f.metrics);
  if (fa.size() != fb.size()) fail(ErrorCode::kInvalidArgument, "compare: reports cover different facet sets");
  std::vector<const MetricsRecord*> paired_b;
  for (const auto& f : fa) {
    auto it = by_facet_b.find(f.facet_id);
    if (it == by_facet_b.end())
      fail(ErrorCode::kInvalidArgument, "compare: facet " + f.facet_id + " missing from the second report");
    paired_b.push_back(it->second);
  }
  std::vector<SignificanceRow> rows;
  for (std::size_t m = 0; m < kNumMetrics; ++m) {
    std::vector<double> xa, xb;
    for (std::size_t i = 0; i < fa.size(); ++i) {
      xa.push_back(fa[i].metrics.values[m]);
      xb.push_back(paired_b[i]->values[m]);
    }
    rows.push_back({std::string(kMetricNames[m]), paired_t_test(xa, xb, kNumMetrics)});
  }
  return rows;
}

json significance_to_json(const std::vector<SignificanceRow>& rows) {
  json out = json::object();
  for (const auto& r : rows) {
    json t = std::isfinite(r.result.t) ? json(r.result.t) : json(r.result.t > 0 ? "inf" : "-inf");
    out[r.metric] = {{"t", t},
                     {"p", r.result.p},
                     {"p_adjusted", r.result.p_adjusted},
                     {"significant", r.result.significant}};
  }
  return out;
}

std::string format_significance(const std::vector<SignificanceRow>& rows) {
  std::string out = "metric\tt\tp\tp_adjusted\tsignificant\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s\t%.6g\t%.6g\t%.6g\t%s\n", r.metric.c_str(), r.result.t,
                  r.result.p, r.result.p_adjusted, r.result.significant ? "yes" : "no");
    out += buf;
  }
  return out;
}

RunReport load_report(const std::filesystem::path& path) {
  const auto doc = detail::parse_json(detail::read_file(path), path.string());
  if (!doc.is_object() || !doc.contains("body") ||
      doc["body"].value("format", "") != kReportFormatTag)
    fail(ErrorCode::kParse, path.string() + ": not a run report");
  RunReport r;
  r.body = doc["body"];
  r.provenance = doc.value("provenance", json::object());
  return r;
}

void write_report(const RunReport& report, const std::filesystem::path& dir) {
  json doc{{"body", report.body}, {"provenance", report.provenance}};
  detail::write_file(dir / "report.json", doc.dump(1) + "\n");
  std::string tsv = metrics_tsv_header();
  if (!report.body["macro"].is_null())
    tsv += metrics_tsv_row(report.body.value("system", "run"), report.macro());
  detail::write_file(dir / "report.tsv", tsv);
}

namespace {

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

RunReport run_experiment(const ExperimentConfig& config, Execution exec) {
  const auto pipeline = Pipeline::load(config);
  pipeline.require_mode_artifacts();

  std::vector<std::string> skipped;
  const auto samples = pipeline.samples(config.eval_split, &skipped);
  const auto results = pipeline.rank_all(samples, exec);

  std::vector<RunEntry> entries;
  entries.reserve(samples.size());
  std::size_t attached = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    entries.push_back({samples[i].facet->id, samples[i].question->id, results[i].ranking});
    attached += results[i].images_attached ? 1 : 0;
  }

  std::vector<std::string> log;
  for (const auto& f : skipped) log.push_back("skipped facet " + f + ": no relevance judgments");
  log.push_back("images attached to " + std::to_string(attached) + " of " +
                std::to_string(samples.size()) + " samples");
  auto report = evaluate_run(config, entries, pipeline.inputs().qrels, std::move(log));

  if (!config.paths.baseline_report.empty()) {
    const auto baseline = load_report(require_path(config, config.paths.baseline_report, "baseline_report"));
    report.body["significance"] = {{"baseline", baseline.body.value("system", "")},
                                   {"results", significance_to_json(compare_runs(report, baseline))}};
  }

  report.provenance = {{"generated_at", utc_timestamp()},
                       {"seed", config.seed},
                       {"threads", exec == Execution::kParallel ? max_threads() : 1},
                       {"artifact_versions",
                        {{"index", InvertedIndex::kFormatTag},
                         {"scorer", ReferenceScorer::kFormatTag},
                         {"classifier", ReferenceClassifier::kFormatTag},
                         {"embeddings", EmbeddingStore::kFormatTag},
                         {"report", kReportFormatTag}}}};

  if (!config.paths.output_dir.empty()) {
    const auto dir = config.resolve(config.paths.output_dir);
    write_report(report, dir);
    detail::write_file(dir / "run.txt", format_run(entries, config.name));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Training data

std::vector<WeakLabelRecord> generate_weak_labels(const Pipeline& pipeline, Execution exec) {
  const auto& config = pipeline.config();
  std::vector<Sample> samples;
  for (const auto& s : pipeline.samples(config.train_split))
    if (s.question->multimodal && !s.question->images.empty()) samples.push_back(s);

  std::vector<double> deltas(samples.size());
  std::vector<std::optional<Error>> errors(samples.size());
  auto one = [&](std::int64_t i) {
    try {
      const auto& s = samples[i];
      const auto& grades = pipeline.grades(s.facet->id);
      const auto tor = pipeline.generative_rerank(s, pipeline.context(s, {}));
      const auto images = pipeline.decide_images(s, true).images;
      const auto mur = pipeline.generative_rerank(s, pipeline.context(s, images));
      NdcgTriple a{}, b{};
      const std::size_t ks[3] = {1, 3, 5};
      for (std::size_t j = 0; j < 3; ++j) {
        a[j] = ndcg_at(tor, grades, ks[j], config.gain);
        b[j] = ndcg_at(mur, grades, ks[j], config.gain);
      }
      deltas[i] = weak_label(a, b).delta;
    } catch (const Error& e) {
      errors[i] = e;
    }
  };
  const auto n = static_cast<std::int64_t>(samples.size());
  if (exec == Execution::kParallel) {
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < n; ++i) one(i);
  } else {
    for (std::int64_t i = 0; i < n; ++i) one(i);
  }
  for (auto& e : errors)
    if (e) throw *e;

  std::map<std::string, std::vector<double>> by_question;
  for (std::size_t i = 0; i < samples.size(); ++i) by_question[samples[i].question->id].push_back(deltas[i]);
  std::vector<WeakLabelRecord> out;
  for (auto& [question, d] : by_question) out.push_back(aggregate_weak_labels(question, std::move(d)));
  return out;
}

std::vector<TrainingPair> scorer_training_pairs(const Pipeline& pipeline) {
  const auto& config = pipeline.config();
  const auto& inputs = pipeline.inputs();
  if (!inputs.identifiers) fail(ErrorCode::kMissingArtifact, "identifiers are not loaded");
  std::vector<TrainingPair> pairs;
  for (const auto& s : pipeline.samples(config.train_split)) {
    std::vector<std::string> images;
    if (config.mode == RunMode::kGenRerankMultimodal && config.images_per_question > 0 &&
        s.question->multimodal)
      images = pipeline.decide_images(s, true).images;
    pairs.push_back({pipeline.context(s, images),
                     make_training_targets(s.facet->id, inputs.qrels, *inputs.identifiers,
                                           config.target_top_n)});
  }
  return pairs;
}

std::vector<ClassifierSample> classifier_samples(const Pipeline& pipeline) {
  const auto& ds = pipeline.inputs().dataset;
  std::vector<ClassifierSample> out;
  for (const auto& [question_id, record] : pipeline.inputs().weak_labels) {
    const auto* q = ds.find_question(question_id);
    if (!q) fail(ErrorCode::kIntegrity, "weak label for unknown question " + question_id);
    out.push_back({ds.find_topic(q->topic_id)->query, q->text, record.label});
  }
  return out;
}

}  // namespace clarifyir
