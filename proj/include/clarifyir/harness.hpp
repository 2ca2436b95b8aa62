#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "clarifyir/corpus.hpp"
#include "clarifyir/eval.hpp"
#include "clarifyir/genret.hpp"
#include "clarifyir/lexical.hpp"
#include "clarifyir/multimodal.hpp"
#include "clarifyir/parallel.hpp"

namespace clarifyir {

enum class RunMode { kOriginalQuery, kLexicalBaseline, kGenRerankTextOnly, kGenRerankMultimodal };
enum class ClassificationMode { kOff, kOracleWeakLabels, kReferenceClassifier };
enum class FirstStageQuery { kTopic, kFull };
enum class TrieScope { kFacet, kCorpus };
enum class EvalSplit { kTrain, kValidation, kTest, kAll };

const char* run_mode_name(RunMode m);
const char* classification_mode_name(ClassificationMode m);

// Paths as written in the config (relative to the config file's directory).
struct ConfigPaths {
  std::string dataset, corpus, qrels, embeddings, split, output_dir;
  std::string index, identifiers, scorer, classifier, weak_labels;
  std::string baseline_report, compare_a, compare_b;
};

struct ExperimentConfig {
  std::filesystem::path base_dir;  // directory of the config file; not echoed
  std::string name = "run";
  ConfigPaths paths;
  std::uint64_t seed = 13;
  SplitRatios split_ratios;
  Bm25Params bm25;
  QlParams ql;
  double ql_query_weight = 2.0;
  double ql_question_weight = 1.0;
  double ql_answer_weight = 1.0;
  RankModel first_stage_model = RankModel::kBm25;
  std::size_t first_stage_k = kDefaultFirstStageDepth;
  FirstStageQuery first_stage_query = FirstStageQuery::kTopic;
  RankModel baseline_model = RankModel::kQl;
  IdentifierStrategy identifier_strategy = IdentifierStrategy::kDocK;
  TrieScope trie_scope = TrieScope::kFacet;
  std::size_t beam_size = kDefaultBeamSize;
  ScorerLambdas scorer_lambdas;
  std::size_t target_top_n = 5;
  RunMode mode = RunMode::kGenRerankMultimodal;
  ClassificationMode classification = ClassificationMode::kOff;
  std::size_t images_per_question = 1;
  double classifier_alpha = 1.0;
  EvalSplit eval_split = EvalSplit::kTest;
  EvalSplit train_split = EvalSplit::kTrain;
  Gain gain = Gain::kExponential;
  std::optional<int> g_max;

  // Resolves a configured path against base_dir; empty stays empty.
  std::filesystem::path resolve(const std::string& path) const;
};

ExperimentConfig config_from_json(const nlohmann::json& doc, std::filesystem::path base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const ExperimentConfig& config);

// One (topic, facet, question, answer) evaluation sample.
struct Sample {
  const Topic* topic = nullptr;
  const Facet* facet = nullptr;
  const ClarifyingQuestion* question = nullptr;
  const AnswerRecord* answer = nullptr;
};

struct SampleResult {
  std::vector<std::string> ranking;
  bool images_attached = false;
  std::vector<std::string> images;
  std::optional<ClassLabel> label;
};

// Loaded inputs and artifacts for one configuration. Immutable once built.
class Pipeline {
 public:
  struct Inputs {
    Dataset dataset;
    Corpus corpus;
    Qrels qrels;
    SplitAssignment split;
    InvertedIndex index;
    std::optional<IdentifierTable> identifiers;
    std::optional<IdentifierTrie> corpus_trie;
    std::optional<ReferenceScorer> scorer;
    std::optional<EmbeddingStore> embeddings;
    std::optional<ReferenceClassifier> classifier;
    std::map<std::string, WeakLabelRecord> weak_labels;
  };

  Pipeline(ExperimentConfig config, Inputs inputs);

  // Artifacts a command produces rather than consumes.
  struct Skip {
    bool identifiers = false;
    bool scorer = false;
    bool classifier = false;
    bool weak_labels = false;
  };

  // Loads dataset, corpus, qrels, split and index (all required) plus every
  // optional artifact whose path is configured. A configured path that
  // does not exist raises kMissingArtifact.
  static Pipeline load(const ExperimentConfig& config, Skip skip);
  static Pipeline load(const ExperimentConfig& config) { return load(config, Skip{}); }

  // Throws kMissingArtifact unless everything the configured mode needs is
  // present.
  void require_mode_artifacts() const;

  const ExperimentConfig& config() const { return config_; }
  const Inputs& inputs() const { return inputs_; }

  // Judged samples of facets in `split`; unjudged facets are listed in
  // `skipped` instead.
  std::vector<Sample> samples(EvalSplit split, std::vector<std::string>* skipped = nullptr) const;

  RankedList first_stage(const Sample& s) const;
  // Image-attachment decision and the selected image ids. force_attach
  // skips the mode and classification checks (the image-augmented side of
  // weak labeling).
  SampleResult decide_images(const Sample& s, bool force_attach = false) const;
  TokenStream context(const Sample& s, const std::vector<std::string>& image_ids) const;

  // Ranks one sample under the configured mode.
  SampleResult rank(const Sample& s) const;
  std::vector<std::string> generative_rerank(const Sample& s, const TokenStream& context) const;

  std::vector<SampleResult> rank_all(std::span<const Sample> samples,
                                     Execution exec = Execution::kParallel) const;

  int g_max() const;
  const Grades& grades(const std::string& facet_id) const;

 private:
  ExperimentConfig config_;
  Inputs inputs_;
};

struct FacetMetrics {
  std::string facet_id;
  std::size_t samples = 0;
  MetricsRecord metrics;
};

struct SignificanceRow {
  std::string metric;
  SignificanceResult result;
};

struct RunReport {
  nlohmann::json body;        // deterministic content
  nlohmann::json provenance;  // timestamps and versions

  std::vector<FacetMetrics> facets() const;
  MetricsRecord macro() const;
};

inline constexpr std::string_view kReportFormatTag = "CLARIFYIR-REPORT v1";

// One line per ranked document: facet question doc rank score system.
struct RunEntry {
  std::string facet_id;
  std::string question_id;
  std::vector<std::string> ranking;
};

std::string format_run(std::span<const RunEntry> entries, const std::string& system);
std::vector<RunEntry> parse_run(const std::string& text);

// Per-facet metrics (mean over that facet's samples), macro average, and
// the config echo. Facets without judgments are skipped and logged.
RunReport evaluate_run(const ExperimentConfig& config, std::span<const RunEntry> entries,
                       const Qrels& qrels, std::vector<std::string> log);

RunReport run_experiment(const ExperimentConfig& config, Execution exec = Execution::kParallel);

// Per-metric paired t-test over per-facet values, Bonferroni over the
// number of metrics. Facet sets must match.
std::vector<SignificanceRow> compare_runs(const RunReport& a, const RunReport& b);
nlohmann::json significance_to_json(const std::vector<SignificanceRow>& rows);
std::string format_significance(const std::vector<SignificanceRow>& rows);

RunReport load_report(const std::filesystem::path& path);
// Writes report.json, report.tsv into dir.
void write_report(const RunReport& report, const std::filesystem::path& dir);

std::vector<WeakLabelRecord> generate_weak_labels(const Pipeline& pipeline,
                                                  Execution exec = Execution::kParallel);
std::vector<TrainingPair> scorer_training_pairs(const Pipeline& pipeline);
std::vector<ClassifierSample> classifier_samples(const Pipeline& pipeline);

}  // namespace clarifyir
