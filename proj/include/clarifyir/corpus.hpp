#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace clarifyir {

struct Topic {
  std::string id;
  std::string query;
};

struct Facet {
  std::string id;
  std::string topic_id;
  std::string description;
};

struct ImageRecord {
  std::string id;
  std::string url;
  std::string aspect;
};

enum class QuestionSource { kSet1, kSet2 };

struct ClarifyingQuestion {
  std::string id;
  std::string topic_id;
  std::string text;
  QuestionSource source = QuestionSource::kSet1;
  bool multimodal = false;
  std::vector<ImageRecord> images;
};

// One value of the answer function: the user's reply to question_id when
// holding facet_id under topic_id.
struct AnswerRecord {
  std::string topic_id;
  std::string facet_id;
  std::string question_id;
  std::string text;
};

inline constexpr std::size_t kMaxImagesPerQuestion = 3;

// Loaded dataset with id lookups. Built by parse_dataset / load_dataset and
// treated as immutable afterwards.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<Topic> topics, std::vector<Facet> facets,
          std::vector<ClarifyingQuestion> questions,
          std::vector<AnswerRecord> answers);

  const std::vector<Topic>& topics() const { return topics_; }
  const std::vector<Facet>& facets() const { return facets_; }
  const std::vector<ClarifyingQuestion>& questions() const { return questions_; }
  const std::vector<AnswerRecord>& answers() const { return answers_; }

  const Topic* find_topic(const std::string& id) const;
  const Facet* find_facet(const std::string& id) const;
  const ClarifyingQuestion* find_question(const std::string& id) const;

 private:
  std::vector<Topic> topics_;
  std::vector<Facet> facets_;
  std::vector<ClarifyingQuestion> questions_;
  std::vector<AnswerRecord> answers_;
  std::unordered_map<std::string, std::size_t> topic_index_;
  std::unordered_map<std::string, std::size_t> facet_index_;
  std::unordered_map<std::string, std::size_t> question_index_;
};

// Schema-level parsing only; no cross-record checks. Errors carry the JSON
// path of the offending field.
Dataset parse_dataset(const nlohmann::json& doc);
// Parses and enforces every dataset invariant; the first violation throws.
Dataset load_dataset(const std::filesystem::path& path);
nlohmann::json dataset_to_json(const Dataset& dataset);

struct Document {
  std::string id;
  std::uint64_t ordinal = 0;
  std::string text;
  std::optional<std::string> title;
};

// Documents sorted by ordinal.
class Corpus {
 public:
  Corpus() = default;
  // Throws on duplicate id or ordinal, or on empty text.
  explicit Corpus(std::vector<Document> docs);

  const std::vector<Document>& docs() const { return docs_; }
  std::size_t size() const { return docs_.size(); }
  const Document* find(const std::string& id) const;

 private:
  std::vector<Document> docs_;
  std::unordered_map<std::string, std::size_t> index_;
};

Corpus load_corpus(const std::filesystem::path& path);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

// facet_id -> (doc_id -> grade).
using Qrels = std::map<std::string, std::map<std::string, int>>;

Qrels parse_qrels(std::istream& in);
Qrels load_qrels(const std::filesystem::path& path);
void save_qrels(const Qrels& qrels, const std::filesystem::path& path);
int max_grade(const Qrels& qrels);

enum class Split { kTrain, kValidation, kTest };

const char* split_name(Split split);
Split parse_split(const std::string& name);

using SplitAssignment = std::map<std::string, Split>;

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

// Sorts facet ids, shuffles them with SplitMix64(seed) via Fisher-Yates
// (j = next() % (i + 1), i from n-1 down to 1), then assigns the first
// floor(n * train) to train, the next floor(n * validation) to validation
// and the remainder to test.
SplitAssignment split_facets(const Dataset& dataset, const SplitRatios& ratios,
                             std::uint64_t seed);
SplitAssignment split_facet_ids(std::vector<std::string> facet_ids,
                                const SplitRatios& ratios, std::uint64_t seed);

nlohmann::json split_to_json(const SplitAssignment& split);
SplitAssignment split_from_json(const nlohmann::json& doc);
SplitAssignment load_split(const std::filesystem::path& path);

struct Finding {
  std::string kind;
  std::string message;
};

struct ValidationReport {
  std::vector<Finding> findings;
  bool ok() const { return findings.empty(); }
};

// Collects every invariant violation in the dataset alone.
ValidationReport validate_dataset(const Dataset& dataset);
// Adds qrels and corpus cross-checks.
ValidationReport validate_dataset(const Dataset& dataset, const Qrels& qrels,
                                  const Corpus& corpus);

}  // namespace clarifyir
