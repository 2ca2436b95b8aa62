#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "clarifyir/text.hpp"

namespace clarifyir {

using Vector = std::vector<double>;

// Feature-hashes the character 3-grams of the ASCII-lowercased text into
// `dim` signed buckets and L2-normalizes. Deterministic in (text, dim, seed).
Vector hash_embed(std::string_view text, std::size_t dim, std::uint64_t seed = 0);

double cosine(std::span<const double> a, std::span<const double> b);

// Norms within this distance of 1 are treated as already normalized.
inline constexpr double kUnitTolerance = 1e-12;
// Cosines within this distance are equal for image selection.
inline constexpr double kCosineTieTolerance = 1e-12;

// id -> unit vector. Vectors are normalized on insertion.
class EmbeddingStore {
 public:
  static constexpr std::string_view kFormatTag = "MELON-EMB v1";

  explicit EmbeddingStore(std::size_t dim);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return vectors_.size(); }

  // Throws on dimension mismatch, zero vector or duplicate id.
  void add(const std::string& id, Vector v);
  const Vector* find(const std::string& id) const;
  const std::map<std::string, Vector>& vectors() const { return vectors_; }

  void save(const std::filesystem::path& path) const;

 private:
  std::size_t dim_;
  std::map<std::string, Vector> vectors_;
};

EmbeddingStore parse_embeddings(const std::string& text);
EmbeddingStore load_embeddings(const std::filesystem::path& path);

// Candidates by cosine to the question, descending; ties (within
// kCosineTieTolerance) by ascending id.
// Returns the first k.
std::vector<std::string> select_images(const EmbeddingStore& store, const std::string& question_id,
                                       std::span<const std::string> candidate_image_ids,
                                       std::size_t k);

enum class ClassLabel { kTeq, kVeq };

const char* class_label_name(ClassLabel label);
ClassLabel parse_class_label(const std::string& name);

using NdcgTriple = std::array<double, 3>;  // nDCG@1, @3, @5

struct WeakLabel {
  double delta = 0.0;
  ClassLabel label = ClassLabel::kTeq;
};

// delta = mean(mur) - mean(tor); VEQ iff delta > 0.
WeakLabel weak_label(const NdcgTriple& tor, const NdcgTriple& mur);

struct WeakLabelRecord {
  std::string question_id;
  std::vector<double> facet_deltas;
  double delta = 0.0;  // mean over facets
  ClassLabel label = ClassLabel::kTeq;
};

WeakLabelRecord aggregate_weak_labels(const std::string& question_id,
                                      std::vector<double> facet_deltas);

void save_weak_labels(std::span<const WeakLabelRecord> records, const std::filesystem::path& path);
// question_id -> label
std::map<std::string, WeakLabelRecord> load_weak_labels(const std::filesystem::path& path);

struct ClassifierSample {
  std::string query;
  std::string question;
  ClassLabel label = ClassLabel::kTeq;
};

struct Classification {
  ClassLabel label = ClassLabel::kTeq;
  double posterior = 0.0;  // of the returned label
};

// Multinomial naive Bayes over tokenize(query + " " + question). Per-class
// likelihoods use add-alpha smoothing over the vocabulary plus one unknown
// slot; unknown tokens are ignored at prediction time. Equal class scores
// resolve to TEQ.
class ReferenceClassifier {
 public:
  static constexpr std::string_view kFormatTag = "CLARIFYIR-CLS v1";

  static ReferenceClassifier train(std::span<const ClassifierSample> samples, double alpha = 1.0);

  Classification classify(std::string_view query, std::string_view question) const;
  // Log prior plus summed log-likelihood of known tokens, per class.
  std::array<double, 2> class_scores(const TokenStream& tokens) const;

  double log_prior(ClassLabel c) const { return log_prior_[index(c)]; }
  double log_likelihood(ClassLabel c, const std::string& token) const;
  std::size_t vocabulary_size() const { return vocab_.size(); }

  nlohmann::json to_json() const;
  static ReferenceClassifier from_json(const nlohmann::json& doc);
  void save(const std::filesystem::path& path) const;
  static ReferenceClassifier load(const std::filesystem::path& path);

  friend bool operator==(const ReferenceClassifier&, const ReferenceClassifier&) = default;

 private:
  static std::size_t index(ClassLabel c) { return c == ClassLabel::kVeq ? 1 : 0; }

  double alpha_ = 1.0;
  std::array<double, 2> log_prior_{};
  std::array<std::uint64_t, 2> docs_{};
  std::array<std::uint64_t, 2> tokens_{};
  std::map<std::string, std::array<std::uint64_t, 2>> vocab_;
};

}  // namespace clarifyir
