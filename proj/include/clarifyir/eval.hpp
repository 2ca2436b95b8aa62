#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "clarifyir/corpus.hpp"

namespace clarifyir {

using Grades = std::map<std::string, int>;

enum class Gain {
  kExponential,  // 2^g - 1
  kLinear,       // g
};

Gain parse_gain(const std::string& name);
const char* gain_name(Gain gain);

inline constexpr std::size_t kNumMetrics = 10;
// Column order of the results table.
inline constexpr std::array<std::string_view, kNumMetrics> kMetricNames = {
    "mrr", "p@1", "p@3", "p@5", "ndcg@1", "ndcg@3", "ndcg@5", "err@1", "err@3", "err@5"};
inline constexpr std::array<std::string_view, kNumMetrics> kMetricHeaders = {
    "MRR", "P@1", "P@3", "P@5", "nDCG@1", "nDCG@3", "nDCG@5", "ERR@1", "ERR@3", "ERR@5"};

struct MetricsRecord {
  std::array<double, kNumMetrics> values{};

  double get(std::string_view name) const;
  static std::size_t column(std::string_view name);

  friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

// Unjudged documents count as grade 0.
double reciprocal_rank(std::span<const std::string> ranking, const Grades& grades);
double precision_at(std::span<const std::string> ranking, const Grades& grades, std::size_t k);
double dcg_at(std::span<const std::string> ranking, const Grades& grades, std::size_t k,
              Gain gain = Gain::kExponential);
// DCG@k over the judged grades sorted descending.
double ideal_dcg_at(const Grades& grades, std::size_t k, Gain gain = Gain::kExponential);
double ndcg_at(std::span<const std::string> ranking, const Grades& grades, std::size_t k,
               Gain gain = Gain::kExponential);
// Cascade model with stop probability (2^g - 1) / 2^g_max.
double err_at(std::span<const std::string> ranking, const Grades& grades, std::size_t k, int g_max);

// Throws on a duplicate document or when g_max is below a grade present in
// `grades`.
MetricsRecord evaluate_ranking(std::span<const std::string> ranking, const Grades& grades,
                               int g_max, Gain gain = Gain::kExponential);

MetricsRecord macro_average(std::span<const MetricsRecord> records);

struct SignificanceResult {
  double t = 0.0;
  double p = 1.0;
  double p_adjusted = 1.0;
  bool significant = false;
};

inline constexpr double kSignificanceLevel = 0.001;

// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
double regularized_incomplete_beta(double a, double b, double x);
// Two-tailed P(|T| >= |t|) for Student's t with `dof` degrees of freedom.
double student_t_two_tailed(double t, double dof);

// Paired two-tailed t-test on a - b with Bonferroni adjustment
// p_adj = min(1, p * comparisons). Zero differences give t = 0, p = 1;
// constant nonzero differences give t = +-inf, p = 0.
SignificanceResult paired_t_test(std::span<const double> a, std::span<const double> b,
                                 std::size_t comparisons, double alpha = kSignificanceLevel);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population
};

MeanStd mean_std(std::span<const double> xs);
double median(std::vector<double> xs);

struct AnswerStats {
  std::size_t answers = 0;
  MeanStd terms;
  double median_terms = 0.0;
  std::size_t max_terms = 0;
  double yes_no_percent = 0.0;
  std::size_t vocabulary = 0;
};

// A yes/no answer is exactly one token, "yes" or "no".
AnswerStats answer_stats(std::span<const AnswerRecord> answers);

struct DatasetStats {
  std::size_t topics = 0;
  std::size_t facets = 0;
  std::size_t questions = 0;
  std::size_t set1_questions = 0;
  std::size_t set2_questions = 0;
  std::size_t images = 0;
  std::size_t answers = 0;
  MeanStd questions_per_topic;
  MeanStd terms_per_question;
  MeanStd images_per_question;
  MeanStd answers_per_question;
};

DatasetStats dataset_stats(const Dataset& dataset);

std::string format_dataset_stats(const DatasetStats& s);
std::string format_answer_stats(const AnswerStats& s);
nlohmann::json stats_to_json(const DatasetStats& d, const AnswerStats& a);

nlohmann::json metrics_to_json(const MetricsRecord& m);
MetricsRecord metrics_from_json(const nlohmann::json& doc);
std::string metrics_tsv_header();
// Values x100 with two decimals.
std::string metrics_tsv_row(const std::string& system, const MetricsRecord& m);

}  // namespace clarifyir
