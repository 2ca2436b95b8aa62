#include "clarifyir/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <unordered_set>

#include "clarifyir/error.hpp"
#include "clarifyir/text.hpp"

namespace clarifyir {

using nlohmann::json;

Gain parse_gain(const std::string& name) {
  if (name == "exponential") return Gain::kExponential;
  if (name == "linear") return Gain::kLinear;
  fail(ErrorCode::kInvalidArgument, "unknown gain \"" + name + "\"");
}

const char* gain_name(Gain gain) { return gain == Gain::kLinear ? "linear" : "exponential"; }

std::size_t MetricsRecord::column(std::string_view name) {
  for (std::size_t i = 0; i < kNumMetrics; ++i)
    if (kMetricNames[i] == name) return i;
  fail(ErrorCode::kInvalidArgument, "unknown metric \"" + std::string(name) + "\"");
}

double MetricsRecord::get(std::string_view name) const { return values[column(name)]; }

namespace {

int grade_of(const Grades& grades, const std::string& doc) {
  auto it = grades.find(doc);
  return it == grades.end() ? 0 : it->second;
}

double gain_value(int grade, Gain gain) {
  return gain == Gain::kLinear ? static_cast<double>(grade) : std::exp2(grade) - 1.0;
}

}  // namespace

double reciprocal_rank(std::span<const std::string> ranking, const Grades& grades) {
  for (std::size_t r = 0; r < ranking.size(); ++r)
    if (grade_of(grades, ranking[r]) > 0) return 1.0 / static_cast<double>(r + 1);
  return 0.0;
}

double precision_at(std::span<const std::string> ranking, const Grades& grades, std::size_t k) {
  if (k == 0) fail(ErrorCode::kInvalidArgument, "precision_at: k must be >= 1");
  std::size_t hits = 0;
  for (std::size_t r = 0; r < std::min(k, ranking.size()); ++r)
    if (grade_of(grades, ranking[r]) > 0) ++hits;
  return static_cast<double>(hits) / static_cast<double>(k);
}

double dcg_at(std::span<const std::string> ranking, const Grades& grades, std::size_t k, Gain gain) {
  double dcg = 0.0;
  for (std::size_t r = 0; r < std::min(k, ranking.size()); ++r)
    dcg += gain_value(grade_of(grades, ranking[r]), gain) / std::log2(static_cast<double>(r + 2));
  return dcg;
}

double ideal_dcg_at(const Grades& grades, std::size_t k, Gain gain) {
  std::vector<int> sorted;
  for (const auto& [doc, g] : grades) sorted.push_back(g);
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double dcg = 0.0;
  for (std::size_t r = 0; r < std::min(k, sorted.size()); ++r)
    dcg += gain_value(sorted[r], gain) / std::log2(static_cast<double>(r + 2));
  return dcg;
}

double ndcg_at(std::span<const std::string> ranking, const Grades& grades, std::size_t k, Gain gain) {
  const double ideal = ideal_dcg_at(grades, k, gain);
  if (ideal <= 0.0) return 0.0;
  return dcg_at(ranking, grades, k, gain) / ideal;
}

double err_at(std::span<const std::string> ranking, const Grades& grades, std::size_t k, int g_max) {
  const double scale = std::exp2(g_max);
  double err = 0.0;
  double not_stopped = 1.0;
  for (std::size_t r = 0; r < std::min(k, ranking.size()); ++r) {
    const double stop = (std::exp2(grade_of(grades, ranking[r])) - 1.0) / scale;
    err += not_stopped * stop / static_cast<double>(r + 1);
    not_stopped *= 1.0 - stop;
  }
  return err;
}

MetricsRecord evaluate_ranking(std::span<const std::string> ranking, const Grades& grades,
                               int g_max, Gain gain) {
  std::unordered_set<std::string_view> seen;
  for (const auto& doc : ranking)
    if (!seen.insert(doc).second) fail(ErrorCode::kInvalidArgument, "duplicate document " + doc + " in ranking");
  for (const auto& [doc, g] : grades)
    if (g > g_max)
      fail(ErrorCode::kInvalidArgument, "grade " + std::to_string(g) + " exceeds g_max " +
                                            std::to_string(g_max));

  MetricsRecord m;
  m.values = {reciprocal_rank(ranking, grades),
              precision_at(ranking, grades, 1),
              precision_at(ranking, grades, 3),
              precision_at(ranking, grades, 5),
              ndcg_at(ranking, grades, 1, gain),
              ndcg_at(ranking, grades, 3, gain),
              ndcg_at(ranking, grades, 5, gain),
              err_at(ranking, grades, 1, g_max),
              err_at(ranking, grades, 3, g_max),
              err_at(ranking, grades, 5, g_max)};
  return m;
}

MetricsRecord macro_average(std::span<const MetricsRecord> records) {
  if (records.empty()) fail(ErrorCode::kInvalidArgument, "macro_average: no records");
  MetricsRecord out;
  for (const auto& r : records)
    for (std::size_t i = 0; i < kNumMetrics; ++i) out.values[i] += r.values[i];
  for (auto& v : out.values) v /= static_cast<double>(records.size());
  return out;
}

// ---------------------------------------------------------------------------
// Significance

namespace {

double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIterations = 500;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) fail(ErrorCode::kInvalidArgument, "incomplete beta: a, b must be > 0");
  if (!(x >= 0.0 && x <= 1.0)) fail(ErrorCode::kInvalidArgument, "incomplete beta: x outside [0,1]");
  if (x == 0.0 || x == 1.0) return x;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  // The continued fraction converges fast for x < (a + 1) / (a + b + 2);
  // otherwise use the symmetry I_x(a, b) = 1 - I_{1-x}(b, a).
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_tailed(double t, double dof) {
  if (!(dof > 0.0)) fail(ErrorCode::kInvalidArgument, "t distribution: dof must be > 0");
  if (std::isinf(t)) return 0.0;
  if (t == 0.0) return 1.0;
  return regularized_incomplete_beta(dof / 2.0, 0.5, dof / (dof + t * t));
}

SignificanceResult paired_t_test(std::span<const double> a, std::span<const double> b,
                                 std::size_t comparisons, double alpha) {
  if (a.size() != b.size()) fail(ErrorCode::kInvalidArgument, "paired t-test: length mismatch");
  if (a.size() < 2) fail(ErrorCode::kInvalidArgument, "paired t-test: need at least 2 pairs");
  if (comparisons == 0) fail(ErrorCode::kInvalidArgument, "paired t-test: comparisons must be >= 1");
  const auto n = static_cast<double>(a.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mean += a[i] - b[i];
  mean /= n;
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double dev = (a[i] - b[i]) - mean;
    ss += dev * dev;
  }
  const double sd = std::sqrt(ss / (n - 1.0));

  SignificanceResult r;
  if (sd == 0.0) {
    if (mean == 0.0) {
      r.t = 0.0;
      r.p = 1.0;
    } else {
      r.t = mean > 0.0 ? std::numeric_limits<double>::infinity()
                       : -std::numeric_limits<double>::infinity();
      r.p = 0.0;
    }
  } else {
    r.t = mean / (sd / std::sqrt(n));
    r.p = std::clamp(student_t_two_tailed(r.t, n - 1.0), 0.0, 1.0);
  }
  r.p_adjusted = std::min(1.0, r.p * static_cast<double>(comparisons));
  r.significant = r.p_adjusted < alpha;
  return r;
}

// ---------------------------------------------------------------------------
// Dataset and answer statistics

MeanStd mean_std(std::span<const double> xs) {
  if (xs.empty()) return {};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size());
  return {mean, std::sqrt(var)};
}

double median(std::vector<double> xs) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const auto mid = xs.size() / 2;
  return xs.size() % 2 == 1 ? xs[mid] : (xs[mid - 1] + xs[mid]) / 2.0;
}

AnswerStats answer_stats(std::span<const AnswerRecord> answers) {
  if (answers.empty()) fail(ErrorCode::kInvalidArgument, "answer_stats: no answers");
  AnswerStats s;
  s.answers = answers.size();
  std::vector<double> lengths;
  std::set<std::string> vocab;
  std::size_t yes_no = 0;
  for (const auto& a : answers) {
    const auto tokens = tokenize(a.text);
    lengths.push_back(static_cast<double>(tokens.size()));
    s.max_terms = std::max(s.max_terms, tokens.size());
    if (tokens.size() == 1 && (tokens[0] == "yes" || tokens[0] == "no")) ++yes_no;
    vocab.insert(tokens.begin(), tokens.end());
  }
  s.terms = mean_std(lengths);
  s.median_terms = median(lengths);
  s.yes_no_percent = 100.0 * static_cast<double>(yes_no) / static_cast<double>(answers.size());
  s.vocabulary = vocab.size();
  return s;
}

DatasetStats dataset_stats(const Dataset& dataset) {
  DatasetStats s;
  s.topics = dataset.topics().size();
  s.facets = dataset.facets().size();
  s.questions = dataset.questions().size();
  s.answers = dataset.answers().size();

  std::map<std::string, double> per_topic;
  for (const auto& t : dataset.topics()) per_topic[t.id] = 0.0;
  std::map<std::string, double> per_question;
  std::vector<double> terms, images;
  for (const auto& q : dataset.questions()) {
    if (q.source == QuestionSource::kSet1) ++s.set1_questions;
    else ++s.set2_questions;
    s.images += q.images.size();
    per_topic[q.topic_id] += 1.0;
    per_question[q.id] = 0.0;
    terms.push_back(static_cast<double>(tokenize(q.text).size()));
    images.push_back(static_cast<double>(q.images.size()));
  }
  for (const auto& a : dataset.answers())
    if (auto it = per_question.find(a.question_id); it != per_question.end()) it->second += 1.0;

  std::vector<double> qpt, apq;
  for (const auto& [id, n] : per_topic) qpt.push_back(n);
  for (const auto& [id, n] : per_question) apq.push_back(n);
  s.questions_per_topic = mean_std(qpt);
  s.terms_per_question = mean_std(terms);
  s.images_per_question = mean_std(images);
  s.answers_per_question = mean_std(apq);
  return s;
}

namespace {

std::string fixed2(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

std::string mean_std_text(const MeanStd& m) { return fixed2(m.mean) + " (" + fixed2(m.std) + ")"; }

}  // namespace

std::string format_dataset_stats(const DatasetStats& s) {
  std::string out;
  auto row = [&](const char* name, const std::string& value) {
    out += name;
    out += '\t';
    out += value;
    out += '\n';
  };
  row("topics", std::to_string(s.topics));
  row("facets", std::to_string(s.facets));
  row("questions", std::to_string(s.questions));
  row("set1_questions", std::to_string(s.set1_questions));
  row("set2_questions", std::to_string(s.set2_questions));
  row("avg_questions_per_topic", mean_std_text(s.questions_per_topic));
  row("avg_terms_per_question", mean_std_text(s.terms_per_question));
  row("images", std::to_string(s.images));
  row("avg_images_per_question", mean_std_text(s.images_per_question));
  row("answers", std::to_string(s.answers));
  row("avg_answers_per_question", mean_std_text(s.answers_per_question));
  return out;
}

std::string format_answer_stats(const AnswerStats& s) {
  std::string out;
  out += "answer_avg_terms\t" + mean_std_text(s.terms) + "\n";
  out += "answer_median_terms\t" + fixed2(s.median_terms) + "\n";
  out += "answer_max_terms\t" + std::to_string(s.max_terms) + "\n";
  out += "answer_yes_no_percent\t" + fixed2(s.yes_no_percent) + "\n";
  out += "answer_vocabulary\t" + std::to_string(s.vocabulary) + "\n";
  out += "# yes/no answer: exactly one token, \"yes\" or \"no\"; std is population std\n";
  return out;
}

json stats_to_json(const DatasetStats& d, const AnswerStats& a) {
  auto ms = [](const MeanStd& m) { return json{{"mean", m.mean}, {"std", m.std}}; };
  return {{"dataset",
           {{"topics", d.topics},
            {"facets", d.facets},
            {"questions", d.questions},
            {"set1_questions", d.set1_questions},
            {"set2_questions", d.set2_questions},
            {"images", d.images},
            {"answers", d.answers},
            {"questions_per_topic", ms(d.questions_per_topic)},
            {"terms_per_question", ms(d.terms_per_question)},
            {"images_per_question", ms(d.images_per_question)},
            {"answers_per_question", ms(d.answers_per_question)}}},
          {"answers",
           {{"count", a.answers},
            {"terms", ms(a.terms)},
            {"median_terms", a.median_terms},
            {"max_terms", a.max_terms},
            {"yes_no_percent", a.yes_no_percent},
            {"vocabulary", a.vocabulary}}}};
}

json metrics_to_json(const MetricsRecord& m) {
  json out = json::object();
  for (std::size_t i = 0; i < kNumMetrics; ++i) out[std::string(kMetricNames[i])] = m.values[i];
  return out;
}

MetricsRecord metrics_from_json(const json& doc) {
  MetricsRecord m;
  try {
    for (std::size_t i = 0; i < kNumMetrics; ++i)
      m.values[i] = doc.at(std::string(kMetricNames[i])).get<double>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("metrics: ") + e.what());
  }
  return m;
}

std::string metrics_tsv_header() {
  std::string out = "system";
  for (auto h : kMetricHeaders) {
    out += '\t';
    out += h;
  }
  return out + "\n";
}

std::string metrics_tsv_row(const std::string& system, const MetricsRecord& m) {
  std::string out = system;
  for (double v : m.values) {
    out += '\t';
    out += fixed2(100.0 * v);
  }
  return out + "\n";
}

}  // namespace clarifyir
