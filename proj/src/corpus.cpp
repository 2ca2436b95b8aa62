#include "clarifyir/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "clarifyir/error.hpp"
#include "clarifyir/rng.hpp"
#include "io.hpp"

namespace clarifyir {

using nlohmann::json;

Dataset::Dataset(std::vector<Topic> topics, std::vector<Facet> facets,
                 std::vector<ClarifyingQuestion> questions,
                 std::vector<AnswerRecord> answers)
    : topics_(std::move(topics)),
      facets_(std::move(facets)),
      questions_(std::move(questions)),
      answers_(std::move(answers)) {
  // First occurrence wins; duplicates surface through validate_dataset.
  for (std::size_t i = 0; i < topics_.size(); ++i) topic_index_.emplace(topics_[i].id, i);
  for (std::size_t i = 0; i < facets_.size(); ++i) facet_index_.emplace(facets_[i].id, i);
  for (std::size_t i = 0; i < questions_.size(); ++i)
    question_index_.emplace(questions_[i].id, i);
}

const Topic* Dataset::find_topic(const std::string& id) const {
  auto it = topic_index_.find(id);
  return it == topic_index_.end() ? nullptr : &topics_[it->second];
}

const Facet* Dataset::find_facet(const std::string& id) const {
  auto it = facet_index_.find(id);
  return it == facet_index_.end() ? nullptr : &facets_[it->second];
}

const ClarifyingQuestion* Dataset::find_question(const std::string& id) const {
  auto it = question_index_.find(id);
  return it == question_index_.end() ? nullptr : &questions_[it->second];
}

namespace {

const json& require_array(const json& doc, const char* key) {
  const auto& value = detail::require_field(doc, key, "$");
  if (!value.is_array()) fail(ErrorCode::kParse, std::string("$.") + key + ": expected an array");
  return value;
}

std::string at(const char* array, std::size_t i) {
  return std::string("$.") + array + "[" + std::to_string(i) + "]";
}

}  // namespace

Dataset parse_dataset(const json& doc) {
  if (!doc.is_object()) fail(ErrorCode::kParse, "$: expected an object");

  std::vector<Topic> topics;
  const auto& jt = require_array(doc, "topics");
  for (std::size_t i = 0; i < jt.size(); ++i) {
    const auto where = at("topics", i);
    topics.push_back({detail::require_string(jt[i], "id", where),
                      detail::require_string(jt[i], "query", where)});
  }

  std::vector<Facet> facets;
  const auto& jf = require_array(doc, "facets");
  for (std::size_t i = 0; i < jf.size(); ++i) {
    const auto where = at("facets", i);
    facets.push_back({detail::require_string(jf[i], "id", where),
                      detail::require_string(jf[i], "topic_id", where),
                      detail::require_string(jf[i], "description", where)});
  }

  std::vector<ClarifyingQuestion> questions;
  const auto& jq = require_array(doc, "questions");
  for (std::size_t i = 0; i < jq.size(); ++i) {
    const auto where = at("questions", i);
    ClarifyingQuestion q;
    q.id = detail::require_string(jq[i], "id", where);
    q.topic_id = detail::require_string(jq[i], "topic_id", where);
    q.text = detail::require_string(jq[i], "text", where);
    const auto source = detail::require_string(jq[i], "source", where);
    if (source == "set1") {
      q.source = QuestionSource::kSet1;
    } else if (source == "set2") {
      q.source = QuestionSource::kSet2;
    } else {
      fail(ErrorCode::kParse, where + ".source: expected \"set1\" or \"set2\", got \"" + source + "\"");
    }
    const auto& mm = detail::require_field(jq[i], "multimodal", where);
    if (!mm.is_boolean()) fail(ErrorCode::kParse, where + ".multimodal: expected a boolean");
    q.multimodal = mm.get<bool>();
    const auto& images = detail::require_field(jq[i], "images", where);
    if (!images.is_array()) fail(ErrorCode::kParse, where + ".images: expected an array");
    for (std::size_t k = 0; k < images.size(); ++k) {
      const auto iw = where + ".images[" + std::to_string(k) + "]";
      q.images.push_back({detail::require_string(images[k], "id", iw),
                          detail::require_string(images[k], "url", iw),
                          detail::require_string(images[k], "aspect", iw)});
    }
    questions.push_back(std::move(q));
  }

  std::vector<AnswerRecord> answers;
  const auto& ja = require_array(doc, "answers");
  for (std::size_t i = 0; i < ja.size(); ++i) {
    const auto where = at("answers", i);
    answers.push_back({detail::require_string(ja[i], "topic_id", where),
                       detail::require_string(ja[i], "facet_id", where),
                       detail::require_string(ja[i], "question_id", where),
                       detail::require_string(ja[i], "text", where)});
  }

  return Dataset(std::move(topics), std::move(facets), std::move(questions), std::move(answers));
}

Dataset load_dataset(const std::filesystem::path& path) {
  const auto doc = detail::parse_json(detail::read_file(path), path.string());
  Dataset dataset;
  try {
    dataset = parse_dataset(doc);
  } catch (const Error& e) {
    fail(e.code(), path.string() + ": " + e.what());
  }
  const auto report = validate_dataset(dataset);
  if (!report.ok()) {
    fail(ErrorCode::kIntegrity, path.string() + ": " + report.findings.front().message);
  }
  return dataset;
}

json dataset_to_json(const Dataset& dataset) {
  json doc;
  doc["topics"] = json::array();
  for (const auto& t : dataset.topics()) doc["topics"].push_back({{"id", t.id}, {"query", t.query}});
  doc["facets"] = json::array();
  for (const auto& f : dataset.facets())
    doc["facets"].push_back({{"id", f.id}, {"topic_id", f.topic_id}, {"description", f.description}});
  doc["questions"] = json::array();
  for (const auto& q : dataset.questions()) {
    json images = json::array();
    for (const auto& im : q.images) images.push_back({{"id", im.id}, {"url", im.url}, {"aspect", im.aspect}});
    doc["questions"].push_back({{"id", q.id},
                                {"topic_id", q.topic_id},
                                {"text", q.text},
                                {"source", q.source == QuestionSource::kSet1 ? "set1" : "set2"},
                                {"multimodal", q.multimodal},
                                {"images", std::move(images)}});
  }
  doc["answers"] = json::array();
  for (const auto& a : dataset.answers())
    doc["answers"].push_back({{"topic_id", a.topic_id},
                              {"facet_id", a.facet_id},
                              {"question_id", a.question_id},
                              {"text", a.text}});
  return doc;
}

// ---------------------------------------------------------------------------
// Corpus

Corpus::Corpus(std::vector<Document> docs) : docs_(std::move(docs)) {
  std::sort(docs_.begin(), docs_.end(),
            [](const Document& a, const Document& b) { return a.ordinal < b.ordinal; });
  for (std::size_t i = 0; i < docs_.size(); ++i) {
    const auto& d = docs_[i];
    if (i > 0 && docs_[i - 1].ordinal == d.ordinal)
      fail(ErrorCode::kIntegrity, "duplicate document ordinal " + std::to_string(d.ordinal));
    if (d.text.empty()) fail(ErrorCode::kIntegrity, "document " + d.id + " has empty text");
    if (!index_.emplace(d.id, i).second)
      fail(ErrorCode::kIntegrity, "duplicate document id " + d.id);
  }
}

const Document* Corpus::find(const std::string& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &docs_[it->second];
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<Document> docs;
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
    Document d;
    d.id = detail::require_string(row, "id", where);
    const auto& ordinal = detail::require_field(row, "ordinal", where);
    if (!ordinal.is_number_unsigned())
      fail(ErrorCode::kParse, where + ".ordinal: expected a non-negative integer");
    d.ordinal = ordinal.get<std::uint64_t>();
    d.text = detail::require_string(row, "text", where);
    if (auto it = row.find("title"); it != row.end() && !it->is_null()) {
      if (!it->is_string()) fail(ErrorCode::kParse, where + ".title: expected a string");
      d.title = it->get<std::string>();
    }
    docs.push_back(std::move(d));
  }
  return Corpus(std::move(docs));
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::string out;
  for (const auto& d : corpus.docs()) {
    json row{{"id", d.id}, {"ordinal", d.ordinal}, {"text", d.text}};
    if (d.title) row["title"] = *d.title;
    out += row.dump();
    out += '\n';
  }
  detail::write_file(path, out);
}

// ---------------------------------------------------------------------------
// Qrels

Qrels parse_qrels(std::istream& in) {
  Qrels qrels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    std::string facet, iteration, doc, grade_text, extra;
    if (!(fields >> facet >> iteration >> doc >> grade_text) || (fields >> extra))
      fail(ErrorCode::kParse, "qrels line " + std::to_string(line_no) + ": expected 4 columns");
    long long grade = 0;
    std::size_t used = 0;
    try {
      grade = std::stoll(grade_text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != grade_text.size())
      fail(ErrorCode::kParse, "qrels line " + std::to_string(line_no) + ": grade is not an integer");
    if (grade < 0)
      fail(ErrorCode::kParse, "qrels line " + std::to_string(line_no) + ": negative grade");
    if (!qrels[facet].emplace(doc, static_cast<int>(grade)).second)
      fail(ErrorCode::kParse, "qrels line " + std::to_string(line_no) + ": duplicate pair (" +
                                  facet + ", " + doc + ")");
  }
  return qrels;
}

Qrels load_qrels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  try {
    return parse_qrels(in);
  } catch (const Error& e) {
    fail(e.code(), path.string() + ": " + e.what());
  }
}

void save_qrels(const Qrels& qrels, const std::filesystem::path& path) {
  std::string out;
  for (const auto& [facet, docs] : qrels)
    for (const auto& [doc, grade] : docs)
      out += facet + " 0 " + doc + " " + std::to_string(grade) + "\n";
  detail::write_file(path, out);
}

int max_grade(const Qrels& qrels) {
  int g = 0;
  for (const auto& [facet, docs] : qrels)
    for (const auto& [doc, grade] : docs) g = std::max(g, grade);
  return g;
}

// ---------------------------------------------------------------------------
// Splits

const char* split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "validation") return Split::kValidation;
  if (name == "test") return Split::kTest;
  fail(ErrorCode::kParse, "unknown split \"" + name + "\"");
}

SplitAssignment split_facet_ids(std::vector<std::string> facet_ids, const SplitRatios& ratios,
                                std::uint64_t seed) {
  if (!(ratios.train > 0 && ratios.validation > 0 && ratios.test > 0))
    fail(ErrorCode::kInvalidArgument, "split ratios must be positive");
  if (std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9)
    fail(ErrorCode::kInvalidArgument, "split ratios must sum to 1");
  std::sort(facet_ids.begin(), facet_ids.end());
  facet_ids.erase(std::unique(facet_ids.begin(), facet_ids.end()), facet_ids.end());
  const std::size_t n = facet_ids.size();
  if (n < 3) fail(ErrorCode::kInvalidArgument, "need at least 3 facets to split three ways");

  SplitMix64 rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i + 1));
    std::swap(facet_ids[i], facet_ids[j]);
  }

  // The epsilon absorbs representation error such as 1070 * 0.8 landing
  // just below 856.
  const auto n_train = static_cast<std::size_t>(std::floor(n * ratios.train + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(n * ratios.validation + 1e-9));

  SplitAssignment out;
  for (std::size_t i = 0; i < n; ++i) {
    const Split s = i < n_train ? Split::kTrain
                    : i < n_train + n_val ? Split::kValidation
                                          : Split::kTest;
    out.emplace(facet_ids[i], s);
  }
  return out;
}

SplitAssignment split_facets(const Dataset& dataset, const SplitRatios& ratios,
                             std::uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(dataset.facets().size());
  for (const auto& f : dataset.facets()) ids.push_back(f.id);
  return split_facet_ids(std::move(ids), ratios, seed);
}

json split_to_json(const SplitAssignment& split) {
  json doc = json::object();
  for (const auto& [facet, s] : split) doc[facet] = split_name(s);
  return doc;
}

SplitAssignment split_from_json(const json& doc) {
  if (!doc.is_object()) fail(ErrorCode::kParse, "split file: expected an object");
  SplitAssignment out;
  for (const auto& [facet, value] : doc.items()) {
    if (!value.is_string()) fail(ErrorCode::kParse, "split file: $." + facet + ": expected a string");
    out.emplace(facet, parse_split(value.get<std::string>()));
  }
  return out;
}

SplitAssignment load_split(const std::filesystem::path& path) {
  return split_from_json(detail::parse_json(detail::read_file(path), path.string()));
}

// ---------------------------------------------------------------------------
// Validation

ValidationReport validate_dataset(const Dataset& dataset) {
  ValidationReport report;
  auto add = [&](std::string kind, std::string message) {
    report.findings.push_back({std::move(kind), std::move(message)});
  };

  std::set<std::string> seen;
  for (const auto& t : dataset.topics()) {
    if (!seen.insert(t.id).second) add("duplicate_id", "duplicate topic id " + t.id);
    if (t.query.empty()) add("empty_query", "topic " + t.id + " has an empty query");
  }
  seen.clear();
  for (const auto& f : dataset.facets()) {
    if (!seen.insert(f.id).second) add("duplicate_id", "duplicate facet id " + f.id);
    if (!dataset.find_topic(f.topic_id))
      add("dangling_reference", "facet " + f.id + " references unknown topic " + f.topic_id);
  }
  seen.clear();
  std::set<std::string> images_seen;
  for (const auto& q : dataset.questions()) {
    if (!seen.insert(q.id).second) add("duplicate_id", "duplicate question id " + q.id);
    if (!dataset.find_topic(q.topic_id))
      add("dangling_reference", "question " + q.id + " references unknown topic " + q.topic_id);
    if (!q.multimodal && !q.images.empty())
      add("image_consistency", "question " + q.id + " is not multimodal but has " +
                                   std::to_string(q.images.size()) + " image(s)");
    if (q.images.size() > kMaxImagesPerQuestion)
      add("image_count", "question " + q.id + " has " + std::to_string(q.images.size()) +
                             " images (max " + std::to_string(kMaxImagesPerQuestion) + ")");
    for (const auto& im : q.images)
      if (!images_seen.insert(im.id).second) add("duplicate_id", "duplicate image id " + im.id);
  }
  std::set<std::tuple<std::string, std::string, std::string>> tuples;
  for (const auto& a : dataset.answers()) {
    const auto* topic = dataset.find_topic(a.topic_id);
    const auto* facet = dataset.find_facet(a.facet_id);
    const auto* question = dataset.find_question(a.question_id);
    if (!topic) add("dangling_reference", "answer references unknown topic " + a.topic_id);
    if (!facet) add("dangling_reference", "answer references unknown facet " + a.facet_id);
    if (!question) add("dangling_reference", "answer references unknown question " + a.question_id);
    if (facet && facet->topic_id != a.topic_id)
      add("inconsistent_reference", "answer for facet " + a.facet_id + " names topic " +
                                        a.topic_id + " but the facet belongs to " + facet->topic_id);
    if (question && question->topic_id != a.topic_id)
      add("inconsistent_reference", "answer for question " + a.question_id + " names topic " +
                                        a.topic_id + " but the question belongs to " +
                                        question->topic_id);
    if (!tuples.emplace(a.topic_id, a.facet_id, a.question_id).second)
      add("duplicate_answer", "more than one answer for (" + a.topic_id + ", " + a.facet_id +
                                  ", " + a.question_id + ")");
  }
  return report;
}

ValidationReport validate_dataset(const Dataset& dataset, const Qrels& qrels,
                                  const Corpus& corpus) {
  auto report = validate_dataset(dataset);
  for (const auto& [facet, docs] : qrels) {
    if (!dataset.find_facet(facet))
      report.findings.push_back({"unknown_facet", "qrels reference unknown facet " + facet});
    bool any_relevant = false;
    for (const auto& [doc, grade] : docs) {
      any_relevant = any_relevant || grade > 0;
      if (!corpus.find(doc))
        report.findings.push_back(
            {"unknown_document", "qrels for facet " + facet + " reference unknown document " + doc});
    }
    if (!any_relevant)
      report.findings.push_back({"no_relevant", "facet " + facet + " has no positive judgment"});
  }
  return report;
}

}  // namespace clarifyir
