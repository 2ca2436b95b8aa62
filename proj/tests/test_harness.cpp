#include <catch_amalgamated.hpp>

#include <boost/math/distributions/students_t.hpp>
#include <fstream>

#include "clarifyir/error.hpp"
#include "clarifyir/harness.hpp"
#include "synthetic_fixture.hpp"

using namespace clarifyir;
using nlohmann::json;

namespace {

const std::filesystem::path& artifacts() {
  static testing::TempDir dir;
  static const bool built = (testing::build_synthetic_artifacts(dir.path()), true);
  (void)built;
  return dir.path();
}

ExperimentConfig config_for(RunMode mode, ClassificationMode cls = ClassificationMode::kOff,
                            EvalSplit split = EvalSplit::kTest) {
  return testing::synthetic_config(artifacts(), mode, cls, split);
}

}  // namespace

TEST_CASE("config parsing is strict and applies defaults", "[harness][config]") {
  const auto c = config_from_json(json::parse(R"({"paths": {"dataset": "d.json"}})"), "/base");
  CHECK(c.seed == 13);
  CHECK(c.beam_size == 15);
  CHECK(c.first_stage_k == 100);
  CHECK(c.images_per_question == 1);
  CHECK(c.ql.mu == 2000.0);
  CHECK(c.ql_query_weight == 2.0);
  CHECK(c.identifier_strategy == IdentifierStrategy::kDocK);
  CHECK(c.resolve("d.json") == std::filesystem::path("/base/d.json"));
  CHECK(c.resolve("/abs/x") == std::filesystem::path("/abs/x"));
  CHECK(c.resolve("").empty());

  CHECK_THROWS_AS(config_from_json(json::parse(R"({"bogus": 1})")), Error);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"paths": {"datset": "x"}})")), Error);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"images_per_question": 4})")), Error);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"beam_size": 0})")), Error);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"mode": "neural"})")), Error);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"scorer": {"lambdas": [1, 1, 1]}})")), Error);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"seed": "abc"})")), Error);
}

TEST_CASE("config round-trips through JSON", "[harness][config]") {
  auto c = config_for(RunMode::kGenRerankTextOnly);
  c.g_max = 3;
  c.gain = Gain::kLinear;
  c.trie_scope = TrieScope::kCorpus;
  const auto j = config_to_json(c);
  CHECK(config_to_json(config_from_json(j)) == j);
}

TEST_CASE("shipped configs load", "[harness][config]") {
  for (const auto& entry : std::filesystem::directory_iterator(testing::kSyntheticDir / "configs"))
    CHECK_NOTHROW(load_config(entry.path()));
}

TEST_CASE("run files round-trip", "[harness][run]") {
  const std::vector<RunEntry> entries{{"F1", "Q1", {"D1", "D2"}}, {"F2", "Q2", {}}, {"F1", "Q3", {"D3"}}};
  const auto text = format_run(entries, "sys");
  CHECK(text.substr(0, text.find('\n')) == "F1 Q1 D1 1 1.000000 sys");
  const auto back = parse_run(text);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].facet_id == entries[i].facet_id);
    CHECK(back[i].question_id == entries[i].question_id);
    CHECK(back[i].ranking == entries[i].ranking);
  }
  CHECK_THROWS_AS(parse_run("F1 Q1 D1 2 0.5 sys\n"), Error);
  CHECK_THROWS_AS(parse_run("F1 Q1 D1\n"), Error);
}

TEST_CASE("evaluation skips and logs unjudged facets", "[harness][eval]") {
  const Qrels qrels{{"F1", {{"D1", 2}, {"D2", 1}}}, {"F3", {{"D9", 0}}}};
  const std::vector<RunEntry> entries{
      {"F1", "Q1", {"D1"}}, {"F1", "Q2", {"D5", "D2"}}, {"F2", "Q1", {"D1"}}, {"F3", "Q1", {"D9"}}};
  ExperimentConfig c;
  c.name = "x";
  const auto r = evaluate_run(c, entries, qrels, {});
  const auto facets = r.facets();
  REQUIRE(facets.size() == 1);
  CHECK(facets[0].facet_id == "F1");
  CHECK(facets[0].samples == 2);
  // Per-facet metrics are the mean over that facet's samples.
  CHECK(facets[0].metrics.get("mrr") == 0.75);
  CHECK(r.macro().get("mrr") == 0.75);
  const auto log = r.body["log"].dump();
  CHECK_THAT(log, Catch::Matchers::ContainsSubstring("F2"));
  CHECK_THAT(log, Catch::Matchers::ContainsSubstring("F3"));
  CHECK(r.body["ranker"]["g_max"] == 2);
}

TEST_CASE("compare_runs", "[harness][compare]") {
  ExperimentConfig c;
  const Qrels qrels{{"F1", {{"D1", 1}}}, {"F2", {{"D2", 1}}}, {"F3", {{"D3", 1}}}};
  const auto a = evaluate_run(c, std::vector<RunEntry>{{"F1", "Q", {"D1"}}, {"F2", "Q", {"D2"}}, {"F3", "Q", {"x", "D3"}}},
                              qrels, {});
  const auto b = evaluate_run(c, std::vector<RunEntry>{{"F1", "Q", {"x", "D1"}}, {"F2", "Q", {"x", "y", "D2"}}, {"F3", "Q", {"x", "D3"}}},
                              qrels, {});
  for (const auto& row : compare_runs(a, a)) CHECK(row.result.p == 1.0);

  const auto rows = compare_runs(a, b);
  REQUIRE(rows.size() == kNumMetrics);
  REQUIRE(rows[0].metric == "mrr");
  // MRR differences: 0.5, 2/3, 0 -> independent t oracle.
  const std::vector<double> d{0.5, 2.0 / 3.0, 0.0};
  const double mean = (d[0] + d[1] + d[2]) / 3;
  double ss = 0;
  for (double x : d) ss += (x - mean) * (x - mean);
  const double t = mean / std::sqrt(ss / 2 / 3);
  boost::math::students_t dist(2);
  const double p = 2 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
  CHECK_THAT(rows[0].result.t, Catch::Matchers::WithinAbs(t, 1e-12));
  CHECK_THAT(rows[0].result.p, Catch::Matchers::WithinAbs(p, 1e-9));
  CHECK_THAT(rows[0].result.p_adjusted, Catch::Matchers::WithinAbs(std::min(1.0, p * 10), 1e-9));

  const auto other = evaluate_run(c, std::vector<RunEntry>{{"F1", "Q", {"D1"}}, {"F2", "Q", {"D2"}}}, qrels, {});
  CHECK_THROWS_AS(compare_runs(a, other), Error);
  const Qrels q4{{"F4", {{"D4", 1}}}, {"F2", {{"D2", 1}}}, {"F3", {{"D3", 1}}}};
  const auto disjoint = evaluate_run(c, std::vector<RunEntry>{{"F4", "Q", {"D4"}}, {"F2", "Q", {"D2"}}, {"F3", "Q", {"D3"}}}, q4, {});
  CHECK_THROWS_AS(compare_runs(a, disjoint), Error);
  CHECK_THAT(format_significance(rows), Catch::Matchers::StartsWith("metric\tt\tp"));
}

TEST_CASE("original_query equals direct evaluation of first-stage rankings", "[harness][pipeline]") {
  const auto c = config_for(RunMode::kOriginalQuery);
  const auto report = run_experiment(c);
  const auto corpus = load_corpus(c.resolve(c.paths.corpus));
  const auto dataset = load_dataset(c.resolve(c.paths.dataset));
  const auto qrels = load_qrels(c.resolve(c.paths.qrels));
  const auto split = load_split(c.resolve(c.paths.split));
  const auto index = InvertedIndex::build(corpus);
  std::vector<MetricsRecord> per_facet;
  for (const auto& f : dataset.facets()) {
    if (split.at(f.id) != Split::kTest) continue;
    std::vector<std::string> ranking;
    for (const auto& d : search(index, tokenize(dataset.find_topic(f.topic_id)->query), 100, RankModel::kBm25))
      ranking.push_back(d.doc_id);
    per_facet.push_back(evaluate_ranking(ranking, qrels.at(f.id), max_grade(qrels)));
  }
  CHECK(report.macro() == macro_average(per_facet));
  CHECK(report.body["ranker"]["first_stage"] == "bm25");
}

TEST_CASE("reports are deterministic and echo the whole config", "[harness][pipeline]") {
  testing::TempDir out;
  auto c = config_for(RunMode::kGenRerankMultimodal, ClassificationMode::kReferenceClassifier);
  c.paths.output_dir = out.path().string();
  const auto a = run_experiment(c);
  const auto b = run_experiment(c);
  CHECK(a.body.dump() == b.body.dump());
  CHECK(a.body["config"] == config_to_json(c));
  const auto keys = config_to_json(c);
  for (const auto& [key, value] : keys.items()) CHECK(a.body["config"].contains(key));
  CHECK(std::filesystem::exists(out / "report.json"));
  CHECK(std::filesystem::exists(out / "report.tsv"));
  CHECK(std::filesystem::exists(out / "run.txt"));
  CHECK(load_report(out / "report.json").body == a.body);
  CHECK(a.provenance.contains("generated_at"));
  CHECK_FALSE(a.body.contains("generated_at"));
}

TEST_CASE("missing artifacts for a mode are reported", "[harness][pipeline]") {
  auto c = config_for(RunMode::kGenRerankTextOnly);
  c.paths.scorer.clear();
  try {
    run_experiment(c);
    FAIL("expected a missing-artifact error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kMissingArtifact);
  }
  auto m = config_for(RunMode::kGenRerankMultimodal, ClassificationMode::kReferenceClassifier);
  m.paths.classifier = (artifacts() / "nope.json").string();
  CHECK_THROWS_AS(run_experiment(m), Error);
}

TEST_CASE("image attachment follows the mode and classification", "[harness][pipeline]") {
  const auto text = Pipeline::load(config_for(RunMode::kGenRerankTextOnly));
  const auto always = Pipeline::load(config_for(RunMode::kGenRerankMultimodal));
  const auto oracle = Pipeline::load(config_for(RunMode::kGenRerankMultimodal, ClassificationMode::kOracleWeakLabels));
  auto zero_cfg = config_for(RunMode::kGenRerankMultimodal);
  zero_cfg.images_per_question = 0;
  const auto zero = Pipeline::load(zero_cfg);

  const auto samples = always.samples(EvalSplit::kTrain);
  REQUIRE(samples.size() == 40);
  for (const auto& s : samples) {
    CHECK_FALSE(text.decide_images(s).images_attached);
    CHECK_FALSE(zero.decide_images(s).images_attached);
    const auto a = always.decide_images(s);
    CHECK(a.images_attached);
    CHECK(a.images.size() == 1);
    const auto o = oracle.decide_images(s);
    const auto& label = oracle.inputs().weak_labels.at(s.question->id).label;
    CHECK(o.images_attached == (label == ClassLabel::kVeq));
    CHECK(text.decide_images(s, true).images_attached);
  }
  // Questions without a weak label count as TEQ.
  for (const auto& s : oracle.samples(EvalSplit::kTest)) {
    CHECK_FALSE(oracle.decide_images(s).images_attached);
    CHECK(oracle.decide_images(s).label == ClassLabel::kTeq);
  }
}

TEST_CASE("sample context layout", "[harness][pipeline]") {
  const auto p = Pipeline::load(config_for(RunMode::kGenRerankMultimodal));
  const auto s = p.samples(EvalSplit::kAll).front();
  const auto& image = s.question->images.front();
  const auto ctx = p.context(s, {image.id});
  TokenStream expected = tokenize(s.topic->query);
  expected.emplace_back("[SEP]");
  for (auto& t : tokenize(s.question->text)) expected.push_back(t);
  expected.emplace_back("[SEP]");
  for (auto& t : tokenize(s.answer->text)) expected.push_back(t);
  expected.emplace_back("[SEP]");
  for (auto& t : tokenize(image.aspect)) expected.push_back(t);
  CHECK(ctx == expected);
}

TEST_CASE("corpus-wide trie scope may surface documents beyond the first stage", "[harness][pipeline]") {
  auto c = config_for(RunMode::kGenRerankTextOnly, ClassificationMode::kOff, EvalSplit::kTrain);
  c.trie_scope = TrieScope::kCorpus;
  const auto p = Pipeline::load(c);
  for (const auto& s : p.samples(EvalSplit::kTrain)) {
    const auto ranking = p.rank(s).ranking;
    const auto first = p.first_stage(s);
    const std::set<std::string> distinct(ranking.begin(), ranking.end());
    CHECK(distinct.size() == ranking.size());
    std::size_t outside = ranking.size();
    for (const auto& d : first) {
      CHECK(distinct.contains(d.doc_id));
      --outside;
    }
    // Only generated documents can come from outside the candidates.
    CHECK(outside <= c.beam_size);
    for (const auto& d : ranking) CHECK(p.inputs().corpus.find(d) != nullptr);
    // Memorized train facets still put a relevant document first.
    CHECK(p.grades(s.facet->id).at(ranking.front()) > 0);
  }
}

TEST_CASE("weak labels cover train questions with images", "[harness][weak]") {
  const auto labels = load_weak_labels(artifacts() / "weak_labels.jsonl");
  CHECK(labels.size() == 40);
  std::size_t veq = 0;
  for (const auto& [q, rec] : labels) {
    CHECK(rec.facet_deltas.size() == 1);
    CHECK((rec.label == ClassLabel::kVeq) == (rec.delta > 0));
    veq += rec.label == ClassLabel::kVeq;
  }
  CHECK(veq > 0);
  CHECK(veq < labels.size());
}
