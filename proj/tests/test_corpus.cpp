#include <catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

#include "clarifyir/corpus.hpp"
#include "clarifyir/error.hpp"
#include "support.hpp"

using namespace clarifyir;
using nlohmann::json;

namespace {

json minimal_dataset() {
  return json::parse(R"({
    "topics": [{"id": "T1", "query": "bike repair"}],
    "facets": [{"id": "F1", "topic_id": "T1", "description": "fix a chain"}],
    "questions": [{"id": "Q1", "topic_id": "T1", "text": "which part?", "source": "set1",
                   "multimodal": false, "images": []}],
    "answers": [{"topic_id": "T1", "facet_id": "F1", "question_id": "Q1", "text": "the chain"}]
  })");
}

void write(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

bool has_kind(const ValidationReport& r, const std::string& kind) {
  for (const auto& f : r.findings)
    if (f.kind == kind) return true;
  return false;
}

std::vector<std::string> facet_ids(std::size_t n) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("F" + std::to_string(i));
  return ids;
}

}  // namespace

TEST_CASE("minimal dataset loads with counts (1,1,1,1)", "[corpus]") {
  testing::TempDir dir;
  write(dir / "d.json", minimal_dataset().dump());
  const auto d = load_dataset(dir / "d.json");
  CHECK(d.topics().size() == 1);
  CHECK(d.facets().size() == 1);
  CHECK(d.questions().size() == 1);
  CHECK(d.answers().size() == 1);
  REQUIRE(d.find_question("Q1"));
  CHECK(d.find_question("Q1")->source == QuestionSource::kSet1);
  CHECK(d.find_topic("T9") == nullptr);
}

TEST_CASE("non-multimodal question with an image is rejected", "[corpus]") {
  auto doc = minimal_dataset();
  doc["questions"][0]["images"] = json::array({{{"id", "I1"}, {"url", "u"}, {"aspect", "a"}}});
  CHECK(has_kind(validate_dataset(parse_dataset(doc)), "image_consistency"));

  testing::TempDir dir;
  write(dir / "d.json", doc.dump());
  try {
    load_dataset(dir / "d.json");
    FAIL("expected an integrity error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kIntegrity);
  }
}

TEST_CASE("schema errors name the offending field", "[corpus]") {
  auto doc = minimal_dataset();
  doc["questions"][0].erase("text");
  try {
    parse_dataset(doc);
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kParse);
    CHECK_THAT(std::string(e.what()), Catch::Matchers::ContainsSubstring("$.questions[0]"));
  }
  doc = minimal_dataset();
  doc["questions"][0]["source"] = "set3";
  CHECK_THROWS_AS(parse_dataset(doc), Error);
}

TEST_CASE("JSON syntax errors carry a location", "[corpus]") {
  testing::TempDir dir;
  write(dir / "d.json", "{\n  \"topics\": [\n  oops\n]}");
  try {
    load_dataset(dir / "d.json");
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kParse);
    CHECK_THAT(std::string(e.what()), Catch::Matchers::ContainsSubstring("3:"));
  }
}

TEST_CASE("dangling references are reported by id", "[corpus]") {
  auto doc = minimal_dataset();
  doc["answers"][0]["facet_id"] = "F404";
  const auto report = validate_dataset(parse_dataset(doc));
  REQUIRE(has_kind(report, "dangling_reference"));
  bool named = false;
  for (const auto& f : report.findings) named |= f.message.find("F404") != std::string::npos;
  CHECK(named);
}

TEST_CASE("validation with qrels and corpus", "[corpus]") {
  const auto dataset = parse_dataset(minimal_dataset());
  const Corpus corpus({{"D1", 0, "chain grease", std::nullopt}});

  SECTION("consistent fixture gives an empty report") {
    const Qrels qrels{{"F1", {{"D1", 1}}}};
    CHECK(validate_dataset(dataset, qrels, corpus).ok());
  }
  SECTION("unknown document gives exactly one finding") {
    const Qrels qrels{{"F1", {{"D1", 1}, {"D2", 1}}}};
    const auto report = validate_dataset(dataset, qrels, corpus);
    REQUIRE(report.findings.size() == 1);
    CHECK(report.findings[0].kind == "unknown_document");
  }
  SECTION("four images gives an image-count finding") {
    auto doc = minimal_dataset();
    doc["questions"][0]["multimodal"] = true;
    for (int i = 0; i < 4; ++i)
      doc["questions"][0]["images"].push_back(
          {{"id", "I" + std::to_string(i)}, {"url", "u"}, {"aspect", "a"}});
    const auto report = validate_dataset(parse_dataset(doc), Qrels{{"F1", {{"D1", 1}}}}, corpus);
    REQUIRE(report.findings.size() == 1);
    CHECK(report.findings[0].kind == "image_count");
  }
  SECTION("judged facet without a relevant document") {
    const Qrels qrels{{"F1", {{"D1", 0}}}};
    CHECK(has_kind(validate_dataset(dataset, qrels, corpus), "no_relevant"));
  }
}

TEST_CASE("dataset round-trips through JSON", "[corpus][property]") {
  const auto bench_dataset = load_dataset(testing::kSyntheticDir / "dataset.json");
  const auto again = parse_dataset(dataset_to_json(bench_dataset));
  CHECK(dataset_to_json(again) == dataset_to_json(bench_dataset));
}

TEST_CASE("corpus rejects duplicates and empty text", "[corpus]") {
  CHECK_THROWS_AS(Corpus({{"D1", 0, "a", {}}, {"D1", 1, "b", {}}}), Error);
  CHECK_THROWS_AS(Corpus({{"D1", 0, "a", {}}, {"D2", 0, "b", {}}}), Error);
  CHECK_THROWS_AS(Corpus({{"D1", 0, "", {}}}), Error);
  const Corpus c({{"D2", 5, "b", {}}, {"D1", 1, "a", std::string("t")}});
  CHECK(c.docs().front().id == "D1");  // sorted by ordinal
}

TEST_CASE("corpus round-trips through JSON lines", "[corpus]") {
  testing::TempDir dir;
  const Corpus c({{"D1", 1, "alpha \"quoted\"", std::string("Title")}, {"D2", 2, "beta", {}}});
  save_corpus(c, dir / "c.jsonl");
  const auto back = load_corpus(dir / "c.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back.docs()[0].text == "alpha \"quoted\"");
  CHECK(back.docs()[0].title == std::optional<std::string>("Title"));
  CHECK_FALSE(back.docs()[1].title.has_value());
}

TEST_CASE("qrels parsing", "[corpus]") {
  SECTION("four-column line") {
    std::istringstream in("F1 0 D7 2\n");
    const auto q = parse_qrels(in);
    CHECK(q == Qrels{{"F1", {{"D7", 2}}}});
  }
  SECTION("duplicate pair is an error") {
    std::istringstream in("F1 0 D7 2\nF1 0 D7 1\n");
    CHECK_THROWS_AS(parse_qrels(in), Error);
  }
  SECTION("empty input is valid") {
    std::istringstream in("");
    CHECK(parse_qrels(in).empty());
  }
  SECTION("malformed lines") {
    std::istringstream three("F1 0 D7\n");
    CHECK_THROWS_AS(parse_qrels(three), Error);
    std::istringstream negative("F1 0 D7 -1\n");
    CHECK_THROWS_AS(parse_qrels(negative), Error);
    std::istringstream text("F1 0 D7 high\n");
    CHECK_THROWS_AS(parse_qrels(text), Error);
  }
  SECTION("max grade") {
    std::istringstream in("F1 0 D1 1\nF2 0 D2 3\n");
    CHECK(max_grade(parse_qrels(in)) == 3);
  }
}

TEST_CASE("split counts follow the floor rule", "[corpus][split]") {
  auto count = [](const SplitAssignment& s) {
    std::array<std::size_t, 3> c{};
    for (const auto& [f, split] : s) ++c[static_cast<std::size_t>(split)];
    return c;
  };
  CHECK(count(split_facet_ids(facet_ids(1070), {}, 13)) == std::array<std::size_t, 3>{856, 107, 107});
  CHECK(count(split_facet_ids(facet_ids(10), {}, 13)) == std::array<std::size_t, 3>{8, 1, 1});
  CHECK(count(split_facet_ids(facet_ids(50), {}, 13)) == std::array<std::size_t, 3>{40, 5, 5});
}

TEST_CASE("split is a deterministic total partition", "[corpus][split][property]") {
  testing::TempDir dir;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto ids = facet_ids(3 + seed * 7);
    const auto a = split_facet_ids(ids, {}, seed);
    const auto b = split_facet_ids(ids, {}, seed);
    REQUIRE(a == b);
    REQUIRE(a.size() == ids.size());
    for (const auto& id : ids) REQUIRE(a.contains(id));
    // Input order does not matter: ids are sorted before shuffling.
    auto reversed = ids;
    std::reverse(reversed.begin(), reversed.end());
    REQUIRE(split_facet_ids(reversed, {}, seed) == a);
    REQUIRE(split_from_json(split_to_json(a)) == a);
  }
}

TEST_CASE("split shuffle matches an independent Fisher-Yates", "[corpus][split]") {
  auto ids = facet_ids(25);
  std::sort(ids.begin(), ids.end());
  SplitMix64 rng(99);
  for (std::size_t i = ids.size() - 1; i > 0; --i) std::swap(ids[i], ids[rng.next() % (i + 1)]);
  const auto s = split_facet_ids(facet_ids(25), {}, 99);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto expected = i < 20 ? Split::kTrain : i < 22 ? Split::kValidation : Split::kTest;
    REQUIRE(s.at(ids[i]) == expected);
  }
}

TEST_CASE("split preconditions", "[corpus][split]") {
  CHECK_THROWS_AS(split_facet_ids(facet_ids(2), {}, 1), Error);
  CHECK_THROWS_AS(split_facet_ids(facet_ids(10), {0.5, 0.2, 0.2}, 1), Error);
  CHECK_THROWS_AS(split_facet_ids(facet_ids(10), {1.0, 0.0, 0.0}, 1), Error);
  CHECK_THROWS_AS(parse_split("dev"), Error);
}
