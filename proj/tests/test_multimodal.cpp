#include <catch_amalgamated.hpp>

#include <cmath>
#include <fstream>

#include "clarifyir/error.hpp"
#include "clarifyir/multimodal.hpp"
#include "clarifyir/rng.hpp"
#include "support.hpp"

using namespace clarifyir;
using Catch::Matchers::WithinAbs;

namespace {

double norm(const Vector& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

EmbeddingStore parse(const std::string& text) { return parse_embeddings(text); }

std::vector<ClassifierSample> four_samples() {
  return {{"", "see photos", ClassLabel::kVeq},
          {"", "see bikes", ClassLabel::kVeq},
          {"", "history facts", ClassLabel::kTeq},
          {"", "bike history", ClassLabel::kTeq}};
}

}  // namespace

TEST_CASE("hash_embed is deterministic and unit norm", "[multimodal][embed]") {
  const auto a = hash_embed("bike chain", 64, 1);
  CHECK(a == hash_embed("bike chain", 64, 1));
  CHECK(a == hash_embed("BIKE CHAIN", 64, 1));
  CHECK_THAT(norm(a), WithinAbs(1.0, 1e-9));
  CHECK_THAT(cosine(a, a), WithinAbs(1.0, 1e-12));
  CHECK(cosine(a, hash_embed("solar panels", 64, 1)) < 1.0);
  CHECK(a != hash_embed("bike chain", 64, 2));
  CHECK_THROWS_AS(hash_embed("bike", 4, 1), Error);
  CHECK_THROWS_AS(hash_embed("ab", 64, 1), Error);
  SplitMix64 rng(8);
  for (int i = 0; i < 200; ++i) {
    std::string s;
    for (std::uint64_t k = 0, n = 3 + rng.below(30); k < n; ++k) s.push_back(static_cast<char>('a' + rng.below(26)));
    REQUIRE_THAT(norm(hash_embed(s, 8 + rng.below(100), rng.next())), WithinAbs(1.0, 1e-9));
  }
}

TEST_CASE("cosine is symmetric and bounded", "[multimodal][embed][property]") {
  SplitMix64 rng(9);
  for (int i = 0; i < 500; ++i) {
    Vector a(5), b(5);
    for (auto& x : a) x = rng.uniform() - 0.5;
    for (auto& x : b) x = rng.uniform() - 0.5;
    const double ab = cosine(a, b);
    REQUIRE(ab == cosine(b, a));
    REQUIRE(ab >= -1.0);
    REQUIRE(ab <= 1.0);
  }
  CHECK_THROWS_AS(cosine(Vector{0, 0}, Vector{1, 0}), Error);
}

TEST_CASE("embedding file parsing", "[multimodal][embed]") {
  const auto store = parse("MELON-EMB v1 2\nimg1\t3 4\n");
  REQUIRE(store.find("img1"));
  CHECK_THAT((*store.find("img1"))[0], WithinAbs(0.6, 1e-12));
  CHECK_THAT((*store.find("img1"))[1], WithinAbs(0.8, 1e-12));
  // Space-separated id also accepted.
  CHECK(parse("MELON-EMB v1 2\nimg1  3 4\n").find("img1"));
  CHECK_THROWS_AS(parse("MELON-EMB v1 2\nimg1\t3 4 5\n"), Error);
  CHECK_THROWS_AS(parse("MELON-EMB v1 2\nimg2\t0 0\n"), Error);
  CHECK_THROWS_AS(parse("MELON-EMB v1 2\nimg1\t1 0\nimg1\t0 1\n"), Error);
  CHECK_THROWS_AS(parse("OTHER 2\n"), Error);
  CHECK_THROWS_AS(parse("MELON-EMB v1 2\nimg1\t1 x\n"), Error);
}

TEST_CASE("embedding store round-trips", "[multimodal][embed]") {
  testing::TempDir dir;
  EmbeddingStore store(8);
  store.add("q", hash_embed("question text", 8, 0));
  store.add("i", Vector{1, 2, 3, 4, 5, 6, 7, 8});
  store.save(dir / "e.tsv");
  const auto back = load_embeddings(dir / "e.tsv");
  CHECK(back.vectors() == store.vectors());
}

TEST_CASE("select_images hand cases", "[multimodal][select]") {
  EmbeddingStore store(2);
  store.add("q", {1, 0});
  store.add("i1", {1, 0});
  store.add("i2", {0, 1});
  store.add("i0", {1, 0});
  const std::vector<std::string> two{"i2", "i1"};
  CHECK(select_images(store, "q", two, 1) == std::vector<std::string>{"i1"});
  const std::vector<std::string> tied{"i1", "i0"};
  CHECK(select_images(store, "q", tied, 1) == std::vector<std::string>{"i0"});
  const std::vector<std::string> all{"i2", "i1", "i0"};
  CHECK(select_images(store, "q", all, 3) == std::vector<std::string>{"i0", "i1", "i2"});
  CHECK(select_images(store, "q", all, 5).size() == 3);
  const std::vector<std::string> missing{"i9"};
  CHECK_THROWS_AS(select_images(store, "q", missing, 1), Error);
  CHECK_THROWS_AS(select_images(store, "nobody", two, 1), Error);
  CHECK_THROWS_AS(select_images(store, "q", two, 0), Error);
}

TEST_CASE("select_images equals a brute-force argmax", "[multimodal][select][property]") {
  SplitMix64 rng(808);
  std::size_t ties = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto f = testing::random_image_fixture(rng);
    const auto got = select_images(f.store, "q", f.candidates, 1);
    REQUIRE(got.size() == 1);
    REQUIRE(got[0] == testing::oracle::best_image(f));
    std::set<std::vector<long>> distinct;
    for (const auto& id : f.candidates) distinct.insert(f.raw.at(id));
    ties += distinct.size() < f.candidates.size();
  }
  CHECK(ties > 100);
}

TEST_CASE("weak labels follow the sign of the mean difference", "[multimodal][weak][property]") {
  SplitMix64 rng(500);
  std::array<std::size_t, 3> seen{};
  for (int trial = 0; trial < 500; ++trial) {
    const auto t = testing::random_triples(rng);
    const auto w = weak_label(t.tor, t.mur);
    const bool expect = testing::oracle::veq(t);
    REQUIRE((w.label == ClassLabel::kVeq) == expect);
    REQUIRE((w.delta > 0) == expect);
    ++seen[w.delta > 0 ? 0 : w.delta == 0 ? 1 : 2];
  }
  CHECK(seen[0] > 0);
  CHECK(seen[1] > 0);
  CHECK(seen[2] > 0);
}

TEST_CASE("weak labels", "[multimodal][weak]") {
  auto w = weak_label({0.4, 0.4, 0.4}, {0.5, 0.5, 0.5});
  CHECK_THAT(w.delta, WithinAbs(0.1, 1e-12));
  CHECK(w.label == ClassLabel::kVeq);
  w = weak_label({0.3, 0.3, 0.3}, {0.3, 0.3, 0.3});
  CHECK(w.delta == 0.0);
  CHECK(w.label == ClassLabel::kTeq);
  w = weak_label({0.45, 0.45, 0.45}, {0.6, 0.3, 0.3});
  CHECK_THAT(w.delta, WithinAbs(-0.05, 1e-12));
  CHECK(w.label == ClassLabel::kTeq);
  CHECK_THROWS_AS(weak_label({1.2, 0, 0}, {0, 0, 0}), Error);

  const auto rec = aggregate_weak_labels("Q1", {0.2, -0.1});
  CHECK_THAT(rec.delta, WithinAbs(0.05, 1e-12));
  CHECK(rec.label == ClassLabel::kVeq);
  CHECK(aggregate_weak_labels("Q2", {0.1, -0.1}).label == ClassLabel::kTeq);
  CHECK_THROWS_AS(aggregate_weak_labels("Q3", {}), Error);
}

TEST_CASE("weak-label files round-trip and are checked", "[multimodal][weak]") {
  testing::TempDir dir;
  const std::vector<WeakLabelRecord> recs{aggregate_weak_labels("Q1", {0.25}),
                                          aggregate_weak_labels("Q2", {-0.5, 0.0})};
  save_weak_labels(recs, dir / "w.jsonl");
  const auto back = load_weak_labels(dir / "w.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back.at("Q1").label == ClassLabel::kVeq);
  CHECK(back.at("Q2").delta == -0.25);
  std::ofstream(dir / "bad.jsonl") << R"({"question_id":"Q1","delta":-0.1,"label":"VEQ"})" << "\n";
  CHECK_THROWS_AS(load_weak_labels(dir / "bad.jsonl"), Error);
}

TEST_CASE("naive Bayes posterior on the four-sample fixture", "[multimodal][classifier]") {
  const auto clf = ReferenceClassifier::train(four_samples());
  // Vocabulary {see, photos, bikes, history, facts, bike}: 6 + 1 unknown slot,
  // 4 tokens per class, alpha 1. Known tokens of the query: see, photos.
  //   VEQ: 1/2 * (2+1)/11 * (1+1)/11 = 6/242;  TEQ: 1/2 * 1/11 * 1/11 = 1/242
  const auto c = clf.classify("", "do you want to see photos");
  CHECK(c.label == ClassLabel::kVeq);
  CHECK_THAT(c.posterior, WithinAbs(6.0 / 7.0, 1e-12));
  CHECK(clf.vocabulary_size() == 6);
  CHECK_THAT(clf.log_likelihood(ClassLabel::kVeq, "see"), WithinAbs(std::log(3.0 / 11.0), 1e-12));
  CHECK_THAT(clf.log_likelihood(ClassLabel::kTeq, "zzz"), WithinAbs(std::log(1.0 / 11.0), 1e-12));
}

TEST_CASE("classifier edge cases", "[multimodal][classifier]") {
  const auto clf = ReferenceClassifier::train(four_samples());
  SECTION("unknown tokens fall back to the priors, and the tie goes to TEQ") {
    const auto c = clf.classify("", "zzz qqq");
    CHECK(c.label == ClassLabel::kTeq);
    CHECK_THAT(c.posterior, WithinAbs(0.5, 1e-12));
    const auto empty = clf.classify("", "");
    CHECK(empty.label == ClassLabel::kTeq);
  }
  SECTION("unequal priors decide unknown input") {
    auto samples = four_samples();
    samples.push_back({"", "more history", ClassLabel::kTeq});
    const auto c = ReferenceClassifier::train(samples).classify("", "zzz");
    CHECK(c.label == ClassLabel::kTeq);
    CHECK_THAT(c.posterior, WithinAbs(0.6, 1e-12));
  }
  SECTION("training samples classify as their own label") {
    for (const auto& s : four_samples()) CHECK(clf.classify(s.query, s.question).label == s.label);
  }
  SECTION("retraining is deterministic and persists") {
    testing::TempDir dir;
    CHECK(ReferenceClassifier::train(four_samples()) == clf);
    clf.save(dir / "c.json");
    CHECK(ReferenceClassifier::load(dir / "c.json") == clf);
  }
  SECTION("single-class data is rejected") {
    std::vector<ClassifierSample> one{{"", "a", ClassLabel::kVeq}};
    CHECK_THROWS_AS(ReferenceClassifier::train(one), Error);
    CHECK_THROWS_AS(ReferenceClassifier::train(four_samples(), 0.0), Error);
  }
}

TEST_CASE("swapping training labels swaps predictions", "[multimodal][classifier][property]") {
  SplitMix64 rng(21);
  const char* words[] = {"see", "photo", "history", "when", "where", "look", "color", "price"};
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ClassifierSample> samples, swapped;
    for (int i = 0; i < 8; ++i) {
      std::string q;
      for (std::uint64_t k = 0, n = 1 + rng.below(4); k < n; ++k) q += std::string(words[rng.below(8)]) + " ";
      const auto label = i % 2 == 0 ? ClassLabel::kVeq : ClassLabel::kTeq;
      samples.push_back({"topic", q, label});
      swapped.push_back({"topic", q, label == ClassLabel::kVeq ? ClassLabel::kTeq : ClassLabel::kVeq});
    }
    const auto a = ReferenceClassifier::train(samples);
    const auto b = ReferenceClassifier::train(swapped);
    for (int probe = 0; probe < 10; ++probe) {
      const std::string q = std::string(words[rng.below(8)]) + " " + words[rng.below(8)];
      const auto sa = a.class_scores(tokenize("topic " + q));
      const auto sb = b.class_scores(tokenize("topic " + q));
      REQUIRE(sa[0] == sb[1]);
      REQUIRE(sa[1] == sb[0]);
      const auto ca = a.classify("topic", q);
      const auto cb = b.classify("topic", q);
      if (sa[0] != sa[1]) REQUIRE(ca.label != cb.label);
    }
  }
}

TEST_CASE("class label names", "[multimodal]") {
  CHECK(std::string(class_label_name(ClassLabel::kVeq)) == "VEQ");
  CHECK(parse_class_label("TEQ") == ClassLabel::kTeq);
  CHECK_THROWS_AS(parse_class_label("maybe"), Error);
}
