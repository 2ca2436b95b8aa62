#include <catch_amalgamated.hpp>

#include <fstream>

#include "clarifyir/fixture.hpp"
#include "clarifyir/genret.hpp"
#include "clarifyir/lexical.hpp"
#include "support.hpp"

using namespace clarifyir;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("shipped synthetic data equals the generator output", "[fixture]") {
  testing::TempDir dir;
  write_synthetic_benchmark(make_synthetic_benchmark(), dir.path());
  for (const char* name : {"dataset.json", "corpus.jsonl", "qrels.txt", "embeddings.tsv"}) {
    INFO(name);
    CHECK(slurp(dir / name) == slurp(testing::kSyntheticDir / name));
  }
}

TEST_CASE("synthetic benchmark shape", "[fixture]") {
  const auto b = make_synthetic_benchmark();
  CHECK(b.corpus.size() == 200);
  CHECK(b.dataset.topics().size() == 10);
  CHECK(b.dataset.facets().size() == 50);
  CHECK(b.dataset.questions().size() == 50);
  CHECK(b.dataset.answers().size() == 50);
  CHECK(b.qrels.size() == 50);
  for (const auto& q : b.dataset.questions()) {
    CHECK(q.multimodal);
    CHECK(q.images.size() == 3);
  }
  for (const auto& [facet, grades] : b.qrels) CHECK(grades.size() == 6);
  const auto ids = make_identifiers(b.corpus, IdentifierStrategy::kDocK, InvertedIndex::build(b.corpus));
  std::set<TokenStream> distinct;
  for (const auto& id : ids) {
    CHECK(id.tokens.size() == 5);
    distinct.insert(id.tokens);
  }
  CHECK(distinct.size() == 200);
  CHECK_FALSE(slurp(testing::kSyntheticDir / "dataset.json").empty());
  // Another seed gives other data.
  CHECK(make_synthetic_benchmark(7).corpus.docs()[0].text != b.corpus.docs()[0].text);
}
