#include "clarifyir/fixture.hpp"

#include <algorithm>
#include <array>
#include <set>

#include "clarifyir/error.hpp"
#include "clarifyir/rng.hpp"
#include "clarifyir/text.hpp"
#include "io.hpp"

namespace clarifyir {

namespace {

constexpr std::size_t kTopics = 10;
constexpr std::size_t kFacetsPerTopic = 5;
constexpr std::size_t kDocsPerFacet = 4;
constexpr std::size_t kSignatureWords = 5;

constexpr std::array<std::pair<std::string_view, std::string_view>, kTopics> kTopicWords = {{
    {"bicycle", "maintenance"},
    {"garden", "vegetables"},
    {"camera", "lenses"},
    {"kitchen", "renovation"},
    {"guitar", "lessons"},
    {"aquarium", "fish"},
    {"telescope", "astronomy"},
    {"sailing", "boats"},
    {"pottery", "glazes"},
    {"beekeeping", "hives"},
}};

constexpr std::array<std::string_view, 30> kFiller = {
    "guide",  "review", "price",  "best",    "people",  "local",   "store",  "online",
    "help",   "tips",   "free",   "home",    "year",    "new",     "time",   "good",
    "make",   "use",    "find",   "need",    "great",   "quality", "simple", "easy",
    "small",  "large",  "popular", "daily",  "world",   "information"};

class WordFactory {
 public:
  explicit WordFactory(SplitMix64& rng) : rng_(rng) {
    for (auto [a, b] : kTopicWords) {
      used_.emplace(a);
      used_.emplace(b);
    }
    for (auto w : kFiller) used_.emplace(w);
  }

  // Consonant-vowel pseudo-words of three syllables, never repeated.
  std::string next() {
    static constexpr std::string_view kConsonants = "bdfgklmnprstvz";
    static constexpr std::string_view kVowels = "aeiou";
    while (true) {
      std::string w;
      for (int s = 0; s < 3; ++s) {
        w.push_back(kConsonants[rng_.below(kConsonants.size())]);
        w.push_back(kVowels[rng_.below(kVowels.size())]);
      }
      if (!is_stopword(w) && used_.insert(w).second) return w;
    }
  }

 private:
  SplitMix64& rng_;
  std::set<std::string> used_;
};

struct DocPlan {
  std::string id;
  std::vector<std::string> signature;  // sorted; front() is the first identifier token
};

std::string padded(std::size_t n, int width) {
  auto s = std::to_string(n);
  return std::string(width - std::min<int>(width, static_cast<int>(s.size())), '0') + s;
}

}  // namespace

SyntheticBenchmark make_synthetic_benchmark(std::uint64_t seed) {
  SplitMix64 rng(seed);
  WordFactory words(rng);

  std::vector<Topic> topics;
  std::vector<Facet> facets;
  std::vector<ClarifyingQuestion> questions;
  std::vector<AnswerRecord> answers;
  std::vector<Document> docs;
  Qrels qrels;

  // facet_words[t][f], plans[t][f][d]
  std::vector<std::vector<std::string>> facet_words(kTopics);
  std::vector<std::vector<std::vector<DocPlan>>> plans(kTopics);

  std::size_t ordinal = 0;
  for (std::size_t t = 0; t < kTopics; ++t) {
    const auto [w1, w2] = kTopicWords[t];
    topics.push_back({"T" + padded(t + 1, 2), std::string(w1) + " " + std::string(w2)});
    for (std::size_t f = 0; f < kFacetsPerTopic; ++f) {
      facet_words[t].push_back(words.next());
      plans[t].emplace_back();
      for (std::size_t d = 0; d < kDocsPerFacet; ++d) {
        DocPlan plan;
        plan.id = "D" + padded(ordinal, 3);
        for (std::size_t k = 0; k < kSignatureWords; ++k) plan.signature.push_back(words.next());
        std::sort(plan.signature.begin(), plan.signature.end());

        std::vector<std::string> tokens;
        const auto topic_tf = 1 + rng.below(3);
        for (std::size_t i = 0; i < topic_tf; ++i) tokens.emplace_back(w1);
        if (rng.below(2) == 0) tokens.emplace_back(w2);
        tokens.push_back(facet_words[t][f]);
        tokens.push_back(facet_words[t][f]);
        for (const auto& s : plan.signature)
          for (int r = 0; r < 3; ++r) tokens.push_back(s);
        for (int i = 0; i < 8; ++i) tokens.emplace_back(kFiller[rng.below(kFiller.size())]);
        for (std::size_t i = tokens.size() - 1; i > 0; --i)
          std::swap(tokens[i], tokens[rng.below(i + 1)]);

        std::string text;
        for (const auto& tok : tokens) {
          if (!text.empty()) text += ' ';
          text += tok;
        }
        docs.push_back({plan.id, ordinal, text, std::string(w1) + " " + facet_words[t][f]});
        plans[t][f].push_back(std::move(plan));
        ++ordinal;
      }
    }
  }

  for (std::size_t t = 0; t < kTopics; ++t) {
    const auto& topic = topics[t];
    const auto [w1, w2] = kTopicWords[t];
    for (std::size_t f = 0; f < kFacetsPerTopic; ++f) {
      const auto facet_index = t * kFacetsPerTopic + f;
      const auto facet_id = "F" + padded(facet_index + 1, 2);
      const auto& fw = facet_words[t][f];
      const auto& docs_f = plans[t][f];
      // Three of every ten facets get a misleading image.
      const bool helpful = facet_index % 10 < 7;
      facets.push_back({facet_id, topic.id, "information about " + fw + " for " + std::string(w1)});

      auto& grades = qrels[facet_id];
      for (std::size_t d = 0; d < kDocsPerFacet; ++d) grades[docs_f[d].id] = d < 2 ? 2 : 1;
      // Two judged non-relevant documents from the neighbouring topic.
      const auto& other = plans[(t + 1) % kTopics][f];
      grades[other[0].id] = 0;
      grades[other[1].id] = 0;

      const auto question_id = "Q" + padded(facet_index + 1, 3);
      ClarifyingQuestion q;
      q.id = question_id;
      q.topic_id = topic.id;
      q.text = helpful ? "would you like to see photos of " + fw
                       : "are you asking about the history of " + fw;
      q.source = facet_index % 3 == 2 ? QuestionSource::kSet2 : QuestionSource::kSet1;
      q.multimodal = true;

      std::string aspect = fw;
      if (helpful) {
        for (std::size_t d = 1; d < kDocsPerFacet; ++d)
          aspect += " " + docs_f[d].signature.front() + " " + docs_f[d].signature.front();
      } else {
        const auto& sibling = plans[t][(f + 1) % kFacetsPerTopic];
        for (std::size_t d = 0; d < 3; ++d) aspect += " " + sibling[d].signature.front();
      }
      const auto image_base = "I" + padded(facet_index + 1, 3) + "-";
      q.images.push_back({image_base + "1", "https://images.example.org/" + image_base + "1.jpg",
                          aspect + " " + fw});
      q.images.push_back({image_base + "2", "https://images.example.org/" + image_base + "2.jpg",
                          std::string(w1) + " " + facet_words[t][(f + 2) % kFacetsPerTopic] + " " +
                              std::string(kFiller[rng.below(kFiller.size())])});
      q.images.push_back({image_base + "3", "https://images.example.org/" + image_base + "3.jpg",
                          std::string(w2) + " " + std::string(kFiller[rng.below(kFiller.size())]) +
                              " " + std::string(kFiller[rng.below(kFiller.size())])});
      questions.push_back(q);

      const auto& first = docs_f[0].signature;
      answers.push_back({topic.id, facet_id, question_id,
                         "yes i am looking for " + first[0] + " especially " + first[0] + " and " +
                             first[1] + " but mostly " + first[0]});
    }
  }

  SyntheticBenchmark bench{Dataset(std::move(topics), std::move(facets), std::move(questions),
                                   std::move(answers)),
                           Corpus(std::move(docs)), std::move(qrels),
                           EmbeddingStore(kSyntheticEmbeddingDim)};
  // A question's vector encodes its facet word, which only the first
  // image's aspect repeats, so that image is always the closest match.
  for (const auto& q : bench.dataset.questions()) {
    const auto fw = q.text.substr(q.text.rfind(' ') + 1);
    bench.embeddings.add(q.id, hash_embed(fw + " " + fw, kSyntheticEmbeddingDim, seed));
    for (const auto& im : q.images)
      bench.embeddings.add(im.id, hash_embed(im.aspect, kSyntheticEmbeddingDim, seed));
    std::vector<std::string> ids;
    for (const auto& im : q.images) ids.push_back(im.id);
    if (select_images(bench.embeddings, q.id, ids, 1).front() != q.images.front().id)
      fail(ErrorCode::kIntegrity, "synthetic benchmark: first image of " + q.id + " is not the closest");
  }
  return bench;
}

void write_synthetic_benchmark(const SyntheticBenchmark& bench, const std::filesystem::path& dir) {
  detail::write_file(dir / "dataset.json", dataset_to_json(bench.dataset).dump(1) + "\n");
  save_corpus(bench.corpus, dir / "corpus.jsonl");
  save_qrels(bench.qrels, dir / "qrels.txt");
  bench.embeddings.save(dir / "embeddings.tsv");
}

}  // namespace clarifyir
