#pragma once

#include <cstdint>
#include <filesystem>

#include "clarifyir/corpus.hpp"
#include "clarifyir/multimodal.hpp"

namespace clarifyir {

// Small deterministic benchmark shaped like the real data: 10 topics x 5
// facets, 4 relevant documents per facet (200 documents), one multimodal
// question with three images per facet and one answer per facet.
//
// Every document carries five unique pseudo-words three times each, which
// makes them its top-5 tf-idf keywords and its keyword identifier. The
// answer names the first identifier token of one relevant document three
// times. For facets flagged helpful, the best-matching image's aspect names
// the other three relevant documents twice each; otherwise it names
// documents of a sibling facet once each, which demotes relevant documents
// below rank 1 but never displaces the answer's document. Helpful questions
// ask to "see photos", unhelpful ones ask about "history", so a text
// classifier can learn the split.
inline constexpr std::uint64_t kSyntheticSeed = 2024;
inline constexpr std::size_t kSyntheticEmbeddingDim = 128;

struct SyntheticBenchmark {
  Dataset dataset;
  Corpus corpus;
  Qrels qrels;
  EmbeddingStore embeddings{kSyntheticEmbeddingDim};
};

SyntheticBenchmark make_synthetic_benchmark(std::uint64_t seed = kSyntheticSeed);

// dataset.json, corpus.jsonl, qrels.txt, embeddings.tsv
void write_synthetic_benchmark(const SyntheticBenchmark& bench, const std::filesystem::path& dir);

}  // namespace clarifyir
