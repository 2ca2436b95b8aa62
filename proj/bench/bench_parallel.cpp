// Serial reference loops vs OpenMP kernels on a generated corpus and the
// synthetic benchmark. Arg 0 = serial, 1 = parallel.
#include <benchmark/benchmark.h>

#include <filesystem>
#include <fstream>
#include <optional>

#include "clarifyir/fixture.hpp"
#include "clarifyir/genret.hpp"
#include "clarifyir/harness.hpp"
#include "clarifyir/lexical.hpp"
#include "clarifyir/rng.hpp"

using namespace clarifyir;

namespace {

Execution exec_of(const benchmark::State& state) {
  return state.range(0) == 0 ? Execution::kSerial : Execution::kParallel;
}

const Corpus& large_corpus() {
  static const Corpus corpus = [] {
    SplitMix64 rng(3);
    std::vector<std::string> vocab;
    for (int i = 0; i < 5000; ++i) vocab.push_back("w" + std::to_string(i));
    std::vector<Document> docs;
    for (std::uint64_t i = 0; i < 20000; ++i) {
      std::string text;
      const auto len = 20 + rng.below(180);
      for (std::uint64_t j = 0; j < len; ++j) {
        // Skewed term frequencies: low ids are common.
        const auto r = rng.below(vocab.size());
        text += vocab[rng.below(r + 1)] + " ";
      }
      docs.push_back({"doc" + std::to_string(i), i, std::move(text), {}});
    }
    return Corpus(std::move(docs));
  }();
  return corpus;
}

std::vector<TokenStream> queries(std::size_t n) {
  SplitMix64 rng(4);
  std::vector<TokenStream> out(n);
  for (auto& q : out)
    for (int i = 0; i < 4; ++i) q.push_back("w" + std::to_string(rng.below(2000)));
  return out;
}

void BM_IndexBuild(benchmark::State& state) {
  const auto& corpus = large_corpus();
  for (auto _ : state) benchmark::DoNotOptimize(InvertedIndex::build(corpus, exec_of(state)));
}
BENCHMARK(BM_IndexBuild)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_BatchSearch(benchmark::State& state) {
  static const auto index = InvertedIndex::build(large_corpus());
  static const auto qs = queries(256);
  for (auto _ : state)
    benchmark::DoNotOptimize(batch_search(index, qs, 100, RankModel::kBm25, exec_of(state)));
}
BENCHMARK(BM_BatchSearch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Identifiers(benchmark::State& state) {
  static const auto index = InvertedIndex::build(large_corpus());
  for (auto _ : state)
    benchmark::DoNotOptimize(make_identifiers(large_corpus(), IdentifierStrategy::kDocK, index, exec_of(state)));
}
BENCHMARK(BM_Identifiers)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

// Generative reranking over the synthetic benchmark with artifacts built
// in a scratch directory.
struct SyntheticPipeline {
  std::filesystem::path work;
  std::optional<Pipeline> pipeline;
  std::vector<Sample> samples;

  SyntheticPipeline() {
    work = std::filesystem::temp_directory_path() / "clarifyir-bench";
    std::filesystem::create_directories(work);
    const std::filesystem::path data = std::filesystem::path(CLARIFYIR_SOURCE_DIR) / "data" / "synthetic";
    ExperimentConfig c;
    c.base_dir = data;
    c.paths.dataset = "dataset.json";
    c.paths.corpus = "corpus.jsonl";
    c.paths.qrels = "qrels.txt";
    c.paths.embeddings = "embeddings.tsv";
    c.paths.split = (work / "split.json").string();
    c.paths.index = (work / "index.txt").string();
    c.paths.identifiers = (work / "identifiers.jsonl").string();
    c.paths.scorer = (work / "scorer.json").string();
    c.mode = RunMode::kGenRerankMultimodal;
    c.eval_split = EvalSplit::kAll;

    const auto dataset = load_dataset(c.resolve(c.paths.dataset));
    std::ofstream(c.resolve(c.paths.split)) << split_to_json(split_facets(dataset, c.split_ratios, c.seed)).dump();
    const auto corpus = load_corpus(c.resolve(c.paths.corpus));
    const auto index = InvertedIndex::build(corpus);
    index.save(c.resolve(c.paths.index));
    save_identifiers(make_identifiers(corpus, c.identifier_strategy, index), c.identifier_strategy,
                     c.resolve(c.paths.identifiers));
    {
      const auto p = Pipeline::load(c, {.scorer = true});
      ReferenceScorer::train(scorer_training_pairs(p), c.scorer_lambdas).save(c.resolve(c.paths.scorer));
    }
    pipeline.emplace(Pipeline::load(c));
    samples = pipeline->samples(EvalSplit::kAll);
  }
  ~SyntheticPipeline() {
    std::error_code ec;
    std::filesystem::remove_all(work, ec);
  }
};

void BM_RankAll(benchmark::State& state) {
  static const SyntheticPipeline s;
  for (auto _ : state) benchmark::DoNotOptimize(s.pipeline->rank_all(s.samples, exec_of(state)));
}
BENCHMARK(BM_RankAll)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
