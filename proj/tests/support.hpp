// Shared fixtures and brute-force oracles. Nothing here calls the library
// routine it is used to check.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <unistd.h>
#include <vector>

#include "clarifyir/genret.hpp"
#include "clarifyir/multimodal.hpp"
#include "clarifyir/rng.hpp"

namespace testing {

inline const std::filesystem::path kSourceDir = CLARIFYIR_SOURCE_DIR;
inline const std::filesystem::path kSyntheticDir = kSourceDir / "data" / "synthetic";

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("clarifyir-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Random graded judgments and a ranking drawn from a shared document pool;
// some documents stay unjudged.
struct MetricFixture {
  std::vector<std::string> ranking;
  std::map<std::string, int> grades;
  int g_max = 1;
};

inline MetricFixture random_metric_fixture(clarifyir::SplitMix64& rng) {
  MetricFixture f;
  const auto pool = 1 + rng.below(14);
  const auto len = rng.below(11);
  std::vector<std::string> docs;
  for (std::uint64_t i = 0; i < pool; ++i) docs.push_back("d" + std::to_string(i));
  for (std::size_t i = docs.size() - 1; i > 0; --i) std::swap(docs[i], docs[rng.below(i + 1)]);
  for (std::size_t i = 0; i < len && i < docs.size(); ++i) f.ranking.push_back(docs[i]);
  f.g_max = 1 + static_cast<int>(rng.below(4));
  for (const auto& d : docs)
    if (rng.below(3) != 0) f.grades[d] = static_cast<int>(rng.below(static_cast<std::uint64_t>(f.g_max) + 1));
  return f;
}

// Embedding store over small primitive integer vectors. Duplicated vectors
// and distinct directions at equal angles both produce ties, which the
// oracle decides in exact integer arithmetic.
struct ImageFixture {
  clarifyir::EmbeddingStore store{3};
  std::map<std::string, std::vector<long>> raw;
  std::vector<std::string> candidates;
};

inline ImageFixture random_image_fixture(clarifyir::SplitMix64& rng) {
  ImageFixture f;
  auto draw = [&] {
    for (;;) {
      std::vector<long> v(3);
      for (auto& x : v) x = static_cast<long>(rng.below(5)) - 2;
      long g = 0;
      for (long x : v) g = std::gcd(g, std::labs(x));
      if (g == 1) return v;
    }
  };
  auto put = [&](const std::string& id, std::vector<long> v) {
    f.store.add(id, std::vector<double>(v.begin(), v.end()));
    f.raw[id] = std::move(v);
  };
  put("q", draw());
  const auto n = 1 + rng.below(8);
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::string id = "img" + std::to_string(rng.below(100));
    if (f.raw.contains(id)) continue;
    // Frequently duplicate an earlier candidate to force ties.
    if (!f.candidates.empty() && rng.below(3) == 0)
      put(id, f.raw.at(f.candidates[rng.below(f.candidates.size())]));
    else
      put(id, draw());
    f.candidates.push_back(id);
  }
  return f;
}

// Exact-arithmetic weak-label cases: every value is a multiple of 1/8.
struct TriplePair {
  clarifyir::NdcgTriple tor, mur;
};

inline TriplePair random_triples(clarifyir::SplitMix64& rng) {
  TriplePair t;
  for (auto& x : t.tor) x = static_cast<double>(rng.below(9)) / 8.0;
  switch (rng.below(3)) {
    case 0: t.mur = t.tor; break;
    case 1: t.mur = {t.tor[2], t.tor[0], t.tor[1]}; break;
    default:
      for (auto& x : t.mur) x = static_cast<double>(rng.below(9)) / 8.0;
  }
  return t;
}

// ---------------------------------------------------------------------------
// Metric oracles, written straight from the defining formulas.

namespace oracle {

using Grades = std::map<std::string, int>;

inline int grade_of(const Grades& g, const std::string& d) {
  auto it = g.find(d);
  return it == g.end() ? 0 : it->second;
}

inline double rr(const std::vector<std::string>& ranking, const Grades& g) {
  for (std::size_t r = 1; r <= ranking.size(); ++r)
    if (grade_of(g, ranking[r - 1]) > 0) return 1.0 / static_cast<double>(r);
  return 0.0;
}

inline double precision(const std::vector<std::string>& ranking, const Grades& g, std::size_t k) {
  double hits = 0;
  for (std::size_t r = 1; r <= k; ++r)
    if (r <= ranking.size() && grade_of(g, ranking[r - 1]) > 0) hits += 1;
  return hits / static_cast<double>(k);
}

inline double dcg(const std::vector<int>& grades, std::size_t k) {
  double s = 0;
  for (std::size_t r = 1; r <= k && r <= grades.size(); ++r)
    s += (std::pow(2.0, grades[r - 1]) - 1.0) / std::log2(static_cast<double>(r) + 1.0);
  return s;
}

inline double ndcg(const std::vector<std::string>& ranking, const Grades& g, std::size_t k) {
  std::vector<int> got;
  for (const auto& d : ranking) got.push_back(grade_of(g, d));
  std::vector<int> ideal;
  for (const auto& [d, grade] : g) ideal.push_back(grade);
  std::sort(ideal.rbegin(), ideal.rend());
  const double idcg = dcg(ideal, k);
  return idcg == 0.0 ? 0.0 : dcg(got, k) / idcg;
}

inline double err(const std::vector<std::string>& ranking, const Grades& g, std::size_t k, int g_max) {
  double total = 0;
  for (std::size_t r = 1; r <= k && r <= ranking.size(); ++r) {
    double not_stopped = 1;
    for (std::size_t i = 1; i < r; ++i)
      not_stopped *= 1.0 - (std::pow(2.0, grade_of(g, ranking[i - 1])) - 1.0) / std::pow(2.0, g_max);
    const double R = (std::pow(2.0, grade_of(g, ranking[r - 1])) - 1.0) / std::pow(2.0, g_max);
    total += not_stopped * R / static_cast<double>(r);
  }
  return total;
}

// ---------------------------------------------------------------------------
// Exhaustive enumeration of every identifier in a trie, scored token by
// token with the same scorer, ordered by score desc then tokens asc.

inline std::vector<clarifyir::BeamHypothesis> enumerate_all(const clarifyir::SequenceScorer& scorer,
                                                            const std::vector<std::string>& context,
                                                            const clarifyir::IdentifierTrie& trie) {
  std::vector<clarifyir::BeamHypothesis> out;
  for (const auto& id : trie.identifiers()) {
    double score = 0;
    bool ok = true;
    for (std::size_t i = 0; i < id.tokens.size(); ++i) {
      std::vector<std::string> prefix(id.tokens.begin(), id.tokens.begin() + i);
      const auto next = trie.allowed_next(prefix);
      const auto lps = scorer.next_token_logprobs(context, prefix, next.tokens);
      const auto pos = std::find(next.tokens.begin(), next.tokens.end(), id.tokens[i]) - next.tokens.begin();
      const double lp = lps[static_cast<std::size_t>(pos)];
      if (lp == -std::numeric_limits<double>::infinity()) {
        ok = false;
        break;
      }
      score += lp;
    }
    if (ok) out.push_back({id.tokens, score});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.tokens < b.tokens;
  });
  return out;
}

// Cosine argmax over exact integer vectors; equal cosines go to the
// smaller id. Compares sign(dot) * dot^2 / |v|^2 as an exact fraction.
inline std::string best_image(const ImageFixture& f) {
  const auto& q = f.raw.at("q");
  auto key = [&](const std::string& id) {
    const auto& v = f.raw.at(id);
    long dot = 0, norm = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      dot += v[i] * q[i];
      norm += v[i] * v[i];
    }
    return std::pair<long, long>{dot < 0 ? -dot * dot : dot * dot, norm};
  };
  // a/b > c/d  <=>  a*d > c*b for positive denominators.
  auto greater = [](std::pair<long, long> x, std::pair<long, long> y) { return x.first * y.second > y.first * x.second; };
  auto equal = [](std::pair<long, long> x, std::pair<long, long> y) { return x.first * y.second == y.first * x.second; };
  std::string best;
  std::pair<long, long> best_key{0, 1};
  for (const auto& id : f.candidates) {
    const auto k = key(id);
    if (best.empty() || greater(k, best_key) || (equal(k, best_key) && id < best)) {
      best = id;
      best_key = k;
    }
  }
  return best;
}

inline bool veq(const TriplePair& t) {
  // 8 * sum is an integer, so the comparison is exact.
  long tor = 0, mur = 0;
  for (double x : t.tor) tor += std::lround(x * 8);
  for (double x : t.mur) mur += std::lround(x * 8);
  return mur > tor;
}

}  // namespace oracle

// Random identifiers over a small alphabet so that prefixes are shared
// and collisions (handled by the dedup rule) occur.
inline std::vector<clarifyir::Identifier> random_identifiers(clarifyir::SplitMix64& rng,
                                                             std::size_t max_leaves,
                                                             std::size_t max_depth) {
  static const char* kAlphabet[] = {"a", "b", "c", "d", "e"};
  const auto n = 1 + rng.below(max_leaves);
  std::vector<clarifyir::Identifier> ids;
  for (std::size_t i = 0; i < n; ++i) {
    clarifyir::Identifier id;
    id.doc_id = "doc" + std::to_string(i);
    id.ordinal = i;
    const auto len = 1 + rng.below(max_depth - 1);  // leave room for a dedup suffix
    for (std::size_t t = 0; t < len; ++t) id.tokens.emplace_back(kAlphabet[rng.below(5)]);
    ids.push_back(std::move(id));
  }
  return ids;
}

// Deterministic scorer with coarse values, so ties are frequent, and an
// occasional -inf.
class HashScorer final : public clarifyir::SequenceScorer {
 public:
  explicit HashScorer(std::uint64_t seed, bool allow_forbidden = true)
      : seed_(seed), allow_forbidden_(allow_forbidden) {}

  std::vector<double> next_token_logprobs(std::span<const std::string> context,
                                          std::span<const std::string> prefix,
                                          std::span<const std::string> allowed) const override {
    std::vector<double> out;
    for (const auto& tok : allowed) {
      std::uint64_t h = seed_ ^ 0x51ed2701u;
      auto mix = [&](const std::string& s) {
        for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
        h = (h ^ 0xff) * 0x100000001b3ULL;
      };
      for (const auto& c : context) mix(c);
      for (const auto& p : prefix) mix(p);
      mix(tok);
      const auto v = clarifyir::SplitMix64(h).next() % 8;
      if (allow_forbidden_ && v == 7) {
        out.push_back(-std::numeric_limits<double>::infinity());
      } else {
        out.push_back(-0.25 * static_cast<double>(v));
      }
    }
    return out;
  }

 private:
  std::uint64_t seed_;
  bool allow_forbidden_;
};

}  // namespace testing
