#include "clarifyir/text.hpp"

#include <algorithm>
#include <array>

#include "clarifyir/error.hpp"

namespace clarifyir {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParse: return "E_PARSE";
    case ErrorCode::kIntegrity: return "E_INTEGRITY";
    case ErrorCode::kInvalidArgument: return "E_ARG";
    case ErrorCode::kIo: return "E_IO";
    case ErrorCode::kMissingArtifact: return "E_ARTIFACT";
    case ErrorCode::kNotFound: return "E_NOT_FOUND";
  }
  return "E_UNKNOWN";
}

TokenStream tokenize(std::string_view text) {
  TokenStream tokens;
  std::string current;
  for (char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
      current.push_back(static_cast<char>(c));
    } else if (c >= 'A' && c <= 'Z') {
      current.push_back(static_cast<char>(c - 'A' + 'a'));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

namespace {

// Sorted for binary search.
constexpr std::array<std::string_view, 127> kStopwords = {
    "a",       "about",   "above",  "after",   "again",    "against", "all",
    "am",      "an",      "and",    "any",     "are",      "as",      "at",
    "be",      "because", "been",   "before",  "being",    "below",   "between",
    "both",    "but",     "by",     "can",     "could",    "did",     "do",
    "does",    "doing",   "down",   "during",  "each",     "few",     "for",
    "from",    "further", "had",    "has",     "have",     "having",  "he",
    "her",     "here",    "hers",   "herself", "him",      "himself", "his",
    "how",     "i",       "if",     "in",      "into",     "is",      "it",
    "its",     "itself",  "just",   "me",      "more",     "most",    "my",
    "myself",  "no",      "nor",    "not",     "now",      "of",      "off",
    "on",      "once",    "only",   "or",      "other",    "our",     "ours",
    "ourselves", "out",   "over",   "own",     "s",        "same",    "she",
    "should",  "so",      "some",   "such",    "t",        "than",    "that",
    "the",     "their",   "theirs", "them",    "themselves", "then",  "there",
    "these",   "they",    "this",   "those",   "through",  "to",      "too",
    "under",   "until",   "up",     "very",    "was",      "we",      "were",
    "what",    "when",    "where",  "which",   "while",    "who",     "whom",
    "why",     "will",    "with",   "would",   "you",      "your",    "yours",
    "yourself", };

}  // namespace

bool is_stopword(std::string_view token) {
  return std::binary_search(kStopwords.begin(), kStopwords.end(), token);
}

}  // namespace clarifyir
