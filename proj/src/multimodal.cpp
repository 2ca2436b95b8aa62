#include "clarifyir/multimodal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "clarifyir/error.hpp"
#include "io.hpp"

namespace clarifyir {

using nlohmann::json;

namespace {

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

Vector hash_embed(std::string_view text, std::size_t dim, std::uint64_t seed) {
  if (dim < 8) fail(ErrorCode::kInvalidArgument, "hash_embed: dim must be >= 8");
  std::string lower(text);
  for (auto& c : lower)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  if (lower.size() < 3) fail(ErrorCode::kInvalidArgument, "hash_embed: text has no 3-grams");

  Vector v(dim, 0.0);
  for (std::size_t i = 0; i + 3 <= lower.size(); ++i) {
    const auto h = mix64(fnv1a(std::string_view(lower).substr(i, 3)) ^ mix64(seed));
    const double sign = (mix64(h) >> 63) ? -1.0 : 1.0;
    v[h % dim] += sign;
  }
  const double n = norm2(v);
  if (n == 0.0) fail(ErrorCode::kInvalidArgument, "hash_embed: 3-gram features cancel to zero");
  for (auto& x : v) x /= n;
  return v;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorCode::kInvalidArgument, "cosine: dimension mismatch");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  const double denom = norm2(a) * norm2(b);
  if (denom == 0.0) fail(ErrorCode::kInvalidArgument, "cosine: zero vector");
  return std::clamp(dot / denom, -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Embedding store

EmbeddingStore::EmbeddingStore(std::size_t dim) : dim_(dim) {
  if (dim == 0) fail(ErrorCode::kInvalidArgument, "embedding dim must be positive");
}

void EmbeddingStore::add(const std::string& id, Vector v) {
  if (v.size() != dim_)
    fail(ErrorCode::kParse, "embedding " + id + ": expected " + std::to_string(dim_) +
                                " values, got " + std::to_string(v.size()));
  const double n = norm2(v);
  if (n == 0.0) fail(ErrorCode::kParse, "embedding " + id + ": zero vector");
  // Already-unit vectors are kept bit-for-bit so save/load round-trips.
  if (std::fabs(n - 1.0) > kUnitTolerance)
    for (auto& x : v) x /= n;
  if (!vectors_.emplace(id, std::move(v)).second)
    fail(ErrorCode::kParse, "embedding " + id + ": duplicate id");
}

const Vector* EmbeddingStore::find(const std::string& id) const {
  auto it = vectors_.find(id);
  return it == vectors_.end() ? nullptr : &it->second;
}

void EmbeddingStore::save(const std::filesystem::path& path) const {
  std::string out = std::string(kFormatTag) + " " + std::to_string(dim_) + "\n";
  char buf[32];
  for (const auto& [id, v] : vectors_) {
    out += id;
    out += '\t';
    for (std::size_t i = 0; i < v.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", v[i]);
      if (i > 0) out += ' ';
      out += buf;
    }
    out += '\n';
  }
  detail::write_file(path, out);
}

EmbeddingStore parse_embeddings(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::kParse, "embeddings: empty file");
  std::istringstream header(line);
  std::string magic, version;
  long long dim = 0;
  if (!(header >> magic >> version >> dim) || magic + " " + version != EmbeddingStore::kFormatTag || dim <= 0)
    fail(ErrorCode::kParse, "embeddings: expected header \"" + std::string(EmbeddingStore::kFormatTag) + " <dim>\"");

  EmbeddingStore store(static_cast<std::size_t>(dim));
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    // The id ends at the first tab; rows without a tab fall back to the
    // first whitespace run.
    auto sep = line.find('\t');
    if (sep == std::string::npos) sep = line.find(' ');
    if (sep == std::string::npos || sep == 0)
      fail(ErrorCode::kParse, "embeddings line " + std::to_string(line_no) + ": missing id separator");
    const std::string id = line.substr(0, sep);
    std::istringstream values(line.substr(sep + 1));
    Vector v;
    std::string field;
    while (values >> field) {
      std::size_t used = 0;
      double x = 0.0;
      try {
        x = std::stod(field, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != field.size() || !std::isfinite(x))
        fail(ErrorCode::kParse, "embeddings line " + std::to_string(line_no) + ": bad number \"" +
                                    field + "\"");
      v.push_back(x);
    }
    try {
      store.add(id, std::move(v));
    } catch (const Error& e) {
      fail(e.code(), "embeddings line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return store;
}

EmbeddingStore load_embeddings(const std::filesystem::path& path) {
  try {
    return parse_embeddings(detail::read_file(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kIo) throw;
    fail(e.code(), path.string() + ": " + e.what());
  }
}

std::vector<std::string> select_images(const EmbeddingStore& store, const std::string& question_id,
                                       std::span<const std::string> candidate_image_ids,
                                       std::size_t k) {
  if (k == 0) fail(ErrorCode::kInvalidArgument, "select_images: k must be >= 1");
  const auto* q = store.find(question_id);
  if (!q) fail(ErrorCode::kNotFound, "no embedding for question " + question_id);
  std::vector<std::pair<double, std::string>> scored;
  for (const auto& id : candidate_image_ids) {
    const auto* v = store.find(id);
    if (!v) fail(ErrorCode::kNotFound, "no embedding for image " + id);
    scored.emplace_back(cosine(*q, *v), id);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  // Cosines that agree to within rounding are ties: regroup each run of
  // near-equal scores (anchored at its highest) by ascending id.
  for (std::size_t begin = 0; begin < scored.size();) {
    std::size_t end = begin + 1;
    while (end < scored.size() && scored[begin].first - scored[end].first <= kCosineTieTolerance) ++end;
    std::sort(scored.begin() + static_cast<std::ptrdiff_t>(begin), scored.begin() + static_cast<std::ptrdiff_t>(end),
              [](const auto& a, const auto& b) { return a.second < b.second; });
    begin = end;
  }
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(k, scored.size()); ++i) out.push_back(scored[i].second);
  return out;
}

// ---------------------------------------------------------------------------
// Weak labels

const char* class_label_name(ClassLabel label) { return label == ClassLabel::kVeq ? "VEQ" : "TEQ"; }

ClassLabel parse_class_label(const std::string& name) {
  if (name == "VEQ") return ClassLabel::kVeq;
  if (name == "TEQ") return ClassLabel::kTeq;
  fail(ErrorCode::kParse, "unknown class label \"" + name + "\"");
}

WeakLabel weak_label(const NdcgTriple& tor, const NdcgTriple& mur) {
  for (double x : tor)
    if (!(x >= 0.0 && x <= 1.0)) fail(ErrorCode::kInvalidArgument, "weak_label: nDCG outside [0,1]");
  for (double x : mur)
    if (!(x >= 0.0 && x <= 1.0)) fail(ErrorCode::kInvalidArgument, "weak_label: nDCG outside [0,1]");
  const double mean_tor = (tor[0] + tor[1] + tor[2]) / 3.0;
  const double mean_mur = (mur[0] + mur[1] + mur[2]) / 3.0;
  WeakLabel out;
  out.delta = mean_mur - mean_tor;
  out.label = out.delta > 0.0 ? ClassLabel::kVeq : ClassLabel::kTeq;
  return out;
}

WeakLabelRecord aggregate_weak_labels(const std::string& question_id,
                                      std::vector<double> facet_deltas) {
  if (facet_deltas.empty())
    fail(ErrorCode::kInvalidArgument, "question " + question_id + " has no facet deltas");
  WeakLabelRecord r;
  r.question_id = question_id;
  double sum = 0.0;
  for (double d : facet_deltas) sum += d;
  r.delta = sum / static_cast<double>(facet_deltas.size());
  r.label = r.delta > 0.0 ? ClassLabel::kVeq : ClassLabel::kTeq;
  r.facet_deltas = std::move(facet_deltas);
  return r;
}

void save_weak_labels(std::span<const WeakLabelRecord> records, const std::filesystem::path& path) {
  std::string out;
  for (const auto& r : records) {
    out += json{{"question_id", r.question_id},
                {"delta", r.delta},
                {"label", class_label_name(r.label)},
                {"facet_deltas", r.facet_deltas}}
               .dump();
    out += '\n';
  }
  detail::write_file(path, out);
}

std::map<std::string, WeakLabelRecord> load_weak_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::map<std::string, WeakLabelRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = path.string() + ":" + std::to_string(line_no);
    try {
      const auto row = json::parse(line);
      WeakLabelRecord r;
      r.question_id = row.at("question_id").get<std::string>();
      r.delta = row.at("delta").get<double>();
      r.label = parse_class_label(row.at("label").get<std::string>());
      if (auto it = row.find("facet_deltas"); it != row.end())
        r.facet_deltas = it->get<std::vector<double>>();
      if ((r.delta > 0.0) != (r.label == ClassLabel::kVeq))
        fail(ErrorCode::kIntegrity, where + ": label disagrees with the sign of delta");
      const auto id = r.question_id;
      if (!out.emplace(id, std::move(r)).second)
        fail(ErrorCode::kIntegrity, where + ": duplicate question " + id);
    } catch (const json::exception& e) {
      fail(ErrorCode::kParse, where + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Classifier

ReferenceClassifier ReferenceClassifier::train(std::span<const ClassifierSample> samples,
                                               double alpha) {
  if (!(alpha > 0.0)) fail(ErrorCode::kInvalidArgument, "classifier: alpha must be positive");
  ReferenceClassifier clf;
  clf.alpha_ = alpha;
  for (const auto& s : samples) {
    const auto c = index(s.label);
    ++clf.docs_[c];
    for (const auto& token : tokenize(s.query + " " + s.question)) {
      ++clf.vocab_[token][c];
      ++clf.tokens_[c];
    }
  }
  if (clf.docs_[0] == 0 || clf.docs_[1] == 0)
    fail(ErrorCode::kInvalidArgument, "classifier: training data must contain both classes");
  const double total = static_cast<double>(clf.docs_[0] + clf.docs_[1]);
  for (std::size_t c = 0; c < 2; ++c)
    clf.log_prior_[c] = std::log(static_cast<double>(clf.docs_[c]) / total);
  return clf;
}

double ReferenceClassifier::log_likelihood(ClassLabel label, const std::string& token) const {
  const auto c = index(label);
  std::uint64_t count = 0;
  if (auto it = vocab_.find(token); it != vocab_.end()) count = it->second[c];
  const double denom =
      static_cast<double>(tokens_[c]) + alpha_ * static_cast<double>(vocab_.size() + 1);
  return std::log((static_cast<double>(count) + alpha_) / denom);
}

std::array<double, 2> ReferenceClassifier::class_scores(const TokenStream& tokens) const {
  std::array<double, 2> s = log_prior_;
  for (const auto& token : tokens) {
    if (!vocab_.contains(token)) continue;
    s[0] += log_likelihood(ClassLabel::kTeq, token);
    s[1] += log_likelihood(ClassLabel::kVeq, token);
  }
  return s;
}

Classification ReferenceClassifier::classify(std::string_view query, std::string_view question) const {
  std::string text(query);
  text += ' ';
  text += question;
  const auto s = class_scores(tokenize(text));
  // P(VEQ | x) = 1 / (1 + exp(s_teq - s_veq))
  const double p_veq = 1.0 / (1.0 + std::exp(s[0] - s[1]));
  if (s[1] > s[0]) return {ClassLabel::kVeq, p_veq};
  return {ClassLabel::kTeq, 1.0 - p_veq};
}

json ReferenceClassifier::to_json() const {
  json vocab = json::object();
  for (const auto& [token, counts] : vocab_) vocab[token] = {counts[0], counts[1]};
  return {{"format", kFormatTag},
          {"alpha", alpha_},
          {"docs", {docs_[0], docs_[1]}},
          {"tokens", {tokens_[0], tokens_[1]}},
          {"vocab", std::move(vocab)}};
}

ReferenceClassifier ReferenceClassifier::from_json(const json& doc) {
  if (!doc.is_object() || doc.value("format", "") != kFormatTag)
    fail(ErrorCode::kParse, "classifier: missing \"" + std::string(kFormatTag) + "\" tag");
  ReferenceClassifier clf;
  try {
    clf.alpha_ = doc.at("alpha").get<double>();
    clf.docs_ = doc.at("docs").get<std::array<std::uint64_t, 2>>();
    clf.tokens_ = doc.at("tokens").get<std::array<std::uint64_t, 2>>();
    for (const auto& [token, counts] : doc.at("vocab").items())
      clf.vocab_[token] = counts.get<std::array<std::uint64_t, 2>>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("classifier: ") + e.what());
  }
  if (clf.docs_[0] == 0 || clf.docs_[1] == 0 || !(clf.alpha_ > 0.0))
    fail(ErrorCode::kParse, "classifier: invalid parameters");
  const double total = static_cast<double>(clf.docs_[0] + clf.docs_[1]);
  for (std::size_t c = 0; c < 2; ++c)
    clf.log_prior_[c] = std::log(static_cast<double>(clf.docs_[c]) / total);
  return clf;
}

void ReferenceClassifier::save(const std::filesystem::path& path) const {
  detail::write_file(path, to_json().dump(1) + "\n");
}

ReferenceClassifier ReferenceClassifier::load(const std::filesystem::path& path) {
  return from_json(detail::parse_json(detail::read_file(path), path.string()));
}

}  // namespace clarifyir
