#include "mhnet/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "json.hpp"
#include "mhnet/common.hpp"

namespace mhnet {

using json = nlohmann::ordered_json;

std::string_view to_string(UserLabel label) {
  return label == UserLabel::diagnosed ? "diagnosed" : "control";
}

UserLabel parse_user_label(std::string_view s) {
  if (s == "diagnosed") return UserLabel::diagnosed;
  if (s == "control") return UserLabel::control;
  throw Error("unknown user label: " + std::string(s));
}

void UserRecord::validate() const {
  for (std::size_t i = 1; i < posts.size(); ++i) {
    if (posts[i].timestamp < posts[i - 1].timestamp) {
      throw Error("user " + user_id + ": posts not in time order");
    }
  }
  if ((label == UserLabel::diagnosed) != diagnosis_post_id.has_value()) {
    throw Error("user " + user_id + ": diagnosis_post_id must be present iff diagnosed");
  }
}

std::string_view to_string(RiskLabel label) {
  switch (label) {
    case RiskLabel::green: return "green";
    case RiskLabel::amber: return "amber";
    case RiskLabel::red: return "red";
    case RiskLabel::crisis: return "crisis";
  }
  return "green";
}

RiskLabel parse_risk_label(std::string_view s) {
  if (s == "green") return RiskLabel::green;
  if (s == "amber") return RiskLabel::amber;
  if (s == "red") return RiskLabel::red;
  if (s == "crisis") return RiskLabel::crisis;
  throw Error("unknown risk label: " + std::string(s));
}

RiskLabel risk_label_from_ordinal(int v) {
  if (v < 0 || v >= kNumRiskLabels) throw Error("risk label ordinal out of range: " + std::to_string(v));
  return static_cast<RiskLabel>(v);
}

void ThreadInstance::validate() const {
  for (const auto& p : context) {
    if (p.timestamp >= target.timestamp) {
      throw Error("thread instance " + target.post_id + ": context post " + p.post_id +
                  " is not earlier than the target");
    }
  }
}

// ---------------------------------------------------------------------------
// Words and vocabulary

namespace {

bool is_word_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

char ascii_lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

}  // namespace

std::vector<WordSpan> split_words(std::string_view text) {
  std::vector<WordSpan> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    if (!is_word_byte(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    WordSpan w;
    w.begin = i;
    while (i < n) {
      const auto c = static_cast<unsigned char>(text[i]);
      if (is_word_byte(c)) {
        w.word.push_back(ascii_lower(static_cast<char>(c)));
        ++i;
      } else if (c == '\'' && i + 1 < n && is_word_byte(static_cast<unsigned char>(text[i + 1]))) {
        w.word.push_back('\'');
        ++i;
      } else {
        break;
      }
    }
    w.end = i;
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<std::string> words(std::string_view text) {
  std::vector<std::string> out;
  for (auto& w : split_words(text)) out.push_back(std::move(w.word));
  return out;
}

Vocabulary::Vocabulary() {
  id_to_token_ = {"<pad>", "<unk>"};
}

void Vocabulary::add(const std::string& token) {
  if (token_to_id_.count(token)) throw Error("duplicate vocabulary token: " + token);
  token_to_id_.emplace(token, static_cast<TokenId>(id_to_token_.size()));
  id_to_token_.push_back(token);
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& documents,
                             std::size_t min_frequency) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& doc : documents)
    for (const auto& t : doc) ++counts[t];
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [t, c] : counts)
    if (c >= min_frequency) kept.emplace_back(t, c);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  Vocabulary v;
  for (auto& [t, c] : kept) v.add(t);
  return v;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens_in_id_order) {
  Vocabulary v;
  for (const auto& t : tokens_in_id_order) v.add(t);
  return v;
}

TokenId Vocabulary::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw Error("token id out of range: " + std::to_string(id));
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(const std::string& token) const { return token_to_id_.count(token) > 0; }

std::vector<std::string> Vocabulary::tokens() const {
  return {id_to_token_.begin() + 2, id_to_token_.end()};
}

std::vector<TokenId> tokenize(std::string_view text, const Vocabulary& vocab) {
  std::vector<TokenId> ids;
  for (const auto& w : split_words(text)) ids.push_back(vocab.id(w.word));
  return ids;
}

// ---------------------------------------------------------------------------
// Sentences

SentenceSplitter SentenceSplitter::with_defaults() {
  return {{"dr.", "mr.", "mrs.", "ms.", "prof.", "st.", "jr.", "sr.", "vs.", "etc.", "e.g.",
           "i.e.", "no.", "approx.", "dept.", "mt."}};
}

SentenceSplitter SentenceSplitter::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open abbreviation list: " + path);
  SentenceSplitter s;
  std::string line;
  while (std::getline(in, line)) {
    auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    auto e = line.find_last_not_of(" \t\r");
    std::string abbr = line.substr(b, e - b + 1);
    std::transform(abbr.begin(), abbr.end(), abbr.begin(), ascii_lower);
    s.abbreviations.push_back(abbr);
  }
  return s;
}

std::vector<std::string> SentenceSplitter::split(std::string_view text) const {
  std::vector<std::string> out;
  const std::size_t n = text.size();
  std::size_t start = 0;
  auto emit = [&](std::size_t end) {
    auto b = text.find_first_not_of(" \t\r\n", start);
    if (b != std::string_view::npos && b < end) {
      auto e = text.find_last_not_of(" \t\r\n", end - 1);
      out.emplace_back(text.substr(b, e - b + 1));
    }
  };
  std::size_t i = 0;
  while (i < n) {
    const char c = text[i];
    if (c != '.' && c != '!' && c != '?') {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && (text[j] == '.' || text[j] == '!' || text[j] == '?')) ++j;
    std::size_t k = j;
    while (k < n && (text[k] == ' ' || text[k] == '\t' || text[k] == '\n' || text[k] == '\r')) ++k;
    const bool boundary = k > j && k < n && text[k] >= 'A' && text[k] <= 'Z';
    bool abbreviation = false;
    if (boundary && c == '.' && j == i + 1) {
      std::size_t w = i;
      while (w > start && text[w - 1] != ' ' && text[w - 1] != '\t' && text[w - 1] != '\n') --w;
      std::string tok(text.substr(w, i + 1 - w));
      std::transform(tok.begin(), tok.end(), tok.begin(), ascii_lower);
      abbreviation = std::find(abbreviations.begin(), abbreviations.end(), tok) != abbreviations.end();
    }
    if (boundary && !abbreviation) {
      emit(j);
      start = k;
    }
    i = j;
  }
  emit(n);
  return out;
}

std::vector<std::string> split_sentences(std::string_view text) {
  static const SentenceSplitter splitter = SentenceSplitter::with_defaults();
  return splitter.split(text);
}

// ---------------------------------------------------------------------------
// Encoders

HashedEncoder::HashedEncoder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim == 0) throw Error("hashed encoder: dimension must be positive");
}

std::vector<double> HashedEncoder::encode(std::string_view sentence) const {
  std::vector<double> v(dim_, 0.0);
  const auto ws = words(sentence);
  auto add = [&](const std::string& feature) {
    const std::uint64_t h = splitmix64(fnv1a64(feature) ^ seed_);
    const double sign = (h >> 63) ? -1.0 : 1.0;
    v[static_cast<std::size_t>(h % dim_)] += sign;
  };
  for (std::size_t i = 0; i < ws.size(); ++i) {
    add("1:" + ws[i]);
    if (i + 1 < ws.size()) add("2:" + ws[i] + " " + ws[i + 1]);
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
  }
  return v;
}

std::string sentence_key(std::string_view sentence) { return hex64(fnv1a64(sentence)); }

FileEncoder::FileEncoder(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open sentence vector file: " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = json::parse(line);
      auto key = j.at("key").get<std::string>();
      auto vec = j.at("vector").get<std::vector<double>>();
      if (dim_ == 0) dim_ = vec.size();
      if (vec.size() != dim_ || dim_ == 0) throw Error("inconsistent vector dimension");
      for (double x : vec)
        if (!std::isfinite(x)) throw Error("non-finite vector entry");
      table_[key] = std::move(vec);
    } catch (const std::exception& e) {
      throw Error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (dim_ == 0) throw Error(path + ": no sentence vectors");
}

FileEncoder::FileEncoder(std::size_t dim, std::unordered_map<std::string, std::vector<double>> table)
    : dim_(dim), table_(std::move(table)) {}

std::vector<double> FileEncoder::encode(std::string_view sentence) const {
  const auto key = sentence_key(sentence);
  auto it = table_.find(key);
  if (it == table_.end()) {
    throw Error("no precomputed vector for sentence \"" + std::string(sentence) + "\" (key " + key + ")");
  }
  return it->second;
}

std::vector<double> encode_sentence(std::string_view sentence, const SentenceEncoder& encoder) {
  return encoder.encode(sentence);
}

// ---------------------------------------------------------------------------
// Files

namespace {

json post_to_json(const Post& p) {
  json j;
  j["post_id"] = p.post_id;
  j["user_id"] = p.user_id;
  j["community"] = p.community;
  j["timestamp"] = p.timestamp;
  j["text"] = p.text;
  return j;
}

Post post_from_json(const json& j) {
  Post p;
  p.post_id = j.at("post_id").get<std::string>();
  p.user_id = j.value("user_id", std::string{});
  p.community = j.value("community", std::string{});
  p.timestamp = j.at("timestamp").get<std::int64_t>();
  p.text = j.at("text").get<std::string>();
  return p;
}

template <typename F>
void for_each_json_line(const std::string& path, F&& f) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      f(json::parse(line));
    } catch (const std::exception& e) {
      throw Error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  return out;
}

}  // namespace

std::vector<Post> read_posts(const std::string& path) {
  std::vector<Post> posts;
  std::set<std::string> seen;
  for_each_json_line(path, [&](const json& j) {
    Post p = post_from_json(j);
    if (p.user_id.empty()) throw Error("missing user_id");
    if (!seen.insert(p.post_id).second) throw Error("duplicate post_id " + p.post_id);
    posts.push_back(std::move(p));
  });
  return posts;
}

void write_posts(const std::string& path, std::span<const Post> posts) {
  auto out = open_out(path);
  for (const auto& p : posts) out << post_to_json(p).dump() << '\n';
}

std::vector<UserLabelRow> read_user_labels(const std::string& path) {
  std::vector<UserLabelRow> rows;
  for_each_json_line(path, [&](const json& j) {
    UserLabelRow r;
    r.user_id = j.at("user_id").get<std::string>();
    r.label = parse_user_label(j.at("label").get<std::string>());
    if (j.contains("diagnosis_post_id") && !j["diagnosis_post_id"].is_null()) {
      r.diagnosis_post_id = j["diagnosis_post_id"].get<std::string>();
    }
    rows.push_back(std::move(r));
  });
  return rows;
}

void write_user_labels(const std::string& path, std::span<const UserLabelRow> rows) {
  auto out = open_out(path);
  for (const auto& r : rows) {
    json j;
    j["user_id"] = r.user_id;
    j["label"] = to_string(r.label);
    if (r.diagnosis_post_id) j["diagnosis_post_id"] = *r.diagnosis_post_id;
    out << j.dump() << '\n';
  }
}

std::vector<UserRecord> assemble_users(std::vector<Post> posts, std::span<const UserLabelRow> labels) {
  std::map<std::string, UserRecord> users;
  for (auto& p : posts) {
    auto& u = users[p.user_id];
    u.user_id = p.user_id;
    u.posts.push_back(std::move(p));
  }
  for (const auto& r : labels) {
    auto it = users.find(r.user_id);
    if (it == users.end()) {
      // Labelled users with no posts still exist as records.
      it = users.emplace(r.user_id, UserRecord{}).first;
      it->second.user_id = r.user_id;
    }
    it->second.label = r.label;
    it->second.diagnosis_post_id = r.diagnosis_post_id;
  }
  std::vector<UserRecord> out;
  out.reserve(users.size());
  for (auto& [id, u] : users) {
    std::sort(u.posts.begin(), u.posts.end(), [](const Post& a, const Post& b) {
      return a.timestamp != b.timestamp ? a.timestamp < b.timestamp : a.post_id < b.post_id;
    });
    u.validate();
    out.push_back(std::move(u));
  }
  return out;
}

std::vector<ThreadInstance> read_threads(const std::string& path, bool require_label) {
  std::vector<ThreadInstance> out;
  for_each_json_line(path, [&](const json& j) {
    ThreadInstance t;
    if (require_label || j.contains("label")) t.label = parse_risk_label(j.at("label").get<std::string>());
    t.target = post_from_json(j.at("target"));
    for (const auto& c : j.value("context", json::array())) t.context.push_back(post_from_json(c));
    t.validate();
    out.push_back(std::move(t));
  });
  return out;
}

void write_threads(const std::string& path, std::span<const ThreadInstance> threads) {
  auto out = open_out(path);
  for (const auto& t : threads) {
    json j;
    j["label"] = to_string(t.label);
    j["target"] = post_to_json(t.target);
    json ctx = json::array();
    for (const auto& c : t.context) ctx.push_back(post_to_json(c));
    j["context"] = std::move(ctx);
    out << j.dump() << '\n';
  }
}

}  // namespace mhnet
