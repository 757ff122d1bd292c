#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mhnet {

using TokenId = std::int32_t;

struct Post {
  std::string post_id;
  std::string user_id;
  std::string community;
  std::int64_t timestamp = 0;
  std::string text;
  std::vector<TokenId> tokens;  // filled by tokenize()
};

enum class UserLabel { control = 0, diagnosed = 1 };

std::string_view to_string(UserLabel label);
UserLabel parse_user_label(std::string_view s);

struct UserRecord {
  std::string user_id;
  std::vector<Post> posts;  // ascending by (timestamp, post_id)
  UserLabel label = UserLabel::control;
  std::optional<std::string> diagnosis_post_id;  // set iff diagnosed

  /// Throws if posts are out of order or the label/diagnosis pairing is broken.
  void validate() const;
};

/// Ordinal self-harm risk severity.
enum class RiskLabel : int { green = 0, amber = 1, red = 2, crisis = 3 };
inline constexpr int kNumRiskLabels = 4;

std::string_view to_string(RiskLabel label);
RiskLabel parse_risk_label(std::string_view s);
inline int ordinal(RiskLabel l) { return static_cast<int>(l); }
RiskLabel risk_label_from_ordinal(int v);

struct ThreadInstance {
  Post target;
  std::vector<Post> context;  // earlier posts in the thread, time-ordered
  RiskLabel label = RiskLabel::green;

  void validate() const;
};

/// A word with its byte span in the source text.
struct WordSpan {
  std::string word;  // lowercased
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Lowercased words: maximal runs of ASCII alphanumerics, inner apostrophes
/// and non-ASCII bytes. Everything else separates words.
std::vector<WordSpan> split_words(std::string_view text);
std::vector<std::string> words(std::string_view text);

class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;

  Vocabulary();

  /// Builds from training text only. Ids are assigned by descending
  /// frequency, ties broken lexicographically.
  static Vocabulary build(const std::vector<std::vector<std::string>>& documents,
                          std::size_t min_frequency);
  static Vocabulary from_tokens(const std::vector<std::string>& tokens_in_id_order);

  TokenId id(const std::string& token) const;
  const std::string& token(TokenId id) const;
  std::size_t size() const { return id_to_token_.size(); }
  bool contains(const std::string& token) const;
  /// Non-special tokens in id order (ids 2..size-1).
  std::vector<std::string> tokens() const;

 private:
  void add(const std::string& token);
  std::unordered_map<std::string, TokenId> token_to_id_;
  std::vector<std::string> id_to_token_;
};

std::vector<TokenId> tokenize(std::string_view text, const Vocabulary& vocab);

struct SentenceSplitter {
  /// Lowercase abbreviations including the trailing period, e.g. "dr.".
  std::vector<std::string> abbreviations;

  static SentenceSplitter with_defaults();
  static SentenceSplitter from_file(const std::string& path);

  std::vector<std::string> split(std::string_view text) const;
};

std::vector<std::string> split_sentences(std::string_view text);

class SentenceEncoder {
 public:
  virtual ~SentenceEncoder() = default;
  virtual std::size_t dim() const = 0;
  virtual std::vector<double> encode(std::string_view sentence) const = 0;
};

/// Signed feature hashing of word unigrams and bigrams into `dim` buckets,
/// L2-normalized. The empty sentence maps to the zero vector.
class HashedEncoder final : public SentenceEncoder {
 public:
  HashedEncoder(std::size_t dim, std::uint64_t seed);
  std::size_t dim() const override { return dim_; }
  std::vector<double> encode(std::string_view sentence) const override;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

/// Key used by FileEncoder: FNV-1a 64 of the sentence bytes, 16 hex digits.
std::string sentence_key(std::string_view sentence);

/// Precomputed vectors loaded from line-delimited JSON
/// {"key": "<sentence_key>", "vector": [...]}.
class FileEncoder final : public SentenceEncoder {
 public:
  explicit FileEncoder(const std::string& path);
  FileEncoder(std::size_t dim, std::unordered_map<std::string, std::vector<double>> table);
  std::size_t dim() const override { return dim_; }
  std::vector<double> encode(std::string_view sentence) const override;

 private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, std::vector<double>> table_;
};

std::vector<double> encode_sentence(std::string_view sentence, const SentenceEncoder& encoder);

// ---- line-delimited JSON corpus files ----

std::vector<Post> read_posts(const std::string& path);
void write_posts(const std::string& path, std::span<const Post> posts);

struct UserLabelRow {
  std::string user_id;
  UserLabel label = UserLabel::control;
  std::optional<std::string> diagnosis_post_id;
};

std::vector<UserLabelRow> read_user_labels(const std::string& path);
void write_user_labels(const std::string& path, std::span<const UserLabelRow> rows);

/// Groups posts by user (sorted by user_id), orders each user's posts and
/// attaches labels. Users absent from `labels` are controls.
std::vector<UserRecord> assemble_users(std::vector<Post> posts,
                                       std::span<const UserLabelRow> labels);

/// Thread instances: {"label": "amber", "target": {post}, "context": [{post}, ...]}.
/// Unlabelled rows are accepted (and read as green) only when `require_label` is false.
std::vector<ThreadInstance> read_threads(const std::string& path, bool require_label = true);
void write_threads(const std::string& path, std::span<const ThreadInstance> threads);

}  // namespace mhnet
