#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mhnet/config.hpp"
#include "mhnet/corpus.hpp"

namespace mhnet {

/// Literal diagnosis patterns plus the cues that veto a match.
struct DiagnosisPattern {
  std::vector<std::vector<std::string>> patterns;  // each a lowercase word sequence
  std::set<std::string> negation_cues;
  std::set<std::string> hypothetical_cues;
  std::size_t cue_window = 5;  // words inspected before the pattern
  bool reject_quoted = true;

  static DiagnosisPattern with_defaults();
  static DiagnosisPattern from_config(const Config& cfg);
  /// Patterns lowercase and disjoint from the cue lists.
  void validate() const;
};

struct TextSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const TextSpan&) const = default;
};

/// First accepted pattern occurrence in `text`, if any.
std::optional<TextSpan> match_diagnosis(std::string_view text, const DiagnosisPattern& pat);

/// True when byte offset `pos` lies inside an open quotation.
bool inside_quotes(std::string_view text, std::size_t pos);

struct DiagnosisMatch {
  std::string post_id;
  TextSpan span;
};

/// Earliest post of `user` carrying an accepted diagnosis statement.
std::optional<DiagnosisMatch> find_diagnosis_post(const UserRecord& user, const DiagnosisPattern& pat);

struct DiagnosisCandidate {
  std::string user_id;
  std::string post_id;
};

/// post_id -> annotator votes.
using Annotations = std::map<std::string, std::vector<bool>>;

/// Line-delimited JSON rows {"post_id": ..., "votes": [true, false, ...]}.
Annotations read_annotations(const std::string& path);

/// Keeps candidates whose diagnosis post has at least `min_votes` positive
/// votes. Annotation rows naming a post that is not a candidate are rejected.
std::vector<DiagnosisCandidate> apply_annotations(const std::vector<DiagnosisCandidate>& candidates,
                                                  const Annotations& annotations,
                                                  std::size_t min_votes = 2);

bool eligible_diagnosed(const UserRecord& user, const std::string& diagnosis_post_id,
                        std::size_t min_prior_posts = 100);

struct MentalHealthLexicon {
  std::set<std::string> communities;  // lowercase
  std::set<std::string> terms;        // lowercase single words

  static MentalHealthLexicon with_defaults();
  static MentalHealthLexicon from_config(const Config& cfg);

  bool in_mh_community(const Post& p) const;
  bool has_mh_term(const Post& p) const;
  bool offending(const Post& p) const { return in_mh_community(p) || has_mh_term(p); }
};

bool eligible_control(const UserRecord& user, const MentalHealthLexicon& lex);

/// Drops posts in mental-health communities or containing mental-health terms,
/// and the diagnosis post itself.
UserRecord scrub_diagnosed_posts(const UserRecord& user, const MentalHealthLexicon& lex);

/// community -> probability; probabilities sum to 1.
using SubredditDistribution = std::map<std::string, double>;

SubredditDistribution subreddit_distribution(const UserRecord& user, bool ignore_mh,
                                             const MentalHealthLexicon& lex);

/// (1/sqrt 2) * || sqrt P - sqrt Q ||_2 over the union of supports.
double hellinger(const SubredditDistribution& p, const SubredditDistribution& q);

struct MatchCandidate {
  std::string user_id;
  std::size_t post_count = 0;
  SubredditDistribution distribution;
};

struct ControlMatch {
  std::string control_id;
  double distance = 0.0;
  bool operator==(const ControlMatch&) const = default;
};

struct MatchResult {
  std::map<std::string, std::vector<ControlMatch>> matches;  // diagnosed user -> controls
  std::vector<std::string> short_lists;                      // diagnosed users with < k matches
};

/// True when `control_posts` lies in [(1 - tol) n, (1 + tol) n], both ends inclusive.
bool within_activity_window(std::size_t diagnosed_posts, std::size_t control_posts, double tol);

/// Greedy matching without replacement. Diagnosed users are processed in
/// ascending user_id order; each takes the k nearest unmatched controls inside
/// the activity window, ties broken by control user_id.
MatchResult greedy_match(const std::vector<MatchCandidate>& diagnosed,
                         const std::vector<MatchCandidate>& pool, std::size_t k = 12,
                         double tol = 0.10);

struct BuildConfig {
  DiagnosisPattern pattern = DiagnosisPattern::with_defaults();
  MentalHealthLexicon lexicon = MentalHealthLexicon::with_defaults();
  std::size_t k = 12;
  double tol = 0.10;
  std::size_t min_prior_posts = 100;
  std::size_t min_votes = 2;
  std::uint64_t seed = 1;

  static BuildConfig from_config(const Config& cfg);
};

struct SplitData {
  std::vector<Post> posts;
  std::vector<UserLabelRow> labels;
};

struct BuildResult {
  SplitData train;
  SplitData validation;
  SplitData test;
  std::vector<DiagnosisCandidate> candidates;  // every pattern match, for annotation
  MatchResult match;
  std::string report;  // human-readable counts and distance histogram
};

/// Runs the full construction pipeline. Without annotations every pattern
/// match is accepted. Throws if the control pool is empty.
BuildResult build_dataset(std::vector<Post> posts, const std::optional<Annotations>& annotations,
                          const BuildConfig& cfg);

/// Writes {train,validation,test}.{posts,labels}.jsonl, candidates.jsonl,
/// matching.json and report.txt.
void write_dataset(const std::string& dir, const BuildResult& result);

}  // namespace mhnet
