#include "mhnet/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "mhnet/common.hpp"
#include "mhnet/kernels.hpp"

namespace mhnet {

using json = nlohmann::ordered_json;

namespace {

std::string lower(std::string s) {
  for (char& c : s)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return s;
}

std::set<std::string> to_set(const std::vector<std::string>& v) {
  std::set<std::string> s;
  for (const auto& x : v) s.insert(lower(x));
  return s;
}

const std::vector<std::string> kDefaultPatterns = {
    "diagnosed with depression",
    "diagnosed me with depression",
    "diagnosed with clinical depression",
    "diagnosed with major depression",
    "diagnosed with severe depression",
    "diagnosed with chronic depression",
    "diagnosed with major depressive disorder",
    "diagnosed with mdd",
};

const std::vector<std::string> kDefaultNegations = {
    "not", "never", "no", "nor", "without", "didn't", "don't", "doesn't", "haven't", "hasn't",
    "hadn't", "wasn't", "weren't", "isn't", "aren't", "won't", "wouldn't", "can't", "cannot",
};

const std::vector<std::string> kDefaultHypotheticals = {
    "if", "would", "could", "might", "maybe", "whether", "suppose", "supposing",
    "imagine", "unless", "hypothetically", "should", "wonder",
};

const std::vector<std::string> kDefaultCommunities = {
    "depression", "anxiety",      "mentalhealth", "suicidewatch", "bipolar", "bpd",
    "ptsd",       "adhd",         "ocd",          "schizophrenia", "selfharm", "depression_help",
    "lonely",     "socialanxiety", "mentalillness", "therapy",
};

const std::vector<std::string> kDefaultTerms = {
    "depression",   "depressed",   "depressive", "antidepressant", "antidepressants", "anxiety",
    "suicidal",     "suicide",     "ssri",       "ssris",          "prozac",          "zoloft",
    "lexapro",      "wellbutrin",  "therapist",  "psychiatrist",   "bipolar",         "ptsd",
    "mental",       "diagnosed",   "diagnosis",  "mdd",            "selfharm",        "psychologist",
};

}  // namespace

// ---------------------------------------------------------------------------
// Diagnosis detection

DiagnosisPattern DiagnosisPattern::with_defaults() {
  DiagnosisPattern p;
  for (const auto& s : kDefaultPatterns) p.patterns.push_back(words(s));
  p.negation_cues = to_set(kDefaultNegations);
  p.hypothetical_cues = to_set(kDefaultHypotheticals);
  return p;
}

DiagnosisPattern DiagnosisPattern::from_config(const Config& cfg) {
  DiagnosisPattern p = with_defaults();
  if (cfg.has("patterns.patterns")) {
    p.patterns.clear();
    for (const auto& s : cfg.get_list("patterns.patterns", {})) p.patterns.push_back(words(s));
  }
  p.negation_cues = to_set(cfg.get_list("patterns.negation_cues", kDefaultNegations));
  p.hypothetical_cues = to_set(cfg.get_list("patterns.hypothetical_cues", kDefaultHypotheticals));
  p.cue_window = static_cast<std::size_t>(cfg.get_int("patterns.cue_window", 5));
  p.reject_quoted = cfg.get_bool("patterns.reject_quoted", true);
  p.validate();
  return p;
}

void DiagnosisPattern::validate() const {
  if (patterns.empty()) throw Error("diagnosis pattern list is empty");
  for (const auto& pat : patterns) {
    if (pat.empty()) throw Error("empty diagnosis pattern");
    for (const auto& w : pat) {
      if (w != lower(w)) throw Error("diagnosis pattern not lowercase: " + w);
      if (negation_cues.count(w) || hypothetical_cues.count(w)) {
        throw Error("cue word also appears in a diagnosis pattern: " + w);
      }
    }
  }
}

bool inside_quotes(std::string_view text, std::size_t pos) {
  auto word_at = [&](std::size_t i) {
    if (i >= text.size()) return false;
    const auto c = static_cast<unsigned char>(text[i]);
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
  };
  bool dq = false, sq = false;
  const std::size_t end = std::min(pos, text.size());
  for (std::size_t i = 0; i < end; ++i) {
    const char c = text[i];
    const bool prev_word = i > 0 && word_at(i - 1);
    if (c == '"') {
      dq = !dq;
    } else if (c == '\'') {
      if (!prev_word && word_at(i + 1)) sq = true;
      else if (prev_word && !word_at(i + 1)) sq = false;
    } else if (text.compare(i, 3, "\xE2\x80\x9C") == 0) {  // left double quote
      dq = true;
      i += 2;
    } else if (text.compare(i, 3, "\xE2\x80\x9D") == 0) {  // right double quote
      dq = false;
      i += 2;
    } else if (text.compare(i, 3, "\xE2\x80\x98") == 0) {  // left single quote
      sq = true;
      i += 2;
    } else if (text.compare(i, 3, "\xE2\x80\x99") == 0) {  // right single quote / apostrophe
      if (!(prev_word && word_at(i + 3))) sq = false;
      i += 2;
    }
  }
  return dq || sq;
}

std::optional<TextSpan> match_diagnosis(std::string_view text, const DiagnosisPattern& pat) {
  const auto ws = split_words(text);
  for (std::size_t i = 0; i < ws.size(); ++i) {
    for (const auto& p : pat.patterns) {
      if (i + p.size() > ws.size()) continue;
      bool hit = true;
      for (std::size_t j = 0; j < p.size() && hit; ++j) hit = ws[i + j].word == p[j];
      if (!hit) continue;
      bool vetoed = false;
      for (std::size_t j = i > pat.cue_window ? i - pat.cue_window : 0; j < i && !vetoed; ++j) {
        vetoed = pat.negation_cues.count(ws[j].word) || pat.hypothetical_cues.count(ws[j].word);
      }
      if (!vetoed && pat.reject_quoted) vetoed = inside_quotes(text, ws[i].begin);
      if (!vetoed) return TextSpan{ws[i].begin, ws[i + p.size() - 1].end};
    }
  }
  return std::nullopt;
}

std::optional<DiagnosisMatch> find_diagnosis_post(const UserRecord& user, const DiagnosisPattern& pat) {
  for (const auto& post : user.posts) {
    if (auto span = match_diagnosis(post.text, pat)) return DiagnosisMatch{post.post_id, *span};
  }
  return std::nullopt;
}

Annotations read_annotations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open annotation file: " + path);
  Annotations out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = json::parse(line);
      auto id = j.at("post_id").get<std::string>();
      auto votes = j.at("votes").get<std::vector<bool>>();
      if (!out.emplace(id, std::move(votes)).second) throw Error("duplicate post_id " + id);
    } catch (const std::exception& e) {
      throw Error(path + ":" + std::to_string(lineno) + ": malformed annotation row: " + e.what());
    }
  }
  return out;
}

std::vector<DiagnosisCandidate> apply_annotations(const std::vector<DiagnosisCandidate>& candidates,
                                                  const Annotations& annotations,
                                                  std::size_t min_votes) {
  std::set<std::string> known;
  for (const auto& c : candidates) known.insert(c.post_id);
  for (const auto& [post_id, votes] : annotations) {
    if (!known.count(post_id)) throw Error("annotation for unknown post_id " + post_id);
  }
  std::vector<DiagnosisCandidate> kept;
  for (const auto& c : candidates) {
    auto it = annotations.find(c.post_id);
    if (it == annotations.end()) continue;
    const auto yes = static_cast<std::size_t>(std::count(it->second.begin(), it->second.end(), true));
    if (yes >= min_votes) kept.push_back(c);
  }
  return kept;
}

bool eligible_diagnosed(const UserRecord& user, const std::string& diagnosis_post_id,
                        std::size_t min_prior_posts) {
  auto it = std::find_if(user.posts.begin(), user.posts.end(),
                         [&](const Post& p) { return p.post_id == diagnosis_post_id; });
  if (it == user.posts.end()) return false;
  const auto prior = static_cast<std::size_t>(
      std::count_if(user.posts.begin(), user.posts.end(),
                    [&](const Post& p) { return p.timestamp < it->timestamp; }));
  return prior >= min_prior_posts;
}

// ---------------------------------------------------------------------------
// Control filtering and scrubbing

MentalHealthLexicon MentalHealthLexicon::with_defaults() {
  return {to_set(kDefaultCommunities), to_set(kDefaultTerms)};
}

MentalHealthLexicon MentalHealthLexicon::from_config(const Config& cfg) {
  return {to_set(cfg.get_list("lexicon.communities", kDefaultCommunities)),
          to_set(cfg.get_list("lexicon.terms", kDefaultTerms))};
}

bool MentalHealthLexicon::in_mh_community(const Post& p) const {
  return communities.count(lower(p.community)) > 0;
}

bool MentalHealthLexicon::has_mh_term(const Post& p) const {
  for (const auto& w : split_words(p.text))
    if (terms.count(w.word)) return true;
  return false;
}

bool eligible_control(const UserRecord& user, const MentalHealthLexicon& lex) {
  return std::none_of(user.posts.begin(), user.posts.end(),
                      [&](const Post& p) { return lex.offending(p); });
}

UserRecord scrub_diagnosed_posts(const UserRecord& user, const MentalHealthLexicon& lex) {
  UserRecord out = user;
  out.posts.clear();
  for (const auto& p : user.posts) {
    if (user.diagnosis_post_id && p.post_id == *user.diagnosis_post_id) continue;
    if (lex.offending(p)) continue;
    out.posts.push_back(p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Distributions and matching

SubredditDistribution subreddit_distribution(const UserRecord& user, bool ignore_mh,
                                             const MentalHealthLexicon& lex) {
  std::map<std::string, std::size_t> counts;
  std::size_t total = 0;
  for (const auto& p : user.posts) {
    if (ignore_mh && lex.in_mh_community(p)) continue;
    ++counts[p.community];
    ++total;
  }
  if (total == 0) throw Error("user " + user.user_id + " has no posts to build a distribution from");
  SubredditDistribution d;
  for (const auto& [c, n] : counts) d[c] = static_cast<double>(n) / static_cast<double>(total);
  return d;
}

namespace {

kernels::SparseDistribution to_sparse(const SubredditDistribution& d,
                                      const std::map<std::string, std::uint32_t>& ids) {
  kernels::SparseDistribution s;
  for (const auto& [c, p] : d) {
    s.index.push_back(ids.at(c));
    s.sqrt_prob.push_back(std::sqrt(p));
  }
  return s;
}

}  // namespace

double hellinger(const SubredditDistribution& p, const SubredditDistribution& q) {
  std::map<std::string, std::uint32_t> ids;
  for (const auto& [c, v] : p) ids.emplace(c, 0);
  for (const auto& [c, v] : q) ids.emplace(c, 0);
  std::uint32_t next = 0;
  for (auto& [c, id] : ids) id = next++;
  return kernels::hellinger(to_sparse(p, ids), to_sparse(q, ids));
}

bool within_activity_window(std::size_t diagnosed_posts, std::size_t control_posts, double tol) {
  const double n = static_cast<double>(diagnosed_posts);
  const double c = static_cast<double>(control_posts);
  const double slack = 1e-9 * std::max(1.0, n);
  return c >= (1.0 - tol) * n - slack && c <= (1.0 + tol) * n + slack;
}

MatchResult greedy_match(const std::vector<MatchCandidate>& diagnosed,
                         const std::vector<MatchCandidate>& pool, std::size_t k, double tol) {
  std::vector<std::size_t> d_order(diagnosed.size()), c_order(pool.size());
  std::iota(d_order.begin(), d_order.end(), 0);
  std::iota(c_order.begin(), c_order.end(), 0);
  std::sort(d_order.begin(), d_order.end(),
            [&](auto a, auto b) { return diagnosed[a].user_id < diagnosed[b].user_id; });
  std::sort(c_order.begin(), c_order.end(),
            [&](auto a, auto b) { return pool[a].user_id < pool[b].user_id; });

  // Interning in string order keeps the sparse route bit-identical to hellinger().
  std::map<std::string, std::uint32_t> ids;
  for (const auto& u : diagnosed)
    for (const auto& [c, p] : u.distribution) ids.emplace(c, 0);
  for (const auto& u : pool)
    for (const auto& [c, p] : u.distribution) ids.emplace(c, 0);
  std::uint32_t next = 0;
  for (auto& [c, id] : ids) id = next++;

  std::vector<kernels::SparseDistribution> rows, cols;
  for (auto i : d_order) rows.push_back(to_sparse(diagnosed[i].distribution, ids));
  for (auto i : c_order) cols.push_back(to_sparse(pool[i].distribution, ids));
  const auto dist = kernels::parallel::hellinger_matrix(rows, cols);

  MatchResult result;
  std::vector<bool> taken(cols.size(), false);
  std::vector<std::size_t> eligible;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& d = diagnosed[d_order[r]];
    eligible.clear();
    for (std::size_t c = 0; c < cols.size(); ++c) {
      if (!taken[c] && within_activity_window(d.post_count, pool[c_order[c]].post_count, tol)) {
        eligible.push_back(c);
      }
    }
    const double* drow = dist.data() + r * cols.size();
    const std::size_t take = std::min(k, eligible.size());
    // Columns are in user_id order, so index order breaks distance ties.
    std::partial_sort(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(take),
                      eligible.end(), [&](std::size_t a, std::size_t b) {
                        return drow[a] != drow[b] ? drow[a] < drow[b] : a < b;
                      });
    auto& list = result.matches[d.user_id];
    for (std::size_t i = 0; i < take; ++i) {
      taken[eligible[i]] = true;
      list.push_back({pool[c_order[eligible[i]]].user_id, drow[eligible[i]]});
    }
    if (take < k) result.short_lists.push_back(d.user_id);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Pipeline

BuildConfig BuildConfig::from_config(const Config& cfg) {
  BuildConfig b;
  b.pattern = DiagnosisPattern::from_config(cfg);
  b.lexicon = MentalHealthLexicon::from_config(cfg);
  b.k = static_cast<std::size_t>(cfg.get_int("dataset.k", 12));
  b.tol = cfg.get_double("dataset.tol", 0.10);
  b.min_prior_posts = static_cast<std::size_t>(cfg.get_int("dataset.min_prior_posts", 100));
  b.min_votes = static_cast<std::size_t>(cfg.get_int("dataset.min_votes", 2));
  b.seed = static_cast<std::uint64_t>(cfg.get_int("run.seed", 1));
  if (b.k == 0) throw Error("dataset.k must be >= 1");
  if (b.tol < 0.0) throw Error("dataset.tol must be >= 0");
  return b;
}

BuildResult build_dataset(std::vector<Post> posts, const std::optional<Annotations>& annotations,
                          const BuildConfig& cfg) {
  cfg.pattern.validate();
  auto users = assemble_users(std::move(posts), {});
  std::map<std::string, const UserRecord*> by_id;
  for (const auto& u : users) by_id[u.user_id] = &u;

  std::vector<DiagnosisCandidate> candidates;
  std::set<std::string> matched_pattern;
  for (const auto& u : users) {
    if (auto m = find_diagnosis_post(u, cfg.pattern)) {
      candidates.push_back({u.user_id, m->post_id});
      matched_pattern.insert(u.user_id);
    }
  }
  auto confirmed = annotations ? apply_annotations(candidates, *annotations, cfg.min_votes) : candidates;

  std::vector<UserRecord> diagnosed;
  std::size_t too_few_prior = 0, scrubbed_empty = 0;
  for (const auto& c : confirmed) {
    const auto& u = *by_id.at(c.user_id);
    if (!eligible_diagnosed(u, c.post_id, cfg.min_prior_posts)) {
      ++too_few_prior;
      continue;
    }
    UserRecord labelled = u;
    labelled.label = UserLabel::diagnosed;
    labelled.diagnosis_post_id = c.post_id;
    auto scrubbed = scrub_diagnosed_posts(labelled, cfg.lexicon);
    if (scrubbed.posts.empty()) {
      ++scrubbed_empty;
      continue;
    }
    diagnosed.push_back(std::move(scrubbed));
  }

  std::vector<const UserRecord*> controls;
  for (const auto& u : users) {
    // Anyone who triggered the pattern is kept out of the pool even if rejected.
    if (matched_pattern.count(u.user_id) || u.posts.empty()) continue;
    if (eligible_control(u, cfg.lexicon)) controls.push_back(&u);
  }
  if (controls.empty()) throw Error("control pool is empty: no user passes the control filters");

  std::vector<MatchCandidate> d_cands, c_cands;
  for (const auto& u : diagnosed) {
    d_cands.push_back({u.user_id, u.posts.size(), subreddit_distribution(u, true, cfg.lexicon)});
  }
  for (const auto* u : controls) {
    c_cands.push_back({u->user_id, u->posts.size(), subreddit_distribution(*u, false, cfg.lexicon)});
  }

  BuildResult result;
  result.candidates = candidates;
  result.match = greedy_match(d_cands, c_cands, cfg.k, cfg.tol);

  // Split diagnosed users into thirds; controls follow the user they matched.
  std::vector<std::string> ids;
  for (const auto& u : diagnosed) ids.push_back(u.user_id);
  std::sort(ids.begin(), ids.end());
  Rng rng(derive_seed(cfg.seed, "dataset.split"));
  shuffle(ids, rng);
  const std::size_t n = ids.size();
  const std::size_t n_train = (n + 2) / 3;
  const std::size_t n_val = (n + 1) / 3;
  std::map<std::string, const UserRecord*> diag_by_id;
  for (const auto& u : diagnosed) diag_by_id[u.user_id] = &u;

  auto fill = [&](SplitData& split, std::size_t lo, std::size_t hi) {
    std::map<std::string, std::pair<const UserRecord*, UserLabelRow>> members;
    for (std::size_t i = lo; i < hi; ++i) {
      const auto* d = diag_by_id.at(ids[i]);
      members[d->user_id] = {d, {d->user_id, UserLabel::diagnosed, d->diagnosis_post_id}};
      for (const auto& m : result.match.matches.at(d->user_id)) {
        members[m.control_id] = {by_id.at(m.control_id), {m.control_id, UserLabel::control, std::nullopt}};
      }
    }
    for (const auto& [id, entry] : members) {
      split.labels.push_back(entry.second);
      for (const auto& p : entry.first->posts) split.posts.push_back(p);
    }
  };
  fill(result.train, 0, n_train);
  fill(result.validation, n_train, n_train + n_val);
  fill(result.test, n_train + n_val, n);

  std::size_t matched_controls = 0;
  std::array<std::size_t, 10> hist{};
  for (const auto& [d, list] : result.match.matches) {
    matched_controls += list.size();
    for (const auto& m : list) hist[std::min<std::size_t>(9, static_cast<std::size_t>(m.distance * 10.0))]++;
  }
  auto count_label = [](const SplitData& s, UserLabel l) {
    return std::count_if(s.labels.begin(), s.labels.end(), [&](const auto& r) { return r.label == l; });
  };

  std::ostringstream rep;
  rep << "users in corpus:            " << users.size() << '\n'
      << "pattern matches:            " << candidates.size() << '\n'
      << "confirmed by annotation:    " << confirmed.size() << (annotations ? "" : " (no annotation file)") << '\n'
      << "dropped, < " << cfg.min_prior_posts << " prior posts:  " << too_few_prior << '\n'
      << "dropped, empty after scrub: " << scrubbed_empty << '\n'
      << "diagnosed users:            " << diagnosed.size() << '\n'
      << "control pool:               " << controls.size() << '\n'
      << "matched controls:           " << matched_controls << " (k=" << cfg.k << ", tol=" << cfg.tol << ")\n"
      << "diagnosed with < k matches: " << result.match.short_lists.size() << '\n';
  for (const auto& id : result.match.short_lists) {
    rep << "  short: " << id << " (" << result.match.matches.at(id).size() << ")\n";
  }
  rep << "split sizes (diagnosed/control):\n";
  rep << "  train       " << count_label(result.train, UserLabel::diagnosed) << " / "
      << count_label(result.train, UserLabel::control) << '\n';
  rep << "  validation  " << count_label(result.validation, UserLabel::diagnosed) << " / "
      << count_label(result.validation, UserLabel::control) << '\n';
  rep << "  test        " << count_label(result.test, UserLabel::diagnosed) << " / "
      << count_label(result.test, UserLabel::control) << '\n';
  rep << "hellinger distance histogram:\n";
  for (std::size_t b = 0; b < hist.size(); ++b) {
    char line[64];
    std::snprintf(line, sizeof line, "  [%.1f, %.1f%c %zu\n", b / 10.0, (b + 1) / 10.0, b == 9 ? ']' : ')', hist[b]);
    rep << line;
  }
  result.report = rep.str();
  return result;
}

void write_dataset(const std::string& dir, const BuildResult& result) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const std::pair<const char*, const SplitData*> splits[] = {
      {"train", &result.train}, {"validation", &result.validation}, {"test", &result.test}};
  for (const auto& [name, data] : splits) {
    write_posts((fs::path(dir) / (std::string(name) + ".posts.jsonl")).string(), data->posts);
    write_user_labels((fs::path(dir) / (std::string(name) + ".labels.jsonl")).string(), data->labels);
  }
  json m;
  json matches = json::object();
  for (const auto& [d, list] : result.match.matches) {
    json arr = json::array();
    for (const auto& c : list) arr.push_back({{"control", c.control_id}, {"distance", c.distance}});
    matches[d] = std::move(arr);
  }
  m["matches"] = std::move(matches);
  m["short_lists"] = result.match.short_lists;
  {
    std::ofstream cand((fs::path(dir) / "candidates.jsonl").string(), std::ios::binary);
    for (const auto& c : result.candidates) {
      json row;
      row["user_id"] = c.user_id;
      row["post_id"] = c.post_id;
      cand << row.dump() << '\n';
    }
  }
  std::ofstream((fs::path(dir) / "matching.json").string(), std::ios::binary) << m.dump(2) << '\n';
  std::ofstream((fs::path(dir) / "report.txt").string(), std::ios::binary) << result.report;
}

}  // namespace mhnet
