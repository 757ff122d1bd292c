#include "doctest.h"

#include <cmath>

#include "mhnet/dataset.hpp"
#include "support.hpp"

using namespace mhnet;

namespace {

UserRecord user_with(const std::string& id, const std::vector<std::pair<std::string, std::string>>& posts) {
  UserRecord u;
  u.user_id = id;
  std::int64_t t = 0;
  for (const auto& [community, text] : posts) {
    Post p;
    p.post_id = id + "-" + std::to_string(t);
    p.user_id = id;
    p.community = community;
    p.timestamp = t++;
    p.text = text;
    u.posts.push_back(p);
  }
  return u;
}

UserRecord user_with_prior(std::size_t prior) {
  std::vector<std::pair<std::string, std::string>> posts(prior, {"a", "hello"});
  posts.emplace_back("a", "I was diagnosed with depression");
  return user_with("u", posts);
}

MatchCandidate cand(std::string id, std::size_t posts, SubredditDistribution d) {
  return {std::move(id), posts, std::move(d)};
}

}  // namespace

TEST_SUITE("dataset") {
  TEST_CASE("diagnosis patterns") {
    const auto pat = DiagnosisPattern::with_defaults();
    CHECK(match_diagnosis("I was just diagnosed with depression.", pat).has_value());
    CHECK_FALSE(match_diagnosis("if I was diagnosed with depression", pat).has_value());
    CHECK_FALSE(match_diagnosis("it's not like I've been diagnosed with depression", pat).has_value());
    CHECK_FALSE(match_diagnosis("my friend said \"I was diagnosed with depression\" once", pat).has_value());
    CHECK_FALSE(match_diagnosis("depression runs in my family", pat).has_value());
    const auto span = match_diagnosis("Today I got diagnosed with depression", pat);
    REQUIRE(span);
    CHECK(span->begin == 12);
  }

  TEST_CASE("cue window is five words") {
    const auto pat = DiagnosisPattern::with_defaults();
    CHECK_FALSE(match_diagnosis("not one two three four diagnosed with depression", pat).has_value());
    CHECK(match_diagnosis("not one two three four five diagnosed with depression", pat).has_value());
  }

  TEST_CASE("quotes") {
    CHECK(inside_quotes("say \"abc", 6));
    CHECK_FALSE(inside_quotes("say \"abc\" def", 10));
  }

  TEST_CASE("find_diagnosis_post returns the earliest accepted post") {
    const auto u = user_with("u", {{"a", "hello"},
                                   {"a", "if I was diagnosed with depression"},
                                   {"a", "I was diagnosed with depression"},
                                   {"a", "diagnosed with depression again"}});
    const auto m = find_diagnosis_post(u, DiagnosisPattern::with_defaults());
    REQUIRE(m);
    CHECK(m->post_id == "u-2");
  }

  TEST_CASE("pattern config is validated") {
    auto pat = DiagnosisPattern::with_defaults();
    pat.patterns.push_back({"not", "depressed"});
    CHECK_THROWS_AS(pat.validate(), Error);
  }

  TEST_CASE("annotation votes") {
    const std::vector<DiagnosisCandidate> cands = {{"u1", "p1"}, {"u2", "p2"}, {"u3", "p3"}, {"u4", "p4"}};
    const Annotations ann = {{"p1", {true, true, false}}, {"p2", {true, false, false}}, {"p3", {}}};
    const auto kept = apply_annotations(cands, ann);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].user_id == "u1");
    CHECK_THROWS_AS(apply_annotations(cands, {{"zz", {true, true}}}), Error);
  }

  TEST_CASE("annotation file") {
    const auto dir = support::scratch_dir("ann");
    support::write_file(dir / "a.jsonl", "{\"post_id\": \"p1\", \"votes\": [true, false, true]}\n\n");
    const auto ann = read_annotations((dir / "a.jsonl").string());
    CHECK(ann.at("p1") == std::vector<bool>{true, false, true});
    support::write_file(dir / "b.jsonl", "{\"post_id\": \"p1\", \"votes\": [true]}\n{\"post_id\": \"p1\", \"votes\": []}\n");
    CHECK_THROWS_AS(read_annotations((dir / "b.jsonl").string()), Error);
  }

  TEST_CASE("prior-post threshold") {
    CHECK(eligible_diagnosed(user_with_prior(100), "u-100", 100));
    CHECK_FALSE(eligible_diagnosed(user_with_prior(99), "u-99", 100));
    CHECK_FALSE(eligible_diagnosed(user_with_prior(0), "u-0", 100));
    CHECK_FALSE(eligible_diagnosed(user_with_prior(5), "missing", 1));
  }

  TEST_CASE("control eligibility") {
    const auto lex = MentalHealthLexicon::with_defaults();
    CHECK_FALSE(eligible_control(user_with("c", {{"a", "hi"}, {"depression", "hi"}}), lex));
    CHECK_FALSE(eligible_control(user_with("c", {{"a", "I feel depressed"}}), lex));
    CHECK_FALSE(eligible_control(user_with("c", {{"Depression", "hi"}}), lex));
    CHECK(eligible_control(user_with("c", {{"a", "hi"}, {"b", "nice day"}}), lex));
  }

  TEST_CASE("scrubbing") {
    const auto lex = MentalHealthLexicon::with_defaults();
    std::vector<std::pair<std::string, std::string>> posts;
    for (int i = 0; i < 7; ++i) posts.emplace_back("a", "nice day");
    for (int i = 0; i < 3; ++i) posts.emplace_back("anxiety", "nice day");
    auto u = user_with("u", posts);
    u.label = UserLabel::diagnosed;
    u.diagnosis_post_id = "u-0";
    const auto s = scrub_diagnosed_posts(u, lex);
    CHECK(s.posts.size() == 6);  // 7 clean posts minus the diagnosis post
    CHECK(scrub_diagnosed_posts(s, lex).posts.size() == s.posts.size());

    auto clean = user_with("v", {{"a", "x"}, {"b", "y"}});
    clean.label = UserLabel::diagnosed;
    clean.diagnosis_post_id = "v-1";
    CHECK(scrub_diagnosed_posts(clean, lex).posts.size() == 1);

    auto bad = user_with("w", {{"depression", "x"}, {"a", "my therapist"}});
    bad.label = UserLabel::diagnosed;
    bad.diagnosis_post_id = "w-0";
    CHECK(scrub_diagnosed_posts(bad, lex).posts.empty());
  }

  TEST_CASE("subreddit distributions") {
    const auto lex = MentalHealthLexicon::with_defaults();
    auto d = subreddit_distribution(user_with("u", {{"A", ""}, {"A", ""}, {"A", ""}, {"B", ""}}), false, lex);
    CHECK(d.at("A") == doctest::Approx(0.75));
    CHECK(d.at("B") == doctest::Approx(0.25));
    d = subreddit_distribution(user_with("u", {{"A", ""}, {"A", ""}}), false, lex);
    CHECK(d.size() == 1);
    CHECK(d.at("A") == 1.0);
    d = subreddit_distribution(user_with("u", {{"depression", ""}, {"depression", ""}, {"A", ""}, {"A", ""}}), true, lex);
    CHECK(d == SubredditDistribution{{"A", 1.0}});
    CHECK_THROWS_AS(subreddit_distribution(user_with("u", {{"depression", ""}}), true, lex), Error);
  }

  TEST_CASE("hellinger") {
    CHECK(hellinger({{"A", 0.3}, {"B", 0.7}}, {{"A", 0.3}, {"B", 0.7}}) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(hellinger({{"A", 1.0}}, {{"B", 1.0}}) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(std::abs(hellinger({{"A", 1.0}}, {{"A", 0.5}, {"B", 0.5}}) - std::sqrt(1.0 - std::sqrt(0.5))) < 1e-12);
    CHECK(std::abs(hellinger({{"A", 1.0}}, {{"A", 0.5}, {"B", 0.5}}) - 0.541196) < 1e-6);
  }

  TEST_CASE("hellinger properties on random distributions") {
    Rng rng(17);
    for (int i = 0; i < 300; ++i) {
      const auto p = support::random_distribution(rng, 8);
      const auto q = support::random_distribution(rng, 8);
      const auto r = support::random_distribution(rng, 8);
      const double pq = hellinger(p, q);
      CHECK(pq == doctest::Approx(support::hellinger_oracle(p, q)).epsilon(1e-12));
      CHECK(std::abs(pq - hellinger(q, p)) <= 1e-12);
      CHECK(pq >= 0.0);
      CHECK(pq <= 1.0 + 1e-12);
      CHECK(hellinger(p, r) <= pq + hellinger(q, r) + 1e-12);
    }
  }

  TEST_CASE("activity window is inclusive") {
    CHECK(within_activity_window(100, 110, 0.10));
    CHECK(within_activity_window(100, 90, 0.10));
    CHECK_FALSE(within_activity_window(100, 111, 0.10));
    CHECK_FALSE(within_activity_window(100, 89, 0.10));
    CHECK_FALSE(within_activity_window(100, 120, 0.10));
  }

  TEST_CASE("greedy_match shortage and window") {
    const SubredditDistribution a = {{"A", 1.0}};
    const std::vector<MatchCandidate> diag = {cand("d1", 100, a)};
    const std::vector<MatchCandidate> pool = {cand("c1", 100, a), cand("c2", 105, a), cand("c3", 95, a),
                                              cand("c4", 120, a)};
    const auto r = greedy_match(diag, pool, 12, 0.10);
    CHECK(r.matches.at("d1").size() == 3);
    CHECK(r.short_lists == std::vector<std::string>{"d1"});
    for (const auto& m : r.matches.at("d1")) CHECK(m.control_id != "c4");
  }

  TEST_CASE("greedy_match consumes controls and breaks ties by id") {
    const SubredditDistribution a = {{"A", 1.0}};
    const std::vector<MatchCandidate> diag = {cand("d2", 100, a), cand("d1", 100, a)};
    const std::vector<MatchCandidate> pool = {cand("c2", 100, a), cand("c1", 100, a), cand("c3", 100, a)};
    const auto r = greedy_match(diag, pool, 2, 0.10);
    CHECK(r.matches.at("d1") == std::vector<ControlMatch>{{"c1", 0.0}, {"c2", 0.0}});
    CHECK(r.matches.at("d2") == std::vector<ControlMatch>{{"c3", 0.0}});
    CHECK(r.short_lists == std::vector<std::string>{"d2"});
  }

  TEST_CASE("greedy_match equals the exhaustive oracle on small instances") {
    Rng rng(23);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<MatchCandidate> diag, pool;
      for (int d = 0; d < 5; ++d)
        diag.push_back(cand("d" + std::to_string(d), 90 + uniform_index(rng, 20), support::random_distribution(rng, 6)));
      for (int c = 0; c < 30; ++c)
        pool.push_back(cand("c" + std::to_string(c), 80 + uniform_index(rng, 40), support::random_distribution(rng, 6)));
      const auto got = greedy_match(diag, pool, 2, 0.10);
      const auto want = support::match_oracle(diag, pool, 2, 0.10);
      CHECK(got.short_lists == want.short_lists);
      for (const auto& [d, list] : want.matches) {
        const auto& g = got.matches.at(d);
        REQUIRE(g.size() == list.size());
        for (std::size_t i = 0; i < list.size(); ++i) {
          CHECK(g[i].control_id == list[i].control_id);
          CHECK(std::abs(g[i].distance - list[i].distance) < 1e-12);
        }
      }
    }
  }

  TEST_CASE("greedy_match invariants") {
    Rng rng(29);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<MatchCandidate> diag, pool;
      for (int d = 0; d < 8; ++d)
        diag.push_back(cand("d" + std::to_string(d), 50 + uniform_index(rng, 100), support::random_distribution(rng, 10)));
      for (int c = 0; c < 60; ++c)
        pool.push_back(cand("c" + std::to_string(c), 40 + uniform_index(rng, 130), support::random_distribution(rng, 10)));
      std::map<std::string, std::size_t> counts;
      for (const auto& c : pool) counts[c.user_id] = c.post_count;
      const auto r = greedy_match(diag, pool, 3, 0.10);
      std::set<std::string> seen;
      for (const auto& d : diag) {
        const auto& list = r.matches.at(d.user_id);
        for (std::size_t i = 0; i < list.size(); ++i) {
          CHECK(seen.insert(list[i].control_id).second);
          CHECK(within_activity_window(d.post_count, counts.at(list[i].control_id), 0.10));
          if (i > 0) CHECK(list[i - 1].distance <= list[i].distance);
        }
      }
    }
  }

  TEST_CASE("build_dataset on the fixture corpus") {
    BuildConfig cfg;
    cfg.k = 2;
    const auto r = build_dataset(support::fixture_corpus(6, 40, 3), std::nullopt, cfg);
    CHECK(r.candidates.size() == 6);
    const auto count = [](const SplitData& s, UserLabel l) {
      return std::count_if(s.labels.begin(), s.labels.end(), [&](const auto& x) { return x.label == l; });
    };
    CHECK(count(r.train, UserLabel::diagnosed) == 2);
    CHECK(count(r.validation, UserLabel::diagnosed) == 2);
    CHECK(count(r.test, UserLabel::diagnosed) == 2);
    // No user appears in two splits, and diagnosis posts are gone.
    std::set<std::string> users;
    for (const auto* s : {&r.train, &r.validation, &r.test}) {
      for (const auto& l : s->labels) CHECK(users.insert(l.user_id).second);
      for (const auto& p : s->posts) CHECK(p.post_id.find("-dx") == std::string::npos);
    }
    // Matching on the pipeline's own candidates agrees with the oracle.
    const auto lex = MentalHealthLexicon::with_defaults();
    const auto all = assemble_users(support::fixture_corpus(6, 40, 3), {});
    std::vector<MatchCandidate> diag, pool;
    for (const auto& u : all) {
      if (u.user_id[0] == 'd') {
        auto lab = u;
        lab.label = UserLabel::diagnosed;
        lab.diagnosis_post_id = u.user_id + "-dx";
        const auto s = scrub_diagnosed_posts(lab, lex);
        diag.push_back(cand(u.user_id, s.posts.size(), subreddit_distribution(s, true, lex)));
      } else {
        pool.push_back(cand(u.user_id, u.posts.size(), subreddit_distribution(u, false, lex)));
      }
    }
    const auto want = support::match_oracle(diag, pool, 2, 0.10);
    for (const auto& [d, list] : want.matches) {
      REQUIRE(r.match.matches.at(d).size() == list.size());
      for (std::size_t i = 0; i < list.size(); ++i) CHECK(r.match.matches.at(d)[i].control_id == list[i].control_id);
    }
  }

  TEST_CASE("build_dataset fails on an empty control pool") {
    CHECK_THROWS_AS(build_dataset(support::fixture_corpus(3, 0, 1), std::nullopt, BuildConfig{}), Error);
  }

  TEST_CASE("write_dataset is deterministic") {
    BuildConfig cfg;
    cfg.k = 2;
    const auto a = support::scratch_dir("ds_a");
    const auto b = support::scratch_dir("ds_b");
    write_dataset(a.string(), build_dataset(support::fixture_corpus(6, 40, 3), std::nullopt, cfg));
    write_dataset(b.string(), build_dataset(support::fixture_corpus(6, 40, 3), std::nullopt, cfg));
    const auto ha = support::hash_tree(a);
    CHECK(ha.size() >= 9);
    CHECK(ha == support::hash_tree(b));
  }
}
