#include "doctest.h"

#include <cmath>
#include <numeric>

#include "mhnet/corpus.hpp"
#include "support.hpp"

using namespace mhnet;

namespace {

double norm(const std::vector<double>& v) {
  return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0) / (norm(a) * norm(b));
}

Post make_post(std::string id, std::string user, std::int64_t ts, std::string text = "hello there") {
  Post p;
  p.post_id = std::move(id);
  p.user_id = std::move(user);
  p.community = "askreddit";
  p.timestamp = ts;
  p.text = std::move(text);
  return p;
}

}  // namespace

TEST_SUITE("corpus") {
  TEST_CASE("tokenize looks words up in the vocabulary") {
    const auto v = Vocabulary::from_tokens({"i", "went", "to"});
    CHECK(tokenize("I went to", v) == std::vector<TokenId>{v.id("i"), v.id("went"), v.id("to")});
    CHECK(tokenize("", v).empty());
    CHECK(tokenize("Zzyzx went", v) == std::vector<TokenId>{Vocabulary::kUnk, v.id("went")});
  }

  TEST_CASE("word splitting lowercases and keeps inner apostrophes") {
    CHECK(words("It's NOT fine, ok?") == std::vector<std::string>{"it's", "not", "fine", "ok"});
    const auto spans = split_words("ab  cd");
    REQUIRE(spans.size() == 2);
    CHECK(spans[1].begin == 4);
    CHECK(spans[1].end == 6);
  }

  TEST_CASE("vocabulary orders by frequency then token and honours the cutoff") {
    const auto v = Vocabulary::build({{"b", "a", "b", "c"}, {"a", "b", "c", "d"}}, 2);
    CHECK(v.tokens() == std::vector<std::string>{"b", "a", "c"});
    CHECK(v.id("d") == Vocabulary::kUnk);
    for (TokenId i = 2; i < static_cast<TokenId>(v.size()); ++i) CHECK(v.id(v.token(i)) == i);
    CHECK_THROWS_AS(v.token(99), Error);
  }

  TEST_CASE("tokenize is deterministic") {
    const auto v = Vocabulary::from_tokens({"a", "b"});
    CHECK(tokenize("a b c a", v) == tokenize("a b c a", v));
  }

  TEST_CASE("sentence splitting") {
    CHECK(split_sentences("A. B? C!") == std::vector<std::string>{"A.", "B?", "C!"});
    CHECK(split_sentences("no terminal punct") == std::vector<std::string>{"no terminal punct"});
    CHECK(split_sentences("Dr. Smith left. He ran.") == std::vector<std::string>{"Dr. Smith left.", "He ran."});
    CHECK(split_sentences("").empty());
    CHECK(split_sentences("Dr. Smith left. He ran.") == split_sentences("Dr. Smith left. He ran."));
  }

  TEST_CASE("abbreviation list comes from a file") {
    const auto dir = support::scratch_dir("abbr");
    support::write_file(dir / "abbr.txt", "# comment\nfoo.\n");
    const auto sp = SentenceSplitter::from_file((dir / "abbr.txt").string());
    CHECK(sp.split("Foo. Bar.").size() == 1);
    CHECK(sp.split("Dr. Bar.").size() == 2);
  }

  TEST_CASE("hashed encoder") {
    const HashedEncoder enc(256, 3);
    const auto a = enc.encode("the cat sat on the mat");
    CHECK(a == enc.encode("the cat sat on the mat"));
    CHECK(norm(a) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(cosine(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    const auto z = enc.encode("");
    CHECK(z.size() == 256);
    CHECK(norm(z) == 0.0);
    CHECK(encode_sentence("x y", enc) == enc.encode("x y"));
  }

  TEST_CASE("hashed encoder: disjoint sentences are nearly orthogonal at d >= 1024") {
    const HashedEncoder enc(1024, 11);
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
      std::string a, b;
      for (int i = 0; i < 8; ++i) {
        a += "a" + std::to_string(uniform_index(rng, 100000)) + " ";
        b += "b" + std::to_string(uniform_index(rng, 100000)) + " ";
      }
      CHECK(std::abs(cosine(enc.encode(a), enc.encode(b))) < 0.2);
    }
  }

  TEST_CASE("file encoder looks vectors up by sentence key") {
    const auto dir = support::scratch_dir("fileenc");
    support::write_file(dir / "v.jsonl", "{\"key\": \"" + sentence_key("hi there.") + "\", \"vector\": [1, 2]}\n");
    const FileEncoder enc((dir / "v.jsonl").string());
    CHECK(enc.dim() == 2);
    CHECK(enc.encode("hi there.") == std::vector<double>{1.0, 2.0});
    CHECK_THROWS_AS(enc.encode("missing"), Error);
  }

  TEST_CASE("posts and labels round-trip through JSON lines") {
    const auto dir = support::scratch_dir("roundtrip");
    std::vector<Post> posts = {make_post("p1", "u1", 5, "caf\xc3\xa9 \"quoted\""), make_post("p2", "u2", 7)};
    write_posts((dir / "p.jsonl").string(), posts);
    const auto back = read_posts((dir / "p.jsonl").string());
    REQUIRE(back.size() == 2);
    CHECK(back[0].text == posts[0].text);
    CHECK(back[1].timestamp == 7);

    std::vector<UserLabelRow> labels = {{"u1", UserLabel::diagnosed, "p1"}, {"u2", UserLabel::control, std::nullopt}};
    write_user_labels((dir / "l.jsonl").string(), labels);
    const auto lb = read_user_labels((dir / "l.jsonl").string());
    REQUIRE(lb.size() == 2);
    CHECK(lb[0].diagnosis_post_id == std::optional<std::string>("p1"));
    CHECK_FALSE(lb[1].diagnosis_post_id.has_value());
  }

  TEST_CASE("a malformed line names the file and line") {
    const auto dir = support::scratch_dir("malformed");
    support::write_file(dir / "p.jsonl", "{\"post_id\": \"a\", \"user_id\": \"u\", \"community\": \"c\", "
                                         "\"timestamp\": 1, \"text\": \"t\"}\nnot json\n");
    try {
      read_posts((dir / "p.jsonl").string());
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }
  }

  TEST_CASE("assemble_users sorts posts and applies labels") {
    std::vector<Post> posts = {make_post("b", "u1", 9), make_post("a", "u1", 3), make_post("c", "u2", 1)};
    std::vector<UserLabelRow> labels = {{"u1", UserLabel::diagnosed, "a"}};
    const auto users = assemble_users(posts, labels);
    REQUIRE(users.size() == 2);
    CHECK(users[0].posts[0].post_id == "a");
    CHECK(users[0].label == UserLabel::diagnosed);
    CHECK(users[1].label == UserLabel::control);
  }

  TEST_CASE("user record invariants") {
    UserRecord u;
    u.user_id = "u";
    u.posts = {make_post("a", "u", 5), make_post("b", "u", 1)};
    CHECK_THROWS_AS(u.validate(), Error);
    std::swap(u.posts[0], u.posts[1]);
    CHECK_NOTHROW(u.validate());
    u.label = UserLabel::diagnosed;
    CHECK_THROWS_AS(u.validate(), Error);
    u.diagnosis_post_id = "a";
    CHECK_NOTHROW(u.validate());
  }

  TEST_CASE("risk labels") {
    for (int i = 0; i < kNumRiskLabels; ++i) {
      const auto l = risk_label_from_ordinal(i);
      CHECK(parse_risk_label(to_string(l)) == l);
    }
    CHECK_THROWS_AS(parse_risk_label("purple"), Error);
    CHECK_THROWS_AS(risk_label_from_ordinal(4), Error);
  }

  TEST_CASE("threads: labels required unless reading for prediction") {
    const auto dir = support::scratch_dir("threads");
    ThreadInstance t;
    t.target = make_post("t1", "u", 10, "I am fine.");
    t.context = {make_post("c1", "v", 5, "How are you?")};
    t.label = RiskLabel::red;
    write_threads((dir / "t.jsonl").string(), std::vector<ThreadInstance>{t});
    const auto back = read_threads((dir / "t.jsonl").string());
    REQUIRE(back.size() == 1);
    CHECK(back[0].label == RiskLabel::red);
    CHECK(back[0].context.size() == 1);

    support::write_file(dir / "u.jsonl", "{\"target\": {\"post_id\": \"t\", \"user_id\": \"u\", \"community\": "
                                         "\"c\", \"timestamp\": 1, \"text\": \"x.\"}, \"context\": []}\n");
    CHECK_THROWS_AS(read_threads((dir / "u.jsonl").string()), Error);
    CHECK(read_threads((dir / "u.jsonl").string(), false).size() == 1);
  }
}
