#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "mhnet/config.hpp"
#include "mhnet/synth.hpp"
#include "mhnet/train.hpp"
#include "support.hpp"

using namespace mhnet;

namespace {

UserRecord user_with_posts(std::size_t n, std::size_t words_per_post = 5) {
  UserRecord u;
  u.user_id = "u1";
  for (std::size_t i = 0; i < n; ++i) {
    Post p;
    p.post_id = "p" + std::to_string(i);
    p.user_id = "u1";
    p.community = "c";
    p.timestamp = static_cast<std::int64_t>(i);
    for (std::size_t w = 0; w < words_per_post; ++w) p.tokens.push_back(static_cast<TokenId>(100 * i + w + 2));
    u.posts.push_back(std::move(p));
  }
  return u;
}

DepressionModelConfig small_model() {
  DepressionModelConfig c;
  c.embed_dim = 8;
  c.filters = 6;
  c.merge_window = 3;
  c.merge_stride = 3;
  c.merge_filters = 6;
  c.dense = {8};
  return c;
}

struct SmallTask {
  Vocabulary vocab;
  std::vector<DepressionExample> train;
  std::vector<DepressionExample> validation;
};

std::vector<UserRecord> tokenized(const SplitData& s, const Vocabulary& v) {
  auto users = assemble_users(s.posts, s.labels);
  for (auto& u : users)
    for (auto& p : u.posts) p.tokens = tokenize(p.text, v);
  return users;
}

SmallTask small_task(double rate, std::uint64_t seed) {
  SynthUsersSpec spec;
  spec.positives = 24;
  spec.controls_per_positive = 1;
  spec.posts_per_user = 6;
  spec.vocab_size = 200;
  spec.signal_rate = rate;
  spec.train_fraction = 0.5;
  spec.seed = seed;
  const auto data = synth_users(spec);
  std::vector<std::vector<std::string>> docs;
  for (const auto& p : data.train.posts) docs.push_back(words(p.text));
  SmallTask t;
  t.vocab = Vocabulary::build(docs, 1);
  SelectionConfig sel;
  sel.strategy = SelectionStrategy::earliest;
  sel.n_term = 40;
  t.train = make_depression_examples(tokenized(data.train, t.vocab), sel);
  t.validation = make_depression_examples(tokenized(data.validation, t.vocab), sel);
  return t;
}

bool contains_phrase(const std::string& text) {
  for (const auto& ph : SynthUsersSpec::default_signal_phrases())
    if (text.find(ph) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST_SUITE("train") {
  TEST_CASE("select_posts strategies") {
    const auto u = user_with_posts(10);
    SelectionConfig c;
    c.strategy = SelectionStrategy::earliest;
    c.n_post = 400;
    auto all = select_posts(u, c);
    REQUIRE(all.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) CHECK(all[i] == u.posts[i].tokens);

    c.strategy = SelectionStrategy::latest;
    c.n_post = 2;
    auto last = select_posts(u, c);
    REQUIRE(last.size() == 2);
    CHECK(last[0] == u.posts[8].tokens);
    CHECK(last[1] == u.posts[9].tokens);

    c.strategy = SelectionStrategy::earliest;
    auto first = select_posts(u, c);
    CHECK(first[1] == u.posts[1].tokens);

    c.strategy = SelectionStrategy::random;
    c.n_post = 4;
    c.seed = 7;
    const auto r1 = select_posts(u, c);
    CHECK(r1 == select_posts(u, c));
    REQUIRE(r1.size() == 4);
    // chosen posts stay in time order
    std::vector<TokenId> heads;
    for (const auto& p : r1) heads.push_back(p[0]);
    CHECK(std::is_sorted(heads.begin(), heads.end()));
    CHECK(std::set<TokenId>(heads.begin(), heads.end()).size() == 4);
  }

  TEST_CASE("select_posts truncates to n_term tokens") {
    const auto u = user_with_posts(3, 12);
    SelectionConfig c;
    c.strategy = SelectionStrategy::earliest;
    c.n_term = 5;
    for (const auto& p : select_posts(u, c)) CHECK(p.size() == 5);
    CHECK(select_posts(u, c)[2][0] == u.posts[2].tokens[0]);
    CHECK_THROWS_AS(select_posts(user_with_posts(0), c), Error);
  }

  TEST_CASE("class weights") {
    std::vector<int> labels(100, 0);
    std::fill(labels.begin() + 90, labels.end(), 1);
    const auto w = class_weights(labels, 2);
    CHECK(w[0] == doctest::Approx(100.0 / 180.0));
    CHECK(w[1] == doctest::Approx(5.0));
    CHECK(90 * w[0] + 10 * w[1] == doctest::Approx(100.0));
    CHECK_THROWS_AS(class_weights(std::vector<int>(5, 0), 2), Error);
  }

  TEST_CASE("weighted classes contribute equal expected gradient") {
    // One-step linear model: each instance contributes w_c * g_i with g_i drawn
    // from the same distribution regardless of class.
    std::vector<int> labels(100, 0);
    std::fill(labels.begin() + 80, labels.end(), 1);
    const auto w = class_weights(labels, 2);
    Rng rng(3);
    const int trials = 4000;
    double sum[2] = {0.0, 0.0};
    for (int t = 0; t < trials; ++t) {
      for (std::size_t i = 0; i < labels.size(); ++i) {
        const double g = 0.5 + uniform01(rng);
        sum[labels[i]] += w[static_cast<std::size_t>(labels[i])] * g;
      }
    }
    const double a = sum[0] / trials, b = sum[1] / trials;
    CHECK(std::abs(a / b - 1.0) < 0.02);
    CHECK(a == doctest::Approx(50.0).epsilon(0.02));
  }

  TEST_CASE("balanced sampling") {
    std::vector<int> labels = {0, 0, 0, 0, 0, 1, 1, 2, 2, 2};
    Rng rng(1);
    const auto idx = balanced_sample(labels, 3, rng);
    CHECK(idx.size() == 6);
    std::vector<int> count(3, 0);
    for (auto i : idx) ++count[static_cast<std::size_t>(labels[i])];
    CHECK(count == std::vector<int>{2, 2, 2});
    CHECK(std::set<std::size_t>(idx.begin(), idx.end()).size() == 6);
    CHECK_THROWS_AS(balanced_sample(std::vector<int>{0, 0, 2}, 3, rng), Error);

    BalanceConfig cfg{BalanceMode::weighted};
    const auto e = balance(labels, 3, cfg, rng);
    CHECK(e.indices.size() == 10);
    CHECK(e.weights.size() == 10);
  }

  TEST_CASE("stratified split holds out the same share of every class") {
    std::vector<int> labels;
    for (int c = 0; c < 4; ++c) labels.insert(labels.end(), static_cast<std::size_t>(20 * (c + 1)), c);
    const auto [kept, held] = stratified_split(labels, 0.15, 9);
    CHECK(kept.size() + held.size() == labels.size());
    std::vector<int> count(4, 0);
    for (auto i : held) ++count[static_cast<std::size_t>(labels[i])];
    for (int c = 0; c < 4; ++c) CHECK(count[static_cast<std::size_t>(c)] == std::lround(0.15 * 20 * (c + 1)));
    CHECK(std::is_sorted(kept.begin(), kept.end()));
    const auto again = stratified_split(labels, 0.15, 9);
    CHECK(again.second == held);
    CHECK_THROWS_AS(stratified_split(labels, 1.5, 1), Error);
  }

  TEST_CASE("zero epochs leaves the initial parameters") {
    const auto t = small_task(1.0, 2);
    Rng init(1);
    DepressionModel model(small_model(), t.vocab.size(), init);
    const auto before = model.params();
    TrainOptions opt;
    opt.epochs = 0;
    const auto r = train_depression(model, t.train, t.validation, opt);
    CHECK(r.best_epoch == 0);
    CHECK(r.steps == 0);
    for (const auto& [name, tensor] : before) CHECK(model.params().at(name).data == tensor.data);
  }

  TEST_CASE("training is deterministic for a fixed seed") {
    const auto t = small_task(1.0, 3);
    auto run = [&] {
      Rng init(4);
      DepressionModel model(small_model(), t.vocab.size(), init);
      TrainOptions opt;
      opt.epochs = 2;
      opt.batch_size = 4;
      opt.seed = 11;
      const auto r = train_depression(model, t.train, t.validation, opt);
      std::string s;
      for (const auto& line : r.log) s += line.dump() + "\n";
      return std::make_pair(s, model.params().at("out.W").data);
    };
    const auto a = run(), b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
  }

  TEST_CASE("training loss decreases on separable data") {
    const auto t = small_task(1.0, 5);
    Rng init(6);
    DepressionModel model(small_model(), t.vocab.size(), init);
    TrainOptions opt;
    opt.epochs = 5;
    opt.batch_size = 4;
    opt.adam.learning_rate = 5e-3;
    opt.balance.mode = BalanceMode::weighted;
    const auto r = train_depression(model, t.train, t.validation, opt);
    std::vector<double> losses;
    for (const auto& line : r.log)
      if (line.at("split") == "train") losses.push_back(line.at("loss").get<double>());
    REQUIRE(losses.size() == 5);
    for (std::size_t i = 1; i < losses.size(); ++i) CHECK(losses[i] < losses[i - 1]);
    CHECK(r.best_epoch >= 1);
    CHECK(r.log.size() == 10);
  }

  TEST_CASE("mean ordinal error") {
    using L = RiskLabel;
    const std::vector<L> gold = {L::green, L::crisis, L::red, L::amber};
    const std::vector<L> pred = {L::crisis, L::crisis, L::amber, L::amber};
    CHECK(mean_ordinal_error(gold, pred) == doctest::Approx(1.0));
    CHECK(mean_ordinal_error(gold, gold) == 0.0);
    CHECK_THROWS_AS(mean_ordinal_error(gold, std::vector<L>(2, L::green)), Error);
  }

  TEST_CASE("default balance per variant") {
    CHECK(default_balance(RiskVariant::cat_ce).mode == BalanceMode::weighted);
    CHECK(default_balance(RiskVariant::mse).mode == BalanceMode::sampled);
    CHECK(default_balance(RiskVariant::class_metric).mode == BalanceMode::sampled);
  }
}

TEST_SUITE("synth") {
  TEST_CASE("signal rate 1 marks every positive post, controls never") {
    SynthUsersSpec spec;
    spec.positives = 6;
    spec.controls_per_positive = 2;
    spec.posts_per_user = 8;
    spec.vocab_size = 100;
    spec.signal_rate = 1.0;
    const auto d = synth_users(spec);
    std::size_t users = 0;
    for (const SplitData* s : {&d.train, &d.validation, &d.test}) {
      users += s->labels.size();
      for (const auto& p : s->posts) CHECK(contains_phrase(p.text) == (p.user_id[0] == 'p'));
    }
    CHECK(users == 18);
  }

  TEST_CASE("signal rate 0 plants nothing; rate 0.05 plants ceil(rate * posts)") {
    SynthUsersSpec spec;
    spec.positives = 4;
    spec.controls_per_positive = 1;
    spec.posts_per_user = 50;
    spec.vocab_size = 100;
    spec.signal_rate = 0.0;
    const auto null = synth_users(spec);
    for (const SplitData* s : {&null.train, &null.validation, &null.test})
      for (const auto& p : s->posts) CHECK_FALSE(contains_phrase(p.text));
    spec.signal_rate = 0.05;
    const auto d = synth_users(spec);
    std::map<std::string, int> planted;
    for (const SplitData* s : {&d.train, &d.validation, &d.test})
      for (const auto& p : s->posts) planted[p.user_id] += contains_phrase(p.text) ? 1 : 0;
    for (const auto& [uid, n] : planted) CHECK(n == (uid[0] == 'p' ? 3 : 0));
  }

  TEST_CASE("same seed gives byte-identical files") {
    SynthUsersSpec spec;
    spec.positives = 5;
    spec.posts_per_user = 5;
    spec.vocab_size = 50;
    const auto a = support::scratch_dir("synth_a"), b = support::scratch_dir("synth_b");
    write_synth_users(a.string(), synth_users(spec));
    write_synth_users(b.string(), synth_users(spec));
    const auto ha = support::hash_tree(a);
    CHECK(ha.size() == 6);
    CHECK(ha == support::hash_tree(b));
    spec.seed = 2;
    write_synth_users(b.string(), synth_users(spec));
    CHECK(ha != support::hash_tree(b));
  }

  TEST_CASE("spec validation") {
    SynthUsersSpec spec;
    spec.signal_rate = 1.5;
    CHECK_THROWS_AS(synth_users(spec), Error);
    spec = {};
    spec.positives = 0;
    CHECK_THROWS_AS(synth_users(spec), Error);
    spec = {};
    spec.min_post_tokens = 40;
    CHECK_THROWS_AS(synth_users(spec), Error);
    SynthThreadsSpec ts;
    ts.label_mix = {1.0, 1.0};
    CHECK_THROWS_AS(synth_threads(ts), Error);
  }

  TEST_CASE("thread corpus plants sentences from the label's bank") {
    SynthThreadsSpec ts;
    ts.train = 60;
    ts.test = 20;
    ts.adjacent_rate = 0.0;
    const auto d = synth_threads(ts);
    CHECK(d.train.size() == 60);
    CHECK(d.test.size() == 20);
    for (const auto& t : d.train) {
      bool found = false;
      for (const auto& s : severity_bank(t.label)) found = found || t.target.text.find(s) != std::string::npos;
      CHECK(found);
    }
  }
}

TEST_SUITE("config") {
  TEST_CASE("sections, types and overrides") {
    auto c = Config::parse("[train]\nepochs = 5\nlr = 0.01\nshuffle = true\n[risk]\nencoder = hashed\nlist = a, b,,c\n");
    CHECK(c.get_int("train.epochs", 0) == 5);
    CHECK(c.get_double("train.lr", 0.0) == doctest::Approx(0.01));
    CHECK(c.get_bool("train.shuffle", false));
    CHECK(c.get_string("risk.encoder", "") == "hashed");
    CHECK(c.get_list("risk.list", {}) == std::vector<std::string>{"a", "b", "c"});
    CHECK(c.get_int("train.missing", 42) == 42);
    c.set("train.epochs", "9");
    CHECK(c.get_int("train.epochs", 0) == 9);
    CHECK_FALSE(c.has("nope.key"));
    c.set("train.epochs", "many");
    CHECK_THROWS_AS(c.get_int("train.epochs", 0), Error);
  }

  TEST_CASE("malformed file is rejected") {
    CHECK_THROWS_AS(Config::parse("[train\nx = 1\n"), Error);
    CHECK_THROWS_AS(Config::load("/nonexistent/mhnet.ini"), Error);
  }
}
