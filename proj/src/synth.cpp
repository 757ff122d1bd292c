#include "mhnet/synth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <tuple>

namespace mhnet {

namespace {

class Zipf {
 public:
  // Rank r has weight (r + 1)^-exponent; exponent 0 is uniform.
  Zipf(std::size_t n, double exponent) : cdf_(n) {
    double s = 0.0;
    for (std::size_t r = 0; r < n; ++r) cdf_[r] = (s += std::pow(static_cast<double>(r + 1), -exponent));
    for (double& c : cdf_) c /= s;
  }
  std::size_t operator()(Rng& rng) const {
    const double u = uniform01(rng);
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return std::min(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
  }

 private:
  std::vector<double> cdf_;
};

std::string filler_word(std::size_t r) { return "w" + std::to_string(r); }

std::string numbered(char prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%05zu", prefix, i);
  return buf;
}

std::size_t between(Rng& rng, std::size_t lo, std::size_t hi) { return lo + uniform_index(rng, hi - lo + 1); }

std::vector<std::string> filler(Rng& rng, const Zipf& zipf, std::size_t n) {
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(filler_word(zipf(rng)));
  return out;
}

std::string join(const std::vector<std::string>& words) {
  std::string s;
  for (const auto& w : words) {
    if (!s.empty()) s += ' ';
    s += w;
  }
  return s;
}

std::vector<Post> user_posts(const std::string& uid, std::size_t n, Rng& rng, const Zipf& zipf,
                             const SynthUsersSpec& spec, const std::vector<bool>& signal) {
  std::vector<Post> posts;
  std::int64_t t = 1'500'000'000 + static_cast<std::int64_t>(uniform_index(rng, 1'000'000));
  for (std::size_t i = 0; i < n; ++i) {
    Post p;
    p.post_id = uid + "-" + std::to_string(i);
    p.user_id = uid;
    p.community = "sub" + std::to_string(uniform_index(rng, 20));
    t += 60 + static_cast<std::int64_t>(uniform_index(rng, 86'400));
    p.timestamp = t;
    auto words = filler(rng, zipf, between(rng, spec.min_post_tokens, spec.max_post_tokens));
    if (signal[i]) {
      const auto& phrase = spec.signal_phrases[uniform_index(rng, spec.signal_phrases.size())];
      words.insert(words.begin() + static_cast<std::ptrdiff_t>(uniform_index(rng, words.size() + 1)), phrase);
    }
    p.text = join(words);
    posts.push_back(std::move(p));
  }
  return posts;
}

}  // namespace

std::vector<std::string> SynthUsersSpec::default_signal_phrases() {
  return {"feel so hopeless", "cant get out of bed", "nothing matters anymore", "so tired of everything",
          "cried myself to sleep again"};
}

void SynthUsersSpec::validate() const {
  if (signal_rate < 0.0 || signal_rate > 1.0) throw Error("synth: signal rate must be in [0, 1]");
  if (positives == 0) throw Error("synth: need at least one positive user");
  if (posts_per_user == 0) throw Error("synth: need at least one post per user");
  if (vocab_size == 0) throw Error("synth: vocabulary size must be positive");
  if (min_post_tokens == 0 || min_post_tokens > max_post_tokens) throw Error("synth: bad post length range");
  if (signal_phrases.empty() && signal_rate > 0.0) throw Error("synth: no signal phrases given");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw Error("synth: train fraction must be in (0, 1)");
}

SynthUsers synth_users(const SynthUsersSpec& spec) {
  spec.validate();
  const Zipf zipf(spec.vocab_size, spec.zipf_exponent);
  Rng rng(derive_seed(spec.seed, "synth.users"));
  const auto n_signal = static_cast<std::size_t>(std::ceil(spec.signal_rate * static_cast<double>(spec.posts_per_user) - 1e-9));

  struct Group {
    UserLabelRow positive;
    std::vector<Post> posts;
    std::vector<UserLabelRow> controls;
  };
  std::vector<Group> groups;
  std::size_t control_no = 0;
  for (std::size_t u = 0; u < spec.positives; ++u) {
    Group g;
    const std::string uid = numbered('p', u);
    g.positive = {uid, UserLabel::diagnosed, uid + "-dx"};
    std::vector<bool> signal(spec.posts_per_user, false);
    std::vector<std::size_t> order(spec.posts_per_user);
    std::iota(order.begin(), order.end(), 0);
    shuffle(order, rng);
    for (std::size_t i = 0; i < n_signal; ++i) signal[order[i]] = true;
    g.posts = user_posts(uid, spec.posts_per_user, rng, zipf, spec, signal);
    const std::vector<bool> none(spec.posts_per_user, false);
    for (std::size_t c = 0; c < spec.controls_per_positive; ++c) {
      const std::string cid = numbered('c', control_no++);
      g.controls.push_back({cid, UserLabel::control, std::nullopt});
      auto posts = user_posts(cid, spec.posts_per_user, rng, zipf, spec, none);
      g.posts.insert(g.posts.end(), posts.begin(), posts.end());
    }
    groups.push_back(std::move(g));
  }

  Rng split_rng(derive_seed(spec.seed, "synth.split"));
  shuffle(groups, split_rng);
  const std::size_t n = groups.size();
  const auto n_train = static_cast<std::size_t>(std::lround(spec.train_fraction * static_cast<double>(n)));
  const std::size_t n_val = (n - n_train + 1) / 2;
  SynthUsers out;
  for (std::size_t i = 0; i < n; ++i) {
    SplitData& dst = i < n_train ? out.train : i < n_train + n_val ? out.validation : out.test;
    dst.labels.push_back(groups[i].positive);
    dst.labels.insert(dst.labels.end(), groups[i].controls.begin(), groups[i].controls.end());
    dst.posts.insert(dst.posts.end(), groups[i].posts.begin(), groups[i].posts.end());
  }
  for (SplitData* s : {&out.train, &out.validation, &out.test}) {
    std::sort(s->labels.begin(), s->labels.end(),
              [](const UserLabelRow& a, const UserLabelRow& b) { return a.user_id < b.user_id; });
    std::sort(s->posts.begin(), s->posts.end(), [](const Post& a, const Post& b) {
      return std::tie(a.user_id, a.timestamp, a.post_id) < std::tie(b.user_id, b.timestamp, b.post_id);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Threads

const std::vector<std::string>& severity_bank(RiskLabel level) {
  static const std::vector<std::string> banks[kNumRiskLabels] = {
      {"Thanks so much for the kind words.", "Had a really good day at the beach.",
       "Looking forward to the weekend with friends.", "That advice really helped me out.",
       "Glad to hear things are going well.", "Just wanted to say hi to everyone here."},
      {"Feeling a bit down and stressed lately.", "Work has been wearing me out.",
       "I have been sleeping badly this week.", "Things feel kind of heavy right now.",
       "Not really sure how to cope with exams.", "Been feeling lonely since the move."},
      {"I keep thinking about hurting myself.", "The urge to self harm came back last night.",
       "I do not see the point of anything anymore.", "Everything feels hopeless and I hate myself.",
       "I wish I could just disappear.", "I hurt myself again yesterday."},
      {"I have a plan to end my life tonight.", "This is my goodbye message to everyone.",
       "I am not safe right now.", "I will not make it through tonight.",
       "I have decided tonight is the end.", "Please someone help me right now or I am gone."},
  };
  return banks[ordinal(level)];
}

void SynthThreadsSpec::validate() const {
  if (adjacent_rate < 0.0 || adjacent_rate > 1.0) throw Error("synth: adjacent rate must be in [0, 1]");
  if (label_mix.size() != kNumRiskLabels) throw Error("synth: label mix needs four weights");
  double s = 0.0;
  for (double w : label_mix) {
    if (w < 0.0) throw Error("synth: negative label weight");
    s += w;
  }
  if (s <= 0.0) throw Error("synth: label weights sum to zero");
  if (planted == 0) throw Error("synth: need at least one planted sentence");
}

namespace {

std::string filler_sentence(Rng& rng, const Zipf& zipf) {
  std::string s = join(filler(rng, zipf, between(rng, 5, 12)));
  s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s + ".";
}

std::string bank_sentence(Rng& rng, int level) {
  const auto& bank = severity_bank(risk_label_from_ordinal(level));
  return bank[uniform_index(rng, bank.size())];
}

int sample_label(Rng& rng, const std::vector<double>& mix) {
  const double total = std::accumulate(mix.begin(), mix.end(), 0.0);
  double u = uniform01(rng) * total;
  for (int i = 0; i < kNumRiskLabels; ++i) {
    if (u < mix[static_cast<std::size_t>(i)]) return i;
    u -= mix[static_cast<std::size_t>(i)];
  }
  return kNumRiskLabels - 1;
}

ThreadInstance make_thread(std::size_t index, Rng& rng, const Zipf& zipf, const SynthThreadsSpec& spec) {
  const int label = sample_label(rng, spec.label_mix);
  ThreadInstance inst;
  inst.label = risk_label_from_ordinal(label);
  const std::string tid = numbered('t', index);
  std::int64_t t = 1'600'000'000 + static_cast<std::int64_t>(index) * 100'000;

  const std::size_t n_context = uniform_index(rng, 4);
  for (std::size_t c = 0; c < n_context; ++c) {
    std::vector<std::string> sentences;
    const std::size_t n = between(rng, 2, 5);
    for (std::size_t i = 0; i < n; ++i) sentences.push_back(filler_sentence(rng, zipf));
    if (uniform01(rng) < 0.5) sentences.push_back(bank_sentence(rng, std::max(0, label - 1)));
    shuffle(sentences, rng);
    Post p;
    p.post_id = tid + "-c" + std::to_string(c);
    p.user_id = numbered('u', uniform_index(rng, 500));
    p.community = "forum";
    p.timestamp = t + static_cast<std::int64_t>(c) * 600;
    p.text = join(sentences);
    inst.context.push_back(std::move(p));
  }

  std::vector<std::string> sentences;
  for (std::size_t i = 0, n = between(rng, 1, 6); i < n; ++i) sentences.push_back(filler_sentence(rng, zipf));
  for (std::size_t i = 0; i < spec.planted; ++i) {
    int level = label;
    if (uniform01(rng) < spec.adjacent_rate) {
      if (label == 0) level = 1;
      else if (label == kNumRiskLabels - 1) level = label - 1;
      else level = uniform01(rng) < 0.5 ? label - 1 : label + 1;
    }
    sentences.push_back(bank_sentence(rng, level));
  }
  shuffle(sentences, rng);
  inst.target.post_id = tid;
  inst.target.user_id = numbered('u', uniform_index(rng, 500));
  inst.target.community = "forum";
  inst.target.timestamp = t + 3600;
  inst.target.text = join(sentences);
  return inst;
}

}  // namespace

SynthThreads synth_threads(const SynthThreadsSpec& spec) {
  spec.validate();
  const Zipf zipf(spec.vocab_size, spec.zipf_exponent);
  Rng rng(derive_seed(spec.seed, "synth.threads"));
  SynthThreads out;
  for (std::size_t i = 0; i < spec.train + spec.test; ++i) {
    (i < spec.train ? out.train : out.test).push_back(make_thread(i, rng, zipf, spec));
  }
  return out;
}

void write_synth_users(const std::string& dir, const SynthUsers& users) {
  std::filesystem::create_directories(dir);
  const std::pair<const char*, const SplitData*> splits[] = {
      {"train", &users.train}, {"validation", &users.validation}, {"test", &users.test}};
  for (const auto& [name, data] : splits) {
    write_posts(dir + "/" + name + ".posts.jsonl", data->posts);
    write_user_labels(dir + "/" + name + ".labels.jsonl", data->labels);
  }
}

void write_synth_threads(const std::string& dir, const SynthThreads& threads) {
  std::filesystem::create_directories(dir);
  write_threads(dir + "/train.threads.jsonl", threads.train);
  write_threads(dir + "/test.threads.jsonl", threads.test);
}

}  // namespace mhnet
