#include "mhnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace mhnet {

using json = nlohmann::ordered_json;

std::string_view to_string(SelectionStrategy s) {
  switch (s) {
    case SelectionStrategy::earliest: return "earliest";
    case SelectionStrategy::latest: return "latest";
    case SelectionStrategy::random: return "random";
  }
  return "random";
}

SelectionStrategy parse_selection_strategy(std::string_view s) {
  if (s == "earliest") return SelectionStrategy::earliest;
  if (s == "latest") return SelectionStrategy::latest;
  if (s == "random") return SelectionStrategy::random;
  throw Error("unknown selection strategy '" + std::string(s) + "' (expected earliest, latest or random)");
}

void SelectionConfig::validate() const {
  if (n_post < 1) throw Error("selection: n_post must be at least 1");
  if (n_term < 1) throw Error("selection: n_term must be at least 1");
}

std::vector<std::vector<TokenId>> select_posts(const UserRecord& user, const SelectionConfig& cfg) {
  cfg.validate();
  if (user.posts.empty()) throw Error("select_posts: user " + user.user_id + " has no posts");
  const std::size_t n = user.posts.size();
  std::vector<std::size_t> chosen;
  if (n <= cfg.n_post) {
    chosen.resize(n);
    std::iota(chosen.begin(), chosen.end(), 0);
  } else {
    switch (cfg.strategy) {
      case SelectionStrategy::earliest:
        chosen.resize(cfg.n_post);
        std::iota(chosen.begin(), chosen.end(), 0);
        break;
      case SelectionStrategy::latest:
        chosen.resize(cfg.n_post);
        std::iota(chosen.begin(), chosen.end(), n - cfg.n_post);
        break;
      case SelectionStrategy::random: {
        Rng rng(derive_seed(cfg.seed, "select:" + user.user_id));
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), 0);
        shuffle(all, rng);
        chosen.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(cfg.n_post));
        std::sort(chosen.begin(), chosen.end());
        break;
      }
    }
  }
  std::vector<std::vector<TokenId>> out;
  out.reserve(chosen.size());
  for (auto i : chosen) {
    const auto& tokens = user.posts[i].tokens;
    out.emplace_back(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(std::min(tokens.size(), cfg.n_term)));
  }
  return out;
}

std::string_view to_string(BalanceMode m) { return m == BalanceMode::weighted ? "weighted" : "sampled"; }

BalanceMode parse_balance_mode(std::string_view s) {
  if (s == "weighted") return BalanceMode::weighted;
  if (s == "sampled") return BalanceMode::sampled;
  throw Error("unknown balance mode '" + std::string(s) + "' (expected weighted or sampled)");
}

namespace {

std::vector<std::vector<std::size_t>> by_class(std::span<const int> labels, std::size_t num_classes) {
  std::vector<std::vector<std::size_t>> groups(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes)
      throw Error("balance: label out of range at instance " + std::to_string(i));
    groups[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  for (std::size_t c = 0; c < num_classes; ++c)
    if (groups[c].empty()) throw Error("balance: class " + std::to_string(c) + " has no training instances");
  return groups;
}

}  // namespace

std::vector<double> class_weights(std::span<const int> labels, std::size_t num_classes) {
  const auto groups = by_class(labels, num_classes);
  std::vector<double> w(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c)
    w[c] = static_cast<double>(labels.size()) / (static_cast<double>(num_classes) * groups[c].size());
  return w;
}

std::vector<std::size_t> balanced_sample(std::span<const int> labels, std::size_t num_classes, Rng& rng) {
  auto groups = by_class(labels, num_classes);
  std::size_t m = labels.size();
  for (const auto& g : groups) m = std::min(m, g.size());
  std::vector<std::size_t> out;
  for (auto& g : groups) {
    shuffle(g, rng);
    out.insert(out.end(), g.begin(), g.begin() + static_cast<std::ptrdiff_t>(m));
  }
  shuffle(out, rng);
  return out;
}

BalancedEpoch balance(std::span<const int> labels, std::size_t num_classes, const BalanceConfig& cfg, Rng& rng) {
  BalancedEpoch e;
  if (cfg.mode == BalanceMode::weighted) {
    const auto w = class_weights(labels, num_classes);
    e.indices.resize(labels.size());
    std::iota(e.indices.begin(), e.indices.end(), 0);
    shuffle(e.indices, rng);
    for (auto i : e.indices) e.weights.push_back(w[static_cast<std::size_t>(labels[i])]);
  } else {
    e.indices = balanced_sample(labels, num_classes, rng);
    e.weights.assign(e.indices.size(), 1.0);
  }
  return e;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(std::span<const int> labels,
                                                                               double fraction,
                                                                               std::uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0) throw Error("stratified_split: fraction must be in [0, 1]");
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
  Rng rng(derive_seed(seed, "validation.split"));
  std::vector<std::size_t> kept, held;
  for (auto& [label, idx] : groups) {
    shuffle(idx, rng);
    const auto h = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(idx.size())));
    held.insert(held.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(h));
    kept.insert(kept.end(), idx.begin() + static_cast<std::ptrdiff_t>(h), idx.end());
  }
  std::sort(kept.begin(), kept.end());
  std::sort(held.begin(), held.end());
  return {kept, held};
}

BalanceConfig default_balance(RiskVariant v) {
  return {v == RiskVariant::cat_ce ? BalanceMode::weighted : BalanceMode::sampled};
}

double mean_ordinal_error(std::span<const RiskLabel> gold, std::span<const RiskLabel> pred) {
  if (gold.size() != pred.size()) throw Error("mean_ordinal_error: length mismatch");
  if (gold.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < gold.size(); ++i) s += std::abs(ordinal(gold[i]) - ordinal(pred[i]));
  return s / static_cast<double>(gold.size());
}

// ---------------------------------------------------------------------------
// Shared loop

namespace {

void scale(GradStore& g, double f) {
  for (auto& [name, t] : g)
    for (double& v : t.data) v *= f;
}

struct Callbacks {
  std::vector<int> labels;
  std::size_t num_classes = 2;
  // Loss of instance i with weight w; accumulates into grads.
  std::function<double(std::size_t i, double w, Rng& dropout, Rng& negative, GradStore& grads)> step;
  // Validation loss and metrics, plus the model-selection score.
  std::function<std::pair<json, double>(double& loss)> validate;
  std::function<std::string(std::size_t i)> describe;
};

TrainResult run_training(ParamStore& params, const Callbacks& cb, bool has_validation, const TrainOptions& opt) {
  if (opt.batch_size == 0) throw Error("train: batch size must be at least 1");
  TrainResult result;
  result.best = params;
  result.best_score = -1.0;
  AdamState adam;
  adam.config = opt.adam;
  Rng order_rng(derive_seed(opt.seed, "train.order"));
  Rng dropout_rng(derive_seed(opt.seed, "train.dropout"));
  Rng negative_rng(derive_seed(opt.seed, "train.negative"));

  auto emit = [&](json line) {
    if (opt.on_log) opt.on_log(line);
    result.log.push_back(std::move(line));
  };

  for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
    const BalancedEpoch plan = balance(cb.labels, cb.num_classes, opt.balance, order_rng);
    GradStore grads = params.zeros_like();
    double total = 0.0;
    std::size_t in_batch = 0;
    for (std::size_t j = 0; j < plan.indices.size(); ++j) {
      const std::size_t i = plan.indices[j];
      const double loss = cb.step(i, plan.weights[j], dropout_rng, negative_rng, grads);
      if (!std::isfinite(loss)) {
        throw NumericError("training diverged: non-finite loss at epoch " + std::to_string(epoch) + ", " +
                           cb.describe(i));
      }
      total += loss;
      if (++in_batch == opt.batch_size || j + 1 == plan.indices.size()) {
        scale(grads, 1.0 / static_cast<double>(in_batch));
        try {
          adam_step(params, grads, adam);
        } catch (const NumericError& e) {
          throw NumericError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
        }
        grads.zero();
        in_batch = 0;
      }
    }
    const double train_loss = plan.indices.empty() ? 0.0 : total / static_cast<double>(plan.indices.size());
    emit(json{{"epoch", epoch}, {"split", "train"}, {"loss", train_loss}, {"metrics", json::object()}});

    double score = 0.0;
    if (has_validation) {
      double val_loss = 0.0;
      auto [metrics, s] = cb.validate(val_loss);
      score = s;
      emit(json{{"epoch", epoch}, {"split", "validation"}, {"loss", val_loss}, {"metrics", metrics}});
    }
    // Without a validation split the last epoch wins.
    if (!has_validation || score > result.best_score) {
      result.best_score = score;
      result.best_epoch = epoch;
      result.best = params;
    }
  }
  if (result.best_score < 0.0) result.best_score = 0.0;
  result.steps = adam.step;
  params = result.best;
  return result;
}

}  // namespace

// ---------------------------------------------------------------------------
// Depression

std::vector<DepressionExample> make_depression_examples(const std::vector<UserRecord>& users,
                                                        const SelectionConfig& selection) {
  std::vector<DepressionExample> out;
  out.reserve(users.size());
  for (const auto& u : users) {
    out.push_back({u.user_id, select_posts(u, selection), u.label == UserLabel::diagnosed ? 1 : 0});
  }
  return out;
}

std::vector<Vec> predict_depression(const DepressionModel& model, const std::vector<DepressionExample>& data) {
  std::vector<Vec> out(data.size());
  std::string error;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < data.size(); ++i) {
    try {
      out[i] = model.predict(data[i].posts);
    } catch (const std::exception& e) {
#pragma omp critical
      if (error.empty()) error = "user " + data[i].user_id + ": " + e.what();
    }
  }
  if (!error.empty()) throw Error(error);
  return out;
}

TrainResult train_depression(DepressionModel& model, const std::vector<DepressionExample>& train,
                             const std::vector<DepressionExample>& validation, const TrainOptions& opt) {
  Callbacks cb;
  cb.num_classes = 2;
  for (const auto& ex : train) cb.labels.push_back(ex.label);
  cb.step = [&](std::size_t i, double w, Rng& dropout, Rng&, GradStore& grads) {
    return model.loss_and_grad(train[i].posts, static_cast<std::size_t>(train[i].label), w, Mode::train, dropout,
                               grads);
  };
  cb.describe = [&](std::size_t i) { return "user " + train[i].user_id; };
  cb.validate = [&](double& loss) {
    const auto probs = predict_depression(model, validation);
    std::vector<int> gold, pred;
    loss = 0.0;
    for (std::size_t i = 0; i < validation.size(); ++i) {
      gold.push_back(validation[i].label);
      pred.push_back(probs[i][1] > probs[i][0] ? 1 : 0);
      loss -= std::log(std::max(probs[i][static_cast<std::size_t>(validation[i].label)], 1e-300));
    }
    loss /= static_cast<double>(validation.size());
    const auto s = binary_metrics(gold, pred, 1);
    const auto rep = confusion_report(gold, pred, 2);
    json m{{"precision", to_double(s.precision)},
           {"recall", to_double(s.recall)},
           {"f1", to_double(s.f1)},
           {"accuracy", to_double(rep.accuracy)}};
    return std::pair<json, double>{m, to_double(s.f1)};
  };
  return run_training(model.params(), cb, !validation.empty(), opt);
}

// ---------------------------------------------------------------------------
// Risk

std::vector<RiskExample> make_risk_examples(const std::vector<ThreadInstance>& threads,
                                            const SentenceEncoder& encoder, std::size_t max_sentences) {
  std::vector<RiskExample> out(threads.size());
  std::string error;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < threads.size(); ++i) {
    try {
      out[i] = {threads[i].target.post_id, make_risk_input(threads[i], encoder, max_sentences), threads[i].label};
    } catch (const std::exception& e) {
#pragma omp critical
      if (error.empty()) error = e.what();
    }
  }
  if (!error.empty()) throw Error(error);
  return out;
}

std::vector<Vec> predict_risk(const RiskModel& model, const std::vector<RiskExample>& data) {
  std::vector<Vec> out(data.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < data.size(); ++i) out[i] = model.predict(data[i].input);
  return out;
}

std::vector<RiskLabel> classify_risk(const RiskModel& model, const std::vector<RiskExample>& data) {
  std::vector<RiskLabel> out(data.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < data.size(); ++i) out[i] = model.classify(data[i].input);
  return out;
}

namespace {

// Unweighted validation loss from head outputs. Metric variants average the
// hinge over all three negatives.
double risk_eval_loss(const RiskModel& model, const Vec& out, RiskLabel gold) {
  const int p = ordinal(gold);
  switch (model.config().variant) {
    case RiskVariant::cat_ce: return -std::log(std::max(out[static_cast<std::size_t>(p)], 1e-300));
    case RiskVariant::mse: return (out[0] - p) * (out[0] - p);
    default: {
      const auto& classes = model.params().at("classes");
      double s = 0.0;
      for (int n = 0; n < kNumRiskLabels; ++n) {
        if (n == p) continue;
        s += model.config().variant == RiskVariant::class_metric
                 ? class_metric_loss(out, p, n, classes, model.config().margin)
                 : class_metric_ordinal_loss(out, p, n, classes, model.config().margin);
      }
      return s / (kNumRiskLabels - 1);
    }
  }
}

}  // namespace

TrainResult train_risk(RiskModel& model, const std::vector<RiskExample>& train,
                       const std::vector<RiskExample>& validation, const TrainOptions& opt) {
  Callbacks cb;
  cb.num_classes = kNumRiskLabels;
  for (const auto& ex : train) cb.labels.push_back(ordinal(ex.label));
  cb.step = [&](std::size_t i, double w, Rng& dropout, Rng& negative, GradStore& grads) {
    return model.loss_and_grad(train[i].input, train[i].label, w, Mode::train, dropout, negative, grads);
  };
  cb.describe = [&](std::size_t i) { return "post " + train[i].post_id; };
  cb.validate = [&](double& loss) {
    const auto outs = predict_risk(model, validation);
    const auto pred = classify_risk(model, validation);
    std::vector<RiskLabel> gold;
    loss = 0.0;
    for (std::size_t i = 0; i < validation.size(); ++i) {
      gold.push_back(validation[i].label);
      loss += risk_eval_loss(model, outs[i], validation[i].label);
    }
    loss /= static_cast<double>(validation.size());
    const auto rep = clpsych_metrics(gold, pred);
    json m{{"non_green_f1", to_double(rep.non_green_f1)},
           {"flagged_f1", to_double(rep.flagged.macro_f1)},
           {"urgent_f1", to_double(rep.urgent.macro_f1)},
           {"all_f1", to_double(rep.macro_f1)},
           {"accuracy", to_double(rep.accuracy)}};
    return std::pair<json, double>{m, to_double(rep.non_green_f1)};
  };
  return run_training(model.params(), cb, !validation.empty(), opt);
}

}  // namespace mhnet
