#include <cmath>

#include "mhnet/models.hpp"

namespace mhnet {

std::string_view to_string(RiskVariant v) {
  switch (v) {
    case RiskVariant::cat_ce: return "cat_ce";
    case RiskVariant::mse: return "mse";
    case RiskVariant::class_metric: return "class_metric";
    case RiskVariant::class_metric_ordinal: return "class_metric_ordinal";
  }
  return "cat_ce";
}

RiskVariant parse_risk_variant(std::string_view s) {
  if (s == "cat_ce") return RiskVariant::cat_ce;
  if (s == "mse") return RiskVariant::mse;
  if (s == "class_metric") return RiskVariant::class_metric;
  if (s == "class_metric_ordinal") return RiskVariant::class_metric_ordinal;
  throw Error("unknown risk variant: " + std::string(s) +
              " (expected cat_ce, mse, class_metric or class_metric_ordinal)");
}

RiskModelConfig RiskModelConfig::for_variant(RiskVariant v, std::size_t sentence_dim) {
  RiskModelConfig c;
  c.variant = v;
  c.sentence_dim = sentence_dim;
  switch (v) {
    case RiskVariant::cat_ce:
      c.filters = 150;
      c.dense = {250, 250};
      c.dropout = 0.3;
      break;
    case RiskVariant::mse:
      c.filters = 100;
      c.dense = {250, 250};
      c.dropout = 0.5;
      break;
    case RiskVariant::class_metric:
      c.filters = 100;
      c.dense = {150, 150};
      c.dropout = 0.3;
      c.margin = 1.0;
      break;
    case RiskVariant::class_metric_ordinal:
      c.filters = 100;
      c.dense = {150, 150};
      c.dropout = 0.3;
      c.margin = 0.5;
      break;
  }
  return c;
}

void RiskModelConfig::validate() const {
  if (sentence_dim == 0 || conv_window == 0 || filters == 0 || pool_len == 0 || max_sentences == 0) {
    throw Error("risk model: sizes must be positive");
  }
  if (max_sentences < conv_window) throw Error("risk model: max_sentences must cover the conv window");
  if (dense.empty()) throw Error("risk model: at least one dense layer is required");
  for (auto d : dense)
    if (d == 0) throw Error("risk model: dense widths must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw Error("risk model: dropout must be in [0, 1)");
  if (margin < 0.0) throw Error("risk model: margin must be >= 0");
}

std::size_t RiskModelConfig::output_dim() const {
  switch (variant) {
    case RiskVariant::cat_ce: return kNumRiskLabels;
    case RiskVariant::mse: return 1;
    default: return metric_dim ? metric_dim : dense.back();
  }
}

namespace {

std::string dense_name(std::size_t i, const char* part) {
  return "dense" + std::to_string(i) + "." + part;
}

bool is_metric(RiskVariant v) {
  return v == RiskVariant::class_metric || v == RiskVariant::class_metric_ordinal;
}

std::size_t tower_width(const RiskModelConfig& c) {
  const std::size_t conv_rows = c.max_sentences - c.conv_window + 1;
  return (conv_rows + c.pool_len - 1) / c.pool_len * c.filters;
}

Tensor2 last_sentences(const std::vector<std::string>& sentences, const SentenceEncoder& enc,
                       std::size_t max_sentences) {
  Tensor2 m(max_sentences, enc.dim());
  const std::size_t n = std::min(sentences.size(), max_sentences);
  const std::size_t first = sentences.size() - n;
  const std::size_t pad = max_sentences - n;
  for (std::size_t i = 0; i < n; ++i) {
    auto v = enc.encode(sentences[first + i]);
    if (v.size() != enc.dim()) throw Error("sentence encoder returned a vector of the wrong size");
    std::copy(v.begin(), v.end(), m.row(pad + i).begin());
  }
  return m;
}

}  // namespace

RiskInput make_risk_input(const ThreadInstance& inst, const SentenceEncoder& encoder,
                          std::size_t max_sentences) {
  auto target = split_sentences(inst.target.text);
  if (target.empty()) throw Error("risk model: target post " + inst.target.post_id + " is empty");
  std::vector<std::string> context;
  for (const auto& p : inst.context)
    for (auto& s : split_sentences(p.text)) context.push_back(std::move(s));
  return {last_sentences(target, encoder, max_sentences), last_sentences(context, encoder, max_sentences)};
}

RiskModel::RiskModel(RiskModelConfig cfg, Rng& init_rng) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const std::size_t width = cfg_.conv_window * cfg_.sentence_dim;
  init_glorot(params_.add("conv.W", cfg_.filters, width), width, cfg_.filters, init_rng);
  params_.add("conv.b", 1, cfg_.filters);
  std::size_t in = 2 * tower_width(cfg_);
  for (std::size_t i = 0; i < cfg_.dense.size(); ++i) {
    init_glorot(params_.add(dense_name(i, "W"), cfg_.dense[i], in), in, cfg_.dense[i], init_rng);
    params_.add(dense_name(i, "b"), 1, cfg_.dense[i]);
    in = cfg_.dense[i];
  }
  const std::size_t out = cfg_.output_dim();
  init_glorot(params_.add("out.W", out, in), in, out, init_rng);
  params_.add("out.b", 1, out);
  if (is_metric(cfg_.variant)) init_uniform(params_.add("classes", kNumRiskLabels, out), 0.05, init_rng);
}

RiskModel::RiskModel(RiskModelConfig cfg, ParamStore params) : cfg_(std::move(cfg)), params_(std::move(params)) {
  cfg_.validate();
  Rng dummy(0);
  RiskModel reference(cfg_, dummy);
  if (!reference.params_.same_layout(params_)) {
    throw Error("risk model: parameter layout does not match the configuration");
  }
}

struct RiskModel::Cache {
  struct Tower {
    const Tensor2* input = nullptr;
    Tensor2 features;  // conv output after ReLU
    MaxPoolResult pooled;
  };
  Tower target, context;
  std::vector<Vec> dense_in;
  std::vector<Vec> dense_out;
  std::vector<Vec> masks;
  Vec last_hidden;
  Vec output;  // pre-softmax logits for cat_ce
  bool valid = false;
};

Vec RiskModel::run(const RiskInput& in, Mode mode, Rng& rng, Cache* cache) const {
  const ConvSpec spec{cfg_.conv_window, cfg_.filters, 1, PoolKind::max, cfg_.pool_len};
  for (const Tensor2* t : {&in.target, &in.context}) {
    if (t->rows != cfg_.max_sentences || t->cols != cfg_.sentence_dim) {
      throw Error("risk model: input must be [" + std::to_string(cfg_.max_sentences) + " x " +
                  std::to_string(cfg_.sentence_dim) + "]");
    }
  }
  // One convolutional tower, shared by the target post and its context.
  auto tower = [&](const Tensor2& x, Cache::Tower* tc) {
    Tensor2 z = conv1d_forward(x, spec, params_.at("conv.W"), params_.at("conv.b").data);
    relu_inplace(z.data);
    MaxPoolResult pooled = max_pool(z, cfg_.pool_len);
    Vec flat = pooled.out.data;
    if (tc) {
      tc->input = &x;
      tc->features = std::move(z);
      tc->pooled = std::move(pooled);
    }
    return flat;
  };
  Vec h = tower(in.target, cache ? &cache->target : nullptr);
  Vec ctx = tower(in.context, cache ? &cache->context : nullptr);
  h.insert(h.end(), ctx.begin(), ctx.end());

  if (cache) {
    cache->dense_in.clear();
    cache->dense_out.clear();
    cache->masks.clear();
  }
  for (std::size_t i = 0; i < cfg_.dense.size(); ++i) {
    Vec z = dense_forward(h, params_.at(dense_name(i, "W")), params_.at(dense_name(i, "b")).data,
                          Activation::relu);
    Vec mask = dropout_mask(z.size(), cfg_.dropout, mode, rng);
    if (cache) {
      cache->dense_in.push_back(h);
      cache->dense_out.push_back(z);
      cache->masks.push_back(mask);
    }
    for (std::size_t j = 0; j < z.size(); ++j) z[j] *= mask[j];
    h = std::move(z);
  }
  Vec out = dense_forward(h, params_.at("out.W"), params_.at("out.b").data, Activation::linear);
  if (cache) {
    cache->last_hidden = std::move(h);
    cache->output = out;
    cache->valid = true;
  }
  if (cfg_.variant == RiskVariant::cat_ce) return softmax(out);
  return out;
}

Vec RiskModel::forward(const RiskInput& in, Mode mode, Rng& dropout_rng) const {
  return run(in, mode, dropout_rng, nullptr);
}

Vec RiskModel::predict(const RiskInput& in) const {
  Rng unused(0);
  return run(in, Mode::eval, unused, nullptr);
}

RiskLabel RiskModel::classify(const RiskInput& in) const {
  const Vec out = predict(in);
  switch (cfg_.variant) {
    case RiskVariant::cat_ce: {
      std::size_t best = 0;
      for (std::size_t i = 1; i < out.size(); ++i)
        if (out[i] > out[best]) best = i;
      return risk_label_from_ordinal(static_cast<int>(best));
    }
    case RiskVariant::mse: return mse_classify(out[0]);
    default: return metric_classify(out, params_.at("classes"));
  }
}

double RiskModel::loss_and_grad(const RiskInput& in, RiskLabel gold, double weight, Mode mode,
                                Rng& dropout_rng, Rng& negative_rng, GradStore& grads) const {
  int negative = -1;
  if (is_metric(cfg_.variant)) {
    // Uniform over the three incorrect classes.
    negative = static_cast<int>(uniform_index(negative_rng, kNumRiskLabels - 1));
    if (negative >= ordinal(gold)) ++negative;
  }
  return loss_and_grad_with_negative(in, gold, negative, weight, mode, dropout_rng, grads);
}

double RiskModel::loss_and_grad_with_negative(const RiskInput& in, RiskLabel gold, int negative,
                                              double weight, Mode mode, Rng& dropout_rng,
                                              GradStore& grads) const {
  Cache cache;
  const Vec out = run(in, mode, dropout_rng, &cache);
  const int p = ordinal(gold);
  double loss = 0.0;
  Vec g_out;
  switch (cfg_.variant) {
    case RiskVariant::cat_ce:
      loss = cross_entropy(out, static_cast<std::size_t>(p), weight, &g_out);
      break;
    case RiskVariant::mse: {
      const double diff = out[0] - static_cast<double>(p);
      loss = weight * diff * diff;
      g_out = {2.0 * weight * diff};
      break;
    }
    case RiskVariant::class_metric:
    case RiskVariant::class_metric_ordinal: {
      const auto& classes = params_.at("classes");
      MetricLossGrad mg;
      loss = cfg_.variant == RiskVariant::class_metric
                 ? class_metric_loss(out, p, negative, classes, cfg_.margin, &mg)
                 : class_metric_ordinal_loss(out, p, negative, classes, cfg_.margin, &mg);
      loss *= weight;
      g_out = mg.x;
      for (double& v : g_out) v *= weight;
      auto& gc = grads.at("classes");
      auto gp = gc.row(static_cast<std::size_t>(p));
      auto gn = gc.row(static_cast<std::size_t>(negative));
      for (std::size_t i = 0; i < gp.size(); ++i) {
        gp[i] += weight * mg.positive[i];
        gn[i] += weight * mg.negative[i];
      }
      break;
    }
  }
  if (!std::isfinite(loss)) throw NumericError("risk model: non-finite loss");

  // Backward. cross_entropy already returned the gradient w.r.t. the logits.
  Vec g = dense_backward(cache.last_hidden, params_.at("out.W"), cache.output, g_out, Activation::linear,
                         grads.at("out.W"), grads.at("out.b").data);
  for (std::size_t i = cfg_.dense.size(); i-- > 0;) {
    for (std::size_t j = 0; j < g.size(); ++j) g[j] *= cache.masks[i][j];
    g = dense_backward(cache.dense_in[i], params_.at(dense_name(i, "W")), cache.dense_out[i], g,
                       Activation::relu, grads.at(dense_name(i, "W")), grads.at(dense_name(i, "b")).data);
  }
  const ConvSpec spec{cfg_.conv_window, cfg_.filters, 1, PoolKind::max, cfg_.pool_len};
  const std::size_t half = g.size() / 2;
  const Cache::Tower* towers[] = {&cache.target, &cache.context};
  for (std::size_t t = 0; t < 2; ++t) {
    const auto& tc = *towers[t];
    Tensor2 g_pooled(tc.pooled.out.rows, tc.pooled.out.cols);
    std::copy_n(g.begin() + static_cast<std::ptrdiff_t>(t * half), half, g_pooled.data.begin());
    Tensor2 g_features = max_pool_backward(tc.pooled, tc.features.rows, g_pooled);
    relu_backward(tc.features.data, g_features.data);
    conv1d_backward(*tc.input, spec, params_.at("conv.W"), g_features, nullptr, grads.at("conv.W"),
                    grads.at("conv.b").data);
  }
  for (auto& [name, t] : grads)
    if (params_.frozen(name)) t.fill(0.0);
  return loss;
}

}  // namespace mhnet
