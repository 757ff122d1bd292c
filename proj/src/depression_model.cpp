#include "mhnet/models.hpp"

#include <cmath>

namespace mhnet {

void DepressionModelConfig::validate() const {
  if (embed_dim == 0 || conv_window == 0 || filters == 0 || merge_window == 0 || merge_stride == 0 ||
      merge_filters == 0 || classes < 2) {
    throw Error("depression model: sizes must be positive and classes >= 2");
  }
  for (auto d : dense)
    if (d == 0) throw Error("depression model: dense widths must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw Error("depression model: dropout must be in [0, 1)");
}

namespace {

std::string dense_name(std::size_t i, const char* part) {
  return "dense" + std::to_string(i) + "." + part;
}

}  // namespace

DepressionModel::DepressionModel(DepressionModelConfig cfg, std::size_t vocab_size, Rng& init_rng)
    : cfg_(std::move(cfg)) {
  cfg_.validate();
  if (vocab_size < 2) throw Error("depression model: vocabulary too small");
  init_uniform(params_.add("embed", vocab_size, cfg_.embed_dim), 0.05, init_rng);
  init_glorot(params_.add("conv.W", cfg_.filters, cfg_.conv_window * cfg_.embed_dim),
              cfg_.conv_window * cfg_.embed_dim, cfg_.filters, init_rng);
  params_.add("conv.b", 1, cfg_.filters);
  init_glorot(params_.add("merge.W", cfg_.merge_filters, cfg_.merge_window * cfg_.filters),
              cfg_.merge_window * cfg_.filters, cfg_.merge_filters, init_rng);
  params_.add("merge.b", 1, cfg_.merge_filters);
  std::size_t in = cfg_.merge_filters;
  for (std::size_t i = 0; i < cfg_.dense.size(); ++i) {
    init_glorot(params_.add(dense_name(i, "W"), cfg_.dense[i], in), in, cfg_.dense[i], init_rng);
    params_.add(dense_name(i, "b"), 1, cfg_.dense[i]);
    in = cfg_.dense[i];
  }
  init_glorot(params_.add("out.W", cfg_.classes, in), in, cfg_.classes, init_rng);
  params_.add("out.b", 1, cfg_.classes);
}

DepressionModel::DepressionModel(DepressionModelConfig cfg, ParamStore params)
    : cfg_(std::move(cfg)), params_(std::move(params)) {
  cfg_.validate();
  Rng dummy(0);
  DepressionModel reference(cfg_, params_.at("embed").rows, dummy);
  if (!reference.params_.same_layout(params_)) {
    throw Error("depression model: parameter layout does not match the configuration");
  }
}

struct DepressionModel::Cache {
  struct PostCache {
    bool active = false;
    const std::vector<TokenId>* tokens = nullptr;
    Tensor2 input;     // embedded tokens
    Tensor2 features;  // conv output after ReLU
  };
  std::vector<PostCache> posts;
  std::vector<Vec> post_vectors;
  Tensor2 stacked;
  Tensor2 merged;  // merge conv output after ReLU
  std::vector<Vec> dense_in;
  std::vector<Vec> dense_out;
  std::vector<Vec> masks;
  Vec last_hidden;
  Vec logits;
  bool valid = false;
};

namespace {

ConvSpec post_spec(const DepressionModelConfig& c) {
  return {c.conv_window, c.filters, 1, PoolKind::avg_all, 1};
}

ConvSpec merge_spec(const DepressionModelConfig& c) {
  return {c.merge_window, c.merge_filters, c.merge_stride, PoolKind::avg_all, 1};
}

Tensor2 embed_tokens(const Tensor2& table, std::span<const TokenId> tokens) {
  Tensor2 x(tokens.size(), table.cols);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const auto id = static_cast<std::size_t>(tokens[t]);
    if (tokens[t] < 0 || id >= table.rows) throw Error("token id outside the embedding table");
    std::copy_n(table.row(id).begin(), table.cols, x.row(t).begin());
  }
  return x;
}

}  // namespace

Vec DepressionModel::encode_post(std::span<const TokenId> tokens) const {
  if (tokens.size() < cfg_.conv_window) return Vec(cfg_.filters, 0.0);
  Tensor2 z = conv1d_forward(embed_tokens(params_.at("embed"), tokens), post_spec(cfg_),
                             params_.at("conv.W"), params_.at("conv.b").data);
  relu_inplace(z.data);
  return avg_pool_all(z);
}

Tensor2 DepressionModel::stack_padded(const std::vector<Vec>& post_vectors) const {
  std::size_t rows = std::max(post_vectors.size(), cfg_.merge_window);
  const std::size_t excess = (rows - cfg_.merge_window) % cfg_.merge_stride;
  if (excess != 0) rows += cfg_.merge_stride - excess;
  Tensor2 s(rows, cfg_.filters);
  for (std::size_t i = 0; i < post_vectors.size(); ++i) {
    if (post_vectors[i].size() != cfg_.filters) throw Error("encode_user: post vector has wrong width");
    std::copy(post_vectors[i].begin(), post_vectors[i].end(), s.row(i).begin());
  }
  return s;
}

Vec DepressionModel::encode_user(const std::vector<Vec>& post_vectors) const {
  if (post_vectors.empty()) throw Error("encode_user: no post vectors");
  Tensor2 m = conv1d_forward(stack_padded(post_vectors), merge_spec(cfg_), params_.at("merge.W"),
                             params_.at("merge.b").data);
  relu_inplace(m.data);
  return avg_pool_all(m);
}

Vec DepressionModel::forward(const std::vector<std::vector<TokenId>>& posts, Mode mode, Rng* rng,
                             Cache* cache) const {
  if (posts.empty()) throw Error("depression model: user has no usable posts");
  const auto& embed = params_.at("embed");
  const auto& conv_W = params_.at("conv.W");
  const auto& conv_b = params_.at("conv.b");
  std::vector<Vec> post_vectors;
  post_vectors.reserve(posts.size());
  if (cache) cache->posts.resize(posts.size());
  for (std::size_t i = 0; i < posts.size(); ++i) {
    if (posts[i].size() < cfg_.conv_window) {
      post_vectors.emplace_back(cfg_.filters, 0.0);
      continue;
    }
    Tensor2 x = embed_tokens(embed, posts[i]);
    Tensor2 z = conv1d_forward(x, post_spec(cfg_), conv_W, conv_b.data);
    relu_inplace(z.data);
    post_vectors.push_back(avg_pool_all(z));
    if (cache) {
      auto& pc = cache->posts[i];
      pc.active = true;
      pc.tokens = &posts[i];
      pc.input = std::move(x);
      pc.features = std::move(z);
    }
  }
  Tensor2 stacked = stack_padded(post_vectors);
  Tensor2 merged = conv1d_forward(stacked, merge_spec(cfg_), params_.at("merge.W"), params_.at("merge.b").data);
  relu_inplace(merged.data);
  Vec h = avg_pool_all(merged);

  if (cache) {
    cache->dense_in.clear();
    cache->dense_out.clear();
    cache->masks.clear();
  }
  for (std::size_t i = 0; i < cfg_.dense.size(); ++i) {
    Vec z = dense_forward(h, params_.at(dense_name(i, "W")), params_.at(dense_name(i, "b")).data,
                          Activation::relu);
    Rng none(0);
    Vec mask = dropout_mask(z.size(), cfg_.dropout, mode, rng ? *rng : none);
    if (cache) {
      cache->dense_in.push_back(h);
      cache->dense_out.push_back(z);
      cache->masks.push_back(mask);
    }
    for (std::size_t j = 0; j < z.size(); ++j) z[j] *= mask[j];
    h = std::move(z);
  }
  Vec logits = dense_forward(h, params_.at("out.W"), params_.at("out.b").data, Activation::linear);
  if (cache) {
    cache->post_vectors = std::move(post_vectors);
    cache->stacked = std::move(stacked);
    cache->merged = std::move(merged);
    cache->last_hidden = std::move(h);
    cache->logits = logits;
    cache->valid = true;
  }
  return logits;
}

void DepressionModel::backward(const Cache& cache, std::span<const double> grad_logits, GradStore& grads,
                               std::vector<Vec>* grad_post_vectors) const {
  if (!cache.valid) throw Error("depression model: backward called without a forward cache");
  Vec g = dense_backward(cache.last_hidden, params_.at("out.W"), cache.logits, grad_logits,
                         Activation::linear, grads.at("out.W"), grads.at("out.b").data);
  for (std::size_t i = cfg_.dense.size(); i-- > 0;) {
    for (std::size_t j = 0; j < g.size(); ++j) g[j] *= cache.masks[i][j];
    g = dense_backward(cache.dense_in[i], params_.at(dense_name(i, "W")), cache.dense_out[i], g,
                       Activation::relu, grads.at(dense_name(i, "W")), grads.at(dense_name(i, "b")).data);
  }
  Tensor2 g_merged = avg_pool_all_backward(cache.merged.rows, g);
  relu_backward(cache.merged.data, g_merged.data);
  Tensor2 g_stacked;
  conv1d_backward(cache.stacked, merge_spec(cfg_), params_.at("merge.W"), g_merged, &g_stacked,
                  grads.at("merge.W"), grads.at("merge.b").data);

  if (grad_post_vectors) {
    grad_post_vectors->clear();
    for (std::size_t i = 0; i < cache.posts.size(); ++i) {
      auto r = g_stacked.row(i);
      grad_post_vectors->emplace_back(r.begin(), r.end());
    }
  }

  auto& g_embed = grads.at("embed");
  for (std::size_t i = 0; i < cache.posts.size(); ++i) {
    const auto& pc = cache.posts[i];
    if (!pc.active) continue;
    Tensor2 g_features = avg_pool_all_backward(pc.features.rows, g_stacked.row(i));
    relu_backward(pc.features.data, g_features.data);
    Tensor2 g_input;
    conv1d_backward(pc.input, post_spec(cfg_), params_.at("conv.W"), g_features, &g_input,
                    grads.at("conv.W"), grads.at("conv.b").data);
    for (std::size_t t = 0; t < pc.tokens->size(); ++t) {
      auto dst = g_embed.row(static_cast<std::size_t>((*pc.tokens)[t]));
      auto src = g_input.row(t);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
    }
  }
}

Vec DepressionModel::predict(const std::vector<std::vector<TokenId>>& posts) const {
  return softmax(forward(posts, Mode::eval, nullptr, nullptr));
}

double DepressionModel::loss_and_grad(const std::vector<std::vector<TokenId>>& posts, std::size_t target,
                                      double weight, Mode mode, Rng& dropout_rng, GradStore& grads) const {
  if (target >= cfg_.classes) throw Error("depression model: target class out of range");
  Cache cache;
  Vec logits = forward(posts, mode, &dropout_rng, &cache);
  Vec probs = softmax(logits);
  Vec g;
  const double loss = cross_entropy(probs, target, weight, &g);
  if (!std::isfinite(loss)) throw NumericError("depression model: non-finite loss");
  backward(cache, g, grads, nullptr);
  for (auto& [name, t] : grads)
    if (params_.frozen(name)) t.fill(0.0);
  return loss;
}

std::vector<Vec> DepressionModel::post_vector_saliency(const std::vector<std::vector<TokenId>>& posts,
                                                       std::size_t cls) const {
  Cache cache;
  forward(posts, Mode::eval, nullptr, &cache);
  Vec g(cfg_.classes, 0.0);
  g.at(cls) = 1.0;
  GradStore scratch = params_.zeros_like();
  std::vector<Vec> out;
  backward(cache, g, scratch, &out);
  return out;
}

}  // namespace mhnet
