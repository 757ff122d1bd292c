#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mhnet/corpus.hpp"
#include "mhnet/nn.hpp"

namespace mhnet {

// ---------------------------------------------------------------------------
// Depression detection (user level)

struct DepressionModelConfig {
  std::size_t embed_dim = 50;
  std::size_t conv_window = 3;
  std::size_t filters = 25;
  std::size_t merge_window = 15;
  std::size_t merge_stride = 15;
  std::size_t merge_filters = 25;
  std::vector<std::size_t> dense = {50};
  double dropout = 0.0;
  std::size_t classes = 2;

  void validate() const;
};

/// Per-user model: each post goes through embedding -> conv -> ReLU -> mean;
/// the post vectors are merged by a strided conv -> ReLU -> mean, then dense
/// layers and a softmax output.
class DepressionModel {
 public:
  DepressionModel(DepressionModelConfig cfg, std::size_t vocab_size, Rng& init_rng);
  DepressionModel(DepressionModelConfig cfg, ParamStore params);

  const DepressionModelConfig& config() const { return cfg_; }
  std::size_t vocab_size() const { return params_.at("embed").rows; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// Post vector [filters]; posts shorter than the conv window map to zero.
  Vec encode_post(std::span<const TokenId> tokens) const;
  /// User vector [merge_filters] from stacked post vectors. Sequences are
  /// zero-padded up to the next whole merge window.
  Vec encode_user(const std::vector<Vec>& post_vectors) const;

  /// Class distribution {control, diagnosed}. Throws if no post is given.
  Vec predict(const std::vector<std::vector<TokenId>>& posts) const;

  /// Weighted cross-entropy for one user; gradients accumulate into `grads`.
  double loss_and_grad(const std::vector<std::vector<TokenId>>& posts, std::size_t target,
                       double weight, Mode mode, Rng& dropout_rng, GradStore& grads) const;

  /// Gradient of logit[cls] with respect to each post vector (eval mode).
  std::vector<Vec> post_vector_saliency(const std::vector<std::vector<TokenId>>& posts,
                                        std::size_t cls) const;

 private:
  struct Cache;
  Vec forward(const std::vector<std::vector<TokenId>>& posts, Mode mode, Rng* rng, Cache* cache) const;
  void backward(const Cache& cache, std::span<const double> grad_logits, GradStore& grads,
                std::vector<Vec>* grad_post_vectors) const;
  Tensor2 stack_padded(const std::vector<Vec>& post_vectors) const;

  DepressionModelConfig cfg_;
  ParamStore params_;
};

// ---------------------------------------------------------------------------
// Self-harm risk assessment (post level)

enum class RiskVariant { cat_ce, mse, class_metric, class_metric_ordinal };

std::string_view to_string(RiskVariant v);
RiskVariant parse_risk_variant(std::string_view s);

struct RiskModelConfig {
  RiskVariant variant = RiskVariant::cat_ce;
  std::size_t sentence_dim = 7200;
  std::size_t conv_window = 3;
  std::size_t filters = 150;
  std::size_t pool_len = 3;
  std::vector<std::size_t> dense = {250, 250};
  double dropout = 0.3;
  double margin = 1.0;  // alpha
  std::size_t max_sentences = 20;
  std::size_t metric_dim = 0;  // 0: width of the last dense layer

  /// Table values for each variant.
  static RiskModelConfig for_variant(RiskVariant v, std::size_t sentence_dim);
  void validate() const;
  std::size_t output_dim() const;
};

/// The last `max_sentences` sentence vectors of a target post and of its
/// thread context, left-padded with zero rows.
struct RiskInput {
  Tensor2 target;
  Tensor2 context;
};

/// Splits, encodes and pads a thread instance. Throws if the target post has
/// no sentences.
RiskInput make_risk_input(const ThreadInstance& inst, const SentenceEncoder& encoder,
                          std::size_t max_sentences);

class RiskModel {
 public:
  RiskModel(RiskModelConfig cfg, Rng& init_rng);
  RiskModel(RiskModelConfig cfg, ParamStore params);

  const RiskModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// cat_ce: 4 probabilities; mse: one score; metric variants: the d-vector X.
  Vec forward(const RiskInput& in, Mode mode, Rng& dropout_rng) const;
  Vec predict(const RiskInput& in) const;
  RiskLabel classify(const RiskInput& in) const;

  /// Variant loss for one instance. `negative_rng` picks the negative class
  /// for the metric losses. Gradients accumulate into `grads`.
  double loss_and_grad(const RiskInput& in, RiskLabel gold, double weight, Mode mode,
                       Rng& dropout_rng, Rng& negative_rng, GradStore& grads) const;

  /// Same, with the negative class given explicitly (metric variants only use it).
  double loss_and_grad_with_negative(const RiskInput& in, RiskLabel gold, int negative,
                                     double weight, Mode mode, Rng& dropout_rng,
                                     GradStore& grads) const;

 private:
  struct Cache;
  Vec run(const RiskInput& in, Mode mode, Rng& rng, Cache* cache) const;

  RiskModelConfig cfg_;
  ParamStore params_;
};

// ---------------------------------------------------------------------------
// Output rules and metric losses

/// clamp(round(y), 0, 3), halves rounded away from zero.
RiskLabel mse_classify(double y);

struct MetricLossGrad {
  Vec x;         // dL/dX
  Vec positive;  // dL/dC_p
  Vec negative;  // dL/dC_n
};

/// max(0, ||X - C_p|| - ||X - C_n|| + alpha). C is [4 x d].
double class_metric_loss(std::span<const double> x, int p, int n, const Tensor2& classes,
                         double alpha, MetricLossGrad* grad = nullptr);
/// Same with margin alpha * |p - n|.
double class_metric_ordinal_loss(std::span<const double> x, int p, int n, const Tensor2& classes,
                                 double alpha, MetricLossGrad* grad = nullptr);

/// Nearest class row by Euclidean distance; ties go to the lower ordinal.
RiskLabel metric_classify(std::span<const double> x, const Tensor2& classes);

// ---------------------------------------------------------------------------
// Phrase explanation

struct PhraseInput {
  std::string user_id;
  std::vector<std::string> post_ids;
  std::vector<std::vector<TokenId>> posts;
};

struct Phrase {
  std::string user_id;
  std::string post_id;
  std::size_t position = 0;  // first token of the window
  std::vector<std::string> words;
  double score = 0.0;
};

/// Scores every conv window by max_f relu(feature_f) * d logit[diagnosed] / d postvec_f
/// and returns the best window of each user, highest first, at most m.
std::vector<Phrase> top_phrases(const DepressionModel& model, const Vocabulary& vocab,
                                const std::vector<PhraseInput>& users, std::size_t m);

}  // namespace mhnet
