#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mhnet/corpus.hpp"
#include "mhnet/metrics.hpp"
#include "mhnet/models.hpp"
#include "mhnet/nn.hpp"

namespace mhnet {

// ---- post selection ----

enum class SelectionStrategy { earliest, latest, random };

std::string_view to_string(SelectionStrategy s);
SelectionStrategy parse_selection_strategy(std::string_view s);

struct SelectionConfig {
  SelectionStrategy strategy = SelectionStrategy::random;
  std::size_t n_post = 1500;
  std::size_t n_term = 100;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Up to n_post posts of the user in time order, each cut to its first n_term
/// tokens. The random strategy is a function of (user_id, cfg) only.
std::vector<std::vector<TokenId>> select_posts(const UserRecord& user, const SelectionConfig& cfg);

// ---- class balancing ----

enum class BalanceMode { weighted, sampled };

std::string_view to_string(BalanceMode m);
BalanceMode parse_balance_mode(std::string_view s);

struct BalanceConfig {
  BalanceMode mode = BalanceMode::weighted;
};

/// w_c = N / (t * N_c). Throws if a class has no instances.
std::vector<double> class_weights(std::span<const int> labels, std::size_t num_classes);

/// min_c N_c indices drawn without replacement from every class, shuffled.
/// Throws if a class has no instances.
std::vector<std::size_t> balanced_sample(std::span<const int> labels, std::size_t num_classes, Rng& rng);

/// One epoch's worth of training instances: indices into the training set and
/// the loss weight for each.
struct BalancedEpoch {
  std::vector<std::size_t> indices;
  std::vector<double> weights;
};

BalancedEpoch balance(std::span<const int> labels, std::size_t num_classes, const BalanceConfig& cfg,
                      Rng& rng);

/// Holds out round(fraction * N_c) instances of every class c, chosen with
/// `seed`. Returns (kept, held_out) index lists, each ascending.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(std::span<const int> labels,
                                                                               double fraction,
                                                                               std::uint64_t seed);

// ---- training ----

struct TrainOptions {
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  AdamConfig adam;
  BalanceConfig balance;
  std::uint64_t seed = 1;
  /// Called with every log line as it is produced.
  std::function<void(const nlohmann::ordered_json&)> on_log;
};

struct TrainResult {
  ParamStore best;
  std::size_t best_epoch = 0;  // 0: the initial parameters
  double best_score = 0.0;
  long long steps = 0;
  /// {epoch, split, loss, metrics} per split per epoch.
  std::vector<nlohmann::ordered_json> log;
};

struct DepressionExample {
  std::string user_id;
  std::vector<std::vector<TokenId>> posts;
  int label = 0;  // 1: diagnosed
};

std::vector<DepressionExample> make_depression_examples(const std::vector<UserRecord>& users,
                                                        const SelectionConfig& selection);

/// Trains in place and leaves the best epoch's parameters (validation F1 of the
/// diagnosed class) in the model. Throws NumericError on a non-finite loss.
TrainResult train_depression(DepressionModel& model, const std::vector<DepressionExample>& train,
                             const std::vector<DepressionExample>& validation, const TrainOptions& opt);

/// Class distributions, evaluated in parallel.
std::vector<Vec> predict_depression(const DepressionModel& model, const std::vector<DepressionExample>& data);

struct RiskExample {
  std::string post_id;
  RiskInput input;
  RiskLabel label = RiskLabel::green;
};

std::vector<RiskExample> make_risk_examples(const std::vector<ThreadInstance>& threads,
                                            const SentenceEncoder& encoder, std::size_t max_sentences);

/// Trains in place, keeping the epoch with the best validation non-green F1.
TrainResult train_risk(RiskModel& model, const std::vector<RiskExample>& train,
                       const std::vector<RiskExample>& validation, const TrainOptions& opt);

/// Labels, evaluated in parallel.
std::vector<RiskLabel> classify_risk(const RiskModel& model, const std::vector<RiskExample>& data);
/// Raw head outputs, evaluated in parallel.
std::vector<Vec> predict_risk(const RiskModel& model, const std::vector<RiskExample>& data);

/// Balancing used for each variant: weighting for cat_ce, sampling otherwise.
BalanceConfig default_balance(RiskVariant v);

/// Mean |gold - pred| over ordinals.
double mean_ordinal_error(std::span<const RiskLabel> gold, std::span<const RiskLabel> pred);

}  // namespace mhnet
