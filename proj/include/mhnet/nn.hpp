#pragma once

// Small neural-network engine: exactly the layers the depression and risk
// models use, each with a hand-written backward pass. Computation is in
// double precision; checkpoints store 32-bit floats.

#include <algorithm>
#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mhnet/common.hpp"

namespace mhnet {

/// Row-major matrix.
struct Tensor2 {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Tensor2() = default;
  Tensor2(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  static Tensor2 from_rows(const std::vector<std::vector<double>>& rows);

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  std::size_t size() const { return data.size(); }
  bool same_shape(const Tensor2& o) const { return rows == o.rows && cols == o.cols; }
  void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

using Vec = std::vector<double>;

/// Throws NumericError naming `what` if any entry is NaN or Inf.
void require_finite(std::span<const double> values, const char* what);

enum class PoolKind { max, avg_all, none };

struct ConvSpec {
  std::size_t window = 3;   // rows per sliding window
  std::size_t filters = 1;
  std::size_t stride = 1;
  PoolKind pool = PoolKind::none;
  std::size_t pool_len = 1;

  void validate() const;
  std::size_t output_rows(std::size_t input_rows) const;
};

// ---- layers ----
// Backward functions accumulate parameter gradients (+=) and overwrite input
// gradients.

/// out[r][f] = b[f] + W[f] . (rows r*s .. r*s+k-1 of input, flattened).
/// W is [filters x window*cols]. Pre-activation.
Tensor2 conv1d_forward(const Tensor2& input, const ConvSpec& spec, const Tensor2& W,
                       std::span<const double> b);
void conv1d_backward(const Tensor2& input, const ConvSpec& spec, const Tensor2& W,
                     const Tensor2& grad_out, Tensor2* grad_input, Tensor2& grad_W,
                     std::span<double> grad_b);

void relu_inplace(std::span<double> x);
/// Zeroes grad where the forward output was not positive.
void relu_backward(std::span<const double> output, std::span<double> grad);

struct MaxPoolResult {
  Tensor2 out;
  std::vector<std::size_t> argmax;  // per output entry, source row
};

/// Non-overlapping blocks of n rows; a trailing partial block is pooled over
/// its actual length.
MaxPoolResult max_pool(const Tensor2& features, std::size_t n);
Tensor2 max_pool_backward(const MaxPoolResult& fwd, std::size_t input_rows, const Tensor2& grad_out);

Vec avg_pool_all(const Tensor2& features);
Tensor2 avg_pool_all_backward(std::size_t input_rows, std::span<const double> grad_out);

enum class Activation { relu, linear, softmax };

Vec softmax(std::span<const double> logits);

Vec dense_forward(std::span<const double> x, const Tensor2& W, std::span<const double> b,
                  Activation act);
/// grad_out is with respect to the activated output `out`.
Vec dense_backward(std::span<const double> x, const Tensor2& W, std::span<const double> out,
                   std::span<const double> grad_out, Activation act, Tensor2& grad_W,
                   std::span<double> grad_b);

enum class Mode { train, eval };

/// Inverted-dropout mask: each entry 0 with probability rate, else 1/(1-rate).
Vec dropout_mask(std::size_t n, double rate, Mode mode, Rng& rng);
Vec dropout(std::span<const double> x, double rate, Mode mode, Rng& rng);

/// -w * log p[target] and its gradient with respect to the logits feeding
/// the softmax (w * (p - onehot)).
double cross_entropy(std::span<const double> probs, std::size_t target, double weight,
                     Vec* grad_logits);

// ---- parameters ----

class ParamStore {
 public:
  Tensor2& add(const std::string& name, std::size_t rows, std::size_t cols);
  Tensor2& at(const std::string& name);
  const Tensor2& at(const std::string& name) const;
  bool contains(const std::string& name) const { return tensors_.count(name) > 0; }

  void freeze(const std::string& name) { frozen_.insert(name); }
  bool frozen(const std::string& name) const { return frozen_.count(name) > 0; }

  /// Same names and shapes, all zero.
  ParamStore zeros_like() const;
  void zero();
  bool same_layout(const ParamStore& other) const;
  std::size_t total_size() const;

  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

  /// Rounds every value to the nearest 32-bit float (checkpoint precision).
  void quantize_to_float();

 private:
  std::map<std::string, Tensor2> tensors_;
  std::set<std::string> frozen_;
};

using GradStore = ParamStore;

/// Uniform +-sqrt(6 / (fan_in + fan_out)).
void init_glorot(Tensor2& w, std::size_t fan_in, std::size_t fan_out, Rng& rng);
void init_uniform(Tensor2& w, double limit, Rng& rng);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::map<std::string, Vec> m;
  std::map<std::string, Vec> v;
  long long step = 0;
};

/// One bias-corrected Adam update. Frozen parameters are left untouched.
/// Throws NumericError on a non-finite gradient.
void adam_step(ParamStore& params, const GradStore& grads, AdamState& state);

}  // namespace mhnet
