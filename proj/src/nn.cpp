#include "mhnet/nn.hpp"

#include <cmath>
#include <limits>

namespace mhnet {

namespace {

// Four independent partial sums let the compiler vectorize without
// reassociating; the summation order is fixed, so results are reproducible.
double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

}  // namespace

Tensor2 Tensor2::from_rows(const std::vector<std::vector<double>>& rows) {
  Tensor2 t(rows.size(), rows.empty() ? 0 : rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != t.cols) throw Error("Tensor2::from_rows: ragged rows");
    std::copy(rows[r].begin(), rows[r].end(), t.row(r).begin());
  }
  return t;
}

void require_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value in ") + what);
  }
}

void ConvSpec::validate() const {
  if (window < 1 || filters < 1 || stride < 1 || pool_len < 1) {
    throw Error("ConvSpec: window, filters, stride and pool length must be >= 1");
  }
}

std::size_t ConvSpec::output_rows(std::size_t input_rows) const {
  if (input_rows < window) {
    throw Error("conv1d: input has " + std::to_string(input_rows) + " rows, window needs " +
                std::to_string(window));
  }
  return (input_rows - window) / stride + 1;
}

Tensor2 conv1d_forward(const Tensor2& input, const ConvSpec& spec, const Tensor2& W,
                       std::span<const double> b) {
  spec.validate();
  const std::size_t width = spec.window * input.cols;
  if (W.rows != spec.filters || W.cols != width || b.size() != spec.filters) {
    throw Error("conv1d: weight shape does not match spec");
  }
  const std::size_t out_rows = spec.output_rows(input.rows);
  Tensor2 out(out_rows, spec.filters);
  for (std::size_t r = 0; r < out_rows; ++r) {
    // A window of consecutive rows is a contiguous slice in row-major order.
    const double* window = input.data.data() + r * spec.stride * input.cols;
    for (std::size_t f = 0; f < spec.filters; ++f) {
      const double* w = W.data.data() + f * width;
      out(r, f) = b[f] + dot(w, window, width);
    }
  }
  require_finite(out.data, "conv1d output");
  return out;
}

void conv1d_backward(const Tensor2& input, const ConvSpec& spec, const Tensor2& W,
                     const Tensor2& grad_out, Tensor2* grad_input, Tensor2& grad_W,
                     std::span<double> grad_b) {
  const std::size_t width = spec.window * input.cols;
  const std::size_t out_rows = spec.output_rows(input.rows);
  if (grad_out.rows != out_rows || grad_out.cols != spec.filters || !grad_W.same_shape(W) ||
      grad_b.size() != spec.filters) {
    throw Error("conv1d_backward: shape mismatch");
  }
  if (grad_input) *grad_input = Tensor2(input.rows, input.cols);
  for (std::size_t r = 0; r < out_rows; ++r) {
    const std::size_t offset = r * spec.stride * input.cols;
    const double* window = input.data.data() + offset;
    for (std::size_t f = 0; f < spec.filters; ++f) {
      const double g = grad_out(r, f);
      if (g == 0.0) continue;
      grad_b[f] += g;
      double* gw = grad_W.data.data() + f * width;
      for (std::size_t i = 0; i < width; ++i) gw[i] += g * window[i];
      if (grad_input) {
        const double* w = W.data.data() + f * width;
        double* gi = grad_input->data.data() + offset;
        for (std::size_t i = 0; i < width; ++i) gi[i] += g * w[i];
      }
    }
  }
}

void relu_inplace(std::span<double> x) {
  for (double& v : x) v = v > 0.0 ? v : 0.0;
}

void relu_backward(std::span<const double> output, std::span<double> grad) {
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!(output[i] > 0.0)) grad[i] = 0.0;
}

MaxPoolResult max_pool(const Tensor2& features, std::size_t n) {
  if (n == 0) throw Error("max_pool: pool length must be >= 1");
  if (features.rows == 0) throw Error("max_pool: empty input");
  const std::size_t blocks = (features.rows + n - 1) / n;
  MaxPoolResult res{Tensor2(blocks, features.cols), std::vector<std::size_t>(blocks * features.cols)};
  for (std::size_t blk = 0; blk < blocks; ++blk) {
    const std::size_t lo = blk * n;
    const std::size_t hi = std::min(lo + n, features.rows);
    for (std::size_t c = 0; c < features.cols; ++c) {
      std::size_t best = lo;
      for (std::size_t r = lo + 1; r < hi; ++r)
        if (features(r, c) > features(best, c)) best = r;
      res.out(blk, c) = features(best, c);
      res.argmax[blk * features.cols + c] = best;
    }
  }
  return res;
}

Tensor2 max_pool_backward(const MaxPoolResult& fwd, std::size_t input_rows, const Tensor2& grad_out) {
  if (!grad_out.same_shape(fwd.out)) throw Error("max_pool_backward: shape mismatch");
  Tensor2 grad(input_rows, grad_out.cols);
  for (std::size_t blk = 0; blk < grad_out.rows; ++blk)
    for (std::size_t c = 0; c < grad_out.cols; ++c)
      grad(fwd.argmax[blk * grad_out.cols + c], c) += grad_out(blk, c);
  return grad;
}

Vec avg_pool_all(const Tensor2& features) {
  if (features.rows == 0) throw Error("avg_pool_all: empty input");
  Vec out(features.cols, 0.0);
  for (std::size_t r = 0; r < features.rows; ++r)
    for (std::size_t c = 0; c < features.cols; ++c) out[c] += features(r, c);
  for (double& v : out) v /= static_cast<double>(features.rows);
  return out;
}

Tensor2 avg_pool_all_backward(std::size_t input_rows, std::span<const double> grad_out) {
  Tensor2 grad(input_rows, grad_out.size());
  const double scale = 1.0 / static_cast<double>(input_rows);
  for (std::size_t r = 0; r < input_rows; ++r)
    for (std::size_t c = 0; c < grad_out.size(); ++c) grad(r, c) = grad_out[c] * scale;
  return grad;
}

Vec softmax(std::span<const double> logits) {
  Vec out(logits.begin(), logits.end());
  if (out.empty()) return out;
  const double mx = *std::max_element(out.begin(), out.end());
  double sum = 0.0;
  for (double& v : out) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : out) v /= sum;
  return out;
}

Vec dense_forward(std::span<const double> x, const Tensor2& W, std::span<const double> b,
                  Activation act) {
  if (W.cols != x.size() || W.rows != b.size()) {
    throw Error("dense: shape mismatch (W " + std::to_string(W.rows) + "x" + std::to_string(W.cols) +
                ", x " + std::to_string(x.size()) + ", b " + std::to_string(b.size()) + ")");
  }
  Vec z(W.rows);
  for (std::size_t o = 0; o < W.rows; ++o) {
    const double* w = W.data.data() + o * W.cols;
    z[o] = b[o] + dot(w, x.data(), x.size());
  }
  switch (act) {
    case Activation::relu: relu_inplace(z); break;
    case Activation::softmax: z = softmax(z); break;
    case Activation::linear: break;
  }
  require_finite(z, "dense output");
  return z;
}

Vec dense_backward(std::span<const double> x, const Tensor2& W, std::span<const double> out,
                   std::span<const double> grad_out, Activation act, Tensor2& grad_W,
                   std::span<double> grad_b) {
  Vec gz(grad_out.begin(), grad_out.end());
  switch (act) {
    case Activation::relu: relu_backward(out, gz); break;
    case Activation::softmax: {
      double dot = 0.0;
      for (std::size_t i = 0; i < gz.size(); ++i) dot += gz[i] * out[i];
      for (std::size_t i = 0; i < gz.size(); ++i) gz[i] = out[i] * (gz[i] - dot);
      break;
    }
    case Activation::linear: break;
  }
  Vec gx(x.size(), 0.0);
  for (std::size_t o = 0; o < W.rows; ++o) {
    const double g = gz[o];
    if (g == 0.0) continue;
    grad_b[o] += g;
    double* gw = grad_W.data.data() + o * W.cols;
    const double* w = W.data.data() + o * W.cols;
    for (std::size_t i = 0; i < x.size(); ++i) {
      gw[i] += g * x[i];
      gx[i] += g * w[i];
    }
  }
  return gx;
}

Vec dropout_mask(std::size_t n, double rate, Mode mode, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw Error("dropout rate must be in [0, 1)");
  Vec mask(n, 1.0);
  if (mode == Mode::eval || rate == 0.0) return mask;
  const double keep = 1.0 / (1.0 - rate);
  for (double& m : mask) m = uniform01(rng) < rate ? 0.0 : keep;
  return mask;
}

Vec dropout(std::span<const double> x, double rate, Mode mode, Rng& rng) {
  Vec mask = dropout_mask(x.size(), rate, mode, rng);
  for (std::size_t i = 0; i < x.size(); ++i) mask[i] *= x[i];
  return mask;
}

double cross_entropy(std::span<const double> probs, std::size_t target, double weight,
                     Vec* grad_logits) {
  if (target >= probs.size()) throw Error("cross_entropy: target out of range");
  const double p = std::max(probs[target], std::numeric_limits<double>::min());
  if (grad_logits) {
    grad_logits->assign(probs.begin(), probs.end());
    (*grad_logits)[target] -= 1.0;
    for (double& g : *grad_logits) g *= weight;
  }
  return -weight * std::log(p);
}

// ---------------------------------------------------------------------------

Tensor2& ParamStore::add(const std::string& name, std::size_t rows, std::size_t cols) {
  auto [it, inserted] = tensors_.emplace(name, Tensor2(rows, cols));
  if (!inserted) throw Error("duplicate parameter: " + name);
  return it->second;
}

Tensor2& ParamStore::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw Error("unknown parameter: " + name);
  return it->second;
}

const Tensor2& ParamStore::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw Error("unknown parameter: " + name);
  return it->second;
}

ParamStore ParamStore::zeros_like() const {
  ParamStore z;
  for (const auto& [name, t] : tensors_) z.add(name, t.rows, t.cols);
  z.frozen_ = frozen_;
  return z;
}

void ParamStore::zero() {
  for (auto& [name, t] : tensors_) t.fill(0.0);
}

bool ParamStore::same_layout(const ParamStore& other) const {
  if (tensors_.size() != other.tensors_.size()) return false;
  auto a = tensors_.begin();
  auto b = other.tensors_.begin();
  for (; a != tensors_.end(); ++a, ++b)
    if (a->first != b->first || !a->second.same_shape(b->second)) return false;
  return true;
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors_) n += t.size();
  return n;
}

void ParamStore::quantize_to_float() {
  for (auto& [name, t] : tensors_)
    for (double& v : t.data) v = static_cast<double>(static_cast<float>(v));
}

void init_glorot(Tensor2& w, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  init_uniform(w, std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)), rng);
}

void init_uniform(Tensor2& w, double limit, Rng& rng) {
  for (double& v : w.data) v = uniform(rng, -limit, limit);
}

void adam_step(ParamStore& params, const GradStore& grads, AdamState& state) {
  if (!params.same_layout(grads)) throw Error("adam_step: gradient layout does not match parameters");
  for (const auto& [name, g] : grads) {
    for (double v : g.data)
      if (!std::isfinite(v)) throw NumericError("adam_step: non-finite gradient for " + name);
  }
  const auto& cfg = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [name, p] : params) {
    if (params.frozen(name)) continue;
    const auto& g = grads.at(name).data;
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.size() != p.size()) m.assign(p.size(), 0.0);
    if (v.size() != p.size()) v.assign(p.size(), 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p.data[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
  }
}

}  // namespace mhnet
