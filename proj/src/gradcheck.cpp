#include "mhnet/gradcheck.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "mhnet/models.hpp"
#include "mhnet/nn.hpp"

namespace mhnet {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

double finite_difference_error(std::span<double> values, std::span<const double> analytic,
                               const std::function<double()>& loss, double eps,
                               std::size_t max_coords, Rng& rng) {
  if (values.size() != analytic.size()) throw Error("finite_difference_error: size mismatch");
  std::vector<std::size_t> coords(values.size());
  std::iota(coords.begin(), coords.end(), 0);
  if (coords.size() > max_coords) {
    shuffle(coords, rng);
    coords.resize(max_coords);
  }
  double worst = 0.0;
  for (auto i : coords) {
    const double saved = values[i];
    values[i] = saved + eps;
    const double up = loss();
    values[i] = saved - eps;
    const double down = loss();
    values[i] = saved;
    worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * eps)));
  }
  return worst;
}

namespace {

std::size_t rand_int(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + uniform_index(rng, hi - lo + 1);
}

Tensor2 rand_tensor(Rng& rng, std::size_t r, std::size_t c, double lim = 1.0) {
  Tensor2 t(r, c);
  init_uniform(t, lim, rng);
  return t;
}

Vec rand_vec(Rng& rng, std::size_t n, double lim = 1.0) {
  Vec v(n);
  for (double& x : v) x = uniform(rng, -lim, lim);
  return v;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

struct Recorder {
  GradCheckRow row;
  const GradCheckOptions& opt;
  Rng& rng;

  void check(std::span<double> values, std::span<const double> analytic, const std::function<double()>& loss) {
    row.max_relative_error = std::max(
        row.max_relative_error, finite_difference_error(values, analytic, loss, opt.eps, opt.max_coords_per_tensor, rng));
    row.coordinates += std::min(values.size(), opt.max_coords_per_tensor);
  }
  void check_store(ParamStore& params, const GradStore& grads, const std::function<double()>& loss) {
    for (auto& [name, t] : params) check(t.data, grads.at(name).data, loss);
  }
};

void check_conv(Recorder& rec) {
  auto& rng = rec.rng;
  ConvSpec spec;
  spec.window = rand_int(rng, 1, 4);
  spec.stride = rand_int(rng, 1, 3);
  spec.filters = rand_int(rng, 1, 4);
  const std::size_t d = rand_int(rng, 1, 4);
  const std::size_t rows = spec.window + rand_int(rng, 0, 6);
  Tensor2 x = rand_tensor(rng, rows, d);
  Tensor2 W = rand_tensor(rng, spec.filters, spec.window * d);
  Vec b = rand_vec(rng, spec.filters);
  Tensor2 R = rand_tensor(rng, spec.output_rows(rows), spec.filters);
  auto loss = [&] { return dot(conv1d_forward(x, spec, W, b).data, R.data); };
  Tensor2 gx, gW(W.rows, W.cols);
  Vec gb(b.size(), 0.0);
  conv1d_backward(x, spec, W, R, &gx, gW, gb);
  rec.check(x.data, gx.data, loss);
  rec.check(W.data, gW.data, loss);
  rec.check(b, gb, loss);
}

void check_relu(Recorder& rec) {
  auto& rng = rec.rng;
  Vec x = rand_vec(rng, rand_int(rng, 1, 12));
  for (double& v : x)
    if (std::abs(v) < 0.01) v = 0.5;  // stay off the kink
  Vec R = rand_vec(rng, x.size());
  auto loss = [&] {
    Vec y = x;
    relu_inplace(y);
    return dot(y, R);
  };
  Vec y = x;
  relu_inplace(y);
  Vec g = R;
  relu_backward(y, g);
  rec.check(x, g, loss);
}

void check_max_pool(Recorder& rec) {
  auto& rng = rec.rng;
  const std::size_t n = rand_int(rng, 1, 4);
  Tensor2 x = rand_tensor(rng, rand_int(rng, 1, 10), rand_int(rng, 1, 3));
  const auto fwd = max_pool(x, n);
  Tensor2 R = rand_tensor(rng, fwd.out.rows, fwd.out.cols);
  auto loss = [&] { return dot(max_pool(x, n).out.data, R.data); };
  Tensor2 g = max_pool_backward(fwd, x.rows, R);
  rec.check(x.data, g.data, loss);
}

void check_avg_pool(Recorder& rec) {
  auto& rng = rec.rng;
  Tensor2 x = rand_tensor(rng, rand_int(rng, 1, 10), rand_int(rng, 1, 4));
  Vec R = rand_vec(rng, x.cols);
  auto loss = [&] { return dot(avg_pool_all(x), R); };
  Tensor2 g = avg_pool_all_backward(x.rows, R);
  rec.check(x.data, g.data, loss);
}

void check_dense(Recorder& rec, Activation act) {
  auto& rng = rec.rng;
  const std::size_t in = rand_int(rng, 1, 6), out = rand_int(rng, act == Activation::softmax ? 2 : 1, 6);
  Vec x = rand_vec(rng, in);
  Tensor2 W = rand_tensor(rng, out, in);
  Vec b = rand_vec(rng, out);
  Vec R = rand_vec(rng, out);
  auto loss = [&] { return dot(dense_forward(x, W, b, act), R); };
  Tensor2 gW(out, in);
  Vec gb(out, 0.0);
  Vec y = dense_forward(x, W, b, act);
  Vec gx = dense_backward(x, W, y, R, act, gW, gb);
  rec.check(x, gx, loss);
  rec.check(W.data, gW.data, loss);
  rec.check(b, gb, loss);
}

void check_dropout(Recorder& rec) {
  auto& rng = rec.rng;
  Vec x = rand_vec(rng, rand_int(rng, 1, 12));
  Vec R = rand_vec(rng, x.size());
  const double rate = uniform(rng, 0.0, 0.8);
  const std::uint64_t mask_seed = rng();
  auto loss = [&] {
    Rng m(mask_seed);
    return dot(dropout(x, rate, Mode::train, m), R);
  };
  Rng m(mask_seed);
  Vec mask = dropout_mask(x.size(), rate, Mode::train, m);
  Vec g(x.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = R[i] * mask[i];
  rec.check(x, g, loss);
}

void check_cross_entropy(Recorder& rec) {
  auto& rng = rec.rng;
  Vec logits = rand_vec(rng, rand_int(rng, 2, 6), 3.0);
  const std::size_t target = uniform_index(rng, logits.size());
  const double w = uniform(rng, 0.1, 3.0);
  auto loss = [&] { return cross_entropy(softmax(logits), target, w, nullptr); };
  Vec g;
  cross_entropy(softmax(logits), target, w, &g);
  rec.check(logits, g, loss);
}

void check_metric_loss(Recorder& rec, bool ordinal) {
  auto& rng = rec.rng;
  for (;;) {
    const std::size_t d = rand_int(rng, 1, 6);
    Vec x = rand_vec(rng, d);
    Tensor2 C = rand_tensor(rng, kNumRiskLabels, d);
    const int p = static_cast<int>(uniform_index(rng, kNumRiskLabels));
    int n = static_cast<int>(uniform_index(rng, kNumRiskLabels - 1));
    if (n >= p) ++n;
    const double alpha = uniform(rng, 0.0, 2.0);
    auto f = [&] {
      return ordinal ? class_metric_ordinal_loss(x, p, n, C, alpha) : class_metric_loss(x, p, n, C, alpha);
    };
    // Only non-kink points: the hinge argument must be away from zero.
    double dp = 0.0, dn = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      dp += (x[i] - C(p, i)) * (x[i] - C(p, i));
      dn += (x[i] - C(n, i)) * (x[i] - C(n, i));
    }
    const double arg = std::sqrt(dp) - std::sqrt(dn) + alpha * (ordinal ? std::abs(p - n) : 1);
    if (std::abs(arg) < 1e-3 || dp < 1e-6 || dn < 1e-6) continue;
    MetricLossGrad g;
    ordinal ? class_metric_ordinal_loss(x, p, n, C, alpha, &g) : class_metric_loss(x, p, n, C, alpha, &g);
    Tensor2 gC(kNumRiskLabels, d);
    for (std::size_t i = 0; i < d; ++i) {
      gC(p, i) = g.positive[i];
      gC(n, i) = g.negative[i];
    }
    rec.check(x, g.x, f);
    rec.check(C.data, gC.data, f);
    return;
  }
}

void check_depression_model(Recorder& rec) {
  auto& rng = rec.rng;
  DepressionModelConfig cfg;
  cfg.embed_dim = rand_int(rng, 2, 4);
  cfg.conv_window = rand_int(rng, 1, 3);
  cfg.filters = rand_int(rng, 2, 4);
  cfg.merge_window = rand_int(rng, 1, 3);
  cfg.merge_stride = rand_int(rng, 1, cfg.merge_window);
  cfg.merge_filters = rand_int(rng, 2, 4);
  cfg.dense = {rand_int(rng, 2, 5)};
  cfg.dropout = uniform01(rng) < 0.5 ? 0.0 : 0.3;
  const std::size_t vocab = rand_int(rng, 4, 10);
  Rng init(rng());
  DepressionModel model(cfg, vocab, init);
  // Larger biases keep most ReLUs clear of their kink.
  for (auto& [name, t] : model.params())
    if (name.ends_with(".b")) init_uniform(t, 0.5, rng);
  std::vector<std::vector<TokenId>> posts(rand_int(rng, 1, 6));
  for (auto& p : posts) {
    p.resize(rand_int(rng, 0, 6));
    for (auto& t : p) t = static_cast<TokenId>(uniform_index(rng, vocab));
  }
  const std::size_t target = uniform_index(rng, 2);
  const std::uint64_t mask_seed = rng();
  GradStore grads = model.params().zeros_like();
  Rng m(mask_seed);
  model.loss_and_grad(posts, target, 1.3, Mode::train, m, grads);
  GradStore scratch = grads.zeros_like();
  auto loss = [&] {
    Rng mm(mask_seed);
    return model.loss_and_grad(posts, target, 1.3, Mode::train, mm, scratch);
  };
  rec.check_store(model.params(), grads, loss);
}

void check_risk_model(Recorder& rec, RiskVariant variant) {
  auto& rng = rec.rng;
  RiskModelConfig cfg = RiskModelConfig::for_variant(variant, rand_int(rng, 2, 5));
  cfg.conv_window = rand_int(rng, 1, 3);
  cfg.max_sentences = cfg.conv_window + rand_int(rng, 0, 4);
  cfg.filters = rand_int(rng, 2, 4);
  cfg.pool_len = rand_int(rng, 1, 3);
  cfg.dense = {rand_int(rng, 3, 6), rand_int(rng, 2, 5)};
  cfg.dropout = uniform01(rng) < 0.5 ? 0.0 : 0.25;
  cfg.margin = 2.0;
  Rng init(rng());
  RiskModel model(cfg, init);
  for (auto& [name, t] : model.params())
    if (name.ends_with(".b")) init_uniform(t, 0.5, rng);
  RiskInput in{rand_tensor(rng, cfg.max_sentences, cfg.sentence_dim),
               rand_tensor(rng, cfg.max_sentences, cfg.sentence_dim)};
  const auto gold = risk_label_from_ordinal(static_cast<int>(uniform_index(rng, kNumRiskLabels)));
  int negative = static_cast<int>(uniform_index(rng, kNumRiskLabels - 1));
  if (negative >= ordinal(gold)) ++negative;
  const std::uint64_t mask_seed = rng();
  GradStore grads = model.params().zeros_like();
  Rng m(mask_seed);
  model.loss_and_grad_with_negative(in, gold, negative, 0.7, Mode::train, m, grads);
  GradStore scratch = grads.zeros_like();
  auto loss = [&] {
    Rng mm(mask_seed);
    return model.loss_and_grad_with_negative(in, gold, negative, 0.7, Mode::train, mm, scratch);
  };
  rec.check_store(model.params(), grads, loss);
}

}  // namespace

std::vector<GradCheckRow> run_gradient_suite(const GradCheckOptions& opt) {
  Rng rng(derive_seed(opt.seed, "gradcheck"));
  std::vector<std::pair<std::string, std::function<void(Recorder&)>>> checks = {
      {"conv1d", check_conv},
      {"relu", check_relu},
      {"max_pool", check_max_pool},
      {"avg_pool_all", check_avg_pool},
      {"dense/relu", [](Recorder& r) { check_dense(r, Activation::relu); }},
      {"dense/linear", [](Recorder& r) { check_dense(r, Activation::linear); }},
      {"dense/softmax", [](Recorder& r) { check_dense(r, Activation::softmax); }},
      {"dropout", check_dropout},
      {"softmax+cross_entropy", check_cross_entropy},
      {"class_metric_loss", [](Recorder& r) { check_metric_loss(r, false); }},
      {"class_metric_ordinal_loss", [](Recorder& r) { check_metric_loss(r, true); }},
      {"depression_model", check_depression_model},
      {"risk_model/cat_ce", [](Recorder& r) { check_risk_model(r, RiskVariant::cat_ce); }},
      {"risk_model/mse", [](Recorder& r) { check_risk_model(r, RiskVariant::mse); }},
      {"risk_model/class_metric", [](Recorder& r) { check_risk_model(r, RiskVariant::class_metric); }},
      {"risk_model/class_metric_ordinal",
       [](Recorder& r) { check_risk_model(r, RiskVariant::class_metric_ordinal); }},
  };
  std::vector<GradCheckRow> rows;
  for (auto& [name, fn] : checks) {
    Recorder rec{{name, 0, 0, 0.0}, opt, rng};
    for (std::size_t i = 0; i < opt.configs_per_check; ++i) {
      fn(rec);
      ++rec.row.configurations;
    }
    rows.push_back(rec.row);
  }
  return rows;
}

std::string format_gradcheck_table(const std::vector<GradCheckRow>& rows, double threshold) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-34s %8s %8s %14s  %s\n", "check", "configs", "coords", "max rel err", "");
  out << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-34s %8zu %8zu %14.3e  %s\n", r.name.c_str(), r.configurations,
                  r.coordinates, r.max_relative_error, r.max_relative_error < threshold ? "pass" : "FAIL");
    out << buf;
  }
  return out.str();
}

}  // namespace mhnet
