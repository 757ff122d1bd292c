#include <cmath>

#include "mhnet/models.hpp"

namespace mhnet {

RiskLabel mse_classify(double y) {
  if (std::isnan(y)) throw NumericError("mse_classify: NaN score");
  const double r = std::round(y);  // halves away from zero
  if (r <= 0.0) return RiskLabel::green;
  if (r >= 3.0) return RiskLabel::crisis;
  return risk_label_from_ordinal(static_cast<int>(r));
}

namespace {

double hinge_with_margin(std::span<const double> x, int p, int n, const Tensor2& classes,
                         double margin, MetricLossGrad* grad) {
  if (p == n) throw Error("class metric loss: positive and negative class must differ");
  if (p < 0 || n < 0 || static_cast<std::size_t>(p) >= classes.rows ||
      static_cast<std::size_t>(n) >= classes.rows) {
    throw Error("class metric loss: class index out of range");
  }
  if (x.size() != classes.cols) throw Error("class metric loss: dimension mismatch");
  const auto cp = classes.row(static_cast<std::size_t>(p));
  const auto cn = classes.row(static_cast<std::size_t>(n));
  double dp2 = 0.0, dn2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dp2 += (x[i] - cp[i]) * (x[i] - cp[i]);
    dn2 += (x[i] - cn[i]) * (x[i] - cn[i]);
  }
  const double dp = std::sqrt(dp2), dn = std::sqrt(dn2);
  const double h = dp - dn + margin;
  if (grad) {
    grad->x.assign(x.size(), 0.0);
    grad->positive.assign(x.size(), 0.0);
    grad->negative.assign(x.size(), 0.0);
    if (h > 0.0) {
      // The norm has no gradient at zero distance; use the zero subgradient there.
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double up = dp > 0.0 ? (x[i] - cp[i]) / dp : 0.0;
        const double un = dn > 0.0 ? (x[i] - cn[i]) / dn : 0.0;
        grad->x[i] = up - un;
        grad->positive[i] = -up;
        grad->negative[i] = un;
      }
    }
  }
  return h > 0.0 ? h : 0.0;
}

}  // namespace

double class_metric_loss(std::span<const double> x, int p, int n, const Tensor2& classes,
                         double alpha, MetricLossGrad* grad) {
  return hinge_with_margin(x, p, n, classes, alpha, grad);
}

double class_metric_ordinal_loss(std::span<const double> x, int p, int n, const Tensor2& classes,
                                 double alpha, MetricLossGrad* grad) {
  return hinge_with_margin(x, p, n, classes, alpha * std::abs(p - n), grad);
}

RiskLabel metric_classify(std::span<const double> x, const Tensor2& classes) {
  if (classes.rows != static_cast<std::size_t>(kNumRiskLabels) || classes.cols != x.size()) {
    throw Error("metric_classify: class embedding shape mismatch");
  }
  int best = 0;
  double best_d = 0.0;
  for (int j = 0; j < kNumRiskLabels; ++j) {
    const auto c = classes.row(static_cast<std::size_t>(j));
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) d += (x[i] - c[i]) * (x[i] - c[i]);
    if (j == 0 || d < best_d) {
      best = j;
      best_d = d;
    }
  }
  return risk_label_from_ordinal(best);
}

}  // namespace mhnet
