#include "mhnet/kernels.hpp"

#include <omp.h>

#include <cmath>
#include <exception>

namespace mhnet::kernels {

double hellinger(const SparseDistribution& a, const SparseDistribution& b) {
  double sum = 0.0;
  bool overlap = false;
  std::size_t i = 0, j = 0;
  while (i < a.index.size() || j < b.index.size()) {
    double d;
    if (j == b.index.size() || (i < a.index.size() && a.index[i] < b.index[j])) {
      d = a.sqrt_prob[i++];
    } else if (i == a.index.size() || b.index[j] < a.index[i]) {
      d = b.sqrt_prob[j++];
    } else {
      d = a.sqrt_prob[i++] - b.sqrt_prob[j++];
      overlap = true;
    }
    sum += d * d;
  }
  // Disjoint supports are exactly 1; rounding in sqrt(p)^2 would say otherwise.
  if (!overlap) return 1.0;
  const double h = std::sqrt(sum / 2.0);
  return h > 1.0 ? 1.0 : h;
}

namespace serial {

std::vector<double> hellinger_matrix(std::span<const SparseDistribution> rows,
                                     std::span<const SparseDistribution> cols) {
  std::vector<double> out(rows.size() * cols.size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < cols.size(); ++c) out[r * cols.size() + c] = hellinger(rows[r], cols[c]);
  return out;
}

std::vector<Tensor2> conv1d_batch(std::span<const Tensor2> inputs, const ConvSpec& spec,
                                  const Tensor2& W, std::span<const double> b) {
  std::vector<Tensor2> out;
  out.reserve(inputs.size());
  for (const auto& in : inputs) out.push_back(conv1d_forward(in, spec, W, b));
  return out;
}

}  // namespace serial

namespace parallel {

std::vector<double> hellinger_matrix(std::span<const SparseDistribution> rows,
                                     std::span<const SparseDistribution> cols) {
  std::vector<double> out(rows.size() * cols.size());
  const auto n_rows = static_cast<std::ptrdiff_t>(rows.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < n_rows; ++r)
    for (std::size_t c = 0; c < cols.size(); ++c)
      out[static_cast<std::size_t>(r) * cols.size() + c] = hellinger(rows[r], cols[c]);
  return out;
}

std::vector<Tensor2> conv1d_batch(std::span<const Tensor2> inputs, const ConvSpec& spec,
                                  const Tensor2& W, std::span<const double> b) {
  std::vector<Tensor2> out(inputs.size());
  std::exception_ptr failure;
  const auto n = static_cast<std::ptrdiff_t>(inputs.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = conv1d_forward(inputs[i], spec, W, b);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace parallel

int max_threads() { return omp_get_max_threads(); }

}  // namespace mhnet::kernels
