#pragma once

// Data-parallel kernels. Each has a serial reference in `serial` and an
// OpenMP version in `parallel`; both produce bit-identical results because
// every output element is computed by the same scalar code.

#include <cstdint>
#include <span>
#include <vector>

#include "mhnet/nn.hpp"

namespace mhnet::kernels {

/// Distribution over interned community indices, ascending by index, storing
/// square-rooted probabilities.
struct SparseDistribution {
  std::vector<std::uint32_t> index;
  std::vector<double> sqrt_prob;
};

/// Hellinger distance between two sparse distributions.
double hellinger(const SparseDistribution& a, const SparseDistribution& b);

namespace serial {

/// Row-major [rows.size() x cols.size()] distance matrix.
std::vector<double> hellinger_matrix(std::span<const SparseDistribution> rows,
                                     std::span<const SparseDistribution> cols);

std::vector<Tensor2> conv1d_batch(std::span<const Tensor2> inputs, const ConvSpec& spec,
                                  const Tensor2& W, std::span<const double> b);

}  // namespace serial

namespace parallel {

std::vector<double> hellinger_matrix(std::span<const SparseDistribution> rows,
                                     std::span<const SparseDistribution> cols);

std::vector<Tensor2> conv1d_batch(std::span<const Tensor2> inputs, const ConvSpec& spec,
                                  const Tensor2& W, std::span<const double> b);

}  // namespace parallel

int max_threads();

}  // namespace mhnet::kernels
