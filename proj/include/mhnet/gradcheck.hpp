#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mhnet/common.hpp"

namespace mhnet {

/// |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor = 1e-6);

/// Max relative error between `analytic` and central differences of `loss`
/// taken by perturbing `values` in place (restored afterwards). At most
/// `max_coords` coordinates are probed, sampled with `rng`.
double finite_difference_error(std::span<double> values, std::span<const double> analytic,
                               const std::function<double()>& loss, double eps,
                               std::size_t max_coords, Rng& rng);

struct GradCheckRow {
  std::string name;
  std::size_t configurations = 0;
  std::size_t coordinates = 0;
  double max_relative_error = 0.0;
};

struct GradCheckOptions {
  std::uint64_t seed = 1;
  std::size_t configs_per_check = 8;
  double eps = 1e-5;
  std::size_t max_coords_per_tensor = 40;
};

/// Every layer, both model families and both metric losses on random shapes.
std::vector<GradCheckRow> run_gradient_suite(const GradCheckOptions& opt);

std::string format_gradcheck_table(const std::vector<GradCheckRow>& rows, double threshold);

}  // namespace mhnet
