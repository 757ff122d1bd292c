#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mhnet {

/// Raised for malformed inputs (bad files, bad flags, contract violations).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a numeric computation produces NaN or Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

using Rng = std::mt19937_64;

std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t splitmix64(std::uint64_t x);

/// Derives an independent seed for a named component from the global seed.
/// Components seeded this way can be exercised in isolation and still see the
/// same stream they would see inside a full run.
std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view stream);

// std distributions are implementation-defined; these are not.
double uniform01(Rng& rng);
double uniform(Rng& rng, double lo, double hi);
std::size_t uniform_index(Rng& rng, std::size_t n);

/// Fisher-Yates shuffle driven by uniform_index.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[uniform_index(rng, i)]);
  }
}

std::string hex64(std::uint64_t v);

}  // namespace mhnet
