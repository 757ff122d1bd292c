#pragma once

// Shared fixtures and independent oracles for the unit, CLI and acceptance
// binaries.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "mhnet/common.hpp"
#include "mhnet/corpus.hpp"
#include "mhnet/dataset.hpp"

namespace support {

namespace fs = std::filesystem;

/// Fresh scratch directory under the system temp dir.
inline fs::path scratch_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("mhnet_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

/// name -> FNV-1a of contents, for every regular file under `dir`.
inline std::map<std::string, std::uint64_t> hash_tree(const fs::path& dir) {
  std::map<std::string, std::uint64_t> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = mhnet::fnv1a64(read_file(e.path()));
  }
  return out;
}

struct RunResult {
  int exit_code = -1;
  std::string output;
};

/// Runs a shell command, capturing stdout and stderr together.
inline RunResult run(const std::string& cmd) {
  RunResult r;
  FILE* pipe = popen((cmd + " 2>&1").c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

// ---- fixture corpus for the dataset builder ----

/// Diagnosed users "d%02zu" with `prior` ordinary posts followed by a diagnosis
/// statement; controls "c%03zu" with post counts spread
/// around the diagnosed count. Communities come from a small neutral set.
inline std::vector<mhnet::Post> fixture_corpus(std::size_t diagnosed, std::size_t controls,
                                               std::uint64_t seed, std::size_t prior = 110) {
  using namespace mhnet;
  static const std::vector<std::string> communities = {"askreddit", "gaming", "movies", "music",
                                                       "cooking", "books", "sports", "science"};
  static const std::vector<std::string> fillers = {"the game last night was great",
                                                   "anyone read a good book lately",
                                                   "made pasta with garlic and lemon",
                                                   "this song has been stuck in my head",
                                                   "what a strange week at work"};
  Rng rng(seed);
  std::vector<Post> posts;
  auto add_user = [&](const std::string& uid, std::size_t n, std::size_t favourite) {
    for (std::size_t i = 0; i < n; ++i) {
      Post p;
      p.user_id = uid;
      p.post_id = uid + "-" + std::to_string(i);
      p.timestamp = static_cast<std::int64_t>(1000 + i * 10);
      const bool fav = uniform01(rng) < 0.6;
      p.community = communities[fav ? favourite : uniform_index(rng, communities.size())];
      p.text = fillers[uniform_index(rng, fillers.size())];
      posts.push_back(std::move(p));
    }
  };
  for (std::size_t d = 0; d < diagnosed; ++d) {
    char id[16];
    std::snprintf(id, sizeof id, "d%02zu", d);
    const std::size_t fav = uniform_index(rng, communities.size());
    add_user(id, prior, fav);
    Post dx;
    dx.user_id = id;
    dx.post_id = std::string(id) + "-dx";
    dx.timestamp = static_cast<std::int64_t>(1000 + prior * 10);
    dx.community = "depression";
    dx.text = "I was just diagnosed with depression last month.";
    posts.push_back(dx);
  }
  for (std::size_t c = 0; c < controls; ++c) {
    char id[16];
    std::snprintf(id, sizeof id, "c%03zu", c);
    // prior +- 25%, so some controls fall outside the activity window.
    const auto lo = static_cast<std::size_t>(0.75 * static_cast<double>(prior));
    const auto span = static_cast<std::size_t>(0.5 * static_cast<double>(prior));
    add_user(id, lo + uniform_index(rng, span + 1), uniform_index(rng, communities.size()));
  }
  return posts;
}

// ---- independent oracles ----

/// Direct Hellinger evaluation over the union of supports.
inline double hellinger_oracle(const mhnet::SubredditDistribution& p, const mhnet::SubredditDistribution& q) {
  std::set<std::string> keys;
  for (const auto& [k, v] : p) keys.insert(k);
  for (const auto& [k, v] : q) keys.insert(k);
  double s = 0.0;
  for (const auto& k : keys) {
    const double a = p.count(k) ? std::sqrt(p.at(k)) : 0.0;
    const double b = q.count(k) ? std::sqrt(q.at(k)) : 0.0;
    s += (a - b) * (a - b);
  }
  return std::sqrt(s) / std::sqrt(2.0);
}

/// Exhaustive per-user matcher: for each diagnosed user in id order, list every
/// unused control inside the activity window, sort the whole list by
/// (distance, id) and take the first k.
inline mhnet::MatchResult match_oracle(const std::vector<mhnet::MatchCandidate>& diagnosed,
                                       const std::vector<mhnet::MatchCandidate>& pool, std::size_t k,
                                       double tol) {
  std::vector<const mhnet::MatchCandidate*> ds;
  for (const auto& d : diagnosed) ds.push_back(&d);
  std::sort(ds.begin(), ds.end(), [](auto a, auto b) { return a->user_id < b->user_id; });
  std::set<std::string> used;
  mhnet::MatchResult out;
  for (const auto* d : ds) {
    // Distances are keyed on a 1e-12 grid: mathematically equal distances (for
    // example 1 for disjoint supports) must fall through to the id order.
    std::vector<std::tuple<long long, std::string, double>> options;
    for (const auto& c : pool) {
      if (used.count(c.user_id)) continue;
      // Exact integer form of (1 - tol) n <= m <= (1 + tol) n, tol in whole percent.
      const long long pct = std::llround(tol * 100.0);
      const auto n = static_cast<long long>(d->post_count);
      const auto m = static_cast<long long>(c.post_count);
      const bool inside = 100 * m >= (100 - pct) * n && 100 * m <= (100 + pct) * n;
      if (!inside) continue;
      const double h = hellinger_oracle(d->distribution, c.distribution);
      options.emplace_back(std::llround(h * 1e12), c.user_id, h);
    }
    std::sort(options.begin(), options.end());
    auto& list = out.matches[d->user_id];
    for (std::size_t i = 0; i < std::min(k, options.size()); ++i) {
      used.insert(std::get<1>(options[i]));
      list.push_back({std::get<1>(options[i]), std::get<2>(options[i])});
    }
    if (list.size() < k) out.short_lists.push_back(d->user_id);
  }
  return out;
}

/// Random distribution over a few of `n_comm` communities named "s0", "s1", ...
/// Continuous weights, so distinct controls are never exactly equidistant.
inline mhnet::SubredditDistribution random_distribution(mhnet::Rng& rng, std::size_t n_comm) {
  mhnet::SubredditDistribution d;
  const std::size_t support = 1 + mhnet::uniform_index(rng, std::min<std::size_t>(n_comm, 4));
  double total = 0.0;
  std::map<std::string, double> w;
  for (std::size_t i = 0; i < support; ++i) {
    const double x = 0.05 + mhnet::uniform01(rng);
    w["s" + std::to_string(mhnet::uniform_index(rng, n_comm))] += x;
    total += x;
  }
  for (const auto& [k, v] : w) d[k] = v / total;
  return d;
}

}  // namespace support
