#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mhnet/common.hpp"
#include "mhnet/corpus.hpp"
#include "mhnet/dataset.hpp"

namespace mhnet {

/// Users whose background posts are Zipf-distributed filler words. Positive
/// users carry signal phrases in ceil(signal_rate * posts) of their posts;
/// controls never do.
struct SynthUsersSpec {
  std::size_t positives = 200;
  std::size_t controls_per_positive = 3;
  std::size_t posts_per_user = 50;
  std::size_t vocab_size = 2000;
  double zipf_exponent = 1.0;  // background word frequencies; 0 is uniform
  double signal_rate = 0.05;
  std::size_t min_post_tokens = 8;
  std::size_t max_post_tokens = 30;
  std::vector<std::string> signal_phrases = default_signal_phrases();
  /// Share of positives (with their controls) in the training split; the rest
  /// is halved between validation and test. Thirds by default.
  double train_fraction = 1.0 / 3.0;
  std::uint64_t seed = 1;

  static std::vector<std::string> default_signal_phrases();
  void validate() const;
};

/// Split by positive user, each control following the positive it was
/// generated for.
struct SynthUsers {
  SplitData train;
  SplitData validation;
  SplitData test;
};

SynthUsers synth_users(const SynthUsersSpec& spec);

/// Four-class thread corpus. Each target post plants `planted` sentences from
/// severity phrase banks: the label's own bank, or with probability
/// `adjacent_rate` a neighbouring one.
struct SynthThreadsSpec {
  std::size_t train = 800;
  std::size_t test = 200;
  std::size_t vocab_size = 2000;
  double zipf_exponent = 1.0;
  std::size_t planted = 2;
  double adjacent_rate = 0.1;
  std::vector<double> label_mix = {0.35, 0.25, 0.22, 0.18};
  std::uint64_t seed = 1;

  void validate() const;
};

struct SynthThreads {
  std::vector<ThreadInstance> train;
  std::vector<ThreadInstance> test;
};

SynthThreads synth_threads(const SynthThreadsSpec& spec);

/// Phrase bank for one severity level.
const std::vector<std::string>& severity_bank(RiskLabel level);

/// {train,validation,test}.{posts,labels}.jsonl
void write_synth_users(const std::string& dir, const SynthUsers& users);
/// {train,test}.threads.jsonl
void write_synth_threads(const std::string& dir, const SynthThreads& threads);

}  // namespace mhnet
