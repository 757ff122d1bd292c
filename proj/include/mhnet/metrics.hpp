#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mhnet/corpus.hpp"

namespace mhnet {

/// Scores are kept as exact rationals; undefined ratios (0/0) are 0.
using Rational = boost::multiprecision::cpp_rational;

double to_double(const Rational& r);

struct ClassScores {
  Rational precision;
  Rational recall;
  Rational f1;
};

/// Precision, recall and F1 from counts, with 0/0 taken as 0.
ClassScores scores_from_counts(std::size_t tp, std::size_t fp, std::size_t fn);

struct GroupScores {
  Rational macro_f1;     // mean F1 over both meta-classes
  Rational positive_f1;  // F1 of the positive meta-class alone
  Rational accuracy;
};

struct EvalReport {
  std::size_t num_classes = 0;
  std::size_t instances = 0;
  std::vector<std::vector<std::size_t>> confusion;  // [gold][pred]
  std::vector<ClassScores> per_class;
  Rational accuracy;
  Rational macro_f1;  // mean F1 over all classes

  // Risk groupings, filled by clpsych_metrics only.
  bool has_risk_groups = false;
  Rational non_green_f1;  // mean F1 over amber, red, crisis
  GroupScores flagged;    // green vs amber+red+crisis
  GroupScores urgent;     // green+amber vs red+crisis
};

/// Confusion matrix and per-class scores for labels in [0, num_classes).
EvalReport confusion_report(std::span<const int> gold, std::span<const int> pred, std::size_t num_classes);

/// Four-class triage report with the non-green / flagged / urgent / all groupings.
EvalReport clpsych_metrics(std::span<const RiskLabel> gold, std::span<const RiskLabel> pred);

/// Positive-class precision, recall and F1.
ClassScores binary_metrics(std::span<const int> gold, std::span<const int> pred, int positive = 1);

struct McNemarResult {
  std::size_t a_only = 0;  // a correct, b wrong
  std::size_t b_only = 0;  // a wrong, b correct
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Continuity-corrected McNemar test, chi-square with 1 degree of freedom.
McNemarResult mcnemar(std::span<const int> pred_a, std::span<const int> pred_b, std::span<const int> gold);
McNemarResult mcnemar_from_counts(std::size_t b, std::size_t c);

/// Upper tail of chi-square with one degree of freedom.
double chi_square_1df_sf(double x);

nlohmann::ordered_json report_to_json(const EvalReport& r, const std::vector<std::string>& class_names);

/// Aligned text table with the columns
/// Non-green F1 | Flagged F1 Acc | Urgent F1 Acc | All F1 Acc.
std::string format_risk_table(const std::vector<std::pair<std::string, EvalReport>>& rows);

/// Precision / Recall / F1 table for the positive class.
std::string format_binary_table(const std::vector<std::pair<std::string, ClassScores>>& rows);

}  // namespace mhnet
