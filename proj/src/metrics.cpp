#include "mhnet/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "mhnet/common.hpp"

namespace mhnet {

double to_double(const Rational& r) { return r.convert_to<double>(); }

namespace {

Rational ratio(std::size_t num, std::size_t den) {
  if (den == 0) return Rational(0);
  return Rational(num) / Rational(den);
}

Rational mean(const std::vector<Rational>& v) {
  Rational s = 0;
  for (const auto& x : v) s += x;
  return v.empty() ? Rational(0) : s / Rational(v.size());
}

// Binary collapse: positive = (label >= threshold).
GroupScores collapse(std::span<const RiskLabel> gold, std::span<const RiskLabel> pred, int threshold) {
  std::vector<int> g, p;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    g.push_back(ordinal(gold[i]) >= threshold ? 1 : 0);
    p.push_back(ordinal(pred[i]) >= threshold ? 1 : 0);
  }
  auto rep = confusion_report(g, p, 2);
  return {rep.macro_f1, rep.per_class[1].f1, rep.accuracy};
}

}  // namespace

ClassScores scores_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  return {ratio(tp, tp + fp), ratio(tp, tp + fn), ratio(2 * tp, 2 * tp + fp + fn)};
}

EvalReport confusion_report(std::span<const int> gold, std::span<const int> pred, std::size_t num_classes) {
  if (gold.size() != pred.size()) {
    throw Error("metrics: gold has " + std::to_string(gold.size()) + " labels, predictions have " +
                std::to_string(pred.size()));
  }
  EvalReport r;
  r.num_classes = num_classes;
  r.instances = gold.size();
  r.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] < 0 || pred[i] < 0 || static_cast<std::size_t>(gold[i]) >= num_classes ||
        static_cast<std::size_t>(pred[i]) >= num_classes) {
      throw Error("metrics: label out of range at instance " + std::to_string(i));
    }
    ++r.confusion[static_cast<std::size_t>(gold[i])][static_cast<std::size_t>(pred[i])];
  }
  std::size_t correct = 0;
  std::vector<Rational> f1s;
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::size_t tp = r.confusion[c][c], fp = 0, fn = 0;
    for (std::size_t o = 0; o < num_classes; ++o) {
      if (o == c) continue;
      fp += r.confusion[o][c];
      fn += r.confusion[c][o];
    }
    correct += tp;
    r.per_class.push_back(scores_from_counts(tp, fp, fn));
    f1s.push_back(r.per_class.back().f1);
  }
  r.accuracy = ratio(correct, gold.size());
  r.macro_f1 = mean(f1s);
  return r;
}

EvalReport clpsych_metrics(std::span<const RiskLabel> gold, std::span<const RiskLabel> pred) {
  if (gold.size() != pred.size()) {
    throw Error("metrics: gold has " + std::to_string(gold.size()) + " labels, predictions have " +
                std::to_string(pred.size()));
  }
  std::vector<int> g, p;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    g.push_back(ordinal(gold[i]));
    p.push_back(ordinal(pred[i]));
  }
  EvalReport r = confusion_report(g, p, kNumRiskLabels);
  r.has_risk_groups = true;
  r.non_green_f1 = mean({r.per_class[1].f1, r.per_class[2].f1, r.per_class[3].f1});
  r.flagged = collapse(gold, pred, ordinal(RiskLabel::amber));
  r.urgent = collapse(gold, pred, ordinal(RiskLabel::red));
  return r;
}

ClassScores binary_metrics(std::span<const int> gold, std::span<const int> pred, int positive) {
  if (gold.size() != pred.size()) throw Error("metrics: gold and predictions differ in length");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const bool g = gold[i] == positive, p = pred[i] == positive;
    tp += g && p;
    fp += !g && p;
    fn += g && !p;
  }
  return scores_from_counts(tp, fp, fn);
}

double chi_square_1df_sf(double x) {
  if (x <= 0.0) return 1.0;
  return std::erfc(std::sqrt(x / 2.0));
}

McNemarResult mcnemar_from_counts(std::size_t b, std::size_t c) {
  McNemarResult r;
  r.a_only = b;
  r.b_only = c;
  if (b + c == 0) return r;
  const double diff = std::abs(static_cast<double>(b) - static_cast<double>(c)) - 1.0;
  r.statistic = diff * diff / static_cast<double>(b + c);
  r.p_value = chi_square_1df_sf(r.statistic);
  return r;
}

McNemarResult mcnemar(std::span<const int> pred_a, std::span<const int> pred_b, std::span<const int> gold) {
  if (pred_a.size() != gold.size() || pred_b.size() != gold.size()) {
    throw Error("mcnemar: prediction and gold lengths differ");
  }
  std::size_t b = 0, c = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const bool a_ok = pred_a[i] == gold[i], b_ok = pred_b[i] == gold[i];
    b += a_ok && !b_ok;
    c += !a_ok && b_ok;
  }
  return mcnemar_from_counts(b, c);
}

nlohmann::ordered_json report_to_json(const EvalReport& r, const std::vector<std::string>& class_names) {
  using json = nlohmann::ordered_json;
  json j;
  j["instances"] = r.instances;
  j["confusion"] = r.confusion;
  json classes = json::object();
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const std::string name = c < class_names.size() ? class_names[c] : std::to_string(c);
    classes[name] = {{"precision", to_double(r.per_class[c].precision)},
                     {"recall", to_double(r.per_class[c].recall)},
                     {"f1", to_double(r.per_class[c].f1)}};
  }
  j["per_class"] = std::move(classes);
  j["accuracy"] = to_double(r.accuracy);
  j["macro_f1"] = to_double(r.macro_f1);
  if (r.has_risk_groups) {
    auto group = [](const GroupScores& g) {
      return json{{"macro_f1", to_double(g.macro_f1)},
                  {"positive_f1", to_double(g.positive_f1)},
                  {"accuracy", to_double(g.accuracy)}};
    };
    j["non_green_f1"] = to_double(r.non_green_f1);
    j["flagged"] = group(r.flagged);
    j["urgent"] = group(r.urgent);
    j["all"] = {{"macro_f1", to_double(r.macro_f1)}, {"accuracy", to_double(r.accuracy)}};
  }
  return j;
}

std::string format_risk_table(const std::vector<std::pair<std::string, EvalReport>>& rows) {
  std::size_t width = 6;
  for (const auto& [name, r] : rows) width = std::max(width, name.size());
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %9s  %7s  %7s  %7s  %7s  %7s  %7s\n", static_cast<int>(width),
                "Method", "Non-green", "Flagged", "", "Urgent", "", "All", "");
  out << buf;
  std::snprintf(buf, sizeof buf, "%-*s  %9s  %7s  %7s  %7s  %7s  %7s  %7s\n", static_cast<int>(width), "",
                "F1", "F1", "Acc.", "F1", "Acc.", "F1", "Acc.");
  out << buf;
  for (const auto& [name, r] : rows) {
    std::snprintf(buf, sizeof buf, "%-*s  %9.2f  %7.2f  %7.2f  %7.2f  %7.2f  %7.2f  %7.2f\n",
                  static_cast<int>(width), name.c_str(), to_double(r.non_green_f1),
                  to_double(r.flagged.macro_f1), to_double(r.flagged.accuracy), to_double(r.urgent.macro_f1),
                  to_double(r.urgent.accuracy), to_double(r.macro_f1), to_double(r.accuracy));
    out << buf;
  }
  return out.str();
}

std::string format_binary_table(const std::vector<std::pair<std::string, ClassScores>>& rows) {
  std::size_t width = 6;
  for (const auto& [name, r] : rows) width = std::max(width, name.size());
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %9s  %7s  %7s\n", static_cast<int>(width), "Method", "Precision",
                "Recall", "F1");
  out << buf;
  for (const auto& [name, s] : rows) {
    std::snprintf(buf, sizeof buf, "%-*s  %9.2f  %7.2f  %7.2f\n", static_cast<int>(width), name.c_str(),
                  to_double(s.precision), to_double(s.recall), to_double(s.f1));
    out << buf;
  }
  return out.str();
}

}  // namespace mhnet
