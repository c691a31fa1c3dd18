#include "fraug/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace fraug::stats {

double precision(const ConfusionCounts& c) {
  const std::uint64_t denom = c.tp + c.fp;
  return denom == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(denom);
}

double recall(const ConfusionCounts& c) {
  const std::uint64_t denom = c.tp + c.fn;
  return denom == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(denom);
}

double f1(const ConfusionCounts& c) {
  const double p = precision(c);
  const double r = recall(c);
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

double chi2_survival_1dof(double statistic) {
  if (statistic <= 0.0) return 1.0;
  // For 1 dof, P(X > s) = erfc(sqrt(s/2)).
  return std::erfc(std::sqrt(statistic / 2.0));
}

double mcnemar(std::uint64_t b, std::uint64_t c, McNemarMode mode) {
  const std::uint64_t n = b + c;
  if (n == 0)
    throw UndefinedTestError("mcnemar: no discordant pairs (b + c = 0), test undefined");
  if (mode == McNemarMode::Auto)
    mode = n < 25 ? McNemarMode::Exact : McNemarMode::Chi2Corrected;

  if (mode == McNemarMode::Exact) {
    // Two-sided exact binomial tail: 2 * P(X >= max(b, c)) with X ~ Bin(n, 1/2).
    const std::uint64_t k_min = std::max(b, c);
    // Running C(n, k), descending from k = n, in doubles (exact for n
    // well below 2^53; overflow-free unlike integer accumulation).
    double coeff = 1.0;  // C(n, n)
    double tail = 0.0;
    for (std::uint64_t k = n;; --k) {
      if (k < k_min) break;
      tail += coeff;
      if (k == 0) break;
      coeff = coeff * static_cast<double>(k) / static_cast<double>(n - k + 1);  // C(n, k-1)
    }
    const double p = 2.0 * tail * std::pow(0.5, static_cast<double>(n));
    return std::min(1.0, p);
  }

  const double diff = std::abs(static_cast<double>(b) - static_cast<double>(c));
  const double corrected = diff - 1.0;
  const double statistic = corrected * corrected / static_cast<double>(n);
  return chi2_survival_1dof(statistic);
}

double mcnemar(const PairedOutcomes& paired, McNemarMode mode) {
  return mcnemar(paired.only_a, paired.only_b, mode);
}

double relative_improvement(double f1_a, double f1_b) {
  if (f1_a == 0.0) return 0.0;
  return (f1_b - f1_a) / f1_a;
}

ConfusionCounts confusion(const std::vector<UnitPrediction>& predictions,
                          const std::vector<UnitLabel>& labels) {
  if (predictions.size() != labels.size())
    throw std::invalid_argument("confusion: prediction/label count mismatch");
  std::map<std::string, int> by_id;
  for (const auto& l : labels) {
    if (!by_id.emplace(l.id, l.label).second)
      throw std::invalid_argument("confusion: duplicate label id " + l.id);
  }
  ConfusionCounts c;
  std::size_t matched = 0;
  for (const auto& p : predictions) {
    auto it = by_id.find(p.id);
    if (it == by_id.end())
      throw std::invalid_argument("confusion: prediction for unknown id " + p.id);
    ++matched;
    const int y = it->second;
    if (p.predicted == 1 && y == 1) ++c.tp;
    else if (p.predicted == 1 && y == 0) ++c.fp;
    else if (p.predicted == 0 && y == 1) ++c.fn;
    else ++c.tn;
  }
  if (matched != by_id.size())
    throw std::invalid_argument("confusion: predictions do not cover all labeled ids");
  return c;
}

EvalReport compare_systems(const std::vector<UnitPrediction>& preds_a,
                           const std::vector<UnitPrediction>& preds_b,
                           const std::vector<UnitLabel>& labels, McNemarMode mode,
                           const std::string& name_a, const std::string& name_b) {
  if (preds_a.size() != preds_b.size() || preds_a.size() != labels.size())
    throw std::invalid_argument("compare_systems: input sizes differ");
  if (labels.empty()) throw std::invalid_argument("compare_systems: no units");

  std::map<std::string, int> label_by_id;
  for (const auto& l : labels) {
    if (l.label != 0 && l.label != 1)
      throw std::invalid_argument("compare_systems: labels must be 0 or 1");
    if (!label_by_id.emplace(l.id, l.label).second)
      throw std::invalid_argument("compare_systems: duplicate unit id " + l.id);
  }
  std::map<std::string, int> a_by_id;
  for (const auto& p : preds_a) {
    if (label_by_id.find(p.id) == label_by_id.end())
      throw std::invalid_argument("compare_systems: system A predicts unknown id " + p.id);
    if (!a_by_id.emplace(p.id, p.predicted).second)
      throw std::invalid_argument("compare_systems: system A repeats id " + p.id);
  }
  std::map<std::string, int> b_by_id;
  for (const auto& p : preds_b) {
    if (label_by_id.find(p.id) == label_by_id.end())
      throw std::invalid_argument("compare_systems: system B predicts unknown id " + p.id);
    if (!b_by_id.emplace(p.id, p.predicted).second)
      throw std::invalid_argument("compare_systems: system B repeats id " + p.id);
  }

  EvalReport report;
  report.a.name = name_a;
  report.b.name = name_b;
  for (const auto& [id, y] : label_by_id) {
    const int pa = a_by_id.at(id);
    const int pb = b_by_id.at(id);

    auto tally = [y](SystemScore& s, int predicted) {
      if (predicted == 1 && y == 1) ++s.counts.tp;
      else if (predicted == 1 && y == 0) ++s.counts.fp;
      else if (predicted == 0 && y == 1) ++s.counts.fn;
      else ++s.counts.tn;
    };
    tally(report.a, pa);
    tally(report.b, pb);

    const bool a_correct = pa == y;
    const bool b_correct = pb == y;
    if (a_correct && b_correct) ++report.paired.both_correct;
    else if (a_correct) ++report.paired.only_a;
    else if (b_correct) ++report.paired.only_b;
    else ++report.paired.both_wrong;
  }

  for (SystemScore* s : {&report.a, &report.b}) {
    s->precision = precision(s->counts);
    s->recall = recall(s->counts);
    s->f1 = f1(s->counts);
  }

  if (report.paired.only_a + report.paired.only_b > 0) {
    report.p_defined = true;
    report.p_value = mcnemar(report.paired, mode);
  }
  if (report.a.f1 > 0.0) {
    report.improvement_defined = true;
    report.improvement = relative_improvement(report.a.f1, report.b.f1);
  } else if (report.b.f1 == 0.0) {
    report.improvement_defined = true;  // both zero: no change
    report.improvement = 0.0;
  }
  return report;
}

namespace {

nlohmann::json system_to_json(const SystemScore& s) {
  return {{"name", s.name},
          {"tp", s.counts.tp},
          {"fp", s.counts.fp},
          {"fn", s.counts.fn},
          {"tn", s.counts.tn},
          {"precision", s.precision},
          {"recall", s.recall},
          {"f1", s.f1}};
}

}  // namespace

nlohmann::json eval_report_to_json(const EvalReport& report) {
  nlohmann::json out{{"system_a", system_to_json(report.a)},
                     {"system_b", system_to_json(report.b)},
                     {"both_correct", report.paired.both_correct},
                     {"only_a", report.paired.only_a},
                     {"only_b", report.paired.only_b},
                     {"both_wrong", report.paired.both_wrong}};
  out["p_value"] = report.p_defined ? nlohmann::json(report.p_value) : nlohmann::json();
  out["relative_improvement"] =
      report.improvement_defined ? nlohmann::json(report.improvement) : nlohmann::json();
  return out;
}

const char* kReportCsvHeader = "system,split,f1,precision,recall,b,c,p_value,folds";

std::string eval_report_csv_rows(const EvalReport& report, const std::string& split,
                                 std::size_t folds_a, std::size_t folds_b) {
  std::ostringstream out;
  out.precision(6);
  out << std::fixed;
  auto row = [&](const SystemScore& s, std::size_t folds) {
    out << s.name << ',' << split << ',' << s.f1 << ',' << s.precision << ',' << s.recall
        << ',' << report.paired.only_a << ',' << report.paired.only_b << ',';
    if (report.p_defined) {
      std::ostringstream p;
      p.precision(9);
      p << report.p_value;
      out << p.str();
    }
    out << ',' << folds << '\n';
  };
  row(report.a, folds_a);
  row(report.b, folds_b);
  return out.str();
}

}  // namespace fraug::stats
