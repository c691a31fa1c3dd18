#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace fraug::stats {

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
};

// Degenerate 0/0 ratios resolve to 0, never NaN.
double precision(const ConfusionCounts& c);
double recall(const ConfusionCounts& c);
double f1(const ConfusionCounts& c);

// Paired per-unit correctness of two systems over identical units:
// a = both correct, b = only A correct, c = only B correct, d = both wrong.
struct PairedOutcomes {
  std::uint64_t both_correct = 0;  // a
  std::uint64_t only_a = 0;        // b
  std::uint64_t only_b = 0;        // c
  std::uint64_t both_wrong = 0;    // d
};

enum class McNemarMode { Exact, Chi2Corrected, Auto };

class UndefinedTestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Two-sided McNemar p-value from the discordant counts. Exact mode:
// p = min(1, 2 * sum_{k >= max(b,c)} C(b+c, k) * 0.5^(b+c)). Chi2 mode:
// continuity-corrected statistic (|b-c|-1)^2/(b+c) against chi-square
// with 1 dof. Auto uses exact when b+c < 25. b+c = 0 is undefined.
double mcnemar(std::uint64_t b, std::uint64_t c, McNemarMode mode = McNemarMode::Auto);
double mcnemar(const PairedOutcomes& paired, McNemarMode mode = McNemarMode::Auto);

// Chi-square (1 dof) upper tail, exposed for reuse in tests.
double chi2_survival_1dof(double statistic);

// (f1_b - f1_a) / f1_a; 0 when both are 0.
double relative_improvement(double f1_a, double f1_b);

struct UnitPrediction {
  std::string id;
  int predicted = 0;
};

struct UnitLabel {
  std::string id;
  int label = 0;
};

ConfusionCounts confusion(const std::vector<UnitPrediction>& predictions,
                          const std::vector<UnitLabel>& labels);

struct SystemScore {
  std::string name;
  ConfusionCounts counts;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct EvalReport {
  SystemScore a;
  SystemScore b;
  PairedOutcomes paired;
  bool p_defined = false;      // false when b + c = 0
  double p_value = 1.0;        // meaningful only when p_defined
  bool improvement_defined = false;
  double improvement = 0.0;    // relative F1 improvement of B over A
};

// Pairs the two systems' predictions by unit id against the shared
// labels. Ids must match one-to-one (any order); mismatches are errors.
EvalReport compare_systems(const std::vector<UnitPrediction>& preds_a,
                           const std::vector<UnitPrediction>& preds_b,
                           const std::vector<UnitLabel>& labels,
                           McNemarMode mode = McNemarMode::Auto,
                           const std::string& name_a = "A", const std::string& name_b = "B");

nlohmann::json eval_report_to_json(const EvalReport& report);

// CSV rows (one per system) under the header
// system,split,f1,precision,recall,b,c,p_value,folds.
extern const char* kReportCsvHeader;
std::string eval_report_csv_rows(const EvalReport& report, const std::string& split,
                                 std::size_t folds_a, std::size_t folds_b);

}  // namespace fraug::stats
