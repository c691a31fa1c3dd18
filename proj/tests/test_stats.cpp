#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "fraug/rng.hpp"
#include "fraug/stats.hpp"
#include "oracles.hpp"

using namespace fraug;

TEST_CASE("precision, recall, F1") {
  stats::ConfusionCounts c{3, 1, 2, 4};
  CHECK(stats::precision(c) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(stats::recall(c) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(stats::f1(c) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  stats::ConfusionCounts zero{0, 0, 0, 10};  // no positives anywhere
  CHECK(stats::precision(zero) == 0.0);
  CHECK(stats::recall(zero) == 0.0);
  CHECK(stats::f1(zero) == 0.0);
}

TEST_CASE("exact McNemar equals exhaustive enumeration for b+c <= 20") {
  for (unsigned n = 1; n <= 20; ++n) {
    for (unsigned b = 0; b <= n; ++b) {
      const unsigned c = n - b;
      const double expected = oracle::mcnemar_exact_enumeration(b, c);
      const double got = stats::mcnemar(b, c, stats::McNemarMode::Exact);
      CAPTURE(b);
      CAPTURE(c);
      CHECK(std::abs(got - expected) <= 1e-12);
    }
  }
}

TEST_CASE("McNemar reference points") {
  // One-sided tail 2^-10, doubled.
  CHECK(stats::mcnemar(10, 0, stats::McNemarMode::Exact) ==
        doctest::Approx(0.001953125).epsilon(1e-12));
  // Ties give the capped maximum.
  CHECK(stats::mcnemar(7, 7, stats::McNemarMode::Exact) == 1.0);
  CHECK_THROWS_AS(stats::mcnemar(0, 0), stats::UndefinedTestError);
}

TEST_CASE("McNemar symmetry") {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const auto b = rng.uniform_int(0, 60);
    const auto c = rng.uniform_int(0, 60);
    if (b + c == 0) continue;
    CHECK(stats::mcnemar(b, c) == stats::mcnemar(c, b));
  }
}

TEST_CASE("continuity-corrected chi-squared branch") {
  // (|100-50|-1)^2 / 150 = 2401/150; survival checked against numeric
  // integration of the chi-squared density.
  const double stat = 2401.0 / 150.0;
  const double expected = oracle::chi2_survival_numeric(stat);
  const double got = stats::mcnemar(100, 50, stats::McNemarMode::Chi2Corrected);
  CHECK(std::abs(got - expected) <= 1e-8);
  CHECK(got == doctest::Approx(6.33e-5).epsilon(0.05));  // the documented magnitude

  // The formula is applied literally: b == c gives (0-1)^2/(b+c).
  const double tie = stats::mcnemar(30, 30, stats::McNemarMode::Chi2Corrected);
  CHECK(std::abs(tie - oracle::chi2_survival_numeric(1.0 / 60.0)) <= 1e-8);
}

TEST_CASE("auto mode switches at 25 discordant pairs") {
  CHECK(stats::mcnemar(14, 10) == stats::mcnemar(14, 10, stats::McNemarMode::Exact));  // 24
  CHECK(stats::mcnemar(15, 10) ==
        stats::mcnemar(15, 10, stats::McNemarMode::Chi2Corrected));  // 25
}

TEST_CASE("relative improvement reproduces the reference arithmetic") {
  // (0.479 - 0.382) / 0.382 = 25.39%; quoted as 25.13% from unrounded
  // scores, so assert within 1.5 percentage points.
  CHECK(std::abs(stats::relative_improvement(0.382, 0.479) - 0.2513) <= 0.015);
  // (0.739 - 0.654) / 0.654 = 13.00%; quoted as 12.99%.
  CHECK(std::abs(stats::relative_improvement(0.654, 0.739) - 0.1299) <= 0.015);
  CHECK(stats::relative_improvement(0.5, 0.6) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(stats::relative_improvement(0.0, 0.6) == 0.0);
}

TEST_CASE("confusion pairs predictions with labels by id") {
  std::vector<stats::UnitLabel> labels{{"u1", 1}, {"u2", 0}, {"u3", 1}, {"u4", 0}};
  std::vector<stats::UnitPrediction> preds{{"u3", 0}, {"u1", 1}, {"u4", 1}, {"u2", 0}};
  const auto c = stats::confusion(preds, labels);
  CHECK(c.tp == 1);  // u1
  CHECK(c.fn == 1);  // u3
  CHECK(c.fp == 1);  // u4
  CHECK(c.tn == 1);  // u2
  CHECK(c.total() == 4);

  std::vector<stats::UnitPrediction> missing{{"u3", 0}, {"u1", 1}, {"u4", 1}, {"u9", 0}};
  CHECK_THROWS_AS(stats::confusion(missing, labels), std::invalid_argument);
  std::vector<stats::UnitPrediction> short_list{{"u1", 1}};
  CHECK_THROWS_AS(stats::confusion(short_list, labels), std::invalid_argument);
  std::vector<stats::UnitLabel> dup{{"u1", 1}, {"u1", 0}};
  std::vector<stats::UnitPrediction> two{{"u1", 1}, {"u1", 0}};
  CHECK_THROWS_AS(stats::confusion(two, dup), std::invalid_argument);
}

TEST_CASE("compare_systems end to end") {
  // Six units: A correct on {u1,u2,u3}, B correct on {u1,u2,u3,u4,u5}.
  std::vector<stats::UnitLabel> labels{{"u1", 1}, {"u2", 1}, {"u3", 0},
                                       {"u4", 1}, {"u5", 0}, {"u6", 1}};
  std::vector<stats::UnitPrediction> a{{"u1", 1}, {"u2", 1}, {"u3", 0},
                                       {"u4", 0}, {"u5", 1}, {"u6", 0}};
  std::vector<stats::UnitPrediction> b{{"u1", 1}, {"u2", 1}, {"u3", 0},
                                       {"u4", 1}, {"u5", 0}, {"u6", 0}};
  const auto report = stats::compare_systems(a, b, labels, stats::McNemarMode::Exact, "base",
                                             "aug");
  CHECK(report.a.name == "base");
  CHECK(report.b.name == "aug");
  CHECK(report.paired.only_a == 0);
  CHECK(report.paired.only_b == 2);  // u4, u5
  CHECK(report.paired.both_correct == 3);
  CHECK(report.paired.both_wrong == 1);
  CHECK(report.p_defined);
  CHECK(report.p_value == doctest::Approx(0.5).epsilon(1e-12));  // 2 * (1/4) * ... = min(1, 2*0.25)
  // A: tp=2 (u1,u2), fp=1 (u5), fn=2 (u4,u6), tn=1 (u3)
  CHECK(report.a.counts.tp == 2);
  CHECK(report.a.counts.fp == 1);
  CHECK(report.a.f1 == doctest::Approx(2.0 * 2 / (2.0 * 2 + 1 + 2)).epsilon(1e-12));
  CHECK(report.improvement_defined);

  // Identical systems: no discordant pairs, p undefined.
  const auto same = stats::compare_systems(a, a, labels);
  CHECK_FALSE(same.p_defined);
  const auto j = stats::eval_report_to_json(same);
  CHECK(j.at("p_value").is_null());

  // Misaligned ids must be rejected.
  std::vector<stats::UnitPrediction> stray{{"u1", 1}, {"u2", 1}, {"u3", 0},
                                           {"u4", 0}, {"u5", 1}, {"zz", 0}};
  CHECK_THROWS_AS(stats::compare_systems(stray, b, labels), std::invalid_argument);
}

TEST_CASE("report CSV shape") {
  std::vector<stats::UnitLabel> labels{{"u1", 1}, {"u2", 0}, {"u3", 1}, {"u4", 1}};
  std::vector<stats::UnitPrediction> a{{"u1", 1}, {"u2", 1}, {"u3", 0}, {"u4", 1}};
  std::vector<stats::UnitPrediction> b{{"u1", 1}, {"u2", 0}, {"u3", 1}, {"u4", 1}};
  const auto report = stats::compare_systems(a, b, labels, stats::McNemarMode::Exact);
  const std::string header(stats::kReportCsvHeader);
  CHECK(header == "system,split,f1,precision,recall,b,c,p_value,folds");
  const std::string rows = stats::eval_report_csv_rows(report, "test", 0, 5);
  std::istringstream in(rows);
  std::string line;
  std::size_t line_count = 0;
  while (std::getline(in, line)) {
    ++line_count;
    std::size_t commas = 0;
    for (char ch : line)
      if (ch == ',') ++commas;
    CHECK(commas == 8);  // nine fields
    CHECK(line.find("test") != std::string::npos);
  }
  CHECK(line_count == 2);
}
