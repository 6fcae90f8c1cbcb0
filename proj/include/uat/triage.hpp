#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uat/mc.hpp"

namespace uat {

enum class CalibrationGrouping { PredictedClass, TrueClass };

struct ThresholdTable {
    std::vector<std::string> class_names;
    std::vector<double> thresholds;  // one per class, in [0,1]
    double percentile = 10.0;
};

struct TriageOutcome {
    bool accepted = false;
    std::size_t accepted_class = 0;  // valid when accepted
    PredictiveSummary summary;
    double threshold_applied = 0.0;
};

struct EvalReport {
    std::vector<std::vector<std::size_t>> confusion;  // rows true, cols predicted; accepted only
    std::vector<double> precision;
    std::vector<double> recall;
    std::vector<double> f1;
    std::vector<double> fraction_correct;        // diagonal / row sum
    std::vector<std::size_t> referrals_by_class; // per true class
    std::size_t retained = 0;
    std::size_t referred = 0;
    double accuracy = 0.0;  // over accepted samples
};

struct RemovalCurve {
    std::vector<double> raw;       // raw[k]: accuracy after dropping the k least confident
    std::vector<double> smoothed;  // trailing moving average, length N - window + 1
    std::size_t window = 5;
};

// Nearest-rank percentile of each group's confidences: sorted ascending,
// index ceil(p/100 * N) - 1. Groups by predicted class unless told otherwise.
ThresholdTable calibrate_thresholds(
    const std::vector<PredictiveSummary>& training_summaries,
    const std::vector<std::size_t>& training_labels,
    const std::vector<std::string>& class_names, double percentile = 10.0,
    CalibrationGrouping grouping = CalibrationGrouping::PredictedClass);

// Refer iff confidence < threshold of the predicted class (strict).
TriageOutcome decide(const PredictiveSummary& summary, const ThresholdTable& thresholds);

EvalReport evaluate_with_referral(const std::vector<PredictiveSummary>& test_summaries,
                                  const std::vector<std::size_t>& test_labels,
                                  const ThresholdTable& thresholds);

// Samples sorted ascending by confidence (ties keep original order);
// raw[k] is the accuracy of MC-median predictions on the N-k most
// confident samples.
RemovalCurve removal_curve(const std::vector<PredictiveSummary>& test_summaries,
                           const std::vector<std::size_t>& test_labels,
                           std::size_t window = 5);

void save_thresholds(const ThresholdTable& table, const std::string& path);
ThresholdTable load_thresholds(const std::string& path);
void save_report_csv(const EvalReport& report, const std::vector<std::string>& class_names,
                     const std::string& path);
void save_curve_csv(const RemovalCurve& curve, const std::string& path);

}  // namespace uat
