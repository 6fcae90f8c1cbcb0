#include "uat/triage.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace uat {

ThresholdTable calibrate_thresholds(
    const std::vector<PredictiveSummary>& training_summaries,
    const std::vector<std::size_t>& training_labels,
    const std::vector<std::string>& class_names, double percentile,
    CalibrationGrouping grouping) {
    ops::check(percentile >= 0.0 && percentile <= 100.0,
               "calibrate: percentile must be in [0,100]");
    ops::check(grouping == CalibrationGrouping::PredictedClass ||
                   training_labels.size() == training_summaries.size(),
               "calibrate: labels required for true-class grouping");

    const std::size_t C = class_names.size();
    std::vector<std::vector<double>> groups(C);
    for (std::size_t i = 0; i < training_summaries.size(); ++i) {
        const std::size_t g = grouping == CalibrationGrouping::PredictedClass
                                  ? training_summaries[i].predicted_class
                                  : training_labels[i];
        ops::check(g < C, "calibrate: class index out of range");
        groups[g].push_back(training_summaries[i].confidence);
    }

    ThresholdTable table;
    table.class_names = class_names;
    table.percentile = percentile;
    for (std::size_t c = 0; c < C; ++c) {
        if (groups[c].empty())
            throw std::invalid_argument("calibrate: no training samples grouped to class '" +
                                        class_names[c] + "'");
        std::sort(groups[c].begin(), groups[c].end());
        const double k = std::ceil(percentile / 100.0 * static_cast<double>(groups[c].size()));
        const std::size_t idx = k < 1.0 ? 0 : static_cast<std::size_t>(k) - 1;
        table.thresholds.push_back(groups[c][std::min(idx, groups[c].size() - 1)]);
    }
    return table;
}

TriageOutcome decide(const PredictiveSummary& summary, const ThresholdTable& thresholds) {
    ops::check(summary.median.size() == thresholds.thresholds.size(),
               "decide: summary class count does not match threshold table");
    TriageOutcome out;
    out.summary = summary;
    out.threshold_applied = thresholds.thresholds[summary.predicted_class];
    out.accepted = !(summary.confidence < out.threshold_applied);  // strict refer rule
    if (out.accepted) out.accepted_class = summary.predicted_class;
    return out;
}

EvalReport evaluate_with_referral(const std::vector<PredictiveSummary>& test_summaries,
                                  const std::vector<std::size_t>& test_labels,
                                  const ThresholdTable& thresholds) {
    ops::check(test_summaries.size() == test_labels.size(),
               "evaluate_with_referral: summary/label count mismatch");
    const std::size_t C = thresholds.thresholds.size();

    EvalReport r;
    r.confusion.assign(C, std::vector<std::size_t>(C, 0));
    r.referrals_by_class.assign(C, 0);

    std::size_t correct = 0;
    for (std::size_t i = 0; i < test_summaries.size(); ++i) {
        const std::size_t truth = test_labels[i];
        ops::check(truth < C, "evaluate_with_referral: label out of range");
        const TriageOutcome o = decide(test_summaries[i], thresholds);
        if (!o.accepted) {
            ++r.referrals_by_class[truth];
            ++r.referred;
            continue;
        }
        ++r.retained;
        ++r.confusion[truth][o.accepted_class];
        if (o.accepted_class == truth) ++correct;
    }
    r.accuracy = r.retained == 0 ? 0.0
                                 : static_cast<double>(correct) /
                                       static_cast<double>(r.retained);

    r.precision.assign(C, 0.0);
    r.recall.assign(C, 0.0);
    r.f1.assign(C, 0.0);
    r.fraction_correct.assign(C, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
        std::size_t col = 0, row = 0;
        for (std::size_t t = 0; t < C; ++t) {
            col += r.confusion[t][c];
            row += r.confusion[c][t];
        }
        const double tp = static_cast<double>(r.confusion[c][c]);
        r.precision[c] = col == 0 ? 0.0 : tp / static_cast<double>(col);
        r.recall[c] = row == 0 ? 0.0 : tp / static_cast<double>(row);
        r.f1[c] = (r.precision[c] + r.recall[c]) == 0.0
                      ? 0.0
                      : 2.0 * r.precision[c] * r.recall[c] /
                            (r.precision[c] + r.recall[c]);
        r.fraction_correct[c] = row == 0 ? 0.0 : tp / static_cast<double>(row);
    }
    return r;
}

RemovalCurve removal_curve(const std::vector<PredictiveSummary>& test_summaries,
                           const std::vector<std::size_t>& test_labels,
                           std::size_t window) {
    const std::size_t N = test_summaries.size();
    ops::check(test_labels.size() == N, "removal_curve: summary/label count mismatch");
    ops::check(window >= 1, "removal_curve: window must be positive");
    ops::check(window <= N, "removal_curve: window larger than sample count");

    // Ascending by confidence; stable sort keeps original order on ties.
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return test_summaries[a].confidence < test_summaries[b].confidence;
    });

    // Suffix counts of correct MC-median predictions.
    std::vector<std::size_t> correct_suffix(N + 1, 0);
    for (std::size_t i = N; i-- > 0;) {
        const bool ok =
            test_summaries[order[i]].predicted_class == test_labels[order[i]];
        correct_suffix[i] = correct_suffix[i + 1] + (ok ? 1 : 0);
    }

    RemovalCurve curve;
    curve.window = window;
    curve.raw.resize(N);
    for (std::size_t k = 0; k < N; ++k)
        curve.raw[k] =
            static_cast<double>(correct_suffix[k]) / static_cast<double>(N - k);

    curve.smoothed.resize(N - window + 1);
    for (std::size_t k = 0; k + window <= N; ++k) {
        double s = 0.0;
        for (std::size_t j = 0; j < window; ++j) s += curve.raw[k + j];
        curve.smoothed[k] = s / static_cast<double>(window);
    }
    return curve;
}

void save_thresholds(const ThresholdTable& table, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp);
        if (!os) throw std::runtime_error("thresholds: cannot open " + tmp);
        char buf[64];
        for (std::size_t c = 0; c < table.class_names.size(); ++c) {
            std::snprintf(buf, sizeof(buf), "%.6f", table.thresholds[c]);
            os << table.class_names[c] << "\t" << buf << "\n";
        }
    }
    std::filesystem::rename(tmp, path);
}

ThresholdTable load_thresholds(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("thresholds: cannot open " + path);
    ThresholdTable table;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error("thresholds: malformed line in " + path);
        table.class_names.push_back(line.substr(0, tab));
        table.thresholds.push_back(std::stod(line.substr(tab + 1)));
    }
    if (table.class_names.empty())
        throw std::runtime_error("thresholds: empty file " + path);
    return table;
}

void save_report_csv(const EvalReport& report, const std::vector<std::string>& class_names,
                     const std::string& path) {
    const std::size_t C = class_names.size();
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp);
        if (!os) throw std::runtime_error("report: cannot open " + tmp);
        os << "confusion_matrix\ntrue\\pred";
        for (const auto& n : class_names) os << "," << n;
        os << "\n";
        for (std::size_t t = 0; t < C; ++t) {
            os << class_names[t];
            for (std::size_t p = 0; p < C; ++p) os << "," << report.confusion[t][p];
            os << "\n";
        }
        os << "\nmetrics\nclass,precision,recall,f1,fraction_correct,referrals\n";
        char buf[192];
        for (std::size_t c = 0; c < C; ++c) {
            std::snprintf(buf, sizeof(buf), "%s,%.6g,%.6g,%.6g,%.6g,%zu\n",
                          class_names[c].c_str(), report.precision[c], report.recall[c],
                          report.f1[c], report.fraction_correct[c],
                          report.referrals_by_class[c]);
            os << buf;
        }
        std::snprintf(buf, sizeof(buf),
                      "\noverall\naccuracy,%.6g\nretained,%zu\nreferred,%zu\n",
                      report.accuracy, report.retained, report.referred);
        os << buf;
    }
    std::filesystem::rename(tmp, path);
}

void save_curve_csv(const RemovalCurve& curve, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp);
        if (!os) throw std::runtime_error("curve: cannot open " + tmp);
        os << "k,raw_accuracy,smoothed_accuracy\n";
        char buf[96];
        for (std::size_t k = 0; k < curve.raw.size(); ++k) {
            if (k < curve.smoothed.size())
                std::snprintf(buf, sizeof(buf), "%zu,%.6g,%.6g\n", k, curve.raw[k],
                              curve.smoothed[k]);
            else
                std::snprintf(buf, sizeof(buf), "%zu,%.6g,\n", k, curve.raw[k]);
            os << buf;
        }
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace uat
