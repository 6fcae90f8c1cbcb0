#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "uat/rng.hpp"
#include "uat/triage.hpp"

using namespace uat;

namespace {

PredictiveSummary summary_of(std::size_t predicted, double confidence,
                             std::size_t classes) {
    PredictiveSummary s;
    s.median.assign(classes, 0.0);
    s.p10.assign(classes, 0.0);
    s.p90.assign(classes, 0.0);
    s.median[predicted] = confidence;
    s.predicted_class = predicted;
    s.confidence = confidence;
    return s;
}

}  // namespace

TEST_CASE("nearest-rank percentile over ten confidences") {
    // p10 of 10 sorted values picks index ceil(0.1*10)-1 = 0.
    std::vector<double> conf{0.50, 0.55, 0.60, 0.65, 0.70,
                             0.75, 0.80, 0.85, 0.90, 0.95};
    std::vector<PredictiveSummary> sums;
    for (double c : conf) sums.push_back(summary_of(0, c, 1));
    auto table = calibrate_thresholds(sums, {}, {"only"}, 10.0);
    CHECK(table.thresholds[0] == doctest::Approx(0.50));

    // other percentiles against the hand rule
    CHECK(calibrate_thresholds(sums, {}, {"only"}, 25.0).thresholds[0] ==
          doctest::Approx(0.60));  // ceil(2.5)-1 = 2
    CHECK(calibrate_thresholds(sums, {}, {"only"}, 50.0).thresholds[0] ==
          doctest::Approx(0.70));  // ceil(5)-1 = 4
    CHECK(calibrate_thresholds(sums, {}, {"only"}, 100.0).thresholds[0] ==
          doctest::Approx(0.95));
    CHECK(calibrate_thresholds(sums, {}, {"only"}, 0.0).thresholds[0] ==
          doctest::Approx(0.50));  // clamped to the first order statistic
}

TEST_CASE("calibration groups by predicted class by default") {
    std::vector<PredictiveSummary> sums{
        summary_of(0, 0.9, 2), summary_of(0, 0.7, 2), summary_of(0, 0.8, 2),
        summary_of(1, 0.4, 2), summary_of(1, 0.6, 2)};
    // labels disagree with predictions; default grouping must ignore them
    std::vector<std::size_t> labels{1, 1, 1, 0, 0};
    auto table = calibrate_thresholds(sums, labels, {"a", "b"}, 10.0);
    CHECK(table.thresholds[0] == doctest::Approx(0.7));
    CHECK(table.thresholds[1] == doctest::Approx(0.4));

    auto by_truth = calibrate_thresholds(sums, labels, {"a", "b"}, 10.0,
                                         CalibrationGrouping::TrueClass);
    CHECK(by_truth.thresholds[0] == doctest::Approx(0.4));
    CHECK(by_truth.thresholds[1] == doctest::Approx(0.7));
}

TEST_CASE("calibration rejects a class with no samples") {
    std::vector<PredictiveSummary> sums{summary_of(0, 0.9, 2)};
    CHECK_THROWS_WITH_AS(calibrate_thresholds(sums, {}, {"a", "b"}),
                         "calibrate: no training samples grouped to class 'b'",
                         std::invalid_argument);
}

TEST_CASE("referral rule is strictly less-than") {
    ThresholdTable table;
    table.class_names = {"a", "b"};
    table.thresholds = {0.65, 0.92};

    auto below = decide(summary_of(0, 0.60, 2), table);
    CHECK(!below.accepted);
    CHECK(below.threshold_applied == 0.65);

    auto at = decide(summary_of(0, 0.65, 2), table);
    CHECK(at.accepted);  // boundary value is accepted
    CHECK(at.accepted_class == 0);

    auto other = decide(summary_of(1, 0.65, 2), table);
    CHECK(!other.accepted);  // same confidence, stricter class threshold
}

TEST_CASE("all-zero thresholds accept everything") {
    ThresholdTable table;
    table.class_names = {"a", "b", "c"};
    table.thresholds = {0.0, 0.0, 0.0};
    rng::Stream rs(11);
    for (int i = 0; i < 50; ++i) {
        const auto s = summary_of(rs.next_below(3), rs.next_unit(), 3);
        CHECK(decide(s, table).accepted);
    }
}

TEST_CASE("raising a threshold never turns a referral into an accept") {
    ThresholdTable lo, hi;
    lo.class_names = hi.class_names = {"a"};
    lo.thresholds = {0.3};
    hi.thresholds = {0.7};
    rng::Stream rs(13);
    for (int i = 0; i < 200; ++i) {
        const auto s = summary_of(0, rs.next_unit(), 1);
        if (decide(s, hi).accepted) CHECK(decide(s, lo).accepted);
    }
}

TEST_CASE("evaluation with referral on a hand-counted fixture") {
    // 10 samples, 2 classes, thresholds {0.5, 0.5}.
    //   referred: #2 (conf .4), #7 (conf .3)
    //   accepted: 8, of which wrong: #5 (pred 1, truth 0)
    std::vector<PredictiveSummary> sums{
        summary_of(0, 0.9, 2),  // 0: truth 0, correct
        summary_of(0, 0.8, 2),  // 1: truth 0, correct
        summary_of(0, 0.4, 2),  // 2: truth 0, referred
        summary_of(1, 0.7, 2),  // 3: truth 1, correct
        summary_of(1, 0.6, 2),  // 4: truth 1, correct
        summary_of(1, 0.9, 2),  // 5: truth 0, wrong
        summary_of(0, 0.5, 2),  // 6: truth 0, correct (boundary accept)
        summary_of(1, 0.3, 2),  // 7: truth 1, referred
        summary_of(1, 0.8, 2),  // 8: truth 1, correct
        summary_of(0, 0.6, 2),  // 9: truth 0, correct
    };
    std::vector<std::size_t> labels{0, 0, 0, 1, 1, 0, 0, 1, 1, 0};
    ThresholdTable table;
    table.class_names = {"a", "b"};
    table.thresholds = {0.5, 0.5};

    auto r = evaluate_with_referral(sums, labels, table);
    CHECK(r.retained == 8);
    CHECK(r.referred == 2);
    CHECK(r.accuracy == doctest::Approx(7.0 / 8.0));
    CHECK(r.confusion == std::vector<std::vector<std::size_t>>{{4, 1}, {0, 3}});
    CHECK(r.referrals_by_class == std::vector<std::size_t>{1, 1});
    CHECK(r.precision[0] == doctest::Approx(1.0));        // 4 / 4
    CHECK(r.precision[1] == doctest::Approx(3.0 / 4.0));  // 3 / 4
    CHECK(r.recall[0] == doctest::Approx(4.0 / 5.0));
    CHECK(r.recall[1] == doctest::Approx(1.0));
    CHECK(r.f1[0] == doctest::Approx(2.0 * 1.0 * 0.8 / 1.8));
    CHECK(r.fraction_correct[0] == doctest::Approx(4.0 / 5.0));
}

TEST_CASE("referring everything yields zero metrics, not NaN") {
    std::vector<PredictiveSummary> sums{summary_of(0, 0.1, 2), summary_of(1, 0.2, 2)};
    ThresholdTable table;
    table.class_names = {"a", "b"};
    table.thresholds = {0.9, 0.9};
    auto r = evaluate_with_referral(sums, {0, 1}, table);
    CHECK(r.retained == 0);
    CHECK(r.referred == 2);
    CHECK(r.accuracy == 0.0);
    for (std::size_t c = 0; c < 2; ++c) {
        CHECK(r.precision[c] == 0.0);
        CHECK(r.recall[c] == 0.0);
        CHECK(r.f1[c] == 0.0);
    }
}

TEST_CASE("removal curve on a three-sample fixture") {
    // confidences .2 (wrong), .5 (correct), .9 (correct)
    std::vector<PredictiveSummary> sums{summary_of(1, 0.2, 2), summary_of(0, 0.5, 2),
                                        summary_of(1, 0.9, 2)};
    std::vector<std::size_t> labels{0, 0, 1};
    auto c = removal_curve(sums, labels, 2);
    REQUIRE(c.raw.size() == 3);
    CHECK(c.raw[0] == doctest::Approx(2.0 / 3.0));
    CHECK(c.raw[1] == doctest::Approx(1.0));
    CHECK(c.raw[2] == doctest::Approx(1.0));
    REQUIRE(c.smoothed.size() == 2);
    CHECK(c.smoothed[0] == doctest::Approx((2.0 / 3.0 + 1.0) / 2.0));
    CHECK(c.smoothed[1] == doctest::Approx(1.0));

    // window 1 reproduces the raw curve
    auto w1 = removal_curve(sums, labels, 1);
    CHECK(w1.smoothed == w1.raw);
}

TEST_CASE("removal curve matches a brute-force suffix oracle") {
    rng::Stream rs(47);
    const std::size_t N = 20;
    std::vector<PredictiveSummary> sums;
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < N; ++i) {
        sums.push_back(summary_of(rs.next_below(3), rs.next_unit(), 3));
        labels.push_back(rs.next_below(3));
    }
    auto c = removal_curve(sums, labels, 5);

    // brute force: re-sort and recount the survivors at every k
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return sums[a].confidence < sums[b].confidence;
    });
    for (std::size_t k = 0; k < N; ++k) {
        std::size_t correct = 0;
        for (std::size_t i = k; i < N; ++i)
            if (sums[order[i]].predicted_class == labels[order[i]]) ++correct;
        CHECK(c.raw[k] == doctest::Approx(static_cast<double>(correct) /
                                          static_cast<double>(N - k)));
    }
    REQUIRE(c.smoothed.size() == N - 5 + 1);
    for (std::size_t k = 0; k + 5 <= N; ++k) {
        double s = 0.0;
        for (std::size_t j = 0; j < 5; ++j) s += c.raw[k + j];
        CHECK(c.smoothed[k] == doctest::Approx(s / 5.0));
    }
}

TEST_CASE("removal curve rejects a window larger than the sample count") {
    std::vector<PredictiveSummary> sums{summary_of(0, 0.5, 1)};
    CHECK_THROWS_AS(removal_curve(sums, {0}, 2), std::invalid_argument);
    CHECK_THROWS_AS(removal_curve(sums, {0}, 0), std::invalid_argument);
}

TEST_CASE("threshold table round-trips through the TSV file") {
    namespace fs = std::filesystem;
    ThresholdTable table;
    table.class_names = {"alpha", "beta", "gamma"};
    table.thresholds = {0.65, 0.92, 0.123456};
    const auto path = fs::temp_directory_path() / "uat_thresh.tsv";
    save_thresholds(table, path.string());

    std::ifstream is(path);
    std::string line;
    std::getline(is, line);
    CHECK(line == "alpha\t0.650000");

    auto back = load_thresholds(path.string());
    CHECK(back.class_names == table.class_names);
    for (std::size_t c = 0; c < 3; ++c)
        CHECK(back.thresholds[c] == doctest::Approx(table.thresholds[c]).epsilon(1e-6));
    fs::remove(path);
}

TEST_CASE("report and curve CSV files carry their documented layout") {
    namespace fs = std::filesystem;
    std::vector<PredictiveSummary> sums{summary_of(0, 0.9, 2), summary_of(1, 0.8, 2),
                                        summary_of(0, 0.1, 2)};
    std::vector<std::size_t> labels{0, 1, 1};
    ThresholdTable table;
    table.class_names = {"a", "b"};
    table.thresholds = {0.5, 0.5};
    auto report = evaluate_with_referral(sums, labels, table);
    auto curve = removal_curve(sums, labels, 2);

    const auto rp = fs::temp_directory_path() / "uat_report.csv";
    const auto cp = fs::temp_directory_path() / "uat_curve.csv";
    save_report_csv(report, table.class_names, rp.string());
    save_curve_csv(curve, cp.string());

    std::ifstream ir(rp);
    std::string line;
    std::getline(ir, line);
    CHECK(line == "confusion_matrix");
    std::getline(ir, line);
    CHECK(line == "true\\pred,a,b");

    std::ifstream ic(cp);
    std::getline(ic, line);
    CHECK(line == "k,raw_accuracy,smoothed_accuracy");
    std::vector<std::string> rows;
    while (std::getline(ic, line)) rows.push_back(line);
    REQUIRE(rows.size() == 3);
    CHECK(rows.back().back() == ',');  // smoothed column is blank past its end
    fs::remove(rp);
    fs::remove(cp);
}
