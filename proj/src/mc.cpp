#include "uat/mc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace uat {

PredictiveSample mc_predict(const ModelConfig& config, const WeightSet& weights,
                            const Tensor& image, std::size_t passes,
                            std::uint64_t base_seed) {
    ops::check(passes >= 1, "mc_predict: pass count must be >= 1");

    bool has_dropout = false;
    for (const auto& l : config.layers)
        if (l.kind == LayerKind::Dropout && l.rate > 0.0f) has_dropout = true;
    if (!has_dropout)
        std::cerr << "warning: model has no active dropout layer; "
                     "MC sampling collapses to the deterministic forward\n";

    const std::size_t C = config.num_classes();
    PredictiveSample s{Tensor({passes, C}), base_seed};
    for (std::size_t t = 0; t < passes; ++t) {
        auto r = forward(config, weights, image,
                         ForwardMode::stochastic_with(base_seed ^ t));
        std::copy(r.probs.data.begin(), r.probs.data.end(),
                  s.probs.data.begin() + t * C);
    }
    return s;
}

namespace {

// Nearest-rank order statistic: element at ceil(q/100*T)-1 of the sorted column.
double column_rank(const std::vector<double>& sorted, double percentile) {
    const std::size_t n = sorted.size();
    const double k = std::ceil(percentile / 100.0 * static_cast<double>(n));
    const std::size_t idx = k < 1.0 ? 0 : static_cast<std::size_t>(k) - 1;
    return sorted[std::min(idx, n - 1)];
}

}  // namespace

PredictiveSummary summarize(const PredictiveSample& sample) {
    const std::size_t T = sample.passes(), C = sample.classes();
    ops::check(T >= 1, "summarize: empty sample");

    PredictiveSummary out;
    out.median.resize(C);
    out.p10.resize(C);
    out.p90.resize(C);

    std::vector<double> col(T);
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t t = 0; t < T; ++t)
            col[t] = static_cast<double>(sample.probs.data[t * C + c]);
        std::sort(col.begin(), col.end());
        out.median[c] = col[(T - 1) / 2];  // lower median
        out.p10[c] = column_rank(col, 10.0);
        out.p90[c] = column_rank(col, 90.0);
    }

    out.predicted_class = static_cast<std::size_t>(
        std::max_element(out.median.begin(), out.median.end()) - out.median.begin());
    out.confidence = out.median[out.predicted_class];
    return out;
}

DistributionHistogram histogram(const PredictiveSample& sample, std::size_t bins) {
    ops::check(bins >= 1, "histogram: bins must be >= 1");
    const std::size_t T = sample.passes(), C = sample.classes();
    DistributionHistogram h;
    h.bins = bins;
    h.counts.assign(C, std::vector<std::size_t>(bins, 0));
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t c = 0; c < C; ++c) {
            const double v = static_cast<double>(sample.probs.data[t * C + c]);
            std::size_t b = static_cast<std::size_t>(v * static_cast<double>(bins));
            if (b >= bins) b = bins - 1;  // v == 1.0 clamps into the last bin
            ++h.counts[c][b];
        }
    }
    return h;
}

void save_sample_csv(const PredictiveSample& sample,
                     const std::vector<std::string>& class_names,
                     const std::string& path) {
    ops::check(class_names.size() == sample.classes(),
               "sample csv: class name count mismatch");
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp);
        if (!os) throw std::runtime_error("sample csv: cannot open " + tmp);
        os << "pass_index,class_name,probability\n";
        char buf[160];
        for (std::size_t t = 0; t < sample.passes(); ++t)
            for (std::size_t c = 0; c < sample.classes(); ++c) {
                std::snprintf(buf, sizeof(buf), "%zu,%s,%.6g\n", t,
                              class_names[c].c_str(),
                              static_cast<double>(sample.probs.data[t * sample.classes() + c]));
                os << buf;
            }
    }
    std::filesystem::rename(tmp, path);
}

void save_histogram_csv(const DistributionHistogram& hist,
                        const std::vector<std::string>& class_names,
                        const std::string& path) {
    ops::check(class_names.size() == hist.counts.size(),
               "histogram csv: class name count mismatch");
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp);
        if (!os) throw std::runtime_error("histogram csv: cannot open " + tmp);
        os << "class_name,bin_lo,bin_hi,count\n";
        char buf[160];
        for (std::size_t c = 0; c < hist.counts.size(); ++c)
            for (std::size_t b = 0; b < hist.bins; ++b) {
                std::snprintf(buf, sizeof(buf), "%s,%.6g,%.6g,%zu\n",
                              class_names[c].c_str(), hist.bin_lo(b), hist.bin_hi(b),
                              hist.counts[c][b]);
                os << buf;
            }
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace uat
