#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uat/network.hpp"
#include "uat/tensor.hpp"

namespace uat {

// T stochastic softmax outputs for one image, row t = one dropout pass.
struct PredictiveSample {
    Tensor probs;  // shape [T, C]
    std::uint64_t base_seed = 0;

    std::size_t passes() const { return probs.shape[0]; }
    std::size_t classes() const { return probs.shape[1]; }
};

struct PredictiveSummary {
    std::vector<double> median;  // per class, lower median
    std::vector<double> p10;
    std::vector<double> p90;
    std::size_t predicted_class = 0;  // argmax of medians, ties to lowest index
    double confidence = 0.0;          // median[predicted_class]
};

struct DistributionHistogram {
    std::size_t bins = 0;
    std::vector<std::vector<std::size_t>> counts;  // per class, `bins` entries

    double bin_lo(std::size_t b) const { return static_cast<double>(b) / bins; }
    double bin_hi(std::size_t b) const { return static_cast<double>(b + 1) / bins; }
};

// Row t runs a stochastic forward with seed base_seed ^ t, so sampling is
// schedule independent.
PredictiveSample mc_predict(const ModelConfig& config, const WeightSet& weights,
                            const Tensor& image, std::size_t passes,
                            std::uint64_t base_seed);

PredictiveSummary summarize(const PredictiveSample& sample);

DistributionHistogram histogram(const PredictiveSample& sample, std::size_t bins = 50);

void save_sample_csv(const PredictiveSample& sample,
                     const std::vector<std::string>& class_names,
                     const std::string& path);
void save_histogram_csv(const DistributionHistogram& hist,
                        const std::vector<std::string>& class_names,
                        const std::string& path);

}  // namespace uat
