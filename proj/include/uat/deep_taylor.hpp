#pragma once

#include <optional>
#include <string>

#include "uat/network.hpp"
#include "uat/tensor.hpp"

namespace uat {

struct AttributionMap {
    Tensor relevance;  // same shape as the input image, all values >= 0
    std::size_t target_class = 0;
    double output_relevance = 0.0;  // max(0, logit[target]) injected at the top
    bool negative_logit = false;    // target logit was <= 0; map is all zero
};

// Relevance propagation from the target logit to the pixels. Hidden
// Dense/Conv layers use the z+ rule; the layer reading the raw image uses
// the z^B rule with box bounds [0,1]; MaxPool routes to its argmax; ReLU,
// Dropout and Flatten pass through. Dropout stays disabled.
AttributionMap relevance(const ModelConfig& config, const WeightSet& weights,
                         const Tensor& image,
                         std::optional<std::size_t> target_class = std::nullopt);

// Rescale to [0,1] by the max value; an all-zero map stays all-zero.
Tensor normalize_map(const AttributionMap& map);

void save_heatmap_pgm(const AttributionMap& map, const std::string& path);
void save_relevance_csv(const AttributionMap& map, const std::string& path);

}  // namespace uat
