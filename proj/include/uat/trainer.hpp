#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uat/network.hpp"
#include "uat/rng.hpp"
#include "uat/tensor.hpp"

namespace uat {

struct TrainConfig {
    std::size_t epochs = 45;
    double learning_rate = 0.01;
    double momentum = 0.9;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
    double augmentation_limit = 0.10;
    double validation_fraction = 0.10;
};

struct LabeledDataset {
    std::vector<Tensor> images;
    std::vector<std::size_t> labels;
    std::vector<std::string> class_names;
    std::vector<std::string> paths;  // source files; empty for in-memory datasets

    std::size_t size() const { return images.size(); }
};

struct EpochStats {
    double loss = 0.0;
    double train_accuracy = 0.0;
    double val_accuracy = 0.0;
};

using TrainHistory = std::vector<EpochStats>;

// One random affine draw: rotation, shifts, shear, zoom, horizontal flip.
struct AugmentParams {
    double rotation_rad = 0.0;
    double shift_x = 0.0;  // pixels
    double shift_y = 0.0;  // pixels
    double shear = 0.0;
    double zoom = 1.0;
    bool flip = false;
};

AugmentParams draw_augment_params(rng::Stream& rs, double limit, std::size_t height,
                                  std::size_t width);

// Nearest-neighbor resampling about the image center, zero fill outside.
Tensor apply_augment(const Tensor& image, const AugmentParams& params);

inline Tensor augment(const Tensor& image, rng::Stream& rs, double limit) {
    return apply_augment(
        image, draw_augment_params(rs, limit, image.shape[1], image.shape[2]));
}

// Per-parameter gradients in bundle order; used by train() and by tests.
std::vector<WeightSet::Bundle> backward(const ModelConfig& config,
                                        const WeightSet& weights,
                                        const ForwardResult& fwd, std::size_t label);

std::pair<WeightSet, TrainHistory> train(const ModelConfig& config,
                                         const LabeledDataset& data,
                                         const TrainConfig& tc);

struct EvalResult {
    double accuracy = 0.0;
    std::vector<std::size_t> predictions;
};

EvalResult evaluate(const ModelConfig& config, const WeightSet& weights,
                    const LabeledDataset& data);

// Directory-per-class layout; class name = directory name, PGM files inside.
LabeledDataset load_dataset(const std::string& dir);

void save_history_csv(const TrainHistory& history, const std::string& path);

}  // namespace uat
