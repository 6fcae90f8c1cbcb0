#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "uat/tensor.hpp"

namespace uat {

enum class LayerKind : std::uint8_t {
    Conv = 1,
    ReLU = 2,
    MaxPool = 3,
    Dropout = 4,
    Flatten = 5,
    Dense = 6,
    Softmax = 7,
};

struct LayerSpec {
    LayerKind kind{};
    // Conv
    std::uint32_t out_channels = 0;
    std::uint32_t kernel_size = 0;
    std::uint32_t stride = 1;
    std::uint32_t padding = 0;
    // MaxPool
    std::uint32_t window = 0;
    // Dropout
    float rate = 0.0f;
    // Dense
    std::uint32_t units = 0;

    static LayerSpec conv(std::uint32_t out_channels, std::uint32_t kernel_size,
                          std::uint32_t stride = 1, std::uint32_t padding = 0);
    static LayerSpec relu();
    static LayerSpec maxpool(std::uint32_t window);
    static LayerSpec dropout(float rate);
    static LayerSpec flatten();
    static LayerSpec dense(std::uint32_t units);
    static LayerSpec softmax();

    bool has_params() const { return kind == LayerKind::Conv || kind == LayerKind::Dense; }
};

struct ModelConfig {
    std::array<std::size_t, 3> input_shape{};  // channels, height, width
    std::vector<LayerSpec> layers;
    std::vector<std::string> class_names;

    std::size_t num_classes() const { return class_names.size(); }
};

struct WeightSet {
    struct Bundle {
        Tensor weights;  // conv kernels [Co,Ci,k,k] or dense matrix [M,N]
        Tensor bias;
    };
    std::vector<Bundle> bundles;  // one per parameterized layer, in layer order
};

struct ForwardMode {
    bool stochastic = false;
    std::uint64_t seed = 0;

    static ForwardMode deterministic() { return {false, 0}; }
    static ForwardMode stochastic_with(std::uint64_t seed) { return {true, seed}; }
};

struct ForwardCaches {
    std::vector<Tensor> layer_inputs;                   // input seen by each layer
    std::vector<std::vector<std::size_t>> pool_argmax;  // per layer; empty unless MaxPool
    Tensor logits;                                      // input to the final softmax
    ForwardMode mode;
};

struct ForwardResult {
    Tensor probs;
    Tensor logits;
    ForwardCaches caches;
};

// Validates layer composition and returns the output shape of every layer.
// Throws std::invalid_argument on inconsistent configs.
std::vector<std::vector<std::size_t>> propagate_shapes(const ModelConfig& config);

void validate_config(const ModelConfig& config);
void validate_weights(const ModelConfig& config, const WeightSet& weights);

// Three conv blocks (16, 32, 64 channels, two convs each) with 0.2 dropout,
// then a 512-unit dense head with 0.3 dropout. Height/width must be
// divisible by 8 (three 2x pooling stages).
ModelConfig build_reference_model(std::array<std::size_t, 3> input_shape,
                                  std::vector<std::string> class_names);

WeightSet init_weights(const ModelConfig& config, std::uint64_t seed);

ForwardResult forward(const ModelConfig& config, const WeightSet& weights,
                      const Tensor& image, ForwardMode mode, bool want_caches = false);

// Inverted-dropout multiplier for element `index` of dropout layer
// `layer_index`: either 0 or 1/(1-p), drawn counter-based from (seed, layer).
float dropout_multiplier(std::uint64_t seed, std::size_t layer_index,
                         std::size_t index, float rate);

// Weight file, little-endian. Magic "UAWT", version 0x01, input shape,
// class names, layer specs, then raw float32 tensors. Round-trip bit-exact.
void save_weights(const ModelConfig& config, const WeightSet& weights,
                  const std::string& path);
std::pair<ModelConfig, WeightSet> load_weights(const std::string& path);

struct WeightFileError : std::runtime_error {
    enum class Kind { BadMagic, BadVersion, Truncated, ShapeMismatch, Io };
    Kind kind;
    WeightFileError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

}  // namespace uat
