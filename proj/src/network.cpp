#include "uat/network.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "uat/rng.hpp"

namespace uat {

LayerSpec LayerSpec::conv(std::uint32_t out_channels, std::uint32_t kernel_size,
                          std::uint32_t stride, std::uint32_t padding) {
    LayerSpec s;
    s.kind = LayerKind::Conv;
    s.out_channels = out_channels;
    s.kernel_size = kernel_size;
    s.stride = stride;
    s.padding = padding;
    return s;
}
LayerSpec LayerSpec::relu() { return {LayerKind::ReLU}; }
LayerSpec LayerSpec::maxpool(std::uint32_t window) {
    LayerSpec s;
    s.kind = LayerKind::MaxPool;
    s.window = window;
    return s;
}
LayerSpec LayerSpec::dropout(float rate) {
    LayerSpec s;
    s.kind = LayerKind::Dropout;
    s.rate = rate;
    return s;
}
LayerSpec LayerSpec::flatten() { return {LayerKind::Flatten}; }
LayerSpec LayerSpec::dense(std::uint32_t units) {
    LayerSpec s;
    s.kind = LayerKind::Dense;
    s.units = units;
    return s;
}
LayerSpec LayerSpec::softmax() { return {LayerKind::Softmax}; }

std::vector<std::vector<std::size_t>> propagate_shapes(const ModelConfig& config) {
    ops::check(!config.layers.empty(), "config: no layers");
    ops::check(!config.class_names.empty(), "config: no class names");
    for (auto d : config.input_shape)
        ops::check(d > 0, "config: input dims must be positive");

    std::vector<std::size_t> cur{config.input_shape[0], config.input_shape[1],
                                 config.input_shape[2]};
    std::vector<std::vector<std::size_t>> out_shapes;
    std::size_t softmax_count = 0;

    for (std::size_t li = 0; li < config.layers.size(); ++li) {
        const LayerSpec& l = config.layers[li];
        switch (l.kind) {
            case LayerKind::Conv: {
                ops::check(cur.size() == 3, "config: Conv needs a 3-d input");
                ops::check(l.out_channels > 0 && l.kernel_size > 0 && l.stride > 0,
                           "config: Conv parameters must be positive");
                const std::size_t H = cur[1] + 2 * l.padding;
                const std::size_t W = cur[2] + 2 * l.padding;
                ops::check(l.kernel_size <= H && l.kernel_size <= W,
                           "config: Conv kernel larger than padded input");
                cur = {l.out_channels, (H - l.kernel_size) / l.stride + 1,
                       (W - l.kernel_size) / l.stride + 1};
                break;
            }
            case LayerKind::ReLU:
                break;
            case LayerKind::MaxPool:
                ops::check(cur.size() == 3, "config: MaxPool needs a 3-d input");
                ops::check(l.window > 0, "config: MaxPool window must be positive");
                ops::check(cur[1] % l.window == 0 && cur[2] % l.window == 0,
                           "config: MaxPool dims not divisible by window");
                cur = {cur[0], cur[1] / l.window, cur[2] / l.window};
                break;
            case LayerKind::Dropout:
                ops::check(l.rate >= 0.0f && l.rate < 1.0f,
                           "config: dropout rate must be in [0,1)");
                break;
            case LayerKind::Flatten: {
                std::size_t n = 1;
                for (std::size_t d : cur) n *= d;
                cur = {n};
                break;
            }
            case LayerKind::Dense:
                ops::check(cur.size() == 1, "config: Dense needs a flat input");
                ops::check(l.units > 0, "config: Dense units must be positive");
                cur = {l.units};
                break;
            case LayerKind::Softmax:
                ops::check(cur.size() == 1, "config: Softmax needs a flat input");
                ops::check(li + 1 == config.layers.size(),
                           "config: Softmax must be the final layer");
                ++softmax_count;
                break;
        }
        out_shapes.push_back(cur);
    }
    ops::check(softmax_count == 1, "config: exactly one Softmax required, as final layer");
    ops::check(cur.size() == 1 && cur[0] == config.num_classes(),
               "config: final layer width must equal class count");
    return out_shapes;
}

void validate_config(const ModelConfig& config) { propagate_shapes(config); }

void validate_weights(const ModelConfig& config, const WeightSet& weights) {
    auto shapes = propagate_shapes(config);
    std::size_t bi = 0;
    std::vector<std::size_t> in{config.input_shape[0], config.input_shape[1],
                                config.input_shape[2]};
    for (std::size_t li = 0; li < config.layers.size(); ++li) {
        const LayerSpec& l = config.layers[li];
        if (l.has_params()) {
            ops::check(bi < weights.bundles.size(), "weights: too few parameter bundles");
            const WeightSet::Bundle& b = weights.bundles[bi++];
            if (l.kind == LayerKind::Conv) {
                std::vector<std::size_t> want{l.out_channels, in[0], l.kernel_size,
                                              l.kernel_size};
                ops::check(b.weights.shape == want, "weights: conv kernel shape mismatch");
                ops::check(b.bias.shape == std::vector<std::size_t>{l.out_channels},
                           "weights: conv bias shape mismatch");
            } else {
                std::vector<std::size_t> want{l.units, in[0]};
                ops::check(b.weights.shape == want, "weights: dense matrix shape mismatch");
                ops::check(b.bias.shape == std::vector<std::size_t>{l.units},
                           "weights: dense bias shape mismatch");
            }
        }
        in = shapes[li];
    }
    ops::check(bi == weights.bundles.size(), "weights: too many parameter bundles");
}

ModelConfig build_reference_model(std::array<std::size_t, 3> input_shape,
                                  std::vector<std::string> class_names) {
    ops::check(input_shape[1] % 8 == 0 && input_shape[2] % 8 == 0,
               "reference model: height and width must be divisible by 8");
    ModelConfig c;
    c.input_shape = input_shape;
    c.class_names = std::move(class_names);
    for (std::uint32_t ch : {16u, 32u, 64u}) {
        c.layers.push_back(LayerSpec::conv(ch, 3, 1, 1));
        c.layers.push_back(LayerSpec::relu());
        c.layers.push_back(LayerSpec::conv(ch, 3, 1, 1));
        c.layers.push_back(LayerSpec::relu());
        c.layers.push_back(LayerSpec::maxpool(2));
        c.layers.push_back(LayerSpec::dropout(0.2f));
    }
    c.layers.push_back(LayerSpec::flatten());
    c.layers.push_back(LayerSpec::dense(512));
    c.layers.push_back(LayerSpec::relu());
    c.layers.push_back(LayerSpec::dropout(0.3f));
    c.layers.push_back(LayerSpec::dense(static_cast<std::uint32_t>(c.num_classes())));
    c.layers.push_back(LayerSpec::softmax());
    validate_config(c);
    return c;
}

WeightSet init_weights(const ModelConfig& config, std::uint64_t seed) {
    auto shapes = propagate_shapes(config);
    WeightSet ws;
    std::vector<std::size_t> in{config.input_shape[0], config.input_shape[1],
                                config.input_shape[2]};
    for (std::size_t li = 0; li < config.layers.size(); ++li) {
        const LayerSpec& l = config.layers[li];
        if (l.has_params()) {
            WeightSet::Bundle b;
            std::size_t fan_in, fan_out;
            if (l.kind == LayerKind::Conv) {
                b.weights = Tensor({l.out_channels, in[0], l.kernel_size, l.kernel_size});
                b.bias = Tensor({l.out_channels});
                fan_in = in[0] * l.kernel_size * l.kernel_size;
                fan_out = l.out_channels * l.kernel_size * l.kernel_size;
            } else {
                b.weights = Tensor({l.units, in[0]});
                b.bias = Tensor({l.units});
                fan_in = in[0];
                fan_out = l.units;
            }
            const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
            rng::Stream st(rng::mix(seed ^ rng::mix(li)));
            for (auto& v : b.weights.data)
                v = static_cast<float>(st.next_symmetric(bound));
            ws.bundles.push_back(std::move(b));
        }
        in = shapes[li];
    }
    return ws;
}

float dropout_multiplier(std::uint64_t seed, std::size_t layer_index,
                         std::size_t index, float rate) {
    if (rate <= 0.0f) return 1.0f;
    const double u = rng::counter_unit(seed, layer_index, index);
    return u < rate ? 0.0f : 1.0f / (1.0f - rate);
}

ForwardResult forward(const ModelConfig& config, const WeightSet& weights,
                      const Tensor& image, ForwardMode mode, bool want_caches) {
    validate_weights(config, weights);
    ops::check(image.shape == std::vector<std::size_t>{config.input_shape[0],
                                                       config.input_shape[1],
                                                       config.input_shape[2]},
               "forward: image shape does not match model input shape");

    ForwardResult r;
    r.caches.mode = mode;
    if (want_caches) {
        r.caches.layer_inputs.reserve(config.layers.size());
        r.caches.pool_argmax.resize(config.layers.size());
    }

    Tensor cur = image;
    std::size_t bi = 0;
    for (std::size_t li = 0; li < config.layers.size(); ++li) {
        const LayerSpec& l = config.layers[li];
        if (want_caches) r.caches.layer_inputs.push_back(cur);
        switch (l.kind) {
            case LayerKind::Conv: {
                const WeightSet::Bundle& b = weights.bundles[bi++];
                cur = ops::conv2d_forward(cur, b.weights, b.bias, l.stride, l.padding);
                break;
            }
            case LayerKind::ReLU:
                cur = ops::relu(cur);
                break;
            case LayerKind::MaxPool: {
                auto pr = ops::maxpool2d(cur, l.window);
                if (want_caches) r.caches.pool_argmax[li] = std::move(pr.argmax);
                cur = std::move(pr.output);
                break;
            }
            case LayerKind::Dropout:
                if (mode.stochastic && l.rate > 0.0f) {
                    for (std::size_t i = 0; i < cur.size(); ++i)
                        cur[i] *= dropout_multiplier(mode.seed, li, i, l.rate);
                }
                break;
            case LayerKind::Flatten:
                cur = cur.reshaped({cur.size()});
                break;
            case LayerKind::Dense: {
                const WeightSet::Bundle& b = weights.bundles[bi++];
                cur = ops::dense_forward(cur, b.weights, b.bias);
                break;
            }
            case LayerKind::Softmax:
                r.logits = cur;
                if (want_caches) r.caches.logits = cur;
                cur = ops::softmax(cur);
                break;
        }
    }
    r.probs = std::move(cur);
    return r;
}

namespace {

constexpr char kMagic[4] = {'U', 'A', 'W', 'T'};
constexpr std::uint8_t kVersion = 0x01;

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<char*>(b), 4);
}

void put_f32(std::ostream& os, float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32(os, u);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw WeightFileError(WeightFileError::Kind::Truncated, "weight file truncated");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
}

float get_f32(std::istream& is) {
    std::uint32_t u = get_u32(is);
    float f;
    std::memcpy(&f, &u, 4);
    return f;
}

void put_tensor(std::ostream& os, const Tensor& t) {
    put_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape) put_u32(os, static_cast<std::uint32_t>(d));
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * sizeof(float)));
}

Tensor get_tensor(std::istream& is) {
    const std::uint32_t rank = get_u32(is);
    if (rank > 8)
        throw WeightFileError(WeightFileError::Kind::ShapeMismatch,
                              "weight file: implausible tensor rank");
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = get_u32(is);
    Tensor t(shape);
    if (!is.read(reinterpret_cast<char*>(t.data.data()),
                 static_cast<std::streamsize>(t.data.size() * sizeof(float))))
        throw WeightFileError(WeightFileError::Kind::Truncated, "weight file truncated");
    return t;
}

}  // namespace

void save_weights(const ModelConfig& config, const WeightSet& weights,
                  const std::string& path) {
    validate_weights(config, weights);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os)
            throw WeightFileError(WeightFileError::Kind::Io, "cannot open " + tmp);
        os.write(kMagic, 4);
        os.put(static_cast<char>(kVersion));
        for (std::size_t d : config.input_shape) put_u32(os, static_cast<std::uint32_t>(d));
        put_u32(os, static_cast<std::uint32_t>(config.class_names.size()));
        for (const auto& name : config.class_names) {
            put_u32(os, static_cast<std::uint32_t>(name.size()));
            os.write(name.data(), static_cast<std::streamsize>(name.size()));
        }
        put_u32(os, static_cast<std::uint32_t>(config.layers.size()));
        for (const LayerSpec& l : config.layers) {
            os.put(static_cast<char>(l.kind));
            switch (l.kind) {
                case LayerKind::Conv:
                    put_u32(os, l.out_channels);
                    put_u32(os, l.kernel_size);
                    put_u32(os, l.stride);
                    put_u32(os, l.padding);
                    break;
                case LayerKind::MaxPool:
                    put_u32(os, l.window);
                    break;
                case LayerKind::Dropout:
                    put_f32(os, l.rate);
                    break;
                case LayerKind::Dense:
                    put_u32(os, l.units);
                    break;
                default:
                    break;
            }
        }
        put_u32(os, static_cast<std::uint32_t>(weights.bundles.size() * 2));
        for (const auto& b : weights.bundles) {
            put_tensor(os, b.weights);
            put_tensor(os, b.bias);
        }
        if (!os)
            throw WeightFileError(WeightFileError::Kind::Io, "write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

std::pair<ModelConfig, WeightSet> load_weights(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw WeightFileError(WeightFileError::Kind::Io, "cannot open " + path);

    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw WeightFileError(WeightFileError::Kind::BadMagic,
                              "bad magic: not a UAWT weight file");
    const int version = is.get();
    if (version != kVersion)
        throw WeightFileError(WeightFileError::Kind::BadVersion,
                              "unsupported weight file version " + std::to_string(version));

    ModelConfig config;
    for (auto& d : config.input_shape) d = get_u32(is);
    const std::uint32_t n_classes = get_u32(is);
    if (n_classes > 4096)
        throw WeightFileError(WeightFileError::Kind::ShapeMismatch,
                              "weight file: implausible class count");
    for (std::uint32_t i = 0; i < n_classes; ++i) {
        const std::uint32_t len = get_u32(is);
        std::string name(len, '\0');
        if (!is.read(name.data(), len))
            throw WeightFileError(WeightFileError::Kind::Truncated, "weight file truncated");
        config.class_names.push_back(std::move(name));
    }

    const std::uint32_t n_layers = get_u32(is);
    for (std::uint32_t i = 0; i < n_layers; ++i) {
        const int tag = is.get();
        if (tag < 0)
            throw WeightFileError(WeightFileError::Kind::Truncated, "weight file truncated");
        LayerSpec l;
        l.kind = static_cast<LayerKind>(tag);
        switch (l.kind) {
            case LayerKind::Conv:
                l.out_channels = get_u32(is);
                l.kernel_size = get_u32(is);
                l.stride = get_u32(is);
                l.padding = get_u32(is);
                break;
            case LayerKind::MaxPool:
                l.window = get_u32(is);
                break;
            case LayerKind::Dropout:
                l.rate = get_f32(is);
                break;
            case LayerKind::Dense:
                l.units = get_u32(is);
                break;
            case LayerKind::ReLU:
            case LayerKind::Flatten:
            case LayerKind::Softmax:
                break;
            default:
                throw WeightFileError(WeightFileError::Kind::ShapeMismatch,
                                      "weight file: unknown layer tag " + std::to_string(tag));
        }
        config.layers.push_back(l);
    }

    const std::uint32_t n_tensors = get_u32(is);
    if (n_tensors % 2 != 0)
        throw WeightFileError(WeightFileError::Kind::ShapeMismatch,
                              "weight file: odd tensor count");
    WeightSet ws;
    for (std::uint32_t i = 0; i < n_tensors / 2; ++i) {
        WeightSet::Bundle b;
        b.weights = get_tensor(is);
        b.bias = get_tensor(is);
        ws.bundles.push_back(std::move(b));
    }

    try {
        validate_weights(config, ws);
    } catch (const std::invalid_argument& e) {
        throw WeightFileError(WeightFileError::Kind::ShapeMismatch, e.what());
    }
    for (const auto& b : ws.bundles)
        if (!b.weights.all_finite() || !b.bias.all_finite())
            throw WeightFileError(WeightFileError::Kind::ShapeMismatch,
                                  "weight file: non-finite parameter values");
    return {std::move(config), std::move(ws)};
}

}  // namespace uat
