#include "uat/deep_taylor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "uat/pgm.hpp"

namespace uat {

namespace {

constexpr double kEps = 1e-9;

using DTensor = TensorT<double>;

DTensor widen(const Tensor& t) {
    DTensor d(t.shape);
    for (std::size_t i = 0; i < t.size(); ++i)
        d[i] = static_cast<double>(t[i]);
    return d;
}

DTensor clipped(const DTensor& t, bool positive) {
    DTensor out(t.shape);
    for (std::size_t i = 0; i < t.size(); ++i)
        out[i] = positive ? std::max(t[i], 0.0) : std::min(t[i], 0.0);
    return out;
}

// s_j = R_j / z_j where z is positive; units with z <= 0 carry no relevance.
DTensor stabilized_ratio(const DTensor& r, const DTensor& z) {
    DTensor s(r.shape);
    for (std::size_t i = 0; i < r.size(); ++i)
        s[i] = z[i] > 0.0 ? r[i] / (z[i] + kEps) : 0.0;
    return s;
}

DTensor dense_input_sum(const DTensor& weights, const DTensor& s) {
    const std::size_t M = weights.shape[0], N = weights.shape[1];
    DTensor c({N});
    for (std::size_t j = 0; j < M; ++j) {
        if (s[j] == 0.0) continue;
        const double sj = s[j];
        const double* row = &weights.data[j * N];
        for (std::size_t i = 0; i < N; ++i) c[i] += row[i] * sj;
    }
    return c;
}

// z+ rule for a parameterized layer: R_i = a_i * sum_j w+_ij R_j / z+_j.
DTensor zplus_dense(const DTensor& a, const DTensor& w, const DTensor& r) {
    const DTensor wp = clipped(w, true);
    const DTensor zero_bias({w.shape[0]});
    const DTensor z = ops::dense_forward(a, wp, zero_bias);
    const DTensor s = stabilized_ratio(r, z);
    DTensor out = dense_input_sum(wp, s);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= a[i];
    return out;
}

// z^B rule with box bounds [l,h] = [0,1]:
// R_i = a_i * bp(w,s) - h * bp(w-,s), numerators clipped at 0.
DTensor zb_dense(const DTensor& a, const DTensor& w, const DTensor& r) {
    const DTensor wn = clipped(w, false);
    const DTensor zero_bias({w.shape[0]});
    DTensor z = ops::dense_forward(a, w, zero_bias);
    const DTensor ones(a.shape, std::vector<double>(a.size(), 1.0));
    const DTensor zneg = ops::dense_forward(ones, wn, zero_bias);
    for (std::size_t j = 0; j < z.size(); ++j) z[j] -= zneg[j];
    const DTensor s = stabilized_ratio(r, z);
    DTensor out = dense_input_sum(w, s);
    const DTensor cn = dense_input_sum(wn, s);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::max(out[i] * a[i] - cn[i], 0.0);
    return out;
}

DTensor zplus_conv(const DTensor& a, const DTensor& k, std::size_t stride,
                   std::size_t padding, const DTensor& r) {
    const DTensor kp = clipped(k, true);
    const DTensor zero_bias({k.shape[0]});
    const DTensor z = ops::conv2d_forward(a, kp, zero_bias, stride, padding);
    const DTensor s = stabilized_ratio(r, z);
    DTensor out = ops::conv2d_input_grad(kp, s, a.shape, stride, padding);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= a[i];
    return out;
}

DTensor zb_conv(const DTensor& a, const DTensor& k, std::size_t stride,
                std::size_t padding, const DTensor& r) {
    const DTensor kn = clipped(k, false);
    const DTensor zero_bias({k.shape[0]});
    DTensor z = ops::conv2d_forward(a, k, zero_bias, stride, padding);
    const DTensor ones(a.shape, std::vector<double>(a.size(), 1.0));
    const DTensor zneg = ops::conv2d_forward(ones, kn, zero_bias, stride, padding);
    for (std::size_t j = 0; j < z.size(); ++j) z[j] -= zneg[j];
    const DTensor s = stabilized_ratio(r, z);
    DTensor out = ops::conv2d_input_grad(k, s, a.shape, stride, padding);
    const DTensor cn = ops::conv2d_input_grad(kn, s, a.shape, stride, padding);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::max(out[i] * a[i] - cn[i], 0.0);
    return out;
}

}  // namespace

AttributionMap relevance(const ModelConfig& config, const WeightSet& weights,
                         const Tensor& image,
                         std::optional<std::size_t> target_class) {
    auto fwd = forward(config, weights, image, ForwardMode::deterministic(), true);

    std::size_t target;
    if (target_class) {
        ops::check(*target_class < config.num_classes(),
                   "relevance: target class out of range");
        target = *target_class;
    } else {
        target = static_cast<std::size_t>(
            std::max_element(fwd.probs.data.begin(), fwd.probs.data.end()) -
            fwd.probs.data.begin());
    }

    AttributionMap map;
    map.target_class = target;
    map.relevance = Tensor(image.shape);

    const double top = static_cast<double>(fwd.logits[target]);
    map.output_relevance = std::max(top, 0.0);
    if (top <= 0.0) {
        map.negative_logit = true;  // Deep Taylor explains positive evidence only
        return map;
    }

    // Which parameterized layer reads the raw image; that one gets the z^B rule.
    std::size_t input_layer = config.layers.size();
    for (std::size_t li = 0; li < config.layers.size(); ++li)
        if (config.layers[li].has_params()) {
            input_layer = li;
            break;
        }

    DTensor r({config.num_classes()});
    r[target] = map.output_relevance;

    std::size_t bi = weights.bundles.size();
    for (std::size_t li = config.layers.size(); li-- > 0;) {
        const LayerSpec& l = config.layers[li];
        const DTensor a = widen(fwd.caches.layer_inputs[li]);
        switch (l.kind) {
            case LayerKind::Softmax:
                break;  // propagation starts at the logits
            case LayerKind::Dense: {
                const DTensor w = widen(weights.bundles[--bi].weights);
                r = li == input_layer ? zb_dense(a, w, r) : zplus_dense(a, w, r);
                break;
            }
            case LayerKind::Conv: {
                const DTensor k = widen(weights.bundles[--bi].weights);
                r = li == input_layer ? zb_conv(a, k, l.stride, l.padding, r)
                                      : zplus_conv(a, k, l.stride, l.padding, r);
                break;
            }
            case LayerKind::Flatten:
                r = r.reshaped(a.shape);
                break;
            case LayerKind::MaxPool: {
                const auto& argmax = fwd.caches.pool_argmax[li];
                DTensor rin(a.shape);
                for (std::size_t o = 0; o < r.size(); ++o)
                    rin.data[argmax[o]] += r[o];
                r = std::move(rin);
                break;
            }
            case LayerKind::ReLU:
            case LayerKind::Dropout:
                break;  // identity pass-through
        }
    }

    ops::check(r.shape == map.relevance.shape, "relevance: propagated shape mismatch");
    for (std::size_t i = 0; i < r.size(); ++i)
        map.relevance[i] = static_cast<float>(std::max(r[i], 0.0));
    return map;
}

Tensor normalize_map(const AttributionMap& map) {
    Tensor out = map.relevance;
    const float mx = *std::max_element(out.data.begin(), out.data.end());
    if (mx > 0.0f)
        for (auto& v : out.data) v /= mx;
    return out;
}

void save_heatmap_pgm(const AttributionMap& map, const std::string& path) {
    write_pgm(normalize_map(map), path);
}

void save_relevance_csv(const AttributionMap& map, const std::string& path) {
    const Tensor& t = map.relevance;
    ops::check(t.rank() == 3 && t.shape[0] == 1, "relevance csv: expected [1,H,W] map");
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp);
        if (!os) throw std::runtime_error("relevance csv: cannot open " + tmp);
        char buf[32];
        for (std::size_t h = 0; h < t.shape[1]; ++h) {
            for (std::size_t w = 0; w < t.shape[2]; ++w) {
                std::snprintf(buf, sizeof(buf), "%.6g", static_cast<double>(t.at(0, h, w)));
                os << (w ? "," : "") << buf;
            }
            os << "\n";
        }
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace uat
