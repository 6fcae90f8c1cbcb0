#include "uat/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

#include "uat/pgm.hpp"

namespace uat {

AugmentParams draw_augment_params(rng::Stream& rs, double limit, std::size_t height,
                                  std::size_t width) {
    ops::check(limit >= 0.0 && limit <= 1.0, "augment: limit must be in [0,1]");
    AugmentParams p;
    p.rotation_rad = rs.next_symmetric(limit * 0.5 * 3.14159265358979323846);  // limit*90 deg
    p.shift_x = rs.next_symmetric(limit * static_cast<double>(width));
    p.shift_y = rs.next_symmetric(limit * static_cast<double>(height));
    p.shear = rs.next_symmetric(limit);
    p.zoom = 1.0 + rs.next_symmetric(limit);
    p.flip = rs.next_bernoulli(0.5);
    return p;
}

Tensor apply_augment(const Tensor& image, const AugmentParams& params) {
    ops::check(image.rank() == 3, "augment: image must be rank 3");
    const std::size_t C = image.shape[0], H = image.shape[1], W = image.shape[2];
    const double cx = (static_cast<double>(W) - 1.0) / 2.0;
    const double cy = (static_cast<double>(H) - 1.0) / 2.0;

    // Forward map: dst = Zoom * Shear * Rot * src + shift (about the center),
    // with an optional horizontal flip applied on the source side. We walk
    // destinations and invert.
    const double cth = std::cos(params.rotation_rad), sth = std::sin(params.rotation_rad);
    const double invz = 1.0 / params.zoom;

    Tensor out(image.shape);
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
            double dx = (static_cast<double>(x) - cx - params.shift_x) * invz;
            double dy = (static_cast<double>(y) - cy - params.shift_y) * invz;
            // inverse shear [[1,-s],[0,1]]
            dx -= params.shear * dy;
            // inverse rotation
            const double sx0 = cth * dx + sth * dy;
            const double sy0 = -sth * dx + cth * dy;
            double sx = sx0 + cx;
            const double sy = sy0 + cy;
            if (params.flip) sx = static_cast<double>(W) - 1.0 - sx;

            const long ix = std::lround(sx);
            const long iy = std::lround(sy);
            if (ix < 0 || iy < 0 || ix >= static_cast<long>(W) || iy >= static_cast<long>(H))
                continue;  // zero fill
            for (std::size_t c = 0; c < C; ++c)
                out.at(c, y, x) = image.at(c, static_cast<std::size_t>(iy),
                                           static_cast<std::size_t>(ix));
        }
    }
    return out;
}

std::vector<WeightSet::Bundle> backward(const ModelConfig& config,
                                        const WeightSet& weights,
                                        const ForwardResult& fwd, std::size_t label) {
    ops::check(fwd.caches.layer_inputs.size() == config.layers.size(),
               "backward: forward caches missing (run forward with want_caches)");

    std::vector<WeightSet::Bundle> grads(weights.bundles.size());
    Tensor g = ops::softmax_cross_entropy_grad(fwd.probs, label);

    std::size_t bi = weights.bundles.size();
    for (std::size_t li = config.layers.size(); li-- > 0;) {
        const LayerSpec& l = config.layers[li];
        const Tensor& in = fwd.caches.layer_inputs[li];
        switch (l.kind) {
            case LayerKind::Softmax:
                break;  // folded into the cross-entropy gradient
            case LayerKind::Dense: {
                const WeightSet::Bundle& b = weights.bundles[--bi];
                auto dg = ops::dense_backward(in, b.weights, g);
                grads[bi] = {std::move(dg.weights), std::move(dg.bias)};
                g = std::move(dg.input);
                break;
            }
            case LayerKind::Flatten:
                g = g.reshaped(in.shape);
                break;
            case LayerKind::Dropout:
                if (fwd.caches.mode.stochastic && l.rate > 0.0f) {
                    for (std::size_t i = 0; i < g.size(); ++i)
                        g[i] *= dropout_multiplier(fwd.caches.mode.seed, li, i, l.rate);
                }
                break;
            case LayerKind::MaxPool:
                ops::check(!fwd.caches.pool_argmax[li].empty(),
                           "backward: missing maxpool argmax cache");
                g = ops::maxpool2d_backward(g, fwd.caches.pool_argmax[li], in.shape);
                break;
            case LayerKind::ReLU:
                g = ops::relu_backward(in, g);
                break;
            case LayerKind::Conv: {
                const WeightSet::Bundle& b = weights.bundles[--bi];
                auto cg = ops::conv2d_backward(in, b.weights, l.stride, l.padding, g);
                grads[bi] = {std::move(cg.kernels), std::move(cg.bias)};
                g = std::move(cg.input);
                break;
            }
        }
    }
    return grads;
}

namespace {

void shuffle_indices(std::vector<std::size_t>& idx, rng::Stream& rs) {
    for (std::size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[rs.next_below(i)]);
}

double subset_accuracy(const ModelConfig& config, const WeightSet& weights,
                       const LabeledDataset& data, const std::vector<std::size_t>& idx) {
    if (idx.empty()) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i : idx) {
        auto r = forward(config, weights, data.images[i], ForwardMode::deterministic());
        const std::size_t pred = static_cast<std::size_t>(
            std::max_element(r.probs.data.begin(), r.probs.data.end()) -
            r.probs.data.begin());
        if (pred == data.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(idx.size());
}

}  // namespace

std::pair<WeightSet, TrainHistory> train(const ModelConfig& config,
                                         const LabeledDataset& data,
                                         const TrainConfig& tc) {
    ops::check(data.size() > 0, "train: dataset is empty");
    ops::check(data.images.size() == data.labels.size(), "train: image/label count mismatch");
    ops::check(tc.epochs > 0 && tc.batch_size > 0, "train: epochs and batch size must be positive");
    ops::check(tc.momentum >= 0.0 && tc.momentum < 1.0, "train: momentum must be in [0,1)");
    ops::check(tc.validation_fraction >= 0.0 && tc.validation_fraction < 1.0,
               "train: validation fraction must be in [0,1)");

    std::vector<std::size_t> per_class(config.num_classes(), 0);
    for (std::size_t l : data.labels) {
        ops::check(l < config.num_classes(), "train: label out of range");
        ++per_class[l];
    }
    for (std::size_t c = 0; c < per_class.size(); ++c)
        ops::check(per_class[c] > 0,
                   "train: class '" + config.class_names[c] + "' has no samples");

    WeightSet weights = init_weights(config, tc.seed);
    std::vector<WeightSet::Bundle> velocity(weights.bundles.size());
    for (std::size_t i = 0; i < weights.bundles.size(); ++i)
        velocity[i] = {Tensor(weights.bundles[i].weights.shape),
                       Tensor(weights.bundles[i].bias.shape)};

    // Validation split from a seeded shuffle; remainder trains.
    std::vector<std::size_t> all(data.size());
    std::iota(all.begin(), all.end(), 0);
    rng::Stream split_rs(rng::mix(tc.seed ^ 0x73706c6974ULL));
    shuffle_indices(all, split_rs);
    const std::size_t val_n =
        static_cast<std::size_t>(tc.validation_fraction * static_cast<double>(data.size()));
    std::vector<std::size_t> val_idx(all.begin(), all.begin() + val_n);
    std::vector<std::size_t> train_idx(all.begin() + val_n, all.end());
    ops::check(!train_idx.empty(), "train: no samples left after validation split");

    TrainHistory history;
    history.reserve(tc.epochs);
    std::uint64_t step = 0;

    for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
        rng::Stream epoch_rs(rng::mix(tc.seed ^ rng::mix(epoch + 1)));
        shuffle_indices(train_idx, epoch_rs);

        double loss_sum = 0.0;
        std::size_t correct = 0;

        for (std::size_t start = 0; start < train_idx.size(); start += tc.batch_size) {
            const std::size_t end = std::min(start + tc.batch_size, train_idx.size());
            std::vector<WeightSet::Bundle> batch_grads(weights.bundles.size());
            for (std::size_t i = 0; i < weights.bundles.size(); ++i)
                batch_grads[i] = {Tensor(weights.bundles[i].weights.shape),
                                  Tensor(weights.bundles[i].bias.shape)};

            for (std::size_t k = start; k < end; ++k) {
                const std::size_t s = train_idx[k];
                Tensor img = augment(data.images[s], epoch_rs, tc.augmentation_limit);
                const std::uint64_t pass_seed = rng::mix(tc.seed ^ rng::mix(0xd0 + step));
                ++step;
                auto fwd = forward(config, weights, img,
                                   ForwardMode::stochastic_with(pass_seed), true);
                const double loss = ops::cross_entropy(fwd.probs, data.labels[s]);
                if (!std::isfinite(loss))
                    throw std::runtime_error(
                        "train: non-finite loss at epoch " + std::to_string(epoch) +
                        ", sample " + std::to_string(s) + "; lower the learning rate");
                loss_sum += loss;
                const std::size_t pred = static_cast<std::size_t>(
                    std::max_element(fwd.probs.data.begin(), fwd.probs.data.end()) -
                    fwd.probs.data.begin());
                if (pred == data.labels[s]) ++correct;

                auto grads = backward(config, weights, fwd, data.labels[s]);
                for (std::size_t i = 0; i < grads.size(); ++i) {
                    for (std::size_t j = 0; j < grads[i].weights.size(); ++j)
                        batch_grads[i].weights[j] += grads[i].weights[j];
                    for (std::size_t j = 0; j < grads[i].bias.size(); ++j)
                        batch_grads[i].bias[j] += grads[i].bias[j];
                }
            }

            const float inv_n = 1.0f / static_cast<float>(end - start);
            const float mu = static_cast<float>(tc.momentum);
            const float lr = static_cast<float>(tc.learning_rate);
            for (std::size_t i = 0; i < weights.bundles.size(); ++i) {
                for (std::size_t j = 0; j < weights.bundles[i].weights.size(); ++j) {
                    velocity[i].weights[j] =
                        mu * velocity[i].weights[j] + batch_grads[i].weights[j] * inv_n;
                    weights.bundles[i].weights[j] -= lr * velocity[i].weights[j];
                }
                for (std::size_t j = 0; j < weights.bundles[i].bias.size(); ++j) {
                    velocity[i].bias[j] =
                        mu * velocity[i].bias[j] + batch_grads[i].bias[j] * inv_n;
                    weights.bundles[i].bias[j] -= lr * velocity[i].bias[j];
                }
            }
        }

        EpochStats st;
        st.loss = loss_sum / static_cast<double>(train_idx.size());
        st.train_accuracy =
            static_cast<double>(correct) / static_cast<double>(train_idx.size());
        st.val_accuracy = subset_accuracy(config, weights, data, val_idx);
        history.push_back(st);
    }

    return {std::move(weights), std::move(history)};
}

EvalResult evaluate(const ModelConfig& config, const WeightSet& weights,
                    const LabeledDataset& data) {
    EvalResult r;
    r.predictions.reserve(data.size());
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        auto fwd = forward(config, weights, data.images[i], ForwardMode::deterministic());
        const std::size_t pred = static_cast<std::size_t>(
            std::max_element(fwd.probs.data.begin(), fwd.probs.data.end()) -
            fwd.probs.data.begin());
        r.predictions.push_back(pred);
        if (pred == data.labels[i]) ++correct;
    }
    r.accuracy = data.size() == 0
                     ? 0.0
                     : static_cast<double>(correct) / static_cast<double>(data.size());
    return r;
}

LabeledDataset load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir))
        throw std::runtime_error("dataset: not a directory: " + dir);

    std::vector<std::string> class_dirs;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory()) class_dirs.push_back(e.path().filename().string());
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.empty())
        throw std::runtime_error("dataset: no class subdirectories in " + dir);

    LabeledDataset ds;
    ds.class_names = class_dirs;
    for (std::size_t c = 0; c < class_dirs.size(); ++c) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(fs::path(dir) / class_dirs[c]))
            if (e.is_regular_file() && e.path().extension() == ".pgm")
                files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            ds.images.push_back(read_pgm(f.string()));
            ds.labels.push_back(c);
            ds.paths.push_back(f.string());
        }
    }
    if (ds.images.empty()) throw std::runtime_error("dataset: no PGM files under " + dir);
    return ds;
}

void save_history_csv(const TrainHistory& history, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp);
        if (!os) throw std::runtime_error("history: cannot open " + tmp);
        os << "epoch,loss,train_acc,val_acc\n";
        char buf[128];
        for (std::size_t e = 0; e < history.size(); ++e) {
            std::snprintf(buf, sizeof(buf), "%zu,%.6g,%.6g,%.6g\n", e + 1,
                          history[e].loss, history[e].train_accuracy,
                          history[e].val_accuracy);
            os << buf;
        }
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace uat
