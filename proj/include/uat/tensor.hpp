#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace uat {

// Dense row-major N-d array. Storage is float in production code; the
// kernels below are templated so gradient checks can run in double.
template <typename T>
struct TensorT {
    std::vector<std::size_t> shape;
    std::vector<T> data;

    TensorT() = default;

    explicit TensorT(std::vector<std::size_t> s)
        : shape(std::move(s)), data(count(shape), T(0)) {}

    TensorT(std::vector<std::size_t> s, std::vector<T> d)
        : shape(std::move(s)), data(std::move(d)) {
        if (count(shape) != data.size())
            throw std::invalid_argument("tensor: shape/data size mismatch");
    }

    static std::size_t count(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return n;
    }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    T& operator[](std::size_t i) { return data[i]; }
    const T& operator[](std::size_t i) const { return data[i]; }

    // 3-d accessor, shape [C,H,W]
    T& at(std::size_t c, std::size_t h, std::size_t w) {
        return data[(c * shape[1] + h) * shape[2] + w];
    }
    const T& at(std::size_t c, std::size_t h, std::size_t w) const {
        return data[(c * shape[1] + h) * shape[2] + w];
    }

    // 2-d accessor, shape [R,C]
    T& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
    const T& at(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    TensorT reshaped(std::vector<std::size_t> s) const {
        if (count(s) != data.size())
            throw std::invalid_argument("tensor: reshape element count mismatch");
        return TensorT(std::move(s), data);
    }
};

using Tensor = TensorT<float>;

namespace ops {

inline void check(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

// Cross-correlation (no kernel flip), zero padding.
// input [C_in,H,W], kernels [C_out,C_in,kH,kW], bias [C_out].
template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& input, const TensorT<T>& kernels,
                          const TensorT<T>& bias, std::size_t stride,
                          std::size_t padding) {
    check(input.rank() == 3, "conv2d: input must be rank 3 [C,H,W]");
    check(kernels.rank() == 4, "conv2d: kernels must be rank 4 [Co,Ci,kH,kW]");
    check(bias.rank() == 1 && bias.shape[0] == kernels.shape[0],
          "conv2d: bias length must equal output channel count");
    check(kernels.shape[1] == input.shape[0],
          "conv2d: kernel input channels (" + std::to_string(kernels.shape[1]) +
              ") do not match input channels (" + std::to_string(input.shape[0]) + ")");
    check(stride >= 1, "conv2d: stride must be >= 1");

    const std::size_t Ci = input.shape[0], H = input.shape[1], W = input.shape[2];
    const std::size_t Co = kernels.shape[0], kH = kernels.shape[2], kW = kernels.shape[3];
    check(kH <= H + 2 * padding && kW <= W + 2 * padding,
          "conv2d: kernel larger than padded input");

    const std::size_t Ho = (H + 2 * padding - kH) / stride + 1;
    const std::size_t Wo = (W + 2 * padding - kW) / stride + 1;
    TensorT<T> out({Co, Ho, Wo});

    // im2col: one row per kernel tap, columns are output positions. Keeps
    // the accumulation loop branch-free and unit stride.
    const std::size_t taps = Ci * kH * kW;
    const std::size_t spatial = Ho * Wo;
    std::vector<T> col(taps * spatial, T(0));
    {
        const long p = static_cast<long>(padding);
        const long s = static_cast<long>(stride);
        std::size_t q = 0;
        for (std::size_t ci = 0; ci < Ci; ++ci) {
            const T* in_plane = &input.data[ci * H * W];
            for (std::size_t kh = 0; kh < kH; ++kh) {
                for (std::size_t kw = 0; kw < kW; ++kw, ++q) {
                    const long dh = static_cast<long>(kh) - p;
                    const long dw = static_cast<long>(kw) - p;
                    T* col_row = &col[q * spatial];
                    for (std::size_t oh = 0; oh < Ho; ++oh) {
                        const long ih = static_cast<long>(oh) * s + dh;
                        if (ih < 0 || ih >= static_cast<long>(H)) continue;
                        const T* in_row = in_plane + ih * static_cast<long>(W);
                        T* dst = col_row + oh * Wo;
                        long lo = dw < 0 ? (-dw + s - 1) / s : 0;
                        long hi = (static_cast<long>(W) - dw + s - 1) / s;
                        hi = std::min(hi, static_cast<long>(Wo));
                        for (long ow = lo; ow < hi; ++ow)
                            dst[ow] = in_row[ow * s + dw];
                    }
                }
            }
        }
    }

    std::vector<double> acc(spatial);
    for (std::size_t co = 0; co < Co; ++co) {
        std::fill(acc.begin(), acc.end(), static_cast<double>(bias[co]));
        const T* krow = &kernels.data[co * taps];
        for (std::size_t q = 0; q < taps; ++q) {
            const double w = static_cast<double>(krow[q]);
            if (w == 0.0) continue;
            const T* src = &col[q * spatial];
            for (std::size_t j = 0; j < spatial; ++j)
                acc[j] += w * static_cast<double>(src[j]);
        }
        T* out_plane = &out.data[co * spatial];
        for (std::size_t j = 0; j < spatial; ++j)
            out_plane[j] = static_cast<T>(acc[j]);
    }
    return out;
}

// Gradient of conv output w.r.t. its input, given kernels and upstream grad.
template <typename T>
TensorT<T> conv2d_input_grad(const TensorT<T>& kernels, const TensorT<T>& grad_out,
                             const std::vector<std::size_t>& input_shape,
                             std::size_t stride, std::size_t padding) {
    check(input_shape.size() == 3, "conv2d_input_grad: input shape must be rank 3");
    const std::size_t Ci = input_shape[0], H = input_shape[1], W = input_shape[2];
    const std::size_t Co = kernels.shape[0], kH = kernels.shape[2], kW = kernels.shape[3];
    const std::size_t Ho = grad_out.shape[1], Wo = grad_out.shape[2];
    check(grad_out.shape[0] == Co, "conv2d_input_grad: channel mismatch");

    TensorT<T> gin({Ci, H, W});
    const long p = static_cast<long>(padding);
    const long s = static_cast<long>(stride);
    std::vector<double> acc(H * W);

    for (std::size_t ci = 0; ci < Ci; ++ci) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t co = 0; co < Co; ++co) {
            const T* go_plane = &grad_out.data[co * Ho * Wo];
            for (std::size_t kh = 0; kh < kH; ++kh) {
                for (std::size_t kw = 0; kw < kW; ++kw) {
                    const double w = static_cast<double>(
                        kernels.data[((co * Ci + ci) * kH + kh) * kW + kw]);
                    const long dh = static_cast<long>(kh) - p;
                    const long dw = static_cast<long>(kw) - p;
                    for (std::size_t oh = 0; oh < Ho; ++oh) {
                        const long ih = static_cast<long>(oh) * s + dh;
                        if (ih < 0 || ih >= static_cast<long>(H)) continue;
                        const T* go_row = go_plane + oh * Wo;
                        double* acc_row = acc.data() + ih * static_cast<long>(W);
                        long lo = dw < 0 ? (-dw + s - 1) / s : 0;
                        long hi = (static_cast<long>(W) - dw + s - 1) / s;
                        hi = std::min(hi, static_cast<long>(Wo));
                        for (long ow = lo; ow < hi; ++ow)
                            acc_row[ow * s + dw] += w * static_cast<double>(go_row[ow]);
                    }
                }
            }
        }
        T* gin_plane = &gin.data[ci * H * W];
        for (std::size_t i = 0; i < H * W; ++i)
            gin_plane[i] = static_cast<T>(acc[i]);
    }
    return gin;
}

template <typename T>
struct Conv2dGrads {
    TensorT<T> input;
    TensorT<T> kernels;
    TensorT<T> bias;
};

template <typename T>
Conv2dGrads<T> conv2d_backward(const TensorT<T>& input, const TensorT<T>& kernels,
                               std::size_t stride, std::size_t padding,
                               const TensorT<T>& grad_out) {
    const std::size_t Ci = input.shape[0], H = input.shape[1], W = input.shape[2];
    const std::size_t Co = kernels.shape[0], kH = kernels.shape[2], kW = kernels.shape[3];
    const std::size_t Ho = grad_out.shape[1], Wo = grad_out.shape[2];
    check(grad_out.rank() == 3 && grad_out.shape[0] == Co,
          "conv2d_backward: upstream gradient shape mismatch");

    Conv2dGrads<T> g{TensorT<T>({Ci, H, W}), TensorT<T>({Co, Ci, kH, kW}),
                     TensorT<T>({Co})};

    const std::size_t taps = Ci * kH * kW;
    const std::size_t spatial = Ho * Wo;

    for (std::size_t co = 0; co < Co; ++co) {
        double b = 0.0;
        const T* go_plane = &grad_out.data[co * spatial];
        for (std::size_t i = 0; i < spatial; ++i) b += static_cast<double>(go_plane[i]);
        g.bias[co] = static_cast<T>(b);
    }

    const long p = static_cast<long>(padding);
    const long s = static_cast<long>(stride);

    // im2col of the input, as in the forward pass.
    std::vector<T> col(taps * spatial, T(0));
    std::size_t q = 0;
    for (std::size_t ci = 0; ci < Ci; ++ci) {
        const T* in_plane = &input.data[ci * H * W];
        for (std::size_t kh = 0; kh < kH; ++kh) {
            for (std::size_t kw = 0; kw < kW; ++kw, ++q) {
                const long dh = static_cast<long>(kh) - p;
                const long dw = static_cast<long>(kw) - p;
                T* col_row = &col[q * spatial];
                for (std::size_t oh = 0; oh < Ho; ++oh) {
                    const long ih = static_cast<long>(oh) * s + dh;
                    if (ih < 0 || ih >= static_cast<long>(H)) continue;
                    const T* in_row = in_plane + ih * static_cast<long>(W);
                    T* dst = col_row + oh * Wo;
                    long lo = dw < 0 ? (-dw + s - 1) / s : 0;
                    long hi = (static_cast<long>(W) - dw + s - 1) / s;
                    hi = std::min(hi, static_cast<long>(Wo));
                    for (long ow = lo; ow < hi; ++ow)
                        dst[ow] = in_row[ow * s + dw];
                }
            }
        }
    }

    // grad_kernels[co,q] = <col row q, grad_out plane co>
    for (std::size_t co = 0; co < Co; ++co) {
        const T* go_plane = &grad_out.data[co * spatial];
        for (std::size_t t = 0; t < taps; ++t) {
            const T* src = &col[t * spatial];
            double a0 = 0.0, a1 = 0.0;
            std::size_t j = 0;
            for (; j + 2 <= spatial; j += 2) {
                a0 += static_cast<double>(src[j]) * static_cast<double>(go_plane[j]);
                a1 += static_cast<double>(src[j + 1]) * static_cast<double>(go_plane[j + 1]);
            }
            for (; j < spatial; ++j)
                a0 += static_cast<double>(src[j]) * static_cast<double>(go_plane[j]);
            g.kernels.data[co * taps + t] = static_cast<T>(a0 + a1);
        }
    }

    // grad wrt the col matrix, then scatter-add back (col2im).
    std::vector<double> gcol(spatial);
    for (std::size_t t = 0; t < taps; ++t) {
        std::fill(gcol.begin(), gcol.end(), 0.0);
        for (std::size_t co = 0; co < Co; ++co) {
            const double w = static_cast<double>(kernels.data[co * taps + t]);
            if (w == 0.0) continue;
            const T* go_plane = &grad_out.data[co * spatial];
            for (std::size_t j = 0; j < spatial; ++j)
                gcol[j] += w * static_cast<double>(go_plane[j]);
        }
        const std::size_t ci = t / (kH * kW);
        const std::size_t kh = (t / kW) % kH;
        const std::size_t kw = t % kW;
        const long dh = static_cast<long>(kh) - p;
        const long dw = static_cast<long>(kw) - p;
        T* gin_plane = &g.input.data[ci * H * W];
        for (std::size_t oh = 0; oh < Ho; ++oh) {
            const long ih = static_cast<long>(oh) * s + dh;
            if (ih < 0 || ih >= static_cast<long>(H)) continue;
            T* gin_row = gin_plane + ih * static_cast<long>(W);
            const double* src = gcol.data() + oh * Wo;
            long lo = dw < 0 ? (-dw + s - 1) / s : 0;
            long hi = (static_cast<long>(W) - dw + s - 1) / s;
            hi = std::min(hi, static_cast<long>(Wo));
            for (long ow = lo; ow < hi; ++ow)
                gin_row[ow * s + dw] += static_cast<T>(src[ow]);
        }
    }
    return g;
}

template <typename T>
struct PoolResult {
    TensorT<T> output;
    std::vector<std::size_t> argmax;  // flat index into input, per output element
};

// Non-overlapping max pooling; ties break to the lowest flat index.
template <typename T>
PoolResult<T> maxpool2d(const TensorT<T>& input, std::size_t window) {
    check(input.rank() == 3, "maxpool2d: input must be rank 3");
    check(window >= 1, "maxpool2d: window must be >= 1");
    const std::size_t C = input.shape[0], H = input.shape[1], W = input.shape[2];
    check(H % window == 0 && W % window == 0,
          "maxpool2d: input dims " + std::to_string(H) + "x" + std::to_string(W) +
              " not divisible by window " + std::to_string(window));

    const std::size_t Ho = H / window, Wo = W / window;
    PoolResult<T> r{TensorT<T>({C, Ho, Wo}), std::vector<std::size_t>(C * Ho * Wo)};
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t oh = 0; oh < Ho; ++oh) {
            for (std::size_t ow = 0; ow < Wo; ++ow) {
                T best = std::numeric_limits<T>::lowest();
                std::size_t best_idx = 0;
                for (std::size_t dh = 0; dh < window; ++dh) {
                    for (std::size_t dw = 0; dw < window; ++dw) {
                        const std::size_t idx =
                            (c * H + oh * window + dh) * W + ow * window + dw;
                        if (input.data[idx] > best) {
                            best = input.data[idx];
                            best_idx = idx;
                        }
                    }
                }
                const std::size_t o = (c * Ho + oh) * Wo + ow;
                r.output.data[o] = best;
                r.argmax[o] = best_idx;
            }
        }
    }
    return r;
}

template <typename T>
TensorT<T> maxpool2d_backward(const TensorT<T>& grad_out,
                              const std::vector<std::size_t>& argmax,
                              const std::vector<std::size_t>& input_shape) {
    check(grad_out.size() == argmax.size(), "maxpool2d_backward: missing argmax cache");
    TensorT<T> gin(input_shape);
    for (std::size_t o = 0; o < grad_out.size(); ++o)
        gin.data[argmax[o]] += grad_out.data[o];
    return gin;
}

template <typename T>
TensorT<T> dense_forward(const TensorT<T>& input, const TensorT<T>& weights,
                         const TensorT<T>& bias) {
    check(input.rank() == 1, "dense: input must be rank 1");
    check(weights.rank() == 2, "dense: weights must be rank 2 [M,N]");
    const std::size_t M = weights.shape[0], N = weights.shape[1];
    check(input.shape[0] == N,
          "dense: input length " + std::to_string(input.shape[0]) +
              " does not match weight columns " + std::to_string(N));
    check(bias.rank() == 1 && bias.shape[0] == M, "dense: bias length mismatch");

    TensorT<T> out({M});
    for (std::size_t j = 0; j < M; ++j) {
        const T* row = &weights.data[j * N];
        // four lanes to break the accumulation dependency chain
        double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
        std::size_t i = 0;
        for (; i + 4 <= N; i += 4) {
            a0 += static_cast<double>(row[i]) * static_cast<double>(input[i]);
            a1 += static_cast<double>(row[i + 1]) * static_cast<double>(input[i + 1]);
            a2 += static_cast<double>(row[i + 2]) * static_cast<double>(input[i + 2]);
            a3 += static_cast<double>(row[i + 3]) * static_cast<double>(input[i + 3]);
        }
        for (; i < N; ++i)
            a0 += static_cast<double>(row[i]) * static_cast<double>(input[i]);
        out[j] = static_cast<T>(static_cast<double>(bias[j]) + ((a0 + a1) + (a2 + a3)));
    }
    return out;
}

template <typename T>
struct DenseGrads {
    TensorT<T> input;
    TensorT<T> weights;
    TensorT<T> bias;
};

template <typename T>
DenseGrads<T> dense_backward(const TensorT<T>& input, const TensorT<T>& weights,
                             const TensorT<T>& grad_out) {
    const std::size_t M = weights.shape[0], N = weights.shape[1];
    check(grad_out.rank() == 1 && grad_out.shape[0] == M,
          "dense_backward: upstream gradient length mismatch");
    DenseGrads<T> g{TensorT<T>({N}), TensorT<T>({M, N}), grad_out};
    std::vector<double> acc(N, 0.0);
    for (std::size_t j = 0; j < M; ++j) {
        const double gj = static_cast<double>(grad_out[j]);
        if (gj == 0.0) continue;
        const T* row = &weights.data[j * N];
        for (std::size_t i = 0; i < N; ++i)
            acc[i] += gj * static_cast<double>(row[i]);
    }
    for (std::size_t i = 0; i < N; ++i) g.input[i] = static_cast<T>(acc[i]);
    for (std::size_t j = 0; j < M; ++j)
        for (std::size_t i = 0; i < N; ++i)
            g.weights.data[j * N + i] = grad_out[j] * input[i];
    return g;
}

template <typename T>
TensorT<T> relu(const TensorT<T>& input) {
    TensorT<T> out(input.shape);
    for (std::size_t i = 0; i < input.size(); ++i)
        out[i] = input[i] > T(0) ? input[i] : T(0);
    return out;
}

template <typename T>
TensorT<T> relu_backward(const TensorT<T>& input, const TensorT<T>& grad_out) {
    check(input.size() == grad_out.size(), "relu_backward: size mismatch");
    TensorT<T> gin(input.shape);
    for (std::size_t i = 0; i < input.size(); ++i)
        gin[i] = input[i] > T(0) ? grad_out[i] : T(0);
    return gin;
}

// Numerically stable softmax via max subtraction; sums accumulated in double.
template <typename T>
TensorT<T> softmax(const TensorT<T>& logits) {
    check(logits.rank() == 1 && logits.size() >= 1, "softmax: need rank-1 input");
    check(logits.all_finite(), "softmax: non-finite logits");
    const T m = *std::max_element(logits.data.begin(), logits.data.end());
    std::vector<double> e(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        e[i] = std::exp(static_cast<double>(logits[i]) - static_cast<double>(m));
        sum += e[i];
    }
    TensorT<T> out(logits.shape);
    for (std::size_t i = 0; i < logits.size(); ++i)
        out[i] = static_cast<T>(e[i] / sum);
    return out;
}

template <typename T>
TensorT<T> softmax_cross_entropy_grad(const TensorT<T>& probs, std::size_t label) {
    check(label < probs.size(), "softmax_cross_entropy_grad: label out of range");
    TensorT<T> g = probs;
    g[label] -= T(1);
    return g;
}

template <typename T>
double cross_entropy(const TensorT<T>& probs, std::size_t label) {
    check(label < probs.size(), "cross_entropy: label out of range");
    const double p = std::max(static_cast<double>(probs[label]), 1e-12);
    return -std::log(p);
}

}  // namespace ops
}  // namespace uat
