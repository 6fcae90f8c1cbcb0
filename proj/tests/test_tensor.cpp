#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "uat/rng.hpp"
#include "uat/tensor.hpp"

using namespace uat;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed,
                     double lo = -1.0, double hi = 1.0) {
    rng::Stream rs(seed);
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = static_cast<float>(rs.next_uniform(lo, hi));
    return t;
}

// Quadruple-nested-loop reference, kept deliberately naive.
Tensor naive_conv(const Tensor& in, const Tensor& k, const Tensor& b,
                  std::size_t stride, std::size_t pad) {
    const std::size_t Ci = in.shape[0], H = in.shape[1], W = in.shape[2];
    const std::size_t Co = k.shape[0], kH = k.shape[2], kW = k.shape[3];
    const std::size_t Ho = (H + 2 * pad - kH) / stride + 1;
    const std::size_t Wo = (W + 2 * pad - kW) / stride + 1;
    Tensor out({Co, Ho, Wo});
    for (std::size_t co = 0; co < Co; ++co)
        for (std::size_t oh = 0; oh < Ho; ++oh)
            for (std::size_t ow = 0; ow < Wo; ++ow) {
                double acc = b[co];
                for (std::size_t ci = 0; ci < Ci; ++ci)
                    for (std::size_t kh = 0; kh < kH; ++kh)
                        for (std::size_t kw = 0; kw < kW; ++kw) {
                            const long ih = static_cast<long>(oh * stride + kh) -
                                            static_cast<long>(pad);
                            const long iw = static_cast<long>(ow * stride + kw) -
                                            static_cast<long>(pad);
                            if (ih < 0 || iw < 0 || ih >= static_cast<long>(H) ||
                                iw >= static_cast<long>(W))
                                continue;
                            acc += static_cast<double>(in.at(ci, ih, iw)) *
                                   static_cast<double>(k.data[((co * Ci + ci) * kH + kh) * kW + kw]);
                        }
                out.at(co, oh, ow) = static_cast<float>(acc);
            }
    return out;
}

}  // namespace

TEST_CASE("conv2d identity kernel reproduces the input") {
    Tensor in = random_tensor({1, 5, 5}, 11, 0.0, 1.0);
    Tensor k({1, 1, 3, 3});
    k.data[4] = 1.0f;  // center tap
    Tensor b({1});
    Tensor out = ops::conv2d_forward(in, k, b, 1, 1);
    REQUIRE(out.shape == in.shape);
    for (std::size_t i = 0; i < in.size(); ++i)
        CHECK(out[i] == doctest::Approx(in[i]).epsilon(1e-7));
}

TEST_CASE("conv2d all-ones 3x3 kernel on constant input gives 9v") {
    const float v = 0.37f;
    Tensor in({2, 6, 6}, std::vector<float>(72, v));
    Tensor k({1, 2, 3, 3}, std::vector<float>(18, 1.0f));
    Tensor b({1});
    Tensor out = ops::conv2d_forward(in, k, b, 1, 0);
    for (float o : out.data) CHECK(o == doctest::Approx(18.0f * v).epsilon(1e-6));

    Tensor in1({1, 5, 5}, std::vector<float>(25, v));
    Tensor k1({1, 1, 3, 3}, std::vector<float>(9, 1.0f));
    Tensor out1 = ops::conv2d_forward(in1, k1, b, 1, 0);
    for (float o : out1.data) CHECK(o == doctest::Approx(9.0f * v).epsilon(1e-6));
}

TEST_CASE("conv2d matches the naive loop oracle") {
    Tensor in = random_tensor({1, 6, 6}, 23);
    Tensor k = random_tensor({2, 1, 3, 3}, 29);
    Tensor b = random_tensor({2}, 31);
    Tensor got = ops::conv2d_forward(in, k, b, 1, 0);
    Tensor want = naive_conv(in, k, b, 1, 0);
    REQUIRE(got.shape == want.shape);
    for (std::size_t i = 0; i < got.size(); ++i)
        CHECK(std::abs(got[i] - want[i]) < 1e-6f);
}

TEST_CASE("conv2d equals the naive oracle on random instances up to 8x8") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        rng::Stream rs(rng::mix(seed));
        const std::size_t H = 1 + rs.next_below(8), W = 1 + rs.next_below(8);
        const std::size_t Ci = 1 + rs.next_below(3), Co = 1 + rs.next_below(3);
        const std::size_t kk = 1 + rs.next_below(std::min<std::size_t>(3, std::min(H, W)));
        const std::size_t stride = 1 + rs.next_below(2);
        const std::size_t pad = rs.next_below(2);
        Tensor in = random_tensor({Ci, H, W}, seed * 3 + 1);
        Tensor k = random_tensor({Co, Ci, kk, kk}, seed * 3 + 2);
        Tensor b = random_tensor({Co}, seed * 3 + 3);
        Tensor got = ops::conv2d_forward(in, k, b, stride, pad);
        Tensor want = naive_conv(in, k, b, stride, pad);
        REQUIRE(got.shape == want.shape);
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(std::abs(got[i] - want[i]) < 1e-6f);
    }
}

TEST_CASE("conv2d rejects channel mismatch") {
    Tensor in({2, 4, 4});
    Tensor k({1, 3, 3, 3});
    Tensor b({1});
    CHECK_THROWS_AS(ops::conv2d_forward(in, k, b, 1, 0), std::invalid_argument);
}

TEST_CASE("maxpool2d basics and tie rule") {
    Tensor in({1, 2, 2}, {1, 2, 3, 4});
    auto r = ops::maxpool2d(in, 2);
    CHECK(r.output.size() == 1);
    CHECK(r.output[0] == 4.0f);
    CHECK(r.argmax[0] == 3);

    Tensor flat({1, 4, 4}, std::vector<float>(16, 0.5f));
    auto rc = ops::maxpool2d(flat, 2);
    // ties go to the lowest flat index of each window
    CHECK(rc.argmax[0] == 0);
    CHECK(rc.argmax[1] == 2);
    CHECK(rc.argmax[2] == 8);
    CHECK(rc.argmax[3] == 10);
}

TEST_CASE("maxpool2d matches a naive per-window scan") {
    Tensor in = random_tensor({1, 8, 8}, 41);
    auto r = ops::maxpool2d(in, 2);
    for (std::size_t oh = 0; oh < 4; ++oh)
        for (std::size_t ow = 0; ow < 4; ++ow) {
            float best = -1e30f;
            for (std::size_t dh = 0; dh < 2; ++dh)
                for (std::size_t dw = 0; dw < 2; ++dw)
                    best = std::max(best, in.at(0, oh * 2 + dh, ow * 2 + dw));
            CHECK(r.output.at(0, oh, ow) == best);
        }
}

TEST_CASE("maxpool2d rejects non-divisible dims") {
    Tensor in({1, 5, 4});
    CHECK_THROWS_AS(ops::maxpool2d(in, 2), std::invalid_argument);
}

TEST_CASE("dense_forward identity and bias behaviour") {
    Tensor x({3}, {0.5f, -1.0f, 2.0f});
    Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor zero({3});
    Tensor out = ops::dense_forward(x, eye, zero);
    for (std::size_t i = 0; i < 3; ++i) CHECK(out[i] == x[i]);

    Tensor zx({3});
    Tensor b({3}, {0.1f, 0.2f, 0.3f});
    Tensor out2 = ops::dense_forward(zx, eye, b);
    for (std::size_t i = 0; i < 3; ++i) CHECK(out2[i] == b[i]);
}

TEST_CASE("dense_forward matches hand-expanded dot products") {
    Tensor x = random_tensor({4}, 53);
    Tensor w = random_tensor({3, 4}, 59);
    Tensor b = random_tensor({3}, 61);
    Tensor out = ops::dense_forward(x, w, b);
    for (std::size_t j = 0; j < 3; ++j) {
        double want = b[j];
        for (std::size_t i = 0; i < 4; ++i) want += double(w.at(j, i)) * double(x[i]);
        CHECK(std::abs(out[j] - want) < 1e-7);
    }
    Tensor bad = random_tensor({5}, 67);
    CHECK_THROWS_AS(ops::dense_forward(bad, w, b), std::invalid_argument);
}

TEST_CASE("relu examples and idempotence") {
    Tensor x({3}, {-1.0f, 0.0f, 2.0f});
    Tensor y = ops::relu(x);
    CHECK(y[0] == 0.0f);
    CHECK(y[1] == 0.0f);
    CHECK(y[2] == 2.0f);

    Tensor neg({4}, {-3, -2, -1, -0.5});
    for (float v : ops::relu(neg).data) CHECK(v == 0.0f);

    Tensor r = random_tensor({2, 3, 3}, 71);
    Tensor r1 = ops::relu(r);
    Tensor r2 = ops::relu(r1);
    for (std::size_t i = 0; i < r.size(); ++i) {
        CHECK(r1[i] == (r[i] >= 0 ? r[i] : 0.0f));
        CHECK(r2[i] == r1[i]);
    }
}

TEST_CASE("softmax uniform, shift invariance, probability vector") {
    Tensor z({5});
    Tensor p = ops::softmax(z);
    for (float v : p.data) CHECK(v == doctest::Approx(0.2).epsilon(1e-7));

    // the 1e-9 sum contract holds in the accumulation precision
    TensorT<double> zd({5});
    rng::Stream rs(3);
    for (auto& v : zd.data) v = rs.next_uniform(-5.0, 5.0);
    TensorT<double> pd = ops::softmax(zd);
    double dsum = 0.0;
    for (double v : pd.data) dsum += v;
    CHECK(std::abs(dsum - 1.0) < 1e-9);

    Tensor x = random_tensor({7}, 73, -4.0, 4.0);
    Tensor shifted = x;
    for (auto& v : shifted.data) v += 3.25f;
    Tensor p1 = ops::softmax(x), p2 = ops::softmax(shifted);
    double sum = 0.0;
    for (std::size_t i = 0; i < 7; ++i) {
        CHECK(std::abs(double(p1[i]) - double(p2[i])) < 1e-6);
        CHECK(p1[i] >= 0.0f);
        sum += p1[i];
    }
    CHECK(std::abs(sum - 1.0) < 1e-6);
}

TEST_CASE("softmax matches an extended-precision oracle") {
    Tensor x = random_tensor({6}, 79, -6.0, 6.0);
    Tensor p = ops::softmax(x);
    long double s = 0.0L;
    for (float v : x.data) s += std::exp(static_cast<long double>(v));
    for (std::size_t i = 0; i < 6; ++i) {
        const long double want = std::exp(static_cast<long double>(x[i])) / s;
        CHECK(std::abs(static_cast<long double>(p[i]) - want) < 1e-7L);
    }
}

TEST_CASE("softmax_cross_entropy_grad at the optimum is zero") {
    Tensor p({4}, {0, 0, 1, 0});
    Tensor g = ops::softmax_cross_entropy_grad(p, 2);
    for (float v : g.data) CHECK(v == 0.0f);
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
    Tensor in = random_tensor({2, 4, 4}, 83);
    Tensor k = random_tensor({3, 2, 3, 3}, 89);
    Tensor go({3, 4, 4});
    auto g = ops::conv2d_backward(in, k, 1, 1, go);
    for (float v : g.kernels.data) CHECK(v == 0.0f);
    for (float v : g.bias.data) CHECK(v == 0.0f);
    for (float v : g.input.data) CHECK(v == 0.0f);

    Tensor x = random_tensor({5}, 97);
    Tensor w = random_tensor({3, 5}, 101);
    Tensor gz({3});
    auto dg = ops::dense_backward(x, w, gz);
    for (float v : dg.weights.data) CHECK(v == 0.0f);
    for (float v : dg.input.data) CHECK(v == 0.0f);
}

// Finite-difference check of all backward kernels, composed into a tiny
// conv -> relu -> pool -> dense -> softmax/CE network in double precision.
namespace {

using D = TensorT<double>;

struct TinyNet {
    D k;   // [2,1,3,3]
    D kb;  // [2]
    D w;   // [3, 2*2*2]
    D wb;  // [3]
};

double tiny_loss(const TinyNet& n, const D& img, std::size_t label) {
    D c = ops::conv2d_forward(img, n.k, n.kb, 1, 1);
    D r = ops::relu(c);
    auto p = ops::maxpool2d(r, 2);
    D flat = p.output.reshaped({p.output.size()});
    D logits = ops::dense_forward(flat, n.w, n.wb);
    D probs = ops::softmax(logits);
    return ops::cross_entropy(probs, label);
}

}  // namespace

TEST_CASE("backward kernels pass central finite differences") {
    rng::Stream rs(137);
    D img({1, 4, 4});
    for (auto& v : img.data) v = rs.next_uniform(0.0, 1.0);
    TinyNet n{D({2, 1, 3, 3}), D({2}), D({3, 8}), D({3})};
    for (auto* t : {&n.k, &n.kb, &n.w, &n.wb})
        for (auto& v : t->data) v = rs.next_symmetric(0.8);
    const std::size_t label = 1;

    // analytic gradients
    D c = ops::conv2d_forward(img, n.k, n.kb, 1, 1);
    D r = ops::relu(c);
    auto p = ops::maxpool2d(r, 2);
    D flat = p.output.reshaped({p.output.size()});
    D logits = ops::dense_forward(flat, n.w, n.wb);
    D probs = ops::softmax(logits);
    D gl = ops::softmax_cross_entropy_grad(probs, label);
    auto dg = ops::dense_backward(flat, n.w, gl);
    D gpool = dg.input.reshaped(p.output.shape);
    D grelu = ops::maxpool2d_backward(gpool, p.argmax, r.shape);
    D gconv = ops::relu_backward(c, grelu);
    auto cg = ops::conv2d_backward(img, n.k, 1, 1, gconv);

    const double h = 1e-3;
    auto check_param = [&](D& param, const D& grad) {
        REQUIRE(param.size() == grad.size());
        for (std::size_t i = 0; i < param.size(); ++i) {
            const double orig = param[i];
            param[i] = orig + h;
            const double up = tiny_loss(n, img, label);
            param[i] = orig - h;
            const double dn = tiny_loss(n, img, label);
            param[i] = orig;
            const double fd = (up - dn) / (2.0 * h);
            const double an = grad[i];
            if (std::abs(an) > 1e-6)
                CHECK(std::abs(fd - an) / std::abs(an) < 1e-3);
            else
                CHECK(std::abs(fd - an) < 1e-6);
        }
    };
    check_param(n.k, cg.kernels);
    check_param(n.kb, cg.bias);
    check_param(n.w, dg.weights);
    check_param(n.wb, dg.bias);
}

TEST_CASE("backward kernels reject missing caches") {
    Tensor go({1, 2, 2});
    std::vector<std::size_t> empty_argmax;
    CHECK_THROWS_AS(ops::maxpool2d_backward(go, empty_argmax, {1, 4, 4}),
                    std::invalid_argument);
}
