#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "uat/mc.hpp"
#include "uat/rng.hpp"

using namespace uat;

namespace {

ModelConfig small_model(float drop = 0.3f) {
    ModelConfig cfg;
    cfg.input_shape = {1, 8, 8};
    cfg.class_names = {"a", "b", "c"};
    cfg.layers = {LayerSpec::conv(4, 3, 1, 1), LayerSpec::relu(),
                  LayerSpec::maxpool(2),      LayerSpec::dropout(drop),
                  LayerSpec::flatten(),       LayerSpec::dense(3),
                  LayerSpec::softmax()};
    return cfg;
}

Tensor random_image(std::uint64_t seed) {
    rng::Stream rs(seed);
    Tensor img({1, 8, 8});
    for (auto& v : img.data) v = static_cast<float>(rs.next_unit());
    return img;
}

PredictiveSample manual_sample(std::vector<std::vector<float>> rows) {
    PredictiveSample s;
    s.probs = Tensor({rows.size(), rows[0].size()});
    for (std::size_t t = 0; t < rows.size(); ++t)
        for (std::size_t c = 0; c < rows[t].size(); ++c)
            s.probs.data[t * rows[t].size() + c] = rows[t][c];
    return s;
}

}  // namespace

TEST_CASE("mc_predict is deterministic and dropout-off collapses") {
    auto cfg = small_model();
    auto ws = init_weights(cfg, 7);
    Tensor img = random_image(3);

    auto s1 = mc_predict(cfg, ws, img, 20, 99);
    auto s2 = mc_predict(cfg, ws, img, 20, 99);
    CHECK(s1.probs.data == s2.probs.data);

    auto cfg0 = small_model(0.0f);
    auto ws0 = init_weights(cfg0, 7);
    auto det = forward(cfg0, ws0, img, ForwardMode::deterministic());
    auto s0 = mc_predict(cfg0, ws0, img, 5, 99);
    for (std::size_t t = 0; t < 5; ++t)
        for (std::size_t c = 0; c < 3; ++c)
            CHECK(s0.probs.at(t, c) == det.probs[c]);
}

TEST_CASE("mc_predict rejects zero passes") {
    auto cfg = small_model();
    auto ws = init_weights(cfg, 7);
    CHECK_THROWS_AS(mc_predict(cfg, ws, random_image(1), 0, 0), std::invalid_argument);
}

TEST_CASE("mc rows are probability vectors and their mean is one too") {
    auto cfg = small_model();
    auto ws = init_weights(cfg, 17);
    auto s = mc_predict(cfg, ws, random_image(5), 100, 1234);
    std::vector<double> mean(3, 0.0);
    for (std::size_t t = 0; t < s.passes(); ++t) {
        double sum = 0.0;
        for (std::size_t c = 0; c < 3; ++c) {
            sum += s.probs.at(t, c);
            mean[c] += s.probs.at(t, c);
        }
        CHECK(std::abs(sum - 1.0) < 1e-6);
    }
    double total = 0.0;
    for (double m : mean) total += m / s.passes();
    CHECK(std::abs(total - 1.0) < 1e-6);
}

TEST_CASE("dropout produces variation across rows") {
    auto cfg = small_model(0.4f);
    auto ws = init_weights(cfg, 23);
    auto s = mc_predict(cfg, ws, random_image(9), 50, 7);
    bool differs = false;
    for (std::size_t t = 1; t < s.passes() && !differs; ++t)
        for (std::size_t c = 0; c < 3; ++c)
            if (s.probs.at(t, c) != s.probs.at(0, c)) differs = true;
    CHECK(differs);
}

TEST_CASE("summarize: single row and odd-length median") {
    auto s1 = manual_sample({{0.1f, 0.7f, 0.2f}});
    auto sum1 = summarize(s1);
    REQUIRE(sum1.median.size() == 3);
    CHECK(sum1.median[0] == doctest::Approx(0.1));
    CHECK(sum1.median[1] == doctest::Approx(0.7));
    CHECK(sum1.median[2] == doctest::Approx(0.2));
    CHECK(sum1.predicted_class == 1);
    CHECK(sum1.confidence == doctest::Approx(0.7));

    auto s3 = manual_sample({{0.2f, 0.5f, 0.3f}, {0.4f, 0.3f, 0.3f}, {0.6f, 0.2f, 0.2f}});
    auto sum3 = summarize(s3);
    CHECK(sum3.median[0] == doctest::Approx(0.4));  // column [0.2,0.4,0.6]
}

TEST_CASE("summarize matches a sort oracle and ignores row order") {
    rng::Stream rs(31);
    PredictiveSample s;
    s.probs = Tensor({9, 3});
    for (auto& v : s.probs.data) v = static_cast<float>(rs.next_unit());
    auto sum = summarize(s);
    for (std::size_t c = 0; c < 3; ++c) {
        std::vector<double> col;
        for (std::size_t t = 0; t < 9; ++t) col.push_back(s.probs.at(t, c));
        std::sort(col.begin(), col.end());
        CHECK(sum.median[c] == col[4]);
        CHECK(sum.p10[c] == col[0]);  // ceil(0.1*9)-1 = 0
        CHECK(sum.p90[c] == col[8]);  // ceil(0.9*9)-1 = 8
    }

    // permuting rows leaves the summary unchanged
    PredictiveSample perm = s;
    std::vector<std::size_t> order{4, 2, 8, 0, 6, 1, 7, 3, 5};
    for (std::size_t t = 0; t < 9; ++t)
        for (std::size_t c = 0; c < 3; ++c)
            perm.probs.at(t, c) = s.probs.at(order[t], c);
    auto psum = summarize(perm);
    CHECK(psum.median == sum.median);
    CHECK(psum.predicted_class == sum.predicted_class);
}

TEST_CASE("lower median for even row counts is an observed value") {
    auto s = manual_sample({{0.2f, 0.8f, 0.0f}, {0.4f, 0.6f, 0.0f}});
    auto sum = summarize(s);
    CHECK(sum.median[0] == doctest::Approx(0.2));  // index floor((2-1)/2) = 0
    CHECK(sum.median[1] == doctest::Approx(0.6));
}

TEST_CASE("histogram clamp, single bin, and naive binning oracle") {
    auto ones = manual_sample({{1.0f, 0.0f}, {1.0f, 0.0f}, {1.0f, 0.0f}});
    auto h = histogram(ones, 50);
    CHECK(h.counts[0][49] == 3);
    CHECK(h.counts[1][0] == 3);

    auto h1 = histogram(ones, 1);
    CHECK(h1.counts[0][0] == 3);
    CHECK(h1.counts[1][0] == 3);

    rng::Stream rs(41);
    PredictiveSample s;
    s.probs = Tensor({40, 2});
    for (auto& v : s.probs.data) v = static_cast<float>(rs.next_unit());
    auto hr = histogram(s, 10);
    std::vector<std::vector<std::size_t>> want(2, std::vector<std::size_t>(10, 0));
    for (std::size_t t = 0; t < 40; ++t)
        for (std::size_t c = 0; c < 2; ++c) {
            auto b = static_cast<std::size_t>(s.probs.at(t, c) * 10.0);
            if (b >= 10) b = 9;
            ++want[c][b];
        }
    CHECK(hr.counts == want);
    std::size_t total = 0;
    for (auto n : hr.counts[0]) total += n;
    CHECK(total == 40);
}

TEST_CASE("csv exports carry the documented headers") {
    namespace fs = std::filesystem;
    auto s = manual_sample({{0.25f, 0.75f}});
    const auto dir = fs::temp_directory_path();
    const auto sp = dir / "uat_sample.csv";
    const auto hp = dir / "uat_hist.csv";
    save_sample_csv(s, {"x", "y"}, sp.string());
    save_histogram_csv(histogram(s, 4), {"x", "y"}, hp.string());

    std::ifstream is(sp);
    std::string line;
    std::getline(is, line);
    CHECK(line == "pass_index,class_name,probability");
    std::getline(is, line);
    CHECK(line == "0,x,0.25");

    std::ifstream ih(hp);
    std::getline(ih, line);
    CHECK(line == "class_name,bin_lo,bin_hi,count");
    fs::remove(sp);
    fs::remove(hp);
}
