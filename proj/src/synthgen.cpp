#include "uat/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "uat/pgm.hpp"

namespace uat {

const std::array<const char*, kSynthClasses> kSynthClassNames = {
    "c0_bumps", "c1_blob", "c2_speckles", "c3_gap", "c4_smooth"};

namespace {

struct Band {
    double center;      // row
    double half_width;  // rows
};

Band draw_band(std::size_t size, rng::Stream& rs) {
    const double s = static_cast<double>(size);
    Band b;
    b.center = 0.5 * s + rs.next_symmetric(0.05 * s);
    b.half_width = 0.10 * s + rs.next_symmetric(0.02 * s);
    if (b.half_width < 1.5) b.half_width = 1.5;
    return b;
}

void paint_band(Tensor& img, const Band& b, float value = 0.8f) {
    const std::size_t S = img.shape[1];
    for (std::size_t y = 0; y < S; ++y)
        if (std::abs(static_cast<double>(y) - b.center) < b.half_width)
            for (std::size_t x = 0; x < S; ++x) img.at(0, y, x) = value;
}

void paint_disk(Tensor& img, double cy, double cx, double radius, float value) {
    const std::size_t S = img.shape[1];
    for (std::size_t y = 0; y < S; ++y)
        for (std::size_t x = 0; x < S; ++x) {
            const double dy = static_cast<double>(y) - cy;
            const double dx = static_cast<double>(x) - cx;
            if (dy * dy + dx * dx <= radius * radius) img.at(0, y, x) = value;
        }
}

// Clean class pattern, before noise and blending.
Tensor pattern(std::size_t class_id, std::size_t size, rng::Stream& rs) {
    Tensor img({1, size, size});
    const double s = static_cast<double>(size);
    const Band band = draw_band(size, rs);

    switch (class_id) {
        case 0: {  // bumps on the upper band edge
            paint_band(img, band);
            const std::size_t n = 3;
            const double r = std::max(1.5, 0.06 * s);
            for (std::size_t i = 0; i < n; ++i) {
                const double cx =
                    s * (0.2 + 0.3 * static_cast<double>(i)) + rs.next_symmetric(0.05 * s);
                paint_disk(img, band.center - band.half_width, cx, r, 1.0f);
            }
            break;
        }
        case 1: {  // dark pocket inside the band
            paint_band(img, band);
            const double cx = 0.5 * s + rs.next_symmetric(0.08 * s);
            const double ry = 0.7 * band.half_width;
            const double rx = std::max(2.0, 0.15 * s);
            const std::size_t S = size;
            for (std::size_t y = 0; y < S; ++y)
                for (std::size_t x = 0; x < S; ++x) {
                    const double dy = (static_cast<double>(y) - band.center) / ry;
                    const double dx = (static_cast<double>(x) - cx) / rx;
                    if (dy * dy + dx * dx <= 1.0) img.at(0, y, x) = 0.15f;
                }
            break;
        }
        case 2: {  // scattered bright speckles
            paint_band(img, band);
            const std::size_t n = 12;
            const double r = std::max(1.0, 0.03 * s);
            for (std::size_t i = 0; i < n; ++i) {
                const double cy = rs.next_uniform(0.0, s - 1.0);
                const double cx = rs.next_uniform(0.0, s - 1.0);
                paint_disk(img, cy, cx, r, 1.0f);
            }
            break;
        }
        case 3: {  // vertical gap through the band
            paint_band(img, band);
            const double cx = 0.5 * s + rs.next_symmetric(0.1 * s);
            const double g = std::max(2.0, 0.08 * s);
            const std::size_t S = size;
            for (std::size_t y = 0; y < S; ++y)
                for (std::size_t x = 0; x < S; ++x)
                    if (std::abs(static_cast<double>(x) - cx) < g) img.at(0, y, x) = 0.0f;
            break;
        }
        case 4:  // plain band
            paint_band(img, band);
            break;
        default:
            throw std::invalid_argument("synthgen: class id must be < 5");
    }
    return img;
}

}  // namespace

SynthImage generate(std::size_t class_id, const SynthSpec& spec, rng::Stream& rs) {
    ops::check(class_id < kSynthClasses, "synthgen: class id must be < 5");
    ops::check(spec.noise_sigma >= 0.0, "synthgen: noise sigma must be >= 0");
    ops::check(spec.ambiguous_fraction >= 0.0 && spec.ambiguous_fraction <= 1.0,
               "synthgen: ambiguous fraction must be in [0,1]");

    SynthImage out;
    out.ambiguous = rs.next_bernoulli(spec.ambiguous_fraction);

    Tensor img = pattern(class_id, spec.image_size, rs);
    if (out.ambiguous) {
        std::size_t other = rs.next_below(kSynthClasses - 1);
        if (other >= class_id) ++other;
        const Tensor blend = pattern(other, spec.image_size, rs);
        for (std::size_t i = 0; i < img.size(); ++i)
            img[i] = 0.5f * img[i] + 0.5f * blend[i];
    }

    if (spec.noise_sigma > 0.0)
        for (auto& v : img.data)
            v = static_cast<float>(v + spec.noise_sigma * rs.next_gaussian());
    for (auto& v : img.data) v = std::clamp(v, 0.0f, 1.0f);

    out.image = std::move(img);
    return out;
}

SynthDataset generate_dataset(const SynthSpec& spec) {
    for (std::size_t n : spec.class_counts)
        ops::check(n >= 5, "synthgen: need at least 5 images per class for an 80:20 split");

    SynthDataset ds;
    ds.train.class_names.assign(kSynthClassNames.begin(), kSynthClassNames.end());
    ds.test.class_names = ds.train.class_names;

    std::size_t global_index = 0;
    for (std::size_t c = 0; c < kSynthClasses; ++c) {
        const std::size_t n = spec.class_counts[c];
        const std::size_t test_n = std::max<std::size_t>(1, n / 5);
        for (std::size_t i = 0; i < n; ++i, ++global_index) {
            rng::Stream rs(rng::mix(spec.seed ^ rng::mix(global_index)));
            SynthImage im = generate(c, spec, rs);
            const bool is_test = i >= n - test_n;
            LabeledDataset& part = is_test ? ds.test : ds.train;
            auto& flags = is_test ? ds.test_ambiguous : ds.train_ambiguous;
            part.images.push_back(std::move(im.image));
            part.labels.push_back(c);
            flags.push_back(im.ambiguous);
        }
    }
    return ds;
}

void write_dataset(const SynthDataset& ds, const std::string& dir) {
    namespace fs = std::filesystem;

    std::ofstream flags(fs::path(dir) / "flags.csv.tmp");
    if (!flags) throw std::runtime_error("synthgen: cannot write under " + dir);
    flags << "filename,is_ambiguous\n";

    auto write_part = [&](const LabeledDataset& part, const std::vector<bool>& amb,
                          const std::string& split) {
        std::vector<std::size_t> counter(kSynthClasses, 0);
        for (std::size_t i = 0; i < part.size(); ++i) {
            const std::size_t c = part.labels[i];
            const fs::path cls_dir = fs::path(dir) / split / part.class_names[c];
            fs::create_directories(cls_dir);
            char name[64];
            std::snprintf(name, sizeof(name), "img%04zu.pgm", counter[c]++);
            write_pgm(part.images[i], (cls_dir / name).string());
            flags << split << "/" << part.class_names[c] << "/" << name << ","
                  << (amb[i] ? 1 : 0) << "\n";
        }
    };
    write_part(ds.train, ds.train_ambiguous, "train");
    write_part(ds.test, ds.test_ambiguous, "test");

    flags.close();
    fs::rename(fs::path(dir) / "flags.csv.tmp", fs::path(dir) / "flags.csv");
}

}  // namespace uat
