#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "uat/rng.hpp"
#include "uat/tensor.hpp"
#include "uat/trainer.hpp"

namespace uat {

// Five grayscale motifs built around a bright horizontal band:
//   0 bumps     - band with bright domes on its upper edge
//   1 blob      - band with a dark pocket carved into its center
//   2 speckles  - band plus scattered bright dots
//   3 gap       - band interrupted by a vertical gap
//   4 smooth    - plain band
constexpr std::size_t kSynthClasses = 5;

extern const std::array<const char*, kSynthClasses> kSynthClassNames;

struct SynthSpec {
    std::size_t image_size = 64;
    std::array<std::size_t, kSynthClasses> class_counts{};
    double noise_sigma = 0.0;
    double ambiguous_fraction = 0.0;  // probability of a 50/50 blend with another class
    std::uint64_t seed = 0;
};

struct SynthImage {
    Tensor image;
    bool ambiguous = false;
};

SynthImage generate(std::size_t class_id, const SynthSpec& spec, rng::Stream& rs);

struct SynthDataset {
    LabeledDataset train;
    LabeledDataset test;
    std::vector<bool> train_ambiguous;
    std::vector<bool> test_ambiguous;
};

// Deterministic per-image seeding (spec.seed ^ image index), 80:20 split per
// class with at least one test sample.
SynthDataset generate_dataset(const SynthSpec& spec);

// Directory-per-class PGM layout under dir/train and dir/test, plus a
// sidecar flags.csv with `filename,is_ambiguous`.
void write_dataset(const SynthDataset& ds, const std::string& dir);

}  // namespace uat
