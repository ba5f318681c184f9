#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "igm/tensor.hpp"

namespace igm::data {

// One image, pixels in [0,1], stored (H, W, C) row-major. Pixels are always
// multiples of 1/255 so the 8-bit on-disk format round-trips exactly.
struct ImageTensor {
    std::size_t height = 0, width = 0, channels = 0;
    std::vector<double> pixels;  // h*W*C + w*C + c

    void validate() const;
};

struct DatasetManifest {
    std::size_t num_examples = 0;
    std::size_t height = 0, width = 0, channels = 0;
    std::size_t num_classes = 0;
    std::string noise_kind = "none";  // none | symmetric | idn
    double noise_rate = 0.0;
    std::uint64_t seed = 0;
};

// Images plus noisy labels; clean labels are kept only for evaluation and may
// be absent. Labels are class indices, one_hot() converts on demand.
struct NoisyDataset {
    std::vector<ImageTensor> images;
    std::vector<std::uint16_t> noisy_labels;
    std::optional<std::vector<std::uint16_t>> clean_labels;
    std::size_t num_classes = 0;
    DatasetManifest manifest;

    std::size_t size() const { return images.size(); }
    std::vector<double> one_hot(std::uint16_t label) const;
    void validate() const;
};

// Procedural shape dataset: class = shape identity + vertical band, with per-image
// jitter and background noise. Clean: noisy_labels == clean_labels.
NoisyDataset synth_shapes(std::size_t num_classes, std::size_t n_per_class,
                          std::size_t side, std::uint64_t seed);

// Instance-dependent noise: per-example flip rate from a truncated normal
// N(rate, idn_std^2) on [0,1]; flip targets from a fixed random projection of
// the image, true class masked out, softmaxed and scaled by the flip rate.
NoisyDataset inject_idn(const NoisyDataset& ds, double rate, std::uint64_t seed,
                        double idn_std = 0.1);

// Symmetric noise: flip with probability rate to a uniformly random other class.
NoisyDataset inject_symmetric(const NoisyDataset& ds, double rate, std::uint64_t seed);

// Directory layout: manifest.json + images.bin (u8, N*H*W*C) +
// labels_noisy.bin (u16 LE) + optional labels_clean.bin.
void save_dataset(const NoisyDataset& ds, const std::string& dir);
NoisyDataset load_dataset(const std::string& dir);

// Fraction of examples whose noisy label differs from the clean label.
double flip_fraction(const NoisyDataset& ds);

}  // namespace igm::data
