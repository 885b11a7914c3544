#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "prunekit/tensor.hpp"

namespace prunekit {

// Images share one (h, w, c) shape, values in [0, 1], stored back to back.
struct Dataset {
    Shape image_shape;
    std::size_t num_classes = 0;
    std::vector<double> pixels;
    std::vector<std::uint16_t> labels;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t image_elements() const noexcept { return image_shape.elements(); }
    std::span<const double> image(std::size_t i) const {
        return std::span<const double>(pixels).subspan(i * image_elements(), image_elements());
    }

    Dataset subset(std::span<const std::size_t> indices) const;
    // First n samples.
    Dataset head(std::size_t n) const;
    // Samples [n, size).
    Dataset tail_from(std::size_t n) const;
};

void validate(const Dataset& d);

// PKDS file: magic "PKDS", little-endian u32 count/h/w/c/num_classes,
// count*h*w*c f32 pixels, count u16 labels.
void save_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

struct SyntheticSpec {
    std::size_t count = 5000;
    std::size_t image_size = 16;
    std::size_t channels = 3;
    std::size_t num_classes = 3;
    double noise = 0.8;
    std::uint64_t seed = 1;
};

// Classes are oriented sinusoidal gratings with class-dependent orientation and
// colour balance, random phase, frequency jitter, contrast and pixel noise.
// Labels cycle through the classes so every class is equally represented.
Dataset make_synthetic_dataset(const SyntheticSpec& spec);

}  // namespace prunekit
