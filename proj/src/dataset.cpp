#include "prunekit/dataset.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>

#include "prunekit/error.hpp"
#include "prunekit/rng.hpp"

namespace prunekit {

namespace fs = std::filesystem;

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.image_shape = image_shape;
    out.num_classes = num_classes;
    out.pixels.reserve(indices.size() * image_elements());
    out.labels.reserve(indices.size());
    for (std::size_t i : indices) {
        if (i >= size()) throw validation_error("dataset index " + std::to_string(i) + " out of range");
        const auto img = image(i);
        out.pixels.insert(out.pixels.end(), img.begin(), img.end());
        out.labels.push_back(labels[i]);
    }
    return out;
}

Dataset Dataset::head(std::size_t n) const {
    n = std::min(n, size());
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return subset(idx);
}

Dataset Dataset::tail_from(std::size_t n) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = n; i < size(); ++i) idx.push_back(i);
    return subset(idx);
}

void validate(const Dataset& d) {
    if (d.image_shape.rank() != 3 && d.image_shape.rank() != 1) {
        throw validation_error("dataset image shape must be (h,w,c) or (n)");
    }
    if (d.pixels.size() != d.size() * d.image_elements()) {
        throw validation_error("dataset pixel count does not match " + std::to_string(d.size()) + " images of " +
                               d.image_shape.to_string());
    }
    for (auto label : d.labels) {
        if (label >= d.num_classes) {
            throw validation_error("label " + std::to_string(label) + " outside [0, " + std::to_string(d.num_classes) + ")");
        }
    }
}

namespace {

void put_u32(std::vector<char>& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

std::uint32_t get_u32(const std::vector<unsigned char>& in, std::size_t at) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(in[at + b]) << (8 * b);
    return v;
}

}  // namespace

void save_dataset(const Dataset& d, const fs::path& path) {
    validate(d);
    if (d.image_shape.rank() != 3) throw validation_error("PKDS files hold (h,w,c) images");
    std::vector<char> out;
    out.reserve(24 + d.pixels.size() * 4 + d.labels.size() * 2);
    out.insert(out.end(), {'P', 'K', 'D', 'S'});
    put_u32(out, static_cast<std::uint32_t>(d.size()));
    put_u32(out, static_cast<std::uint32_t>(d.image_shape[0]));
    put_u32(out, static_cast<std::uint32_t>(d.image_shape[1]));
    put_u32(out, static_cast<std::uint32_t>(d.image_shape[2]));
    put_u32(out, static_cast<std::uint32_t>(d.num_classes));
    for (double v : d.pixels) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    for (auto label : d.labels) {
        out.push_back(static_cast<char>(label & 0xff));
        out.push_back(static_cast<char>(label >> 8));
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw io_error("cannot write " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw io_error("failed writing " + path.string());
}

Dataset load_dataset(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open dataset " + path.string());
    std::vector<unsigned char> in((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (in.size() < 24 || std::memcmp(in.data(), "PKDS", 4) != 0) {
        throw validation_error(path.string() + ": not a PKDS dataset");
    }
    const std::size_t count = get_u32(in, 4);
    const std::size_t h = get_u32(in, 8), w = get_u32(in, 12), c = get_u32(in, 16);
    Dataset d;
    d.image_shape = Shape{h, w, c};
    d.num_classes = get_u32(in, 20);
    const std::size_t n_pix = count * h * w * c;
    if (in.size() != 24 + n_pix * 4 + count * 2) {
        throw validation_error(path.string() + ": truncated or oversized PKDS payload");
    }
    d.pixels.resize(n_pix);
    for (std::size_t i = 0; i < n_pix; ++i) {
        const float v = std::bit_cast<float>(get_u32(in, 24 + 4 * i));
        if (!(v >= 0.0f && v <= 1.0f)) throw validation_error(path.string() + ": pixel value outside [0,1]");
        d.pixels[i] = v;
    }
    d.labels.resize(count);
    const std::size_t base = 24 + n_pix * 4;
    for (std::size_t i = 0; i < count; ++i) {
        d.labels[i] = static_cast<std::uint16_t>(in[base + 2 * i] | (in[base + 2 * i + 1] << 8));
    }
    validate(d);
    return d;
}

Dataset make_synthetic_dataset(const SyntheticSpec& spec) {
    if (spec.count == 0 || spec.num_classes < 2 || spec.image_size == 0 || spec.channels == 0) {
        throw validation_error("synthetic dataset needs count >= 1, >= 2 classes and a non-empty image");
    }
    Rng rng(spec.seed);
    const std::size_t n = spec.image_size, ch = spec.channels;
    Dataset d;
    d.image_shape = Shape{n, n, ch};
    d.num_classes = spec.num_classes;
    d.pixels.resize(spec.count * n * n * ch);
    d.labels.resize(spec.count);

    // Per-class colour balance.
    std::vector<std::vector<double>> tint(spec.num_classes, std::vector<double>(ch));
    for (auto& t : tint) {
        for (double& v : t) v = rng.uniform(0.6, 1.0);
    }

    for (std::size_t s = 0; s < spec.count; ++s) {
        const std::size_t label = s % spec.num_classes;
        const double theta = std::numbers::pi * static_cast<double>(label) / static_cast<double>(spec.num_classes) +
                             0.12 * rng.normal();
        const double freq = rng.uniform(0.15, 0.28);
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double contrast = rng.uniform(0.2, 0.45);
        const double ct = std::cos(theta), st = std::sin(theta);
        double* img = d.pixels.data() + s * n * n * ch;
        for (std::size_t y = 0; y < n; ++y) {
            for (std::size_t x = 0; x < n; ++x) {
                const double wave =
                    std::sin(2.0 * std::numbers::pi * freq * (static_cast<double>(x) * ct + static_cast<double>(y) * st) +
                             phase);
                for (std::size_t c = 0; c < ch; ++c) {
                    const double v = 0.5 + contrast * tint[label][c] * wave + spec.noise * rng.normal() * 0.5;
                    // Stored at f32 precision so a PKDS round trip is exact.
                    img[(y * n + x) * ch + c] = static_cast<double>(static_cast<float>(std::clamp(v, 0.0, 1.0)));
                }
            }
        }
        d.labels[s] = static_cast<std::uint16_t>(label);
    }
    return d;
}

}  // namespace prunekit
