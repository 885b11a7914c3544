#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "prunekit/dataset.hpp"
#include "prunekit/engine.hpp"
#include "prunekit/model.hpp"
#include "prunekit/rng.hpp"

namespace pktest {

using namespace prunekit;

// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() /
                ("prunekit_" + tag + "_" + std::to_string(std::hash<std::string>{}(tag) % 100000) + "_" +
                 std::to_string(counter()++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::filesystem::path path_;
};

inline LayerSpec conv_layer(const std::string& id, std::size_t k, std::size_t cin, std::size_t cout, bool prunable,
                            Padding pad = Padding::Same, Activation act = Activation::Relu) {
    return LayerSpec{id, LayerKind::Conv2d, Shape{k, k, cin, cout}, pad, act, prunable};
}

inline LayerSpec fc_layer(const std::string& id, std::size_t in, std::size_t out, bool prunable,
                          Activation act = Activation::Relu) {
    return LayerSpec{id, LayerKind::FullyConnected, Shape{in, out}, Padding::Valid, act, prunable};
}

inline LayerSpec pool_layer(const std::string& id, std::size_t p = 2) {
    return LayerSpec{id, LayerKind::MaxPool, Shape{p, p}, Padding::Valid, Activation::None, false};
}

inline LayerSpec flatten_layer(const std::string& id) {
    return LayerSpec{id, LayerKind::Flatten, std::nullopt, Padding::Valid, Activation::None, false};
}

// Allocates weight tensors matching each layer and fills them uniformly in
// [-scale, scale] (biases too).
inline void fill_random(ModelGraph& g, std::uint64_t seed, double scale = 0.5) {
    Rng rng(seed);
    for (const auto& l : g.layers) {
        if (!l.has_weights()) continue;
        const Shape& f = *l.filter_shape;
        LayerWeights w{Tensor(f), Tensor(Shape{l.out_channels()})};
        for (auto& v : w.kernel.data()) v = rng.uniform(-scale, scale);
        for (auto& v : w.bias.data()) v = rng.uniform(-scale, scale);
        g.weights[l.id] = std::move(w);
    }
}

inline Dataset random_dataset(const Shape& image, std::size_t classes, std::size_t count, std::uint64_t seed) {
    Rng rng(seed);
    Dataset d;
    d.image_shape = image;
    d.num_classes = classes;
    d.pixels.resize(count * image.elements());
    for (auto& v : d.pixels) v = rng.uniform();
    for (std::size_t i = 0; i < count; ++i) d.labels.push_back(static_cast<std::uint16_t>(rng.index(classes)));
    return d;
}

// Small conv -> conv -> pool -> flatten -> fc -> fc model with random weights.
inline ModelGraph small_chain(std::uint64_t seed, std::size_t size = 6, std::size_t c1 = 4, std::size_t c2 = 5,
                              std::size_t hidden = 7, std::size_t classes = 3) {
    ModelGraph g;
    g.input_shape = Shape{size, size, 2};
    g.num_classes = classes;
    g.layers = {conv_layer("C1", 3, 2, c1, true),
                conv_layer("C2", 3, c1, c2, true),
                pool_layer("P"),
                flatten_layer("F"),
                fc_layer("H", (size / 2) * (size / 2) * c2, hidden, true),
                fc_layer("Out", hidden, classes, false, Activation::Softmax)};
    fill_random(g, seed);
    validate(g);
    return g;
}

// Dense matrix of a stride-1 convolution acting on a flattened (h, w, c)
// input, rows indexed by flattened (oh, ow, co) output.
inline std::vector<std::vector<double>> conv_matrix(const Tensor& kernel, std::size_t h, std::size_t w, Padding pad) {
    const auto& k = kernel.shape();
    const std::size_t kh = k[0], kw = k[1], cin = k[2], cout = k[3];
    const std::size_t oh = pad == Padding::Same ? h : h - kh + 1;
    const std::size_t ow = pad == Padding::Same ? w : w - kw + 1;
    const long ph = pad == Padding::Same ? static_cast<long>((kh - 1) / 2) : 0;
    const long pw = pad == Padding::Same ? static_cast<long>((kw - 1) / 2) : 0;
    std::vector<std::vector<double>> m(oh * ow * cout, std::vector<double>(h * w * cin, 0.0));
    for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
            for (std::size_t co = 0; co < cout; ++co) {
                auto& row = m[(y * ow + x) * cout + co];
                for (std::size_t dy = 0; dy < kh; ++dy) {
                    for (std::size_t dx = 0; dx < kw; ++dx) {
                        const long iy = static_cast<long>(y + dy) - ph;
                        const long ix = static_cast<long>(x + dx) - pw;
                        if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) continue;
                        for (std::size_t ci = 0; ci < cin; ++ci) {
                            row[(static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin + ci] +=
                                kernel[((dy * kw + dx) * cin + ci) * cout + co];
                        }
                    }
                }
            }
        }
    }
    return m;
}

inline std::vector<double> mat_vec(const std::vector<std::vector<double>>& m, std::span<const double> x) {
    std::vector<double> y(m.size(), 0.0);
    for (std::size_t r = 0; r < m.size(); ++r) {
        for (std::size_t c = 0; c < x.size(); ++c) y[r] += m[r][c] * x[c];
    }
    return y;
}

inline double norm2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

struct OracleAllocation {
    std::vector<double> epsilon;
    std::vector<double> remaining;
};

// Exact minimiser by breakpoint enumeration. remaining_l(lambda) =
// clip(a_l + lambda a_l^2, xi_l, N_l) with a_l = alpha omega_l is piecewise
// linear in lambda; the segment containing the budget is solved in closed form.
inline OracleAllocation breakpoint_allocation(const std::vector<double>& n, const std::vector<double>& omega,
                                              const std::vector<double>& xi, double s) {
    const std::size_t L = n.size();
    const double total = std::accumulate(n.begin(), n.end(), 0.0);
    const double omega_sum = std::accumulate(omega.begin(), omega.end(), 0.0);
    const double alpha = (1.0 - s) * total / omega_sum;
    const double budget = (1.0 - s) * total;
    std::vector<double> a(L);
    std::vector<double> points;
    for (std::size_t l = 0; l < L; ++l) {
        a[l] = alpha * omega[l];
        points.push_back((xi[l] - a[l]) / (a[l] * a[l]));
        points.push_back((n[l] - a[l]) / (a[l] * a[l]));
    }
    std::sort(points.begin(), points.end());
    const auto remaining_at = [&](double lambda, std::size_t l) { return std::clamp(a[l] + lambda * a[l] * a[l], xi[l], n[l]); };
    const auto total_at = [&](double lambda) {
        double r = 0.0;
        for (std::size_t l = 0; l < L; ++l) r += remaining_at(lambda, l);
        return r;
    };
    double lambda = points.front();
    if (total_at(points.front()) >= budget) {
        lambda = points.front();
    } else if (total_at(points.back()) <= budget) {
        lambda = points.back();
    } else {
        for (std::size_t k = 0; k + 1 < points.size(); ++k) {
            const double r0 = total_at(points[k]), r1 = total_at(points[k + 1]);
            if (r0 <= budget && budget <= r1) {
                if (r1 == r0) {
                    lambda = 0.5 * (points[k] + points[k + 1]);
                    break;
                }
                // Free coordinates on this segment.
                const double mid = 0.5 * (points[k] + points[k + 1]);
                double fixed = 0.0, slope = 0.0;
                for (std::size_t l = 0; l < L; ++l) {
                    const double raw = a[l] + mid * a[l] * a[l];
                    if (raw <= xi[l]) {
                        fixed += xi[l];
                    } else if (raw >= n[l]) {
                        fixed += n[l];
                    } else {
                        fixed += a[l];
                        slope += a[l] * a[l];
                    }
                }
                lambda = (budget - fixed) / slope;
                break;
            }
        }
    }
    OracleAllocation out;
    for (std::size_t l = 0; l < L; ++l) {
        const double r = remaining_at(lambda, l);
        out.remaining.push_back(r);
        out.epsilon.push_back(r / a[l] - 1.0);
    }
    return out;
}

// Central differences of the mean batch loss with respect to one weight.
inline double numeric_partial(ModelGraph g, const Dataset& batch, const std::string& id, bool bias, std::size_t index,
                              double h = 1e-6) {
    LayerWeights& w = g.weights_of(id);
    double& v = bias ? w.bias[index] : w.kernel[index];
    const double orig = v;
    v = orig + h;
    const double up = loss_and_gradients(g, batch).loss;
    v = orig - h;
    const double down = loss_and_gradients(g, batch).loss;
    v = orig;
    return (up - down) / (2.0 * h);
}

}  // namespace pktest
