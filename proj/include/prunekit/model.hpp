#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "prunekit/tensor.hpp"

namespace prunekit {

enum class LayerKind { Conv2d, FullyConnected, MaxPool, Flatten };
enum class Padding { Same, Valid };
enum class Activation { Relu, Softmax, None };

std::string to_string(LayerKind kind);
std::string to_string(Padding padding);
std::string to_string(Activation activation);
LayerKind parse_layer_kind(const std::string& text);
Padding parse_padding(const std::string& text);
Activation parse_activation(const std::string& text);

// filter_shape: conv (kh, kw, in_channels, out_channels); fc (in, out);
// maxpool (ph, pw); flatten has none. Convolutions use stride 1, pooling uses
// stride equal to the pool size.
struct LayerSpec {
    std::string id;
    LayerKind kind = LayerKind::FullyConnected;
    std::optional<Shape> filter_shape;
    Padding padding = Padding::Same;
    Activation activation = Activation::None;
    bool prunable = false;

    bool has_weights() const noexcept { return kind == LayerKind::Conv2d || kind == LayerKind::FullyConnected; }
    // Output channels (conv) or output units (fc); 0 for weightless layers.
    std::size_t out_channels() const;

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct LayerWeights {
    Tensor kernel;
    Tensor bias;

    friend bool operator==(const LayerWeights&, const LayerWeights&) = default;
};

// Linear chain of layers. Activations are laid out (h, w, c) row-major; a fully
// connected layer fed by a spatial tensor flattens it in that order.
struct ModelGraph {
    Shape input_shape;
    std::size_t num_classes = 0;
    std::vector<LayerSpec> layers;
    std::map<std::string, LayerWeights> weights;

    std::size_t index_of(const std::string& id) const;
    const LayerSpec& layer(const std::string& id) const { return layers[index_of(id)]; }
    const LayerWeights& weights_of(const std::string& id) const;
    LayerWeights& weights_of(const std::string& id);

    std::vector<std::string> weighted_layer_ids() const;
    std::vector<std::string> prunable_layer_ids() const;

    friend bool operator==(const ModelGraph&, const ModelGraph&) = default;
};

// Activation shape entering each layer plus the final output shape
// (size layers.size() + 1). Throws a validation error naming the first layer
// that does not compose.
std::vector<Shape> activation_shapes(const ModelGraph& g);

void validate(const ModelGraph& g);

// Index of the next weighted layer after `index`, if any.
std::optional<std::size_t> next_weighted_layer(const ModelGraph& g, std::size_t index);

struct LayerCounts {
    std::vector<std::uint64_t> per_layer;  // indexed like ModelGraph::layers
    std::uint64_t total = 0;
};

// Kernel plus bias elements for weighted layers, 0 otherwise.
LayerCounts count_params(const ModelGraph& g);

// One multiply-accumulate counts as 2 FLOPs; pooling and activations are free.
LayerCounts count_flops(const ModelGraph& g);

// SHA-256 over layer structure and weight bytes; independent of file names.
std::string model_checksum(const ModelGraph& g);

// Builds the manifest and writes weight/bias blobs next to `manifest_path`.
// The caller may extend the returned manifest before writing it.
nlohmann::json write_model_blobs(const ModelGraph& g, const std::filesystem::path& manifest_path);

void write_json_file(const nlohmann::json& doc, const std::filesystem::path& path);
nlohmann::json read_json_file(const std::filesystem::path& path);

void save_model(const ModelGraph& g, const std::filesystem::path& manifest_path);
ModelGraph load_model(const std::filesystem::path& manifest_path);

std::vector<double> read_f64_blob(const std::filesystem::path& path);
void write_f64_blob(const std::filesystem::path& path, std::span<const double> values);

// Architectures with zero-filled weights (see initialize_weights in engine.hpp).
// Simple CIFAR-style CNN: Conv1..Conv4, two pools, FC1, FC2.
ModelGraph simple_cnn_architecture();

struct DeskArchitecture {
    std::size_t image_size = 16;
    std::size_t in_channels = 3;
    std::size_t conv1_channels = 8;
    std::size_t conv2_channels = 8;
    std::size_t fc_units = 32;
    std::size_t num_classes = 3;
};

// Reduced two-conv, two-fc model; Conv2 and FC1 are prunable.
ModelGraph desk_architecture(const DeskArchitecture& arch = {});

}  // namespace prunekit
