#include "prunekit/model.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "prunekit/checksum.hpp"
#include "prunekit/error.hpp"

namespace prunekit {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::FullyConnected: return "fully-connected";
        case LayerKind::MaxPool: return "maxpool";
        case LayerKind::Flatten: return "flatten";
    }
    return "?";
}

std::string to_string(Padding padding) { return padding == Padding::Same ? "same" : "valid"; }

std::string to_string(Activation activation) {
    switch (activation) {
        case Activation::Relu: return "relu";
        case Activation::Softmax: return "softmax";
        case Activation::None: return "none";
    }
    return "?";
}

LayerKind parse_layer_kind(const std::string& text) {
    if (text == "conv2d") return LayerKind::Conv2d;
    if (text == "fully-connected" || text == "fc") return LayerKind::FullyConnected;
    if (text == "maxpool") return LayerKind::MaxPool;
    if (text == "flatten") return LayerKind::Flatten;
    throw validation_error("unknown layer kind '" + text + "'");
}

Padding parse_padding(const std::string& text) {
    if (text == "same") return Padding::Same;
    if (text == "valid") return Padding::Valid;
    throw validation_error("unknown padding '" + text + "'");
}

Activation parse_activation(const std::string& text) {
    if (text == "relu") return Activation::Relu;
    if (text == "softmax") return Activation::Softmax;
    if (text == "none") return Activation::None;
    throw validation_error("unknown activation '" + text + "'");
}

std::size_t LayerSpec::out_channels() const {
    if (!has_weights() || !filter_shape) return 0;
    return kind == LayerKind::Conv2d ? (*filter_shape)[3] : (*filter_shape)[1];
}

std::size_t ModelGraph::index_of(const std::string& id) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].id == id) return i;
    }
    throw validation_error("no layer with id '" + id + "'");
}

const LayerWeights& ModelGraph::weights_of(const std::string& id) const {
    auto it = weights.find(id);
    if (it == weights.end()) throw validation_error("layer '" + id + "' has no weights");
    return it->second;
}

LayerWeights& ModelGraph::weights_of(const std::string& id) {
    auto it = weights.find(id);
    if (it == weights.end()) throw validation_error("layer '" + id + "' has no weights");
    return it->second;
}

std::vector<std::string> ModelGraph::weighted_layer_ids() const {
    std::vector<std::string> ids;
    for (const auto& l : layers) {
        if (l.has_weights()) ids.push_back(l.id);
    }
    return ids;
}

std::vector<std::string> ModelGraph::prunable_layer_ids() const {
    std::vector<std::string> ids;
    for (const auto& l : layers) {
        if (l.has_weights() && l.prunable) ids.push_back(l.id);
    }
    return ids;
}

namespace {

[[noreturn]] void fail(const LayerSpec& l, const std::string& msg) {
    throw validation_error("layer '" + l.id + "': " + msg);
}

Shape conv_output(const LayerSpec& l, const Shape& in) {
    const Shape& f = *l.filter_shape;
    if (in.rank() != 3) fail(l, "conv2d expects an (h,w,c) input, got " + in.to_string());
    if (f[2] != in[2]) {
        fail(l, "in_channels " + std::to_string(f[2]) + " does not match producer channels " + std::to_string(in[2]));
    }
    if (l.padding == Padding::Same) return Shape{in[0], in[1], f[3]};
    if (f[0] > in[0] || f[1] > in[1]) fail(l, "valid convolution filter larger than input " + in.to_string());
    return Shape{in[0] - f[0] + 1, in[1] - f[1] + 1, f[3]};
}

}  // namespace

std::vector<Shape> activation_shapes(const ModelGraph& g) {
    if (g.layers.empty()) throw validation_error("model has no layers");
    if (g.input_shape.rank() != 3 && g.input_shape.rank() != 1) {
        throw validation_error("input shape must be (h,w,c) or (n), got " + g.input_shape.to_string());
    }
    if (g.num_classes == 0) throw validation_error("num_classes must be positive");

    std::vector<Shape> shapes;
    shapes.reserve(g.layers.size() + 1);
    shapes.push_back(g.input_shape);
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
        const LayerSpec& l = g.layers[i];
        const Shape& in = shapes.back();
        for (std::size_t j = 0; j < i; ++j) {
            if (g.layers[j].id == l.id) fail(l, "duplicate layer id");
        }
        if (l.activation == Activation::Softmax && i + 1 != g.layers.size()) fail(l, "softmax only allowed on the last layer");
        if (l.prunable && !l.has_weights()) fail(l, "weightless layers cannot be prunable");

        if (l.kind == LayerKind::Flatten) {
            if (l.filter_shape) fail(l, "flatten takes no filter shape");
            shapes.push_back(Shape{in.elements()});
            continue;
        }
        if (!l.filter_shape) fail(l, "missing filter shape");
        const Shape& f = *l.filter_shape;
        Shape out;
        switch (l.kind) {
            case LayerKind::Conv2d:
                if (f.rank() != 4) fail(l, "conv2d filter shape must be (kh,kw,cin,cout)");
                out = conv_output(l, in);
                break;
            case LayerKind::FullyConnected:
                if (f.rank() != 2) fail(l, "fully-connected filter shape must be (in,out)");
                if (f[0] != in.elements()) {
                    fail(l, "expects " + std::to_string(f[0]) + " inputs, producer gives " + in.to_string());
                }
                out = Shape{f[1]};
                break;
            case LayerKind::MaxPool:
                if (f.rank() != 2) fail(l, "maxpool filter shape must be (ph,pw)");
                if (in.rank() != 3) fail(l, "maxpool expects an (h,w,c) input");
                if (f[0] > in[0] || f[1] > in[1]) fail(l, "pool larger than input " + in.to_string());
                out = Shape{in[0] / f[0], in[1] / f[1], in[2]};
                break;
            case LayerKind::Flatten: break;
        }
        if (l.has_weights()) {
            auto it = g.weights.find(l.id);
            if (it == g.weights.end()) fail(l, "missing weights");
            if (it->second.kernel.shape() != f) {
                fail(l, "kernel shape " + it->second.kernel.shape().to_string() + " does not match filter " + f.to_string());
            }
            if (it->second.bias.shape() != Shape{l.out_channels()}) {
                fail(l, "bias shape " + it->second.bias.shape().to_string() + " does not match " +
                            std::to_string(l.out_channels()) + " outputs");
            }
        } else if (g.weights.count(l.id)) {
            fail(l, "weightless layer carries weights");
        }
        shapes.push_back(out);
    }
    if (shapes.back() != Shape{g.num_classes}) {
        throw validation_error("final output " + shapes.back().to_string() + " does not match num_classes " +
                               std::to_string(g.num_classes));
    }
    return shapes;
}

void validate(const ModelGraph& g) { (void)activation_shapes(g); }

std::optional<std::size_t> next_weighted_layer(const ModelGraph& g, std::size_t index) {
    for (std::size_t j = index + 1; j < g.layers.size(); ++j) {
        if (g.layers[j].has_weights()) return j;
    }
    return std::nullopt;
}

LayerCounts count_params(const ModelGraph& g) {
    LayerCounts c;
    c.per_layer.assign(g.layers.size(), 0);
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
        const LayerSpec& l = g.layers[i];
        if (!l.has_weights()) continue;
        const LayerWeights& w = g.weights_of(l.id);
        c.per_layer[i] = w.kernel.size() + w.bias.size();
        c.total += c.per_layer[i];
    }
    return c;
}

LayerCounts count_flops(const ModelGraph& g) {
    const auto shapes = activation_shapes(g);
    LayerCounts c;
    c.per_layer.assign(g.layers.size(), 0);
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
        const LayerSpec& l = g.layers[i];
        if (l.kind == LayerKind::Conv2d) {
            const Shape& out = shapes[i + 1];
            c.per_layer[i] = 2ULL * out[0] * out[1] * l.filter_shape->elements();
        } else if (l.kind == LayerKind::FullyConnected) {
            c.per_layer[i] = 2ULL * l.filter_shape->elements();
        }
        c.total += c.per_layer[i];
    }
    return c;
}

std::string model_checksum(const ModelGraph& g) {
    Sha256 h;
    h.update("input" + g.input_shape.to_string() + ";classes=" + std::to_string(g.num_classes) + ";");
    for (const auto& l : g.layers) {
        h.update(l.id + "|" + to_string(l.kind) + "|" + (l.filter_shape ? l.filter_shape->to_string() : "-") + "|" +
                 to_string(l.padding) + "|" + to_string(l.activation) + "|" + (l.prunable ? "p" : "-") + ";");
        if (l.has_weights()) {
            const LayerWeights& w = g.weights_of(l.id);
            h.update(w.kernel.data());
            h.update(w.bias.data());
        }
    }
    return h.hex_digest();
}

void write_f64_blob(const fs::path& path, std::span<const double> values) {
    std::vector<char> bytes(values.size() * 8);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto bits = std::bit_cast<std::uint64_t>(values[i]);
        for (int b = 0; b < 8; ++b) bytes[8 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw io_error("failed writing " + path.string());
}

std::vector<double> read_f64_blob(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() % 8 != 0) {
        throw validation_error(path.string() + ": length " + std::to_string(bytes.size()) + " is not a multiple of 8");
    }
    std::vector<double> values(bytes.size() / 8);
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[8 * i + b]) << (8 * b);
        values[i] = std::bit_cast<double>(bits);
    }
    return values;
}

void write_json_file(const json& doc, const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error("cannot write " + path.string());
    out << doc.dump(2) << "\n";
    if (!out) throw io_error("failed writing " + path.string());
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw validation_error(path.string() + ": " + e.what());
    }
}

json write_model_blobs(const ModelGraph& g, const fs::path& manifest_path) {
    validate(g);
    const fs::path dir = manifest_path.parent_path();
    const std::string stem = manifest_path.stem().string();
    json manifest;
    manifest["input_shape"] = g.input_shape.dims();
    manifest["num_classes"] = g.num_classes;
    manifest["layers"] = json::array();
    for (const auto& l : g.layers) {
        json entry;
        entry["id"] = l.id;
        entry["kind"] = to_string(l.kind);
        entry["filter_shape"] = l.filter_shape ? json(l.filter_shape->dims()) : json(nullptr);
        entry["padding"] = to_string(l.padding);
        entry["activation"] = to_string(l.activation);
        entry["prunable"] = l.prunable;
        if (l.has_weights()) {
            const LayerWeights& w = g.weights_of(l.id);
            const std::string weight_file = stem + "." + l.id + ".weight.bin";
            const std::string bias_file = stem + "." + l.id + ".bias.bin";
            write_f64_blob(dir / weight_file, w.kernel.data());
            write_f64_blob(dir / bias_file, w.bias.data());
            entry["weight_file"] = weight_file;
            entry["bias_file"] = bias_file;
            entry["sha256_weight"] = sha256_file(dir / weight_file);
            entry["sha256_bias"] = sha256_file(dir / bias_file);
        } else {
            entry["weight_file"] = nullptr;
            entry["bias_file"] = nullptr;
            entry["sha256_weight"] = nullptr;
            entry["sha256_bias"] = nullptr;
        }
        manifest["layers"].push_back(entry);
    }
    manifest["model_checksum"] = model_checksum(g);
    return manifest;
}

void save_model(const ModelGraph& g, const fs::path& manifest_path) {
    write_json_file(write_model_blobs(g, manifest_path), manifest_path);
}

namespace {

Tensor load_blob(const fs::path& dir, const json& entry, const char* file_key, const char* sha_key, const Shape& shape,
                 const std::string& id) {
    const fs::path path = dir / entry.at(file_key).get<std::string>();
    if (!fs::exists(path)) throw io_error("layer '" + id + "': missing blob " + path.string());
    const auto bytes = fs::file_size(path);
    if (bytes != shape.elements() * 8) {
        throw validation_error("layer '" + id + "': shape mismatch, blob " + path.filename().string() + " holds " +
                               std::to_string(bytes) + " bytes but shape " + shape.to_string() + " needs " +
                               std::to_string(shape.elements() * 8));
    }
    std::vector<double> values = read_f64_blob(path);
    if (values.size() != shape.elements()) {
        throw validation_error("layer '" + id + "': shape mismatch, blob " + path.filename().string() + " holds " +
                               std::to_string(values.size()) + " values but shape " + shape.to_string() +
                               " needs " + std::to_string(shape.elements()));
    }
    if (entry.contains(sha_key) && !entry.at(sha_key).is_null()) {
        const std::string expected = entry.at(sha_key).get<std::string>();
        const std::string actual = sha256_file(path);
        if (expected != actual) {
            throw validation_error("layer '" + id + "': checksum mismatch for " + path.filename().string());
        }
    }
    return Tensor(shape, std::move(values));
}

}  // namespace

ModelGraph load_model(const fs::path& manifest_path) {
    if (!fs::exists(manifest_path)) throw io_error("manifest not found: " + manifest_path.string());
    const json manifest = read_json_file(manifest_path);
    const fs::path dir = manifest_path.parent_path();
    ModelGraph g;
    try {
        g.input_shape = Shape(manifest.at("input_shape").get<std::vector<std::size_t>>());
        g.num_classes = manifest.at("num_classes").get<std::size_t>();
        for (const auto& entry : manifest.at("layers")) {
            LayerSpec l;
            l.id = entry.at("id").get<std::string>();
            l.kind = parse_layer_kind(entry.at("kind").get<std::string>());
            if (entry.contains("filter_shape") && !entry.at("filter_shape").is_null()) {
                l.filter_shape = Shape(entry.at("filter_shape").get<std::vector<std::size_t>>());
            }
            l.padding = parse_padding(entry.value("padding", std::string("same")));
            l.activation = parse_activation(entry.value("activation", std::string("none")));
            l.prunable = entry.value("prunable", false);
            if (l.has_weights()) {
                if (!l.filter_shape) throw validation_error("layer '" + l.id + "': missing filter shape");
                const Shape kshape = *l.filter_shape;
                const Shape bshape{l.out_channels()};
                LayerWeights w{load_blob(dir, entry, "weight_file", "sha256_weight", kshape, l.id),
                               load_blob(dir, entry, "bias_file", "sha256_bias", bshape, l.id)};
                g.weights.emplace(l.id, std::move(w));
            }
            g.layers.push_back(std::move(l));
        }
    } catch (const json::exception& e) {
        throw validation_error(manifest_path.string() + ": malformed manifest: " + e.what());
    }
    validate(g);
    return g;
}

namespace {

LayerSpec conv(std::string id, std::size_t k, std::size_t cin, std::size_t cout, bool prunable) {
    return LayerSpec{std::move(id), LayerKind::Conv2d, Shape{k, k, cin, cout}, Padding::Same, Activation::Relu, prunable};
}

LayerSpec pool(std::string id) {
    return LayerSpec{std::move(id), LayerKind::MaxPool, Shape{2, 2}, Padding::Valid, Activation::None, false};
}

LayerSpec fc(std::string id, std::size_t in, std::size_t out, Activation act, bool prunable) {
    return LayerSpec{std::move(id), LayerKind::FullyConnected, Shape{in, out}, Padding::Same, act, prunable};
}

void allocate_zero_weights(ModelGraph& g) {
    for (const auto& l : g.layers) {
        if (l.has_weights()) g.weights.emplace(l.id, LayerWeights{Tensor(*l.filter_shape), Tensor(Shape{l.out_channels()})});
    }
}

}  // namespace

ModelGraph simple_cnn_architecture() {
    ModelGraph g;
    g.input_shape = Shape{32, 32, 3};
    g.num_classes = 10;
    // Maxpool2 output (8, 8, 32) flattens to FC1's 2048 inputs.
    g.layers = {conv("Conv1", 3, 3, 32, false),  conv("Conv2", 3, 32, 32, true), pool("Maxpool1"),
                conv("Conv3", 3, 32, 64, true),  conv("Conv4", 3, 64, 32, true), pool("Maxpool2"),
                fc("FC1", 2048, 512, Activation::Relu, true), fc("FC2", 512, 10, Activation::Softmax, false)};
    allocate_zero_weights(g);
    validate(g);
    return g;
}

ModelGraph desk_architecture(const DeskArchitecture& a) {
    ModelGraph g;
    g.input_shape = Shape{a.image_size, a.image_size, a.in_channels};
    g.num_classes = a.num_classes;
    const std::size_t pooled = (a.image_size / 2) * (a.image_size / 2) * a.conv2_channels;
    g.layers = {conv("Conv1", 3, a.in_channels, a.conv1_channels, false),
                conv("Conv2", 3, a.conv1_channels, a.conv2_channels, true), pool("Maxpool1"),
                LayerSpec{"Flatten", LayerKind::Flatten, std::nullopt, Padding::Valid, Activation::None, false},
                fc("FC1", pooled, a.fc_units, Activation::Relu, true),
                fc("FC2", a.fc_units, a.num_classes, Activation::Softmax, false)};
    allocate_zero_weights(g);
    validate(g);
    return g;
}

}  // namespace prunekit
