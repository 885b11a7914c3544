#include "prunekit/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>

#include "prunekit/checksum.hpp"
#include "prunekit/error.hpp"
#include "prunekit/rng.hpp"

namespace prunekit {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(PruneKind kind) {
    switch (kind) {
        case PruneKind::WeightMagnitude: return "weight-magnitude";
        case PruneKind::ChannelL1: return "channel-l1";
        case PruneKind::ChannelRandom: return "channel-random";
    }
    return "?";
}

PruneKind parse_prune_kind(const std::string& text) {
    if (text == "weight-magnitude") return PruneKind::WeightMagnitude;
    if (text == "channel-l1") return PruneKind::ChannelL1;
    if (text == "channel-random") return PruneKind::ChannelRandom;
    throw validation_error("unknown pruning method '" + text + "' (expected weight-magnitude, channel-l1 or channel-random)");
}

void validate(const PruneMethod& method) {
    if (method.kind == PruneKind::ChannelRandom && !method.seed) {
        throw validation_error("channel-random pruning needs a seed");
    }
    if (method.kind != PruneKind::ChannelRandom && method.seed) {
        throw validation_error(to_string(method.kind) + " pruning takes no seed");
    }
}

std::uint64_t weights_to_prune(double layer_sparsity, std::uint64_t kernel_size) {
    const double k = std::round(std::clamp(layer_sparsity, 0.0, 1.0) * static_cast<double>(kernel_size));
    return std::min<std::uint64_t>(static_cast<std::uint64_t>(k), kernel_size);
}

std::size_t channels_to_prune(const SparsityPlan& plan, const ModelGraph& g, const std::string& layer_id) {
    const std::size_t c_out = g.layer(layer_id).out_channels();
    if (c_out == 0) throw validation_error("layer '" + layer_id + "' has no output channels");
    const double s = std::clamp(plan.at(layer_id).sparsity, 0.0, 1.0);
    const auto r = static_cast<std::size_t>(std::floor(s * static_cast<double>(c_out)));
    return std::min(r, c_out - 1);
}

namespace {

void check_plan_layers(const ModelGraph& g, const SparsityPlan& plan) {
    if (plan.layers.empty()) throw validation_error("plan lists no layers");
    std::set<std::string> seen;
    for (const auto& l : plan.layers) {
        if (!seen.insert(l.id).second) throw validation_error("plan lists layer '" + l.id + "' twice");
        const LayerSpec& spec = g.layer(l.id);
        if (!spec.has_weights()) throw validation_error("plan layer '" + l.id + "' has no parameters");
        if (!spec.prunable) throw validation_error("plan layer '" + l.id + "' is not marked prunable");
    }
}

PruneResult base_result(const ModelGraph& g, const SparsityPlan& plan, const PruneMethod& method) {
    PruneResult r;
    r.method = method;
    r.plan_checksum = plan_checksum(plan);
    r.source_checksum = model_checksum(g);
    r.planned_params = plan.total_params();
    return r;
}

// C = total after - (total before - N).
void finish_counts(PruneResult& r, std::uint64_t original_total, std::uint64_t after_total) {
    const std::uint64_t outside = original_total - r.planned_params;
    r.achieved_remaining = after_total - outside;
    r.achieved_sparsity =
        1.0 - static_cast<double>(r.achieved_remaining) / static_cast<double>(r.planned_params);
}

struct ChannelLink {
    std::size_t producer = 0;   // layer index
    std::size_t consumer = 0;   // next weighted layer index
    std::size_t positions = 1;  // spatial positions per channel seen by the consumer
};

ChannelLink channel_link(const ModelGraph& g, const std::vector<Shape>& shapes, const std::string& id) {
    ChannelLink link;
    link.producer = g.index_of(id);
    const auto next = next_weighted_layer(g, link.producer);
    if (!next) {
        throw validation_error("layer '" + id + "' feeds the model output; its channels cannot be removed");
    }
    link.consumer = *next;
    const LayerSpec& consumer = g.layers[link.consumer];
    if (consumer.kind == LayerKind::FullyConnected) {
        const std::size_t channels = g.layers[link.producer].out_channels();
        for (std::size_t i = link.producer + 1; i <= link.consumer; ++i) {
            if (shapes[i].rank() == 3) link.positions = shapes[i][0] * shapes[i][1];
        }
        if (link.positions * channels != (*consumer.filter_shape)[0]) {
            throw validation_error("layer '" + consumer.id + "': input width does not match the channels of '" + id + "'");
        }
    }
    return link;
}

// Rebuilds a weighted layer keeping the listed input and output channels.
void slice_layer(ModelGraph& g, std::size_t index, const std::vector<std::size_t>& keep_in,
                 const std::vector<std::size_t>& keep_out, std::size_t positions) {
    LayerSpec& spec = g.layers[index];
    LayerWeights& w = g.weights_of(spec.id);
    const Shape& f = *spec.filter_shape;
    if (spec.kind == LayerKind::Conv2d) {
        const std::size_t kh = f[0], kw = f[1], cin = f[2], cout = f[3];
        Tensor kernel(Shape{kh, kw, keep_in.size(), keep_out.size()});
        std::size_t k = 0;
        for (std::size_t y = 0; y < kh; ++y) {
            for (std::size_t x = 0; x < kw; ++x) {
                for (std::size_t ci : keep_in) {
                    for (std::size_t co : keep_out) kernel[k++] = w.kernel[((y * kw + x) * cin + ci) * cout + co];
                }
            }
        }
        w.kernel = std::move(kernel);
        spec.filter_shape = Shape{kh, kw, keep_in.size(), keep_out.size()};
    } else {
        const std::size_t in = f[0], out = f[1];
        // keep_in lists channels; expand to rows in (position, channel) order.
        const std::size_t channels = positions == 1 ? in : in / positions;
        std::vector<std::size_t> rows;
        rows.reserve(positions * keep_in.size());
        for (std::size_t p = 0; p < positions; ++p) {
            for (std::size_t c : keep_in) rows.push_back(p * channels + c);
        }
        Tensor kernel(Shape{rows.size(), keep_out.size()});
        std::size_t k = 0;
        for (std::size_t r : rows) {
            for (std::size_t co : keep_out) kernel[k++] = w.kernel[r * out + co];
        }
        w.kernel = std::move(kernel);
        spec.filter_shape = Shape{rows.size(), keep_out.size()};
    }
    Tensor bias(Shape{keep_out.size()});
    for (std::size_t j = 0; j < keep_out.size(); ++j) bias[j] = w.bias[keep_out[j]];
    w.bias = std::move(bias);
}

std::size_t input_channels(const LayerSpec& spec, std::size_t positions) {
    const Shape& f = *spec.filter_shape;
    return spec.kind == LayerKind::Conv2d ? f[2] : f[0] / positions;
}

std::vector<std::size_t> complement(std::size_t n, const std::vector<std::size_t>& removed) {
    std::vector<std::size_t> keep;
    std::size_t r = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (r < removed.size() && removed[r] == i) {
            ++r;
        } else {
            keep.push_back(i);
        }
    }
    return keep;
}

std::vector<double> channel_l1_norms(const ModelGraph& g, const std::string& id) {
    const LayerSpec& spec = g.layer(id);
    const Tensor& kernel = g.weights_of(id).kernel;
    const std::size_t cout = spec.out_channels();
    std::vector<double> norms(cout, 0.0);
    for (std::size_t i = 0; i < kernel.size(); ++i) norms[i % cout] += std::abs(kernel[i]);
    return norms;
}

using ChannelChooser = std::function<std::vector<std::size_t>(const std::string& id, std::size_t count)>;

PruneResult prune_channels(const ModelGraph& g, const SparsityPlan& plan, const PruneMethod& method,
                           const ChannelChooser& choose) {
    validate(g);
    check_plan_layers(g, plan);
    const std::vector<Shape> shapes = activation_shapes(g);
    PruneResult r = base_result(g, plan, method);

    std::map<std::size_t, std::vector<std::size_t>> removed_out;  // by layer index
    std::map<std::size_t, ChannelLink> links;                     // by consumer index
    for (const auto& a : plan.layers) {
        const ChannelLink link = channel_link(g, shapes, a.id);
        std::vector<std::size_t> removed = choose(a.id, channels_to_prune(plan, g, a.id));
        std::sort(removed.begin(), removed.end());
        removed_out[link.producer] = removed;
        links[link.consumer] = link;
        r.removed_channels[a.id] = std::move(removed);
    }

    ModelGraph out = g;
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
        const LayerSpec& spec = g.layers[i];
        if (!spec.has_weights()) continue;
        const auto out_it = removed_out.find(i);
        const auto link_it = links.find(i);
        if (out_it == removed_out.end() && link_it == links.end()) continue;
        const std::size_t positions = link_it == links.end() ? 1 : link_it->second.positions;
        std::vector<std::size_t> keep_in(input_channels(spec, positions));
        std::iota(keep_in.begin(), keep_in.end(), std::size_t{0});
        if (link_it != links.end()) {
            keep_in = complement(keep_in.size(), removed_out.at(link_it->second.producer));
        }
        std::vector<std::size_t> keep_out(spec.out_channels());
        std::iota(keep_out.begin(), keep_out.end(), std::size_t{0});
        if (out_it != removed_out.end()) keep_out = complement(keep_out.size(), out_it->second);
        slice_layer(out, i, keep_in, keep_out, positions);
    }
    validate(out);

    const LayerCounts before = count_params(g);
    const LayerCounts after = count_params(out);
    for (std::size_t i = 0; i < out.layers.size(); ++i) {
        if (out.layers[i].has_weights()) r.remaining_per_layer[out.layers[i].id] = after.per_layer[i];
    }
    finish_counts(r, before.total, after.total);
    r.model = std::move(out);
    return r;
}

}  // namespace

PruneResult prune_weights_magnitude(const ModelGraph& g, const SparsityPlan& plan) {
    validate(g);
    check_plan_layers(g, plan);
    PruneResult r = base_result(g, plan, PruneMethod::weight_magnitude());
    ModelGraph out = g;
    for (const auto& a : plan.layers) {
        Tensor& kernel = out.weights_of(a.id).kernel;
        const std::size_t n = kernel.size();
        const std::uint64_t k = weights_to_prune(a.sparsity, n);
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        const auto smaller = [&](std::size_t x, std::size_t y) {
            const double ax = std::abs(kernel[x]), ay = std::abs(kernel[y]);
            return ax < ay || (ax == ay && x < y);
        };
        std::vector<std::uint8_t> keep(n, 1);
        if (k > 0) {
            std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1), order.end(), smaller);
            for (std::size_t j = 0; j < k; ++j) {
                keep[order[j]] = 0;
                kernel[order[j]] = 0.0;
            }
        }
        r.masks[a.id] = std::move(keep);
    }

    const LayerCounts before = count_params(g);
    std::uint64_t after_total = 0;
    for (std::size_t i = 0; i < out.layers.size(); ++i) {
        const LayerSpec& spec = out.layers[i];
        if (!spec.has_weights()) continue;
        std::uint64_t count = before.per_layer[i];
        const auto m = r.masks.find(spec.id);
        if (m != r.masks.end()) {
            count = out.weights_of(spec.id).bias.size() +
                    static_cast<std::uint64_t>(std::count(m->second.begin(), m->second.end(), std::uint8_t{1}));
        }
        r.remaining_per_layer[spec.id] = count;
        after_total += count;
    }
    finish_counts(r, before.total, after_total);
    r.model = std::move(out);
    return r;
}

PruneResult prune_channels_l1(const ModelGraph& g, const SparsityPlan& plan) {
    return prune_channels(g, plan, PruneMethod::channel_l1(), [&](const std::string& id, std::size_t count) {
        const std::vector<double> norms = channel_l1_norms(g, id);
        std::vector<std::size_t> order(norms.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return norms[a] < norms[b]; });
        order.resize(count);
        return order;
    });
}

PruneResult prune_channels_random(const ModelGraph& g, const SparsityPlan& plan, std::uint64_t seed) {
    Rng rng(seed);
    return prune_channels(g, plan, PruneMethod::channel_random(seed), [&](const std::string& id, std::size_t count) {
        std::vector<std::size_t> order = rng.permutation(g.layer(id).out_channels());
        order.resize(count);
        return order;
    });
}

PruneResult prune(const ModelGraph& g, const SparsityPlan& plan, const PruneMethod& method) {
    validate(method);
    switch (method.kind) {
        case PruneKind::WeightMagnitude: return prune_weights_magnitude(g, plan);
        case PruneKind::ChannelL1: return prune_channels_l1(g, plan);
        case PruneKind::ChannelRandom: return prune_channels_random(g, plan, *method.seed);
    }
    throw validation_error("unknown pruning method");
}

std::uint64_t achieved_remaining(const ModelGraph& g, const SparsityPlan& plan, const PruneMethod& method) {
    validate(method);
    validate(g);
    check_plan_layers(g, plan);
    if (!method.is_channel()) {
        std::uint64_t c = 0;
        for (const auto& a : plan.layers) {
            const LayerWeights& w = g.weights_of(a.id);
            c += w.kernel.size() - weights_to_prune(a.sparsity, w.kernel.size()) + w.bias.size();
        }
        return c;
    }

    // Analytic count from the channel arithmetic alone.
    const std::vector<Shape> shapes = activation_shapes(g);
    std::map<std::size_t, std::size_t> removed;    // producer index -> channels removed
    std::map<std::size_t, ChannelLink> links;      // consumer index -> link
    for (const auto& a : plan.layers) {
        const ChannelLink link = channel_link(g, shapes, a.id);
        removed[link.producer] = channels_to_prune(plan, g, a.id);
        links[link.consumer] = link;
    }
    const LayerCounts before = count_params(g);
    std::uint64_t after = 0;
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
        const LayerSpec& spec = g.layers[i];
        if (!spec.has_weights()) continue;
        const Shape& f = *spec.filter_shape;
        std::uint64_t fan_in = spec.kind == LayerKind::Conv2d ? f[0] * f[1] * f[2] : f[0];
        std::uint64_t out = spec.out_channels();
        if (auto it = removed.find(i); it != removed.end()) out -= it->second;
        if (auto it = links.find(i); it != links.end()) {
            const std::uint64_t per_channel = spec.kind == LayerKind::Conv2d ? f[0] * f[1] : it->second.positions;
            fan_in -= per_channel * removed.at(it->second.producer);
        }
        after += fan_in * out + out;
    }
    return after - (before.total - plan.total_params());
}

Calibration calibrate_s_hat(const ModelGraph& g, const CapacityProfile& profile, double s, const PruneMethod& method,
                            AllocationMode mode, std::uint64_t floor_multiplier) {
    validate(method);
    Calibration cal;
    const auto evaluate_at = [&](double x) {
        ++cal.evaluations;
        const SparsityPlan plan = allocate(make_allocation_input(g, profile, x, floor_multiplier), mode);
        return achieved_remaining(g, plan, method);
    };
    const std::uint64_t n = make_allocation_input(g, profile, s, floor_multiplier).total_params();
    cal.target_remaining = (1.0 - s) * static_cast<double>(n);
    const auto finish = [&](double s_hat, std::uint64_t achieved) {
        cal.s_hat = s_hat;
        cal.achieved = achieved;
        cal.gap = std::abs(static_cast<double>(achieved) - cal.target_remaining);
        return cal;
    };

    const std::uint64_t at_s = evaluate_at(s);
    if (!method.is_channel() || static_cast<double>(at_s) >= cal.target_remaining) return finish(s, at_s);

    const std::uint64_t at_zero = evaluate_at(0.0);
    if (static_cast<double>(at_zero) < cal.target_remaining) {
        throw infeasible_error("no s_hat in [0, s] keeps " + std::to_string(cal.target_remaining) +
                               " parameters: even s_hat = 0 keeps only " + std::to_string(at_zero));
    }
    double lo = 0.0, hi = s;
    std::uint64_t at_lo = at_zero;
    while (hi - lo > 1e-9) {
        const double mid = 0.5 * (lo + hi);
        const std::uint64_t c = evaluate_at(mid);
        if (static_cast<double>(c) >= cal.target_remaining) {
            lo = mid;
            at_lo = c;
        } else {
            hi = mid;
        }
    }
    return finish(lo, at_lo);
}

std::vector<std::uint8_t> pack_mask(const std::vector<std::uint8_t>& keep) {
    std::vector<std::uint8_t> packed((keep.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < keep.size(); ++i) {
        if (keep[i]) packed[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    }
    return packed;
}

std::vector<std::uint8_t> unpack_mask(const std::vector<std::uint8_t>& packed, std::size_t count) {
    if (packed.size() != (count + 7) / 8) {
        throw validation_error("mask blob holds " + std::to_string(packed.size()) + " bytes, expected " +
                               std::to_string((count + 7) / 8));
    }
    std::vector<std::uint8_t> keep(count);
    for (std::size_t i = 0; i < count; ++i) keep[i] = (packed[i / 8] >> (i % 8)) & 1u;
    return keep;
}

void save_prune_result(const PruneResult& result, const fs::path& manifest_path) {
    json manifest = write_model_blobs(result.model, manifest_path);
    const fs::path dir = manifest_path.parent_path();
    const std::string stem = manifest_path.stem().string();
    for (auto& entry : manifest["layers"]) {
        const std::string id = entry["id"].get<std::string>();
        const auto m = result.masks.find(id);
        if (m == result.masks.end()) continue;
        const std::string file = stem + "." + id + ".mask.bin";
        const std::vector<std::uint8_t> packed = pack_mask(m->second);
        std::ofstream out(dir / file, std::ios::binary | std::ios::trunc);
        if (!out) throw io_error("cannot write " + (dir / file).string());
        out.write(reinterpret_cast<const char*>(packed.data()), static_cast<std::streamsize>(packed.size()));
        if (!out) throw io_error("failed writing " + (dir / file).string());
        out.close();
        entry["mask_file"] = file;
        entry["sha256_mask"] = sha256_file(dir / file);
    }
    json removed = json::object();
    for (const auto& [id, channels] : result.removed_channels) removed[id] = channels;
    manifest["provenance"] = {{"method", to_string(result.method.kind)},
                              {"seed", result.method.seed ? json(*result.method.seed) : json(nullptr)},
                              {"plan_checksum", result.plan_checksum},
                              {"source_model_checksum", result.source_checksum},
                              {"planned_params", result.planned_params},
                              {"achieved_remaining", result.achieved_remaining},
                              {"achieved_sparsity", result.achieved_sparsity},
                              {"per_layer_counts", result.remaining_per_layer},
                              {"removed_channels", removed}};
    write_json_file(manifest, manifest_path);
}

KeepMasks load_masks(const fs::path& manifest_path) {
    const json manifest = read_json_file(manifest_path);
    const fs::path dir = manifest_path.parent_path();
    KeepMasks masks;
    try {
        for (const auto& entry : manifest.at("layers")) {
            if (!entry.contains("mask_file")) continue;
            const std::string id = entry.at("id").get<std::string>();
            const fs::path path = dir / entry.at("mask_file").get<std::string>();
            std::ifstream in(path, std::ios::binary);
            if (!in) throw io_error("layer '" + id + "': missing mask blob " + path.string());
            std::vector<std::uint8_t> packed((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
            if (entry.contains("sha256_mask") && sha256_file(path) != entry.at("sha256_mask").get<std::string>()) {
                throw validation_error("layer '" + id + "': mask checksum mismatch");
            }
            const auto shape = entry.at("filter_shape").get<std::vector<std::size_t>>();
            const std::size_t count = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
            masks[id] = unpack_mask(packed, count);
        }
    } catch (const json::exception& e) {
        throw validation_error(manifest_path.string() + ": " + e.what());
    }
    return masks;
}

}  // namespace prunekit
