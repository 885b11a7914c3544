#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "prunekit/allocator.hpp"
#include "prunekit/capacity.hpp"
#include "prunekit/engine.hpp"
#include "prunekit/model.hpp"

namespace prunekit {

enum class PruneKind { WeightMagnitude, ChannelL1, ChannelRandom };

std::string to_string(PruneKind kind);
PruneKind parse_prune_kind(const std::string& text);

struct PruneMethod {
    PruneKind kind = PruneKind::WeightMagnitude;
    std::optional<std::uint64_t> seed;  // present iff kind == ChannelRandom

    static PruneMethod weight_magnitude() { return {PruneKind::WeightMagnitude, std::nullopt}; }
    static PruneMethod channel_l1() { return {PruneKind::ChannelL1, std::nullopt}; }
    static PruneMethod channel_random(std::uint64_t seed) { return {PruneKind::ChannelRandom, seed}; }

    bool is_channel() const noexcept { return kind != PruneKind::WeightMagnitude; }
};

void validate(const PruneMethod& method);

struct PruneResult {
    ModelGraph model;
    KeepMasks masks;  // weight pruning only
    std::map<std::string, std::vector<std::size_t>> removed_channels;  // channel pruning only
    std::map<std::string, std::uint64_t> remaining_per_layer;  // every weighted layer
    std::uint64_t planned_params = 0;     // N over the plan's layers
    std::uint64_t achieved_remaining = 0; // C
    double achieved_sparsity = 0.0;       // 1 - C / N
    PruneMethod method;
    std::string plan_checksum;
    std::string source_checksum;
};

// Kernel entries removed by magnitude pruning: round(s_l * kernel size),
// halves rounded away from zero.
std::uint64_t weights_to_prune(double layer_sparsity, std::uint64_t kernel_size);

// floor(s_l * C_out), never leaving a layer without channels.
std::size_t channels_to_prune(const SparsityPlan& plan, const ModelGraph& g, const std::string& layer_id);

// Zeroes the smallest-|w| kernel entries of each planned layer (lower flat
// index first on ties); biases are never pruned.
PruneResult prune_weights_magnitude(const ModelGraph& g, const SparsityPlan& plan);

// Removes whole output channels and the matching input slices of the next
// weighted layer. For a spatial producer feeding a fully-connected layer the
// removed rows are every (y, x) position of a dropped channel, in (h, w, c)
// flatten order.
PruneResult prune_channels_l1(const ModelGraph& g, const SparsityPlan& plan);
PruneResult prune_channels_random(const ModelGraph& g, const SparsityPlan& plan, std::uint64_t seed);

PruneResult prune(const ModelGraph& g, const SparsityPlan& plan, const PruneMethod& method);

// Dry run: C = parameters left in the model after pruning, minus the
// original parameters of layers outside the plan. Channel methods include
// the input slices lost by successor layers.
std::uint64_t achieved_remaining(const ModelGraph& g, const SparsityPlan& plan, const PruneMethod& method);

struct Calibration {
    double s_hat = 0.0;
    std::uint64_t achieved = 0;      // C(s_hat)
    double target_remaining = 0.0;   // (1 - s) N
    double gap = 0.0;                // |C(s_hat) - (1 - s) N|
    std::size_t evaluations = 0;
};

// Largest s_hat in [0, s] whose allocation still keeps C(s_hat) >= (1 - s) N,
// found by bisection on the nonincreasing step function s_hat -> C(s_hat).
// Weight pruning returns s unchanged.
Calibration calibrate_s_hat(const ModelGraph& g, const CapacityProfile& profile, double s, const PruneMethod& method,
                            AllocationMode mode = AllocationMode::Layerwise, std::uint64_t floor_multiplier = 3);

// Model manifest plus a provenance block; masks as bit-packed blobs
// (LSB-first, 1 = keep) referenced per layer.
void save_prune_result(const PruneResult& result, const std::filesystem::path& manifest_path);
KeepMasks load_masks(const std::filesystem::path& manifest_path);

std::vector<std::uint8_t> pack_mask(const std::vector<std::uint8_t>& keep);
std::vector<std::uint8_t> unpack_mask(const std::vector<std::uint8_t>& packed, std::size_t count);

}  // namespace prunekit
