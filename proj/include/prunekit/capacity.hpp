#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "prunekit/dataset.hpp"
#include "prunekit/engine.hpp"
#include "prunekit/model.hpp"

namespace prunekit {

// Smallest capacity a layer may report; keeps 1/mu^2 finite for dead layers.
inline constexpr double kCapacityFloor = 1e-8;
// Samples whose layer input norm falls below this are skipped.
inline constexpr double kZeroInputNorm = 1e-12;

struct CapacityEstimate {
    double mu = 0.0;
    std::size_t samples_used = 0;
    std::size_t skipped_zero_norm = 0;
};

// mu = max over samples of ||W x|| / (||W||_F ||x||). Throws a numerical error
// when every sample has a (near) zero input.
CapacityEstimate layer_capacity(std::span<const NormPair> samples, double kernel_frobenius_norm,
                                const std::string& layer_id);

struct LayerCapacity {
    std::string id;
    double mu = 0.0;
    double omega = 0.0;  // 1 / mu^2
    std::size_t samples_used = 0;
    std::size_t skipped_zero_norm = 0;
    bool clamped = false;
};

struct CapacityProfile {
    std::vector<LayerCapacity> layers;
    double omega_sum = 0.0;            // sum of importances
    double inverse_square_sum = 0.0;   // sum of 1/mu^2
    std::string model_checksum;
    std::vector<std::string> warnings;

    const LayerCapacity& at(const std::string& id) const;
};

// One captured forward pass over `calib`; importance is the unnormalised
// effective parameter count 1/mu^2.
CapacityProfile capacity_profile(const ModelGraph& g, const Dataset& calib, const std::vector<std::string>& layer_ids);

nlohmann::json to_json(const CapacityProfile& profile);
CapacityProfile capacity_profile_from_json(const nlohmann::json& doc);

}  // namespace prunekit
