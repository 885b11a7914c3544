#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "prunekit/capacity.hpp"
#include "prunekit/model.hpp"

namespace prunekit {

struct LayerBudget {
    std::string id;
    std::uint64_t params = 0;         // N_l
    double omega = 0.0;               // importance
    std::uint64_t min_remaining = 0;  // xi_l
};

struct AllocationInput {
    std::vector<LayerBudget> layers;
    double target_sparsity = 0.0;

    std::uint64_t total_params() const;
    double omega_sum() const;
    std::uint64_t floor_sum() const;
};

void validate(const AllocationInput& input);

struct LayerAllocation {
    std::string id;
    std::uint64_t params = 0;
    double omega = 0.0;
    std::uint64_t min_remaining = 0;
    double epsilon = 0.0;
    double sparsity = 0.0;
    double remaining = 0.0;  // alpha (1 + epsilon) omega, kept real-valued
};

enum class AllocationMode { Layerwise, Uniform };

std::string to_string(AllocationMode mode);
AllocationMode parse_allocation_mode(const std::string& text);

struct SparsityPlan {
    AllocationMode mode = AllocationMode::Layerwise;
    double target_sparsity = 0.0;
    double alpha = 0.0;
    std::vector<LayerAllocation> layers;
    double achieved_total_remaining = 0.0;
    std::size_t iterations = 0;
    double residual = 0.0;  // |sum remaining - (1 - s) N|
    std::string source_checksum;  // capacity report the plan was derived from

    const LayerAllocation& at(const std::string& id) const;
    std::uint64_t total_params() const;
};

// alpha = (1 - s) N / Omega.
double compute_alpha(double s, double total_params, double omega_sum);

// s_l = 1 - (1 - s) (N / N_l) (omega_l / Omega); may leave [0, 1).
std::vector<double> naive_sparsities(const AllocationInput& input);

// sum xi_l <= (1 - s) N.
bool check_feasible(const AllocationInput& input);

// Minimises ||epsilon||^2 subject to xi_l <= alpha (1 + eps_l) omega_l <= N_l
// and sum alpha (1 + eps_l) omega_l = (1 - s) N. The KKT point is
// eps_l(lambda) = clip(lambda alpha omega_l, lo_l, hi_l); the multiplier is
// found by bisection on the nondecreasing budget map, then the free
// coordinates are solved exactly on the final active set.
// Throws an infeasible error when the floors exceed the budget.
SparsityPlan solve_allocation(const AllocationInput& input);

// Baseline: s_l = s for every layer, floors ignored.
SparsityPlan uniform_allocation(const AllocationInput& input);

SparsityPlan allocate(const AllocationInput& input, AllocationMode mode);

// xi_l = multiplier * k_h * k_w * c_in for conv, multiplier * in_features for
// fully-connected layers; capped at N_l.
std::vector<std::uint64_t> min_remaining_floors(const ModelGraph& g, const std::vector<std::string>& layer_ids,
                                                std::uint64_t multiplier = 3);

// Combines a model's parameter counts, a capacity profile and floors.
AllocationInput make_allocation_input(const ModelGraph& g, const CapacityProfile& profile, double target_sparsity,
                                      std::uint64_t floor_multiplier = 3);

nlohmann::json to_json(const SparsityPlan& plan);
SparsityPlan sparsity_plan_from_json(const nlohmann::json& doc);
std::string plan_checksum(const SparsityPlan& plan);

}  // namespace prunekit
