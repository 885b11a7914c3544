#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "prunekit/allocator.hpp"
#include "prunekit/capacity.hpp"
#include "prunekit/dataset.hpp"
#include "prunekit/engine.hpp"
#include "prunekit/model.hpp"
#include "prunekit/pruning.hpp"

namespace prunekit {

enum class Baseline { Uniform, Layerwise, Both };

std::string to_string(Baseline baseline);
Baseline parse_baseline(const std::string& text);

struct SweepSpec {
    std::vector<double> grid;
    Baseline baseline = Baseline::Both;
    std::vector<PruneKind> methods;
    std::size_t trials = 10;          // channel-random repetitions
    std::vector<std::uint64_t> seeds; // one per trial; defaults to 1..trials
    bool finetune = false;
    TrainConfig finetune_config{3, 1e-4, 0.9, 32, 0};
    std::uint64_t floor_multiplier = 3;

    std::vector<std::uint64_t> trial_seeds() const;
};

void validate(const SweepSpec& spec);

struct SweepRow {
    std::string method;
    std::string allocation;
    double s = 0.0;
    double s_hat = 0.0;
    std::string trial;   // trial index, or "summary" for the random-channel aggregate
    std::string phase;   // "p" or "p+ft"
    std::optional<double> accuracy;
    std::optional<double> achieved_sparsity;
    std::optional<std::uint64_t> seed;
    std::optional<double> median;
    std::optional<double> min;
    std::optional<double> max;
    std::string status = "ok";
};

// Grid order: s, then method, then allocation (uniform before layerwise),
// then trial, then phase. A failing cell yields rows with an error status and
// the sweep moves on.
std::vector<SweepRow> run_sweep(const ModelGraph& model, const CapacityProfile& profile, const Dataset& eval_set,
                                const Dataset& finetune_set, const SweepSpec& spec);

std::string sweep_csv_header();
std::string to_csv(const SweepRow& row);
std::string to_csv(const std::vector<SweepRow>& rows);

}  // namespace prunekit
