#include "prunekit/sweep.hpp"

#include <algorithm>
#include <cstdio>

#include "prunekit/error.hpp"

namespace prunekit {

std::string to_string(Baseline baseline) {
    switch (baseline) {
        case Baseline::Uniform: return "uniform";
        case Baseline::Layerwise: return "layerwise";
        case Baseline::Both: return "both";
    }
    return "?";
}

Baseline parse_baseline(const std::string& text) {
    if (text == "uniform") return Baseline::Uniform;
    if (text == "layerwise") return Baseline::Layerwise;
    if (text == "both") return Baseline::Both;
    throw validation_error("unknown baseline '" + text + "' (expected uniform, layerwise or both)");
}

std::vector<std::uint64_t> SweepSpec::trial_seeds() const {
    if (!seeds.empty()) return seeds;
    std::vector<std::uint64_t> out;
    for (std::size_t t = 0; t < trials; ++t) out.push_back(t + 1);
    return out;
}

void validate(const SweepSpec& spec) {
    if (spec.grid.empty()) throw validation_error("sweep grid is empty");
    for (std::size_t i = 0; i < spec.grid.size(); ++i) {
        if (!(spec.grid[i] >= 0.0 && spec.grid[i] < 1.0)) throw validation_error("sweep grid values must lie in [0, 1)");
        if (i > 0 && !(spec.grid[i] > spec.grid[i - 1])) throw validation_error("sweep grid must be strictly increasing");
    }
    if (spec.methods.empty()) throw validation_error("sweep needs at least one method");
    if (spec.trials == 0) throw validation_error("sweep trials must be at least 1");
    if (!spec.seeds.empty() && spec.seeds.size() != spec.trials) {
        throw validation_error("sweep lists " + std::to_string(spec.seeds.size()) + " seeds for " +
                               std::to_string(spec.trials) + " trials");
    }
    if (spec.finetune_config.batch_size == 0 || spec.finetune_config.epochs == 0) {
        throw validation_error("finetune epochs and batch size must be positive");
    }
}

namespace {

std::string error_status(const Error& e) {
    std::string kind;
    switch (e.kind()) {
        case ErrorKind::Validation: kind = "validation"; break;
        case ErrorKind::Infeasible: kind = "infeasible"; break;
        case ErrorKind::Io: kind = "io"; break;
        case ErrorKind::Numerical: kind = "numerical"; break;
    }
    return "error(" + kind + "): " + e.what();
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct CellOutcome {
    std::vector<SweepRow> rows;  // one per phase
};

CellOutcome run_cell(const ModelGraph& model, const CapacityProfile& profile, const Dataset& eval_set,
                     const Dataset& finetune_set, const SweepSpec& spec, double s, const PruneMethod& method,
                     AllocationMode mode, const std::string& trial) {
    SweepRow base;
    base.method = to_string(method.kind);
    base.allocation = to_string(mode);
    base.s = s;
    base.s_hat = s;
    base.trial = trial;
    base.seed = method.seed;

    CellOutcome out;
    try {
        double s_hat = s;
        if (method.is_channel()) {
            s_hat = calibrate_s_hat(model, profile, s, method, mode, spec.floor_multiplier).s_hat;
        }
        base.s_hat = s_hat;
        const SparsityPlan plan = allocate(make_allocation_input(model, profile, s_hat, spec.floor_multiplier), mode);
        const PruneResult pruned = prune(model, plan, method);

        SweepRow p = base;
        p.phase = "p";
        p.accuracy = evaluate(pruned.model, eval_set);
        p.achieved_sparsity = pruned.achieved_sparsity;
        out.rows.push_back(p);

        if (spec.finetune) {
            SweepRow ft = base;
            ft.phase = "p+ft";
            ft.achieved_sparsity = pruned.achieved_sparsity;
            try {
                const ModelGraph tuned = finetune(pruned.model, pruned.masks, finetune_set, spec.finetune_config);
                ft.accuracy = evaluate(tuned, eval_set);
            } catch (const Error& e) {
                ft.status = error_status(e);
            }
            out.rows.push_back(ft);
        }
    } catch (const Error& e) {
        out.rows.clear();
        SweepRow p = base;
        p.phase = "p";
        p.status = error_status(e);
        out.rows.push_back(p);
        if (spec.finetune) {
            SweepRow ft = p;
            ft.phase = "p+ft";
            out.rows.push_back(ft);
        }
    }
    return out;
}

void append_summary(std::vector<SweepRow>& rows, const std::vector<SweepRow>& trial_rows, const std::string& phase) {
    SweepRow summary;
    std::vector<double> acc;
    for (const auto& r : trial_rows) {
        if (r.phase != phase) continue;
        if (summary.method.empty()) summary = r;
        if (r.accuracy) acc.push_back(*r.accuracy);
    }
    if (summary.method.empty()) return;
    summary.trial = "summary";
    summary.seed.reset();
    summary.achieved_sparsity.reset();
    summary.s_hat = trial_rows.front().s_hat;
    if (acc.empty()) {
        summary.accuracy.reset();
        summary.status = "error: every trial failed";
    } else {
        summary.median = median_of(acc);
        summary.min = *std::min_element(acc.begin(), acc.end());
        summary.max = *std::max_element(acc.begin(), acc.end());
        summary.accuracy = summary.median;
        summary.status = "ok";
        std::size_t phase_rows = 0;
        for (const auto& r : trial_rows) phase_rows += r.phase == phase;
        if (acc.size() != phase_rows) {
            summary.status = "partial: " + std::to_string(acc.size()) + " of " + std::to_string(phase_rows) + " trials";
        }
    }
    rows.push_back(summary);
}

}  // namespace

std::vector<SweepRow> run_sweep(const ModelGraph& model, const CapacityProfile& profile, const Dataset& eval_set,
                                const Dataset& finetune_set, const SweepSpec& spec) {
    validate(spec);
    std::vector<AllocationMode> modes;
    if (spec.baseline != Baseline::Layerwise) modes.push_back(AllocationMode::Uniform);
    if (spec.baseline != Baseline::Uniform) modes.push_back(AllocationMode::Layerwise);

    std::vector<SweepRow> rows;
    for (double s : spec.grid) {
        for (PruneKind kind : spec.methods) {
            for (AllocationMode mode : modes) {
                if (kind != PruneKind::ChannelRandom) {
                    const PruneMethod method{kind, std::nullopt};
                    auto cell = run_cell(model, profile, eval_set, finetune_set, spec, s, method, mode, "0");
                    rows.insert(rows.end(), cell.rows.begin(), cell.rows.end());
                    continue;
                }
                std::vector<SweepRow> trial_rows;
                const auto seeds = spec.trial_seeds();
                for (std::size_t t = 0; t < seeds.size(); ++t) {
                    auto cell = run_cell(model, profile, eval_set, finetune_set, spec, s,
                                         PruneMethod::channel_random(seeds[t]), mode, std::to_string(t));
                    trial_rows.insert(trial_rows.end(), cell.rows.begin(), cell.rows.end());
                }
                rows.insert(rows.end(), trial_rows.begin(), trial_rows.end());
                append_summary(rows, trial_rows, "p");
                if (spec.finetune) append_summary(rows, trial_rows, "p+ft");
            }
        }
    }
    return rows;
}

namespace {

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string opt(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

std::string quoted(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c == '\n' ? ' ' : c;
    }
    return out + "\"";
}

}  // namespace

std::string sweep_csv_header() {
    return "method,allocation,s,s_hat,trial,phase,accuracy,achieved_sparsity,seed,median,min,max,status";
}

std::string to_csv(const SweepRow& r) {
    std::string line;
    line += r.method + "," + r.allocation + "," + num(r.s) + "," + num(r.s_hat) + "," + r.trial + "," + r.phase + ",";
    line += opt(r.accuracy) + "," + opt(r.achieved_sparsity) + ",";
    line += (r.seed ? std::to_string(*r.seed) : std::string()) + ",";
    line += opt(r.median) + "," + opt(r.min) + "," + opt(r.max) + "," + quoted(r.status);
    return line;
}

std::string to_csv(const std::vector<SweepRow>& rows) {
    std::string out = sweep_csv_header() + "\n";
    for (const auto& r : rows) out += to_csv(r) + "\n";
    return out;
}

}  // namespace prunekit
