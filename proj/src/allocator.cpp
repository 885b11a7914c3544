#include "prunekit/allocator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "prunekit/checksum.hpp"
#include "prunekit/error.hpp"

namespace prunekit {

using nlohmann::json;

namespace {

constexpr std::size_t kMaxIterations = 200;
constexpr double kResidualTolerance = 1e-10;  // relative to N

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

}  // namespace

std::uint64_t AllocationInput::total_params() const {
    std::uint64_t n = 0;
    for (const auto& l : layers) n += l.params;
    return n;
}

double AllocationInput::omega_sum() const {
    double o = 0.0;
    for (const auto& l : layers) o += l.omega;
    return o;
}

std::uint64_t AllocationInput::floor_sum() const {
    std::uint64_t x = 0;
    for (const auto& l : layers) x += l.min_remaining;
    return x;
}

void validate(const AllocationInput& input) {
    if (input.layers.empty()) throw validation_error("allocation needs at least one layer");
    if (!(input.target_sparsity >= 0.0 && input.target_sparsity < 1.0)) {
        throw validation_error("target sparsity must lie in [0, 1), got " + fmt_double(input.target_sparsity));
    }
    for (const auto& l : input.layers) {
        if (l.params == 0) throw validation_error("layer '" + l.id + "': N_l must be positive");
        if (!(l.omega > 0.0) || !std::isfinite(l.omega)) {
            throw validation_error("layer '" + l.id + "': importance must be positive and finite");
        }
        if (l.min_remaining > l.params) {
            throw validation_error("layer '" + l.id + "': floor " + std::to_string(l.min_remaining) + " exceeds N_l " +
                                   std::to_string(l.params));
        }
    }
}

std::string to_string(AllocationMode mode) { return mode == AllocationMode::Layerwise ? "layerwise" : "uniform"; }

AllocationMode parse_allocation_mode(const std::string& text) {
    if (text == "layerwise") return AllocationMode::Layerwise;
    if (text == "uniform") return AllocationMode::Uniform;
    throw validation_error("unknown allocation mode '" + text + "'");
}

const LayerAllocation& SparsityPlan::at(const std::string& id) const {
    for (const auto& l : layers) {
        if (l.id == id) return l;
    }
    throw validation_error("plan has no layer '" + id + "'");
}

std::uint64_t SparsityPlan::total_params() const {
    std::uint64_t n = 0;
    for (const auto& l : layers) n += l.params;
    return n;
}

double compute_alpha(double s, double total_params, double omega_sum) { return (1.0 - s) * total_params / omega_sum; }

std::vector<double> naive_sparsities(const AllocationInput& input) {
    validate(input);
    const double n = static_cast<double>(input.total_params());
    const double omega = input.omega_sum();
    std::vector<double> s;
    s.reserve(input.layers.size());
    for (const auto& l : input.layers) {
        s.push_back(1.0 - (1.0 - input.target_sparsity) * (n / static_cast<double>(l.params)) * (l.omega / omega));
    }
    return s;
}

bool check_feasible(const AllocationInput& input) {
    return static_cast<double>(input.floor_sum()) <=
           (1.0 - input.target_sparsity) * static_cast<double>(input.total_params());
}

namespace {

struct Coordinates {
    std::vector<double> scale;  // alpha omega_l
    std::vector<double> lo;
    std::vector<double> hi;

    double epsilon(std::size_t l, double lambda) const { return std::clamp(lambda * scale[l], lo[l], hi[l]); }

    double budget(double lambda) const {
        double g = 0.0;
        for (std::size_t l = 0; l < scale.size(); ++l) g += scale[l] * epsilon(l, lambda);
        return g;
    }
};

SparsityPlan finish_plan(const AllocationInput& input, AllocationMode mode, double alpha, const std::vector<double>& eps) {
    SparsityPlan plan;
    plan.mode = mode;
    plan.target_sparsity = input.target_sparsity;
    plan.alpha = alpha;
    double total = 0.0;
    for (std::size_t l = 0; l < input.layers.size(); ++l) {
        const LayerBudget& b = input.layers[l];
        LayerAllocation a;
        a.id = b.id;
        a.params = b.params;
        a.omega = b.omega;
        a.min_remaining = b.min_remaining;
        a.epsilon = eps[l];
        a.remaining = alpha * (1.0 + eps[l]) * b.omega;
        if (mode == AllocationMode::Layerwise) {
            a.remaining = std::clamp(a.remaining, static_cast<double>(b.min_remaining), static_cast<double>(b.params));
        }
        a.sparsity = 1.0 - a.remaining / static_cast<double>(b.params);
        total += a.remaining;
        plan.layers.push_back(a);
    }
    plan.achieved_total_remaining = total;
    plan.residual = std::abs(total - (1.0 - input.target_sparsity) * static_cast<double>(input.total_params()));
    return plan;
}

}  // namespace

SparsityPlan solve_allocation(const AllocationInput& input) {
    validate(input);
    const double n = static_cast<double>(input.total_params());
    const double budget_remaining = (1.0 - input.target_sparsity) * n;
    if (!check_feasible(input)) {
        throw infeasible_error("infeasible allocation: sum of floors Σξ = " + std::to_string(input.floor_sum()) +
                               " exceeds (1−s)N = " + fmt_double(budget_remaining) + " (s = " +
                               fmt_double(input.target_sparsity) + ", N = " + std::to_string(input.total_params()) + ")");
    }
    const double omega = input.omega_sum();
    const double alpha = compute_alpha(input.target_sparsity, n, omega);
    const std::size_t count = input.layers.size();

    Coordinates c;
    c.scale.resize(count);
    c.lo.resize(count);
    c.hi.resize(count);
    double lambda_lo = std::numeric_limits<double>::infinity();
    double lambda_hi = -std::numeric_limits<double>::infinity();
    double scaled_sum = 0.0;
    for (std::size_t l = 0; l < count; ++l) {
        const LayerBudget& b = input.layers[l];
        c.scale[l] = alpha * b.omega;
        c.lo[l] = static_cast<double>(b.min_remaining) / c.scale[l] - 1.0;
        c.hi[l] = static_cast<double>(b.params) / c.scale[l] - 1.0;
        lambda_lo = std::min(lambda_lo, c.lo[l] / c.scale[l]);
        lambda_hi = std::max(lambda_hi, c.hi[l] / c.scale[l]);
        scaled_sum += c.scale[l];
    }
    // sum scale_l (1 + eps_l) = (1 - s) N  <=>  sum scale_l eps_l = target.
    const double target = budget_remaining - scaled_sum;
    const double tolerance = kResidualTolerance * n;

    for (int k = 0; k < 64 && c.budget(lambda_lo) > target; ++k) lambda_lo -= std::max(1.0, std::abs(lambda_lo));
    for (int k = 0; k < 64 && c.budget(lambda_hi) < target; ++k) lambda_hi += std::max(1.0, std::abs(lambda_hi));

    std::size_t iterations = 0;
    double lambda = 0.5 * (lambda_lo + lambda_hi);
    double residual = std::abs(c.budget(lambda) - target);
    while (iterations < kMaxIterations) {
        ++iterations;
        lambda = 0.5 * (lambda_lo + lambda_hi);
        const double g = c.budget(lambda);
        residual = std::abs(g - target);
        if (g < target) {
            lambda_lo = lambda;
        } else if (g > target) {
            lambda_hi = lambda;
        } else {
            break;
        }
        const double mid = 0.5 * (lambda_lo + lambda_hi);
        if (mid <= lambda_lo || mid >= lambda_hi) break;
    }

    std::vector<double> eps(count);
    for (std::size_t l = 0; l < count; ++l) eps[l] = c.epsilon(l, lambda);

    // Exact multiplier on the active set found by bisection.
    double clipped = 0.0, free_norm = 0.0;
    std::vector<char> is_free(count, 0);
    for (std::size_t l = 0; l < count; ++l) {
        if (eps[l] > c.lo[l] && eps[l] < c.hi[l]) {
            is_free[l] = 1;
            free_norm += c.scale[l] * c.scale[l];
        } else {
            clipped += c.scale[l] * eps[l];
        }
    }
    if (free_norm > 0.0) {
        const double exact = (target - clipped) / free_norm;
        std::vector<double> polished = eps;
        bool inside = true;
        for (std::size_t l = 0; l < count && inside; ++l) {
            if (!is_free[l]) continue;
            polished[l] = exact * c.scale[l];
            inside = polished[l] >= c.lo[l] && polished[l] <= c.hi[l];
        }
        if (inside) {
            double g = 0.0;
            for (std::size_t l = 0; l < count; ++l) g += c.scale[l] * polished[l];
            if (std::abs(g - target) <= residual) {
                eps = std::move(polished);
                residual = std::abs(g - target);
            }
        }
    }
    if (residual > tolerance) {
        throw numerical_error("allocation solver did not converge: residual " + fmt_double(residual) + " after " +
                              std::to_string(iterations) + " iterations");
    }

    SparsityPlan plan = finish_plan(input, AllocationMode::Layerwise, alpha, eps);
    plan.iterations = iterations;
    return plan;
}

SparsityPlan uniform_allocation(const AllocationInput& input) {
    validate(input);
    const double n = static_cast<double>(input.total_params());
    const double alpha = compute_alpha(input.target_sparsity, n, input.omega_sum());
    std::vector<double> eps;
    for (const auto& l : input.layers) {
        eps.push_back((1.0 - input.target_sparsity) * static_cast<double>(l.params) / (alpha * l.omega) - 1.0);
    }
    SparsityPlan plan = finish_plan(input, AllocationMode::Uniform, alpha, eps);
    for (auto& l : plan.layers) {
        l.remaining = (1.0 - input.target_sparsity) * static_cast<double>(l.params);
        l.sparsity = input.target_sparsity;
    }
    double total = 0.0;
    for (const auto& l : plan.layers) total += l.remaining;
    plan.achieved_total_remaining = total;
    plan.residual = std::abs(total - (1.0 - input.target_sparsity) * n);
    return plan;
}

SparsityPlan allocate(const AllocationInput& input, AllocationMode mode) {
    return mode == AllocationMode::Layerwise ? solve_allocation(input) : uniform_allocation(input);
}

std::vector<std::uint64_t> min_remaining_floors(const ModelGraph& g, const std::vector<std::string>& layer_ids,
                                                std::uint64_t multiplier) {
    const auto counts = count_params(g);
    std::vector<std::uint64_t> floors;
    for (const auto& id : layer_ids) {
        const std::size_t i = g.index_of(id);
        const LayerSpec& l = g.layers[i];
        if (!l.has_weights()) throw validation_error("layer '" + id + "' has no parameters to keep");
        const Shape& f = *l.filter_shape;
        const std::uint64_t per_channel = l.kind == LayerKind::Conv2d ? f[0] * f[1] * f[2] : f[0];
        floors.push_back(std::min<std::uint64_t>(multiplier * per_channel, counts.per_layer[i]));
    }
    return floors;
}

AllocationInput make_allocation_input(const ModelGraph& g, const CapacityProfile& profile, double target_sparsity,
                                      std::uint64_t floor_multiplier) {
    std::vector<std::string> ids;
    for (const auto& l : profile.layers) ids.push_back(l.id);
    const auto counts = count_params(g);
    const auto floors = min_remaining_floors(g, ids, floor_multiplier);
    AllocationInput input;
    input.target_sparsity = target_sparsity;
    for (std::size_t k = 0; k < ids.size(); ++k) {
        input.layers.push_back(LayerBudget{ids[k], counts.per_layer[g.index_of(ids[k])], profile.layers[k].omega, floors[k]});
    }
    validate(input);
    return input;
}

json to_json(const SparsityPlan& plan) {
    json doc;
    doc["mode"] = to_string(plan.mode);
    doc["target_sparsity"] = plan.target_sparsity;
    doc["alpha"] = plan.alpha;
    doc["layers"] = json::array();
    for (const auto& l : plan.layers) {
        doc["layers"].push_back({{"id", l.id},
                                 {"N_l", l.params},
                                 {"omega", l.omega},
                                 {"xi", l.min_remaining},
                                 {"epsilon", l.epsilon},
                                 {"s_l", l.sparsity},
                                 {"remaining", l.remaining}});
    }
    doc["achieved_total_remaining"] = plan.achieved_total_remaining;
    doc["solver"] = {{"iterations", plan.iterations}, {"residual", plan.residual}};
    doc["capacity_checksum"] = plan.source_checksum;
    return doc;
}

SparsityPlan sparsity_plan_from_json(const json& doc) {
    SparsityPlan plan;
    try {
        plan.mode = parse_allocation_mode(doc.value("mode", std::string("layerwise")));
        plan.target_sparsity = doc.at("target_sparsity").get<double>();
        plan.alpha = doc.at("alpha").get<double>();
        for (const auto& l : doc.at("layers")) {
            LayerAllocation a;
            a.id = l.at("id").get<std::string>();
            a.params = l.at("N_l").get<std::uint64_t>();
            a.omega = l.at("omega").get<double>();
            a.min_remaining = l.at("xi").get<std::uint64_t>();
            a.epsilon = l.at("epsilon").get<double>();
            a.sparsity = l.at("s_l").get<double>();
            a.remaining = l.at("remaining").get<double>();
            if (!(a.sparsity >= 0.0 && a.sparsity <= 1.0)) {
                throw validation_error("plan layer '" + a.id + "': s_l outside [0, 1]");
            }
            plan.layers.push_back(a);
        }
        plan.achieved_total_remaining = doc.at("achieved_total_remaining").get<double>();
        plan.iterations = doc.at("solver").at("iterations").get<std::size_t>();
        plan.residual = doc.at("solver").at("residual").get<double>();
        plan.source_checksum = doc.value("capacity_checksum", std::string());
    } catch (const json::exception& e) {
        throw validation_error(std::string("malformed plan: ") + e.what());
    }
    return plan;
}

std::string plan_checksum(const SparsityPlan& plan) { return sha256_hex(to_json(plan).dump()); }

}  // namespace prunekit
