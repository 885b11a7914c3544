#include "prunekit/capacity.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "prunekit/error.hpp"

namespace prunekit {

using nlohmann::json;

CapacityEstimate layer_capacity(std::span<const NormPair> samples, double kernel_frobenius_norm,
                                const std::string& layer_id) {
    if (!(kernel_frobenius_norm > 0.0) || !std::isfinite(kernel_frobenius_norm)) {
        throw validation_error("layer '" + layer_id + "': kernel Frobenius norm must be positive and finite");
    }
    CapacityEstimate est;
    for (const NormPair& s : samples) {
        if (s.input_norm < kZeroInputNorm) {
            ++est.skipped_zero_norm;
            continue;
        }
        est.mu = std::max(est.mu, s.output_norm / (kernel_frobenius_norm * s.input_norm));
        ++est.samples_used;
    }
    if (est.samples_used == 0) {
        throw numerical_error("layer '" + layer_id + "': no valid calibration sample (all " +
                              std::to_string(samples.size()) + " inputs have zero norm)");
    }
    return est;
}

const LayerCapacity& CapacityProfile::at(const std::string& id) const {
    for (const auto& l : layers) {
        if (l.id == id) return l;
    }
    throw validation_error("capacity profile has no layer '" + id + "'");
}

CapacityProfile capacity_profile(const ModelGraph& g, const Dataset& calib, const std::vector<std::string>& layer_ids) {
    if (calib.size() == 0) throw validation_error("calibration set is empty");
    if (layer_ids.empty()) throw validation_error("no layers selected for capacity measurement");
    const std::set<std::string> capture(layer_ids.begin(), layer_ids.end());
    const ForwardOutput fwd = forward(g, calib, capture);

    CapacityProfile profile;
    profile.model_checksum = model_checksum(g);
    for (const auto& id : layer_ids) {
        const auto& samples = fwd.trace.at(id);
        const double fro = frobenius_norm(g.weights_of(id).kernel);
        LayerCapacity lc;
        lc.id = id;
        if (fro > 0.0) {
            const CapacityEstimate est = layer_capacity(samples, fro, id);
            lc.mu = est.mu;
            lc.samples_used = est.samples_used;
            lc.skipped_zero_norm = est.skipped_zero_norm;
        } else {
            for (const auto& s : samples) {
                if (s.input_norm < kZeroInputNorm) {
                    ++lc.skipped_zero_norm;
                } else {
                    ++lc.samples_used;
                }
            }
        }
        if (lc.mu < kCapacityFloor) {
            profile.warnings.push_back("layer '" + id + "': capacity " + std::to_string(lc.mu) + " clamped to 1e-8");
            lc.mu = kCapacityFloor;
            lc.clamped = true;
        }
        lc.omega = 1.0 / (lc.mu * lc.mu);
        profile.omega_sum += lc.omega;
        profile.inverse_square_sum += 1.0 / (lc.mu * lc.mu);
        profile.layers.push_back(lc);
    }
    return profile;
}

json to_json(const CapacityProfile& profile) {
    json doc;
    doc["model_checksum"] = profile.model_checksum;
    doc["layers"] = json::array();
    for (const auto& l : profile.layers) {
        doc["layers"].push_back({{"id", l.id},
                                 {"mu", l.mu},
                                 {"omega", l.omega},
                                 {"samples_used", l.samples_used},
                                 {"skipped", l.skipped_zero_norm},
                                 {"clamped", l.clamped}});
    }
    doc["aggregates"] = {{"Omega", profile.omega_sum}, {"M", profile.inverse_square_sum}};
    doc["warnings"] = profile.warnings;
    doc["conventions"] = {{"importance", "omega = 1/mu^2"},
                          {"kernel_norm", "Frobenius norm of the stored kernel tensor"},
                          {"response", "bias-free pre-activation"},
                          {"mu_floor", kCapacityFloor}};
    return doc;
}

CapacityProfile capacity_profile_from_json(const json& doc) {
    CapacityProfile p;
    try {
        p.model_checksum = doc.value("model_checksum", std::string());
        for (const auto& l : doc.at("layers")) {
            LayerCapacity lc;
            lc.id = l.at("id").get<std::string>();
            lc.mu = l.at("mu").get<double>();
            lc.omega = l.at("omega").get<double>();
            lc.samples_used = l.value("samples_used", std::size_t{0});
            lc.skipped_zero_norm = l.value("skipped", std::size_t{0});
            lc.clamped = l.value("clamped", false);
            if (!(lc.mu > 0.0) || !(lc.omega > 0.0)) {
                throw validation_error("capacity report: layer '" + lc.id + "' has non-positive mu or omega");
            }
            p.omega_sum += lc.omega;
            p.inverse_square_sum += 1.0 / (lc.mu * lc.mu);
            p.layers.push_back(lc);
        }
        if (doc.contains("warnings")) p.warnings = doc.at("warnings").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw validation_error(std::string("malformed capacity report: ") + e.what());
    }
    if (p.layers.empty()) throw validation_error("capacity report lists no layers");
    return p;
}

}  // namespace prunekit
