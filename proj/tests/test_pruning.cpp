#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "prunekit/error.hpp"
#include "prunekit/pruning.hpp"
#include "support.hpp"

using namespace prunekit;
using pktest::TempDir;

namespace {

SparsityPlan plan_of(const ModelGraph& g, const std::vector<std::pair<std::string, double>>& layers) {
    SparsityPlan plan;
    const LayerCounts counts = count_params(g);
    for (const auto& [id, s] : layers) {
        LayerAllocation a;
        a.id = id;
        a.params = counts.per_layer[g.index_of(id)];
        a.omega = 1.0;
        a.sparsity = s;
        a.remaining = (1.0 - s) * static_cast<double>(a.params);
        plan.layers.push_back(a);
    }
    return plan;
}

ModelGraph single_fc(std::size_t in, std::size_t out, std::vector<double> kernel) {
    ModelGraph g;
    g.input_shape = Shape{in};
    g.num_classes = out;
    g.layers = {pktest::fc_layer("L", in, out, true, Activation::None)};
    g.weights["L"] = LayerWeights{Tensor(Shape{in, out}, std::move(kernel)), Tensor(Shape{out}, 0.25)};
    return g;
}

// conv A -> conv B -> pool -> flatten -> fc Out, all but Out prunable.
ModelGraph two_conv_chain(std::uint64_t seed, std::size_t c1 = 8, std::size_t c2 = 8) {
    ModelGraph g;
    g.input_shape = Shape{6, 6, 3};
    g.num_classes = 4;
    g.layers = {pktest::conv_layer("A", 3, 3, c1, true), pktest::conv_layer("B", 3, c1, c2, true),
                pktest::pool_layer("P"), pktest::flatten_layer("F"),
                pktest::fc_layer("Out", 9 * c2, 4, false, Activation::Softmax)};
    pktest::fill_random(g, seed);
    validate(g);
    return g;
}

CapacityProfile flat_profile(const std::vector<std::pair<std::string, double>>& omegas) {
    CapacityProfile p;
    for (const auto& [id, omega] : omegas) {
        LayerCapacity c;
        c.id = id;
        c.omega = omega;
        c.mu = 1.0 / std::sqrt(omega);
        p.layers.push_back(c);
        p.omega_sum += omega;
        p.inverse_square_sum += omega;
    }
    return p;
}

// Test-side view of channel removal: the original model with the consumer's
// input slices for removed channels zeroed must compute the same function.
ModelGraph zero_consumer_slices(const ModelGraph& g, const std::string& producer, const std::vector<std::size_t>& removed) {
    ModelGraph z = g;
    const std::size_t pi = g.index_of(producer);
    const std::size_t ci = *next_weighted_layer(g, pi);
    const LayerSpec& consumer = g.layers[ci];
    const std::size_t channels = g.layers[pi].out_channels();
    Tensor& k = z.weights_of(consumer.id).kernel;
    if (consumer.kind == LayerKind::Conv2d) {
        const std::size_t cout = (*consumer.filter_shape)[3];
        for (std::size_t i = 0; i < k.size(); ++i) {
            const std::size_t cin = (i / cout) % channels;
            if (std::find(removed.begin(), removed.end(), cin) != removed.end()) k[i] = 0.0;
        }
    } else {
        const std::size_t out = (*consumer.filter_shape)[1];
        for (std::size_t i = 0; i < k.size(); ++i) {
            const std::size_t row = i / out;
            if (std::find(removed.begin(), removed.end(), row % channels) != removed.end()) k[i] = 0.0;
        }
    }
    return z;
}

}  // namespace

TEST(WeightsToPrune, RoundsHalfAwayFromZero) {
    EXPECT_EQ(weights_to_prune(0.5, 4), 2u);
    EXPECT_EQ(weights_to_prune(0.125, 4), 1u);
    EXPECT_EQ(weights_to_prune(0.124, 4), 0u);
    EXPECT_EQ(weights_to_prune(1.0, 4), 4u);
    EXPECT_EQ(weights_to_prune(0.0, 4), 0u);
}

TEST(WeightMagnitude, PrunesTwoSmallest) {
    const ModelGraph g = single_fc(2, 2, {0.1, -0.5, 0.3, -0.2});
    const PruneResult r = prune_weights_magnitude(g, plan_of(g, {{"L", 0.5}}));
    const Tensor& k = r.model.weights_of("L").kernel;
    EXPECT_EQ(k[0], 0.0);
    EXPECT_EQ(k[1], -0.5);
    EXPECT_EQ(k[2], 0.3);
    EXPECT_EQ(k[3], 0.0);
    EXPECT_EQ(r.masks.at("L"), (std::vector<std::uint8_t>{0, 1, 1, 0}));
    EXPECT_EQ(r.model.weights_of("L").bias, g.weights_of("L").bias);
}

TEST(WeightMagnitude, ZeroSparsityIsIdentity) {
    const ModelGraph g = single_fc(2, 2, {0.1, -0.5, 0.3, -0.2});
    const PruneResult r = prune_weights_magnitude(g, plan_of(g, {{"L", 0.0}}));
    EXPECT_EQ(r.model, g);
    EXPECT_EQ(r.masks.at("L"), (std::vector<std::uint8_t>(4, 1)));
}

TEST(WeightMagnitude, TiesPruneLowerIndexFirst) {
    const ModelGraph g = single_fc(3, 1, {0.2, -0.2, 0.2});
    const PruneResult r = prune_weights_magnitude(g, plan_of(g, {{"L", 1.0 / 3.0}}));
    EXPECT_EQ(r.masks.at("L"), (std::vector<std::uint8_t>{0, 1, 1}));
}

TEST(WeightMagnitude, MagnitudeDominanceAndCounts) {
    Rng rng(4);
    for (int trial = 0; trial < 30; ++trial) {
        const ModelGraph g = pktest::small_chain(trial);
        const double s1 = rng.uniform(), s2 = rng.uniform(), s3 = rng.uniform();
        const SparsityPlan plan = plan_of(g, {{"C1", s1}, {"C2", s2}, {"H", s3}});
        const PruneResult r = prune_weights_magnitude(g, plan);
        std::uint64_t recount = 0;
        for (const auto& a : plan.layers) {
            const Tensor& before = g.weights_of(a.id).kernel;
            const Tensor& after = r.model.weights_of(a.id).kernel;
            const auto& mask = r.masks.at(a.id);
            ASSERT_EQ(mask.size(), before.size());
            double min_kept = INFINITY, max_pruned = 0.0;
            std::uint64_t kept = 0;
            for (std::size_t i = 0; i < mask.size(); ++i) {
                if (mask[i]) {
                    min_kept = std::min(min_kept, std::abs(before[i]));
                    kept += after[i] != 0.0;
                } else {
                    max_pruned = std::max(max_pruned, std::abs(before[i]));
                    EXPECT_EQ(after[i], 0.0);
                }
            }
            EXPECT_GE(min_kept, max_pruned);
            EXPECT_EQ(before.size() - kept, weights_to_prune(a.sparsity, before.size()));
            recount += kept + r.model.weights_of(a.id).bias.size();
            EXPECT_EQ(r.remaining_per_layer.at(a.id), kept + r.model.weights_of(a.id).bias.size());
        }
        EXPECT_EQ(r.achieved_remaining, recount);
        EXPECT_EQ(achieved_remaining(g, plan, PruneMethod::weight_magnitude()), recount);
    }
}

TEST(WeightMagnitude, MaskedAndDenseEvaluationAgree) {
    const ModelGraph g = pktest::small_chain(9);
    const PruneResult r = prune_weights_magnitude(g, plan_of(g, {{"C2", 0.6}, {"H", 0.8}}));
    ModelGraph dense = g;
    for (const auto& [id, mask] : r.masks) {
        for (std::size_t i = 0; i < mask.size(); ++i) {
            if (!mask[i]) dense.weights_of(id).kernel[i] = 0.0;
        }
    }
    const Dataset d = pktest::random_dataset(Shape{6, 6, 2}, 3, 10, 1);
    EXPECT_EQ(forward(r.model, d).logits, forward(dense, d).logits);
}

TEST(ChannelsToPrune, FloorOfFraction) {
    ModelGraph g;
    g.input_shape = Shape{4, 4, 1};
    g.num_classes = 2;
    g.layers = {pktest::conv_layer("A", 1, 1, 32, true), pktest::conv_layer("B", 1, 32, 10, true),
                pktest::fc_layer("Out", 160, 2, false, Activation::Softmax)};
    pktest::fill_random(g, 1);
    EXPECT_EQ(channels_to_prune(plan_of(g, {{"A", 0.5}}), g, "A"), 16u);
    EXPECT_EQ(channels_to_prune(plan_of(g, {{"B", 0.34}}), g, "B"), 3u);
    EXPECT_EQ(channels_to_prune(plan_of(g, {{"B", 0.0}}), g, "B"), 0u);
    EXPECT_EQ(channels_to_prune(plan_of(g, {{"B", 0.999}}), g, "B"), 9u);
}

TEST(ChannelL1, RemovesSmallestSum) {
    ModelGraph g;
    g.input_shape = Shape{2, 2, 1};
    g.num_classes = 2;
    g.layers = {pktest::conv_layer("A", 1, 1, 3, true), pktest::fc_layer("Out", 12, 2, false, Activation::Softmax)};
    pktest::fill_random(g, 2);
    g.weights["A"].kernel = Tensor(Shape{1, 1, 1, 3}, {5.0, -1.0, 3.0});
    const PruneResult r = prune_channels_l1(g, plan_of(g, {{"A", 0.4}}));
    EXPECT_EQ(r.removed_channels.at("A"), (std::vector<std::size_t>{1}));
    EXPECT_EQ(r.model.weights_of("A").kernel, Tensor(Shape{1, 1, 1, 2}, {5.0, 3.0}));
    EXPECT_EQ(*r.model.layer("Out").filter_shape, (Shape{8, 2}));
}

TEST(ChannelL1, TiesRemoveLowerIndex) {
    ModelGraph g;
    g.input_shape = Shape{2, 2, 1};
    g.num_classes = 2;
    g.layers = {pktest::conv_layer("A", 1, 1, 3, true), pktest::fc_layer("Out", 12, 2, false, Activation::Softmax)};
    pktest::fill_random(g, 2);
    g.weights["A"].kernel = Tensor(Shape{1, 1, 1, 3}, {2.0, -2.0, 2.0});
    EXPECT_EQ(prune_channels_l1(g, plan_of(g, {{"A", 0.4}})).removed_channels.at("A"), (std::vector<std::size_t>{0}));
}

TEST(ChannelL1, ConvToConvSliceCount) {
    ModelGraph g;
    g.input_shape = Shape{5, 5, 4};
    g.num_classes = 2;
    g.layers = {pktest::conv_layer("A", 3, 4, 8, true), pktest::conv_layer("B", 3, 8, 16, false),
                pktest::fc_layer("Out", 5 * 5 * 16, 2, false, Activation::Softmax)};
    pktest::fill_random(g, 3);
    const LayerCounts before = count_params(g);
    const PruneResult r = prune_channels_l1(g, plan_of(g, {{"A", 0.25}}));
    EXPECT_EQ(*r.model.layer("B").filter_shape, (Shape{3, 3, 6, 16}));
    const LayerCounts after = count_params(r.model);
    EXPECT_EQ(before.per_layer[1] - after.per_layer[1], 288u);
    EXPECT_EQ(before.per_layer[0] - after.per_layer[0], 2u * (3 * 3 * 4 + 1));
}

TEST(ChannelL1, ZeroChannelsIsBitIdentical) {
    const ModelGraph g = two_conv_chain(5);
    const PruneResult r = prune_channels_l1(g, plan_of(g, {{"A", 0.1}, {"B", 0.05}}));
    EXPECT_EQ(r.model, g);
    EXPECT_EQ(r.achieved_remaining, r.planned_params);
}

TEST(ChannelL1, PropagationPreservesFunctionOfKeptChannels) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const ModelGraph g = pktest::small_chain(seed, 6, 5, 6, 7, 3);
        const Dataset d = pktest::random_dataset(Shape{6, 6, 2}, 3, 5, seed);
        for (const char* id : {"C2", "H", "C1"}) {
            const PruneResult r = prune_channels_l1(g, plan_of(g, {{id, 0.45}}));
            const ModelGraph z = zero_consumer_slices(g, id, r.removed_channels.at(id));
            const Tensor a = forward(r.model, d).logits, b = forward(z, d).logits;
            for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12) << id;
        }
    }
}

TEST(ChannelPruning, OutputLayerCannotLoseChannels) {
    ModelGraph g = pktest::small_chain(1);
    g.layers.back().prunable = true;
    try {
        prune_channels_l1(g, plan_of(g, {{"Out", 0.5}}));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Validation);
    }
}

TEST(ChannelPruning, NonPrunableLayerRejected) {
    const ModelGraph g = pktest::small_chain(1);
    EXPECT_THROW(prune_channels_l1(g, plan_of(g, {{"Out", 0.5}})), Error);
}

TEST(ChannelRandom, SameSeedSameResult) {
    const ModelGraph g = two_conv_chain(6);
    const SparsityPlan plan = plan_of(g, {{"A", 0.5}, {"B", 0.5}});
    const PruneResult a = prune_channels_random(g, plan, 17);
    const PruneResult b = prune_channels_random(g, plan, 17);
    EXPECT_EQ(a.model, b.model);
    EXPECT_EQ(a.removed_channels, b.removed_channels);
    bool differs = false;
    for (std::uint64_t s = 18; s < 30 && !differs; ++s) {
        differs = prune_channels_random(g, plan, s).removed_channels != a.removed_channels;
    }
    EXPECT_TRUE(differs);
}

TEST(ChannelRandom, FloorLeavesThreeChannels) {
    ModelGraph g;
    g.input_shape = Shape{4, 4, 4};
    g.num_classes = 2;
    g.layers = {pktest::conv_layer("A", 3, 4, 10, true), pktest::fc_layer("Out", 160, 2, false, Activation::Softmax)};
    pktest::fill_random(g, 7);
    AllocationInput in;
    in.layers.push_back(LayerBudget{"A", 370, 1.0, min_remaining_floors(g, {"A"})[0]});
    EXPECT_EQ(in.layers[0].min_remaining, 108u);
    in.target_sparsity = 1.0 - 108.0 / 370.0;
    const SparsityPlan plan = solve_allocation(in);
    const PruneResult r = prune_channels_random(g, plan, 3);
    EXPECT_EQ(r.model.layer("A").out_channels(), 3u);
}

TEST(AchievedRemaining, ZeroSparsityKeepsEverything) {
    const ModelGraph g = two_conv_chain(2);
    const SparsityPlan plan = plan_of(g, {{"A", 0.0}, {"B", 0.0}});
    for (const auto& m : {PruneMethod::weight_magnitude(), PruneMethod::channel_l1(), PruneMethod::channel_random(1)}) {
        EXPECT_EQ(achieved_remaining(g, plan, m), plan.total_params());
    }
}

TEST(AchievedRemaining, ChannelPropagationOverPrunes) {
    const ModelGraph g = two_conv_chain(2);
    const SparsityPlan plan = allocate(make_allocation_input(g, flat_profile({{"A", 1.0}, {"B", 1.0}}), 0.5, 0),
                                       AllocationMode::Layerwise);
    double planned = 0.0;
    for (const auto& l : plan.layers) planned += l.remaining;
    EXPECT_LT(static_cast<double>(achieved_remaining(g, plan, PruneMethod::channel_l1())), planned);
}

TEST(AchievedRemaining, DryRunMatchesExecution) {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const ModelGraph g = pktest::small_chain(trial, 6, 3 + rng.index(5), 3 + rng.index(5), 4 + rng.index(6), 3);
        const SparsityPlan plan = plan_of(g, {{"C1", rng.uniform()}, {"C2", rng.uniform()}, {"H", rng.uniform()}});
        for (const auto& m : {PruneMethod::channel_l1(), PruneMethod::channel_random(trial)}) {
            const PruneResult r = prune(g, plan, m);
            EXPECT_EQ(achieved_remaining(g, plan, m), r.achieved_remaining);
            const LayerCounts before = count_params(g), after = count_params(r.model);
            EXPECT_EQ(r.achieved_remaining, after.total - (before.total - plan.total_params()));
            for (const auto& id : r.model.weighted_layer_ids()) {
                EXPECT_EQ(r.remaining_per_layer.at(id), after.per_layer[r.model.index_of(id)]);
            }
            EXPECT_TRUE(forward(r.model, pktest::random_dataset(Shape{6, 6, 2}, 3, 2, 1)).logits.all_finite());
        }
    }
}

TEST(Calibration, ZeroTargetIsIdentity) {
    const ModelGraph g = two_conv_chain(3);
    const Calibration c = calibrate_s_hat(g, flat_profile({{"A", 1.0}, {"B", 2.0}}), 0.0, PruneMethod::channel_l1());
    EXPECT_EQ(c.s_hat, 0.0);
    EXPECT_EQ(c.gap, 0.0);
}

TEST(Calibration, WeightMethodReturnsTarget) {
    const ModelGraph g = two_conv_chain(3);
    const Calibration c =
        calibrate_s_hat(g, flat_profile({{"A", 1.0}, {"B", 2.0}}), 0.5, PruneMethod::weight_magnitude());
    EXPECT_EQ(c.s_hat, 0.5);
}

TEST(Calibration, TwoConvChainAgainstScan) {
    const ModelGraph g = two_conv_chain(3, 16, 16);
    const CapacityProfile profile = flat_profile({{"A", 1.0}, {"B", 1.5}});
    const PruneMethod m = PruneMethod::channel_l1();
    const Calibration c = calibrate_s_hat(g, profile, 0.5, m);
    const double target = c.target_remaining;
    EXPECT_LT(c.s_hat, 0.5);
    EXPECT_GE(static_cast<double>(c.achieved), target);
    // Largest single-channel step of C over the planned layers.
    const double granule = std::max(3.0 * 3 * 3 + 1 + 3 * 3 * 16, 3.0 * 3 * 16 + 1 + 9 * 4);
    EXPECT_LE(c.gap, granule);
    const auto at = [&](double x) {
        return achieved_remaining(g, allocate(make_allocation_input(g, profile, x), AllocationMode::Layerwise), m);
    };
    double best = -1.0;
    std::uint64_t prev = at(0.0);
    for (int k = 0; k <= 500; ++k) {
        const double x = k * 1e-3;
        const std::uint64_t cx = at(x);
        EXPECT_LE(cx, prev);
        prev = cx;
        if (static_cast<double>(cx) >= target) best = x;
    }
    EXPECT_GE(c.s_hat, best - 1e-9);
    EXPECT_LT(static_cast<double>(at(c.s_hat + 1e-3)), target);
}

TEST(PruneIo, MasksAndProvenanceRoundTrip) {
    TempDir dir("prune_io");
    const ModelGraph g = pktest::small_chain(4);
    const PruneResult r = prune_weights_magnitude(g, plan_of(g, {{"C2", 0.3}, {"H", 0.7}}));
    save_prune_result(r, dir / "p.json");
    EXPECT_EQ(load_model(dir / "p.json"), r.model);
    EXPECT_EQ(load_masks(dir / "p.json"), r.masks);
    const auto doc = read_json_file(dir / "p.json");
    const auto& prov = doc.at("provenance");
    EXPECT_EQ(prov.at("method"), "weight-magnitude");
    EXPECT_TRUE(prov.at("seed").is_null());
    EXPECT_EQ(prov.at("plan_checksum"), r.plan_checksum);
    EXPECT_EQ(prov.at("achieved_sparsity").get<double>(), r.achieved_sparsity);
    EXPECT_EQ(prov.at("per_layer_counts").at("H").get<std::uint64_t>(), r.remaining_per_layer.at("H"));
}

TEST(PruneIo, ChannelPrunedManifestRecordsReducedShapes) {
    TempDir dir("prune_shapes");
    const ModelGraph g = two_conv_chain(4);
    const PruneResult r = prune_channels_random(g, plan_of(g, {{"A", 0.5}, {"B", 0.25}}), 9);
    save_prune_result(r, dir / "p.json");
    const auto doc = read_json_file(dir / "p.json");
    EXPECT_EQ(doc["layers"][0]["filter_shape"], nlohmann::json({3, 3, 3, 4}));
    EXPECT_EQ(doc["layers"][1]["filter_shape"], nlohmann::json({3, 3, 4, 6}));
    EXPECT_EQ(doc["layers"][4]["filter_shape"], nlohmann::json({54, 4}));
    EXPECT_EQ(doc["provenance"]["seed"], 9);
    EXPECT_EQ(load_model(dir / "p.json"), r.model);
    EXPECT_TRUE(load_masks(dir / "p.json").empty());
}

TEST(PruneIo, MaskPackingIsLsbFirst) {
    const std::vector<std::uint8_t> keep{1, 0, 0, 0, 0, 0, 0, 1, 1};
    const auto packed = pack_mask(keep);
    EXPECT_EQ(packed, (std::vector<std::uint8_t>{0x81, 0x01}));
    EXPECT_EQ(unpack_mask(packed, keep.size()), keep);
    EXPECT_THROW(unpack_mask(packed, 20), Error);
}

TEST(PruneMethodKind, ParseAndSeedRule) {
    EXPECT_EQ(parse_prune_kind("channel-l1"), PruneKind::ChannelL1);
    EXPECT_THROW(parse_prune_kind("l2"), Error);
    EXPECT_THROW(validate(PruneMethod{PruneKind::ChannelRandom, std::nullopt}), Error);
    EXPECT_THROW(validate(PruneMethod{PruneKind::ChannelL1, 3}), Error);
}
