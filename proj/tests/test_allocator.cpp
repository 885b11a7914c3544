#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "prunekit/allocator.hpp"
#include "prunekit/error.hpp"
#include "support.hpp"

using namespace prunekit;

namespace {

AllocationInput make_input(const std::vector<std::uint64_t>& n, const std::vector<double>& omega,
                           const std::vector<std::uint64_t>& xi, double s) {
    AllocationInput in;
    in.target_sparsity = s;
    for (std::size_t l = 0; l < n.size(); ++l) {
        in.layers.push_back(LayerBudget{"L" + std::to_string(l), n[l], omega[l], xi.empty() ? 0 : xi[l]});
    }
    return in;
}

AllocationInput random_instance(Rng& rng, bool floors = true) {
    const std::size_t L = 1 + rng.index(6);
    std::vector<std::uint64_t> n(L), xi(L, 0);
    std::vector<double> omega(L);
    for (std::size_t l = 0; l < L; ++l) {
        n[l] = 10 + rng.index(100000 - 10 + 1);
        omega[l] = rng.uniform(1e-3, 1000.0);
    }
    const double s = rng.uniform(0.0, 0.95);
    std::uint64_t total = 0;
    for (auto v : n) total += v;
    if (floors) {
        const double room = (1.0 - s) * static_cast<double>(total) * rng.uniform();
        for (std::size_t l = 0; l < L; ++l) {
            const double share = room * static_cast<double>(n[l]) / static_cast<double>(total) * rng.uniform();
            xi[l] = std::min<std::uint64_t>(n[l], static_cast<std::uint64_t>(share));
        }
    }
    return make_input(n, omega, xi, s);
}

std::vector<double> to_doubles(const AllocationInput& in, int which) {
    std::vector<double> out;
    for (const auto& l : in.layers) {
        out.push_back(which == 0 ? static_cast<double>(l.params) : which == 1 ? l.omega : static_cast<double>(l.min_remaining));
    }
    return out;
}

}  // namespace

TEST(Alpha, Examples) {
    EXPECT_DOUBLE_EQ(compute_alpha(0.5, 400, 4), 50.0);
    EXPECT_DOUBLE_EQ(compute_alpha(0.0, 400, 8), 50.0);
    EXPECT_DOUBLE_EQ(compute_alpha(0.3, 400, 400), 0.7);
}

TEST(NaiveSparsities, ProportionalImportanceIsUniform) {
    const auto s = naive_sparsities(make_input({100, 300}, {1, 3}, {}, 0.5));
    EXPECT_NEAR(s[0], 0.5, 1e-15);
    EXPECT_NEAR(s[1], 0.5, 1e-15);
}

TEST(NaiveSparsities, EqualImportance) {
    const auto s = naive_sparsities(make_input({100, 300}, {1, 1}, {}, 0.5));
    EXPECT_NEAR(s[0], 0.0, 1e-15);
    EXPECT_NEAR(s[1], 2.0 / 3.0, 1e-15);
}

TEST(NaiveSparsities, CanLeaveUnitInterval) {
    const auto s = naive_sparsities(make_input({100, 300}, {3, 1}, {}, 0.5));
    EXPECT_NEAR(s[0], -0.5, 1e-15);
    EXPECT_NEAR(s[1], 5.0 / 6.0, 1e-15);
}

TEST(Feasibility, Examples) {
    EXPECT_TRUE(check_feasible(make_input({200, 200}, {1, 1}, {10, 10}, 0.9)));
    EXPECT_FALSE(check_feasible(make_input({200, 200}, {1, 1}, {30, 30}, 0.9)));
    EXPECT_TRUE(check_feasible(make_input({200, 200}, {1, 1}, {0, 0}, 0.99)));
}

TEST(SolveAllocation, UnclippedCaseHasZeroPerturbation) {
    const auto plan = solve_allocation(make_input({100, 300}, {1, 1}, {0, 0}, 0.5));
    EXPECT_NEAR(plan.layers[0].epsilon, 0.0, 1e-12);
    EXPECT_NEAR(plan.layers[1].epsilon, 0.0, 1e-12);
    EXPECT_NEAR(plan.layers[0].sparsity, 0.0, 1e-12);
    EXPECT_NEAR(plan.layers[1].sparsity, 2.0 / 3.0, 1e-12);
}

TEST(SolveAllocation, ClippedCaseKkt) {
    const auto plan = solve_allocation(make_input({100, 300}, {3, 1}, {0, 0}, 0.5));
    EXPECT_NEAR(plan.layers[0].epsilon, -1.0 / 3.0, 1e-9);
    EXPECT_NEAR(plan.layers[1].epsilon, 1.0, 1e-9);
    EXPECT_NEAR(plan.layers[0].remaining, 100.0, 1e-9);
    EXPECT_NEAR(plan.layers[1].remaining, 100.0, 1e-9);
    EXPECT_NEAR(plan.layers[0].sparsity, 0.0, 1e-9);
    EXPECT_NEAR(plan.layers[1].sparsity, 2.0 / 3.0, 1e-9);
}

TEST(SolveAllocation, ClippedCaseAgreesWithEpsilonGrid) {
    // eps_2 is eliminated through the budget; scan eps_1 over its box.
    const double alpha = 0.5 * 400 / 4, a1 = 3 * alpha, a2 = alpha, budget = 200.0;
    double best = std::numeric_limits<double>::infinity(), best1 = 0, best2 = 0;
    const double lo1 = -1.0, hi1 = 100.0 / a1 - 1.0;
    const int steps = 2000000;
    for (int k = 0; k <= steps; ++k) {
        const double e1 = lo1 + (hi1 - lo1) * k / steps;
        const double e2 = (budget - a1 * (1 + e1)) / a2 - 1.0;
        if (e2 < -1.0 || e2 > 300.0 / a2 - 1.0) continue;
        const double f = e1 * e1 + e2 * e2;
        if (f < best) {
            best = f;
            best1 = e1;
            best2 = e2;
        }
    }
    const auto plan = solve_allocation(make_input({100, 300}, {3, 1}, {0, 0}, 0.5));
    EXPECT_NEAR(plan.layers[0].epsilon, best1, 1e-5);
    EXPECT_NEAR(plan.layers[1].epsilon, best2, 1e-5);
}

TEST(SolveAllocation, SingleLayerGetsTargetExactly) {
    for (double omega : {0.01, 1.0, 77.0}) {
        const auto plan = solve_allocation(make_input({1234}, {omega}, {0}, 0.37));
        EXPECT_NEAR(plan.layers[0].sparsity, 0.37, 1e-12);
    }
}

TEST(SolveAllocation, InfeasibleReportsBothSides) {
    try {
        solve_allocation(make_input({200, 200}, {1, 1}, {30, 30}, 0.9));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Infeasible);
        const std::string msg = e.what();
        EXPECT_NE(msg.find("Σξ = 60"), std::string::npos) << msg;
        EXPECT_NE(msg.find("(1−s)N = 40"), std::string::npos) << msg;
    }
}

TEST(SolveAllocation, InvalidInputsRejected) {
    EXPECT_THROW(solve_allocation(make_input({100}, {1}, {0}, 1.0)), Error);
    EXPECT_THROW(solve_allocation(make_input({100}, {0}, {0}, 0.5)), Error);
    EXPECT_THROW(solve_allocation(make_input({100}, {1}, {101}, 0.5)), Error);
    EXPECT_THROW(solve_allocation(AllocationInput{}), Error);
}

TEST(SolveAllocation, MatchesBreakpointOracle) {
    Rng rng(2024);
    for (int trial = 0; trial < 300; ++trial) {
        const AllocationInput in = random_instance(rng);
        const auto plan = solve_allocation(in);
        const auto oracle = pktest::breakpoint_allocation(to_doubles(in, 0), to_doubles(in, 1), to_doubles(in, 2),
                                                          in.target_sparsity);
        for (std::size_t l = 0; l < in.layers.size(); ++l) {
            EXPECT_NEAR(plan.layers[l].epsilon, oracle.epsilon[l], 1e-6) << "trial " << trial << " layer " << l;
        }
    }
}

TEST(SolveAllocation, BudgetIdentityAndBoxes) {
    Rng rng(77);
    for (int trial = 0; trial < 300; ++trial) {
        const AllocationInput in = random_instance(rng);
        const auto plan = solve_allocation(in);
        const double n = static_cast<double>(in.total_params());
        double pruned = 0.0;
        for (const auto& l : plan.layers) {
            pruned += l.sparsity * static_cast<double>(l.params);
            EXPECT_GE(l.remaining, static_cast<double>(l.min_remaining) - 1e-9);
            EXPECT_LE(l.remaining, static_cast<double>(l.params) + 1e-9);
        }
        EXPECT_LE(std::abs(pruned - in.target_sparsity * n), 1e-6 * n);
        EXPECT_LE(plan.residual, 1e-10 * n);
    }
}

TEST(SolveAllocation, UniformWhenImportanceProportionalToSize) {
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        AllocationInput in = random_instance(rng, false);
        const double c = rng.uniform(1e-3, 10.0);
        for (auto& l : in.layers) l.omega = c * static_cast<double>(l.params);
        for (const auto& l : solve_allocation(in).layers) EXPECT_NEAR(l.sparsity, in.target_sparsity, 1e-12);
    }
}

TEST(SolveAllocation, ImportanceScaleInvariance) {
    Rng rng(6);
    for (int trial = 0; trial < 100; ++trial) {
        AllocationInput in = random_instance(rng);
        const auto base = solve_allocation(in);
        const double c = rng.uniform(1e-3, 1e3);
        for (auto& l : in.layers) l.omega *= c;
        const auto scaled = solve_allocation(in);
        for (std::size_t l = 0; l < in.layers.size(); ++l) {
            EXPECT_NEAR(scaled.layers[l].sparsity, base.layers[l].sparsity, 1e-12);
        }
    }
}

TEST(SolveAllocation, RemainingNonincreasingInTarget) {
    Rng rng(8);
    int violations = 0;
    for (int trial = 0; trial < 100; ++trial) {
        AllocationInput in = random_instance(rng, false);
        in.target_sparsity = 0.1;
        auto prev = solve_allocation(in);
        for (double s = 0.2; s < 0.95; s += 0.1) {
            in.target_sparsity = s;
            const auto next = solve_allocation(in);
            for (std::size_t l = 0; l < in.layers.size(); ++l) {
                violations += next.layers[l].remaining > prev.layers[l].remaining + 1e-9;
            }
            prev = next;
        }
    }
    EXPECT_EQ(violations, 0);
}

TEST(UniformAllocation, EveryLayerGetsTarget) {
    const auto plan = uniform_allocation(make_input({100, 300, 50}, {5, 1, 2}, {90, 0, 0}, 0.5));
    for (const auto& l : plan.layers) {
        EXPECT_DOUBLE_EQ(l.sparsity, 0.5);
        EXPECT_DOUBLE_EQ(l.remaining, 0.5 * static_cast<double>(l.params));
    }
    EXPECT_EQ(plan.mode, AllocationMode::Uniform);
}

TEST(Floors, SimpleCnnRules) {
    const ModelGraph g = simple_cnn_architecture();
    EXPECT_EQ(min_remaining_floors(g, {"Conv2", "FC1"}), (std::vector<std::uint64_t>{864, 6144}));
    EXPECT_EQ(min_remaining_floors(g, {"Conv2", "FC1"}, 0), (std::vector<std::uint64_t>{0, 0}));
    EXPECT_THROW(min_remaining_floors(g, {"Maxpool1"}), Error);
}

TEST(Floors, CappedAtLayerSize) {
    ModelGraph g;
    g.input_shape = Shape{4};
    g.num_classes = 2;
    g.layers = {pktest::fc_layer("A", 4, 1, true, Activation::Relu), pktest::fc_layer("B", 1, 2, false, Activation::Softmax)};
    pktest::fill_random(g, 1);
    EXPECT_EQ(min_remaining_floors(g, {"A"}), (std::vector<std::uint64_t>{5}));
}

TEST(PlanJson, RoundTripAndChecksum) {
    const auto plan = solve_allocation(make_input({100, 300}, {3, 1}, {10, 20}, 0.5));
    const auto doc = to_json(plan);
    for (const char* key : {"target_sparsity", "alpha", "layers", "achieved_total_remaining", "solver"}) {
        EXPECT_TRUE(doc.contains(key)) << key;
    }
    const auto back = sparsity_plan_from_json(doc);
    ASSERT_EQ(back.layers.size(), 2u);
    EXPECT_EQ(back.layers[1].sparsity, plan.layers[1].sparsity);
    EXPECT_EQ(back.layers[0].min_remaining, 10u);
    EXPECT_EQ(plan_checksum(back), plan_checksum(plan));
}
