#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace confine;

namespace {

ExperimentContext context() {
    ExperimentContext ctx;
    ctx.identity = confine::testing::shared_identity();
    return ctx;
}

const MemoryRun& find_run(const MemoryReport& r, const std::string& label) {
    for (const auto& run : r.runs) {
        if (run.label == label) {
            return run;
        }
    }
    throw std::out_of_range(label);
}

}  // namespace

TEST(Convergence, ScenarioDefaults) {
    auto s = generate_scenario_log(ScenarioParams{});
    RunOptions o;
    auto r = run_convergence(s.log, s.mapping, confine::testing::shared_identity(), o);
    EXPECT_TRUE(r.equal) << r.diff;
    ASSERT_TRUE(r.confine_net);
    EXPECT_EQ(r.confine_net->case_count, 1000u);
    EXPECT_TRUE(r.diff.empty());
}

TEST(Convergence, SingleOrg) {
    auto s = generate_scenario_log(ScenarioParams{.cases = 200, .org_count = 1});
    auto r = run_convergence(s.log, s.mapping, confine::testing::shared_identity(), RunOptions{});
    EXPECT_TRUE(r.equal) << r.diff;
}

TEST(Convergence, CareStyleSplit) {
    // Sepsis-shaped traces over the care-path activity names.
    auto map = sepsis_care_path_map();
    std::vector<std::string> acts;
    for (const auto& [a, _] : map) {
        acts.push_back(a);
    }
    std::mt19937_64 rng(71);
    auto log = confine::testing::random_log(rng, 300, acts, 20);
    auto parts = split_real_log(log, SplitScheme::sepsis_care_paths);
    EXPECT_EQ(parts.size(), 2u);
    std::size_t events = 0;
    for (const auto& [_, p] : parts) {
        events += p.event_count();
    }
    EXPECT_EQ(events, log.event_count());
    auto r = run_convergence(log, map, confine::testing::shared_identity(), RunOptions{});
    EXPECT_TRUE(r.equal) << r.diff;
}

TEST(Convergence, DiffNamesArcs) {
    HeuristicsNet a, b;
    a.arcs[{"x", "y"}] = ArcInfo{};
    b.arcs[{"x", "z"}] = ArcInfo{};
    auto d = diff_nets(a, b);
    EXPECT_NE(d.find("only in confine: x -> y"), std::string::npos);
    EXPECT_NE(d.find("only in standalone: x -> z"), std::string::npos);
    EXPECT_TRUE(diff_nets(a, a).empty());
}

TEST(MemoryExperiment, SegSizeSweepShape) {
    auto report = run_memory_experiment(MemoryPreset::segsize_sweep, context());
    ASSERT_EQ(report.runs.size(), 8u);
    std::size_t prev = 0;
    std::optional<std::size_t> flat;
    for (const auto& run : report.runs) {
        ASSERT_TRUE(run.result.net) << run.label;
        EXPECT_GE(run.result.peak, prev) << run.label;
        prev = run.result.peak;
        if (run.seg_size >= report.breakpoint) {
            if (!flat) {
                flat = run.result.peak;
            }
            EXPECT_EQ(run.result.peak, *flat) << run.label;
        }
    }
    EXPECT_TRUE(flat) << "sweep never reached the breakpoint " << report.breakpoint;
    auto csv = report.summary_csv();
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 9);
}

TEST(MemoryExperiment, ComputeOffReturnsToBaseline) {
    auto report = run_memory_experiment(MemoryPreset::with_without_compute, context());
    const auto& on = find_run(report, "with_compute");
    const auto& off = find_run(report, "without_compute");
    EXPECT_TRUE(on.result.net);
    EXPECT_FALSE(off.result.net);
    EXPECT_EQ(off.result.after_transmit, off.result.baseline);
    EXPECT_EQ(off.result.final_in_use, off.result.baseline);
    EXPECT_GT(on.result.after_transmit, on.result.baseline);
}

TEST(MemoryExperiment, CapacitySweepHalts) {
    auto report = run_memory_experiment(MemoryPreset::capacity_sweep, context());
    EXPECT_FALSE(find_run(report, "unbounded").result.memory_exceeded);
    const auto& sub = find_run(report, "sub_segment");
    EXPECT_TRUE(sub.result.memory_exceeded);
    EXPECT_NE(sub.result.error.find("enclave memory exceeded"), std::string::npos);
    EXPECT_TRUE(find_run(report, "cap_50").result.memory_exceeded);
    for (const auto& run : report.runs) {
        EXPECT_LE(run.result.peak, run.capacity) << run.label;
    }
}

TEST(MemoryExperiment, StageProfile) {
    auto report = run_memory_experiment(MemoryPreset::stage_profile, context());
    ASSERT_EQ(report.runs.size(), 1u);
    const auto& samples = report.runs[0].result.samples;
    ASSERT_FALSE(samples.empty());
    // Stages appear in protocol order.
    Stage last = Stage::init;
    for (const auto& s : samples) {
        EXPECT_GE(static_cast<int>(s.stage), static_cast<int>(last));
        last = s.stage;
    }
    EXPECT_EQ(last, Stage::compute);
    EXPECT_EQ(memory_preset_from_string("segsize_sweep"), MemoryPreset::segsize_sweep);
    EXPECT_FALSE(memory_preset_from_string("nope"));
}

TEST(Scalability, OrgsMonotoneAt100KiB) {
    ScaleGrid grid{{1, 2, 3, 4, 5, 6, 7, 8}, {100 * KiB}};
    auto report = run_scalability_suite(ScaleTest::orgs, context(), grid);
    ASSERT_EQ(report.cells.size(), 8u);
    EXPECT_TRUE(report.all_converged());
    for (std::size_t i = 1; i < report.cells.size(); ++i) {
        EXPECT_GT(report.cells[i].peak, report.cells[i - 1].peak) << "orgs " << report.cells[i].x;
    }
    ASSERT_EQ(report.series.size(), 1u);
    EXPECT_GT(report.series[0].stats.slope_hat, 0.0);
}

TEST(Scalability, SmallGridsConvergeAndReport) {
    auto ctx = context();
    ctx.scenario.cases = 64;
    for (auto [test, grid] : {std::pair{ScaleTest::events, ScaleGrid{{2, 4}, {4 * KiB, 64 * KiB}}},
                              std::pair{ScaleTest::cases, ScaleGrid{{5, 6, 7}, {8 * KiB}}}}) {
        auto report = run_scalability_suite(test, ctx, grid);
        EXPECT_EQ(report.cells.size(), grid.xs.size() * grid.seg_sizes.size());
        EXPECT_TRUE(report.all_converged()) << to_string(test);
        EXPECT_EQ(report.series.size(), grid.seg_sizes.size());
        auto j = nlohmann::json::parse(report.summary_json());
        EXPECT_EQ(j["test"], std::string(to_string(test)));
        EXPECT_TRUE(j["all_converged"].get<bool>());
        auto csv = report.cells_csv();
        EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), static_cast<long>(report.cells.size() + 1));
    }
}

TEST(Scalability, CasesAxisIsPowerOfTwo) {
    auto ctx = context();
    auto report = run_scalability_suite(ScaleTest::cases, ctx, ScaleGrid{{7}, {100 * KiB}});
    ASSERT_EQ(report.cells.size(), 1u);
    EXPECT_EQ(report.cells[0].x, 128.0);
    EXPECT_EQ(report.cells[0].cases, 128u);
    EXPECT_TRUE(report.series.empty());
    EXPECT_EQ(default_scale_grid(ScaleTest::cases).xs, (std::vector<int>{7, 8, 9, 10, 11, 12, 13}));
    EXPECT_EQ(scale_test_from_string("orgs"), ScaleTest::orgs);
}
