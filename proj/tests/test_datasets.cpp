#include "consflow/datasets/generators.hpp"
#include "consflow/eval/wasserstein.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <set>

using namespace consflow;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& content) {
    fs::path p = fs::temp_directory_path() / ("consflow_test_" + name);
    std::ofstream(p) << content;
    return p;
}

std::string error_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const std::exception& e) {
        return e.what();
    }
    return "";
}

void expect_valid_split(const datasets::EventTable& t) {
    std::set<std::size_t> all;
    for (const auto* part : {&t.train, &t.val, &t.test}) all.insert(part->begin(), part->end());
    EXPECT_EQ(all.size(), t.size());
    EXPECT_EQ(t.train.size() + t.val.size() + t.test.size(), t.size());
    if (!all.empty()) {
        EXPECT_EQ(*all.rbegin(), t.size() - 1);
    }
}

/// First n rows of `table` with t in [lo, hi).
std::vector<double> slice_rows(const datasets::EventTable& table, double lo, double hi, std::size_t n) {
    std::vector<double> out;
    for (std::size_t r = 0; r < table.size() && out.size() < 2 * n; ++r) {
        if (table.t[r] >= lo && table.t[r] < hi) out.insert(out.end(), {table.x[2 * r], table.x[2 * r + 1]});
    }
    return out;
}

}  // namespace

// ----------------------------------------------------------------------------
// Pinwheel
// ----------------------------------------------------------------------------

TEST(Pinwheel, ShapeSplitAndDeterminism) {
    datasets::PinwheelSpec spec;
    spec.n = 2000;
    auto a = datasets::gen_pinwheel(spec, 3), b = datasets::gen_pinwheel(spec, 3), c = datasets::gen_pinwheel(spec, 4);
    EXPECT_EQ(a.dim, 2u);
    EXPECT_EQ(a.size(), 2000u);
    EXPECT_EQ(a.x.size(), 4000u);
    EXPECT_EQ(a.t, b.t);
    EXPECT_EQ(a.x, b.x);
    EXPECT_EQ(a.train, b.train);
    EXPECT_NE(a.x, c.x);
    EXPECT_EQ(a.train.size(), 1400u);
    EXPECT_EQ(a.val.size(), 300u);
    expect_valid_split(a);
    for (double t : a.t) {
        EXPECT_GE(t, 0.0);
        EXPECT_LE(t, 1.0);
    }
    EXPECT_EQ(a.provenance, "pinwheel:seed=3");
}

TEST(Pinwheel, RejectsSingleArm) {
    datasets::PinwheelSpec spec;
    spec.arms = 1;
    EXPECT_THROW(datasets::gen_pinwheel(spec, 0), std::invalid_argument);
}

TEST(Pinwheel, RotationIsLinearInTime) {
    // same seed, same stream: rotating the moving table back by its phase recovers the static table
    datasets::PinwheelSpec spec;
    spec.n = 2000;
    spec.rotation_rate = 0.0;
    auto fixed = datasets::gen_pinwheel(spec, 5);
    spec.rotation_rate = 0.37;
    auto moving = datasets::gen_pinwheel(spec, 5);
    ASSERT_EQ(fixed.t, moving.t);
    for (std::size_t r = 0; r < fixed.size(); ++r) {
        const double a = -2.0 * std::numbers::pi * spec.rotation_rate * moving.t[r];
        const double x = std::cos(a) * moving.x[2 * r] - std::sin(a) * moving.x[2 * r + 1];
        const double y = std::sin(a) * moving.x[2 * r] + std::cos(a) * moving.x[2 * r + 1];
        EXPECT_NEAR(x, fixed.x[2 * r], 1e-12);
        EXPECT_NEAR(y, fixed.x[2 * r + 1], 1e-12);
    }
}

TEST(Pinwheel, ZeroRotationGivesStaticMarginals) {
    datasets::PinwheelSpec spec;
    spec.n = 40000;
    spec.rotation_rate = 0.0;
    auto table = datasets::gen_pinwheel(spec, 7);
    // two disjoint clouds from the same time window set the two-sample noise floor
    auto early = slice_rows(table, 0.0, 0.1, 1024);
    ASSERT_EQ(early.size(), 2048u);
    std::vector<double> e1(early.begin(), early.begin() + 1024), e2(early.begin() + 1024, early.end());
    auto late = slice_rows(table, 0.9, 1.0, 512);
    ASSERT_EQ(late.size(), 1024u);
    const double floor_w2 = eval::wasserstein2_exact(e1, e2, 2);
    const double static_w2 = eval::wasserstein2_exact(e1, late, 2);

    // a half-arm rotation (0.1 turns over 0.4 time units) sits well above the floor
    spec.rotation_rate = 0.25;
    auto moving = datasets::gen_pinwheel(spec, 7);
    const double moving_w2 =
        eval::wasserstein2_exact(slice_rows(moving, 0.0, 0.1, 512), slice_rows(moving, 0.4, 0.5, 512), 2);
    EXPECT_LT(static_w2, 1.5 * floor_w2) << "floor " << floor_w2;
    EXPECT_GT(moving_w2, 2.0 * floor_w2) << "floor " << floor_w2;
}

// ----------------------------------------------------------------------------
// Snapshots
// ----------------------------------------------------------------------------

TEST(Snapshots, DefaultSpecLayout) {
    auto spec = datasets::default_snapshot_spec();
    ASSERT_EQ(spec.size(), 5u);
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_DOUBLE_EQ(spec[i].t, i / 4.0);
        EXPECT_EQ(spec[i].mixture.dim(), 5u);
    }
    auto ds = datasets::gen_snapshots(spec, 100, 40, 1);
    EXPECT_EQ(ds.dim, 5u);
    ASSERT_EQ(ds.snapshots.size(), 5u);
    EXPECT_EQ(ds.snapshots[2].rows(5), 100u);
    EXPECT_EQ(ds.snapshots[2].test_rows(5), 40u);
    auto again = datasets::gen_snapshots(spec, 100, 40, 1);
    EXPECT_EQ(again.snapshots[3].x, ds.snapshots[3].x);
}

TEST(Snapshots, ZeroCovarianceRowsEqualMean) {
    std::vector<datasets::SnapshotSpec> spec{{0.0, {{1.0}, {{1.0, -2.0}}, {{0.0, 0.0}}}},
                                             {1.0, {{1.0}, {{3.0, 0.5}}, {{0.0, 0.0}}}}};
    auto ds = datasets::gen_snapshots(spec, 20, 5, 2);
    for (std::size_t r = 0; r < 20; ++r) {
        EXPECT_EQ(ds.snapshots[0].x[2 * r], 1.0);
        EXPECT_EQ(ds.snapshots[0].x[2 * r + 1], -2.0);
        EXPECT_EQ(ds.snapshots[1].x[2 * r], 3.0);
    }
}

TEST(Snapshots, EmpiricalMeanWithinThreeStandardErrors) {
    auto spec = datasets::default_snapshot_spec(5, 0.5);
    const std::size_t n = 10000;
    auto ds = datasets::gen_snapshots(spec, n, 1, 3);
    const double se = 0.5 / std::sqrt(static_cast<double>(n));
    for (std::size_t i = 0; i < spec.size(); ++i) {
        for (std::size_t d = 0; d < 5; ++d) {
            double m = 0.0;
            for (std::size_t r = 0; r < n; ++r) m += ds.snapshots[i].x[r * 5 + d];
            EXPECT_NEAR(m / static_cast<double>(n), spec[i].mixture.means[0][d], 3.0 * se) << "snapshot " << i;
        }
    }
}

TEST(Snapshots, Errors) {
    auto spec = datasets::default_snapshot_spec(2);
    std::swap(spec[1].t, spec[2].t);
    EXPECT_THROW(datasets::gen_snapshots(spec, 10, 10, 1), std::invalid_argument);
    EXPECT_THROW(datasets::gen_snapshots({spec[0]}, 10, 10, 1), std::invalid_argument);
    auto mixed = datasets::default_snapshot_spec(2);
    mixed[1] = datasets::default_snapshot_spec(3)[1];
    EXPECT_THROW(datasets::gen_snapshots(mixed, 10, 10, 1), std::invalid_argument);
}

// ----------------------------------------------------------------------------
// Obstacle environments
// ----------------------------------------------------------------------------

TEST(Obstacles, DeterministicAndClearOfEndpoints) {
    datasets::ObstacleEnvSpec spec;
    for (unsigned seed = 0; seed < 20; ++seed) {
        auto a = datasets::gen_obstacle_env(spec, seed), b = datasets::gen_obstacle_env(spec, seed);
        ASSERT_EQ(a.obstacles.size(), 3u);
        for (std::size_t k = 0; k < 3; ++k) {
            EXPECT_EQ(a.obstacles[k].cx, b.obstacles[k].cx);
            EXPECT_EQ(a.obstacles[k].radius, b.obstacles[k].radius);
            const auto& o = a.obstacles[k];
            EXPECT_FALSE(datasets::obstacle_rejected(o, spec));
            EXPECT_GT(std::hypot(o.cx - spec.q0.mx, o.cy - spec.q0.my), o.radius);
            EXPECT_GT(std::hypot(o.cx - spec.q1.mx, o.cy - spec.q1.my), o.radius);
            EXPECT_GE(o.radius, spec.radius_lo);
            EXPECT_LE(o.radius, spec.radius_hi);
            EXPECT_GE(o.cx, spec.arena_lo);
            EXPECT_LE(o.cy, spec.arena_hi);
        }
    }
}

TEST(Obstacles, RejectionRule) {
    datasets::ObstacleEnvSpec spec;
    EXPECT_TRUE(datasets::obstacle_rejected({spec.q0.mx, spec.q0.my, 0.5}, spec));
    EXPECT_TRUE(datasets::obstacle_rejected({spec.q1.mx + 0.5, spec.q1.my, 0.3}, spec));
    // clearance: outside the radius but within radius + 2 std
    EXPECT_TRUE(datasets::obstacle_rejected({spec.q0.mx + 1.0, spec.q0.my, 0.6}, spec));
    EXPECT_FALSE(datasets::obstacle_rejected({0.0, 0.0, 1.0}, spec));
}

TEST(Obstacles, FreeSpaceAndErrors) {
    datasets::ObstacleEnvSpec spec;
    spec.n_obstacles = 0;
    EXPECT_TRUE(datasets::gen_obstacle_env(spec, 1).obstacles.empty());

    datasets::ObstacleEnvSpec crowded;
    crowded.radius_lo = crowded.radius_hi = 20.0;
    EXPECT_NE(error_of([&] { datasets::gen_obstacle_env(crowded, 1); }).find("arena too crowded"), std::string::npos);

    datasets::ObstacleEnvSpec bad;
    bad.radius_lo = 0.0;
    EXPECT_THROW(datasets::gen_obstacle_env(bad, 1), std::invalid_argument);
    datasets::ObstacleEnvSpec outside;
    outside.q1 = {9.0, 0.0, 0.3};
    EXPECT_THROW(datasets::gen_obstacle_env(outside, 1), std::invalid_argument);
}

// ----------------------------------------------------------------------------
// CSV
// ----------------------------------------------------------------------------

TEST(EventsCsv, WellFormedFileInfersDimensionAndNormalizesTime) {
    auto p = temp_file("ok.csv", "t,x1,x2,x3\n2.0,1,2,3\n4.0,4,5,6\n\n3.0, 7 ,8,9\n");
    auto table = datasets::load_events_csv(p.string());
    EXPECT_EQ(table.dim, 3u);
    ASSERT_EQ(table.size(), 3u);
    EXPECT_EQ(table.t, (std::vector<double>{0.0, 1.0, 0.5}));
    EXPECT_EQ(table.x[6], 7.0);
    EXPECT_EQ(table.t_min, 2.0);
    EXPECT_EQ(table.t_max, 4.0);
    EXPECT_EQ(table.provenance, "file:" + p.string());
    expect_valid_split(table);
    fs::remove(p);
}

TEST(EventsCsv, ParseErrorsCarryLineNumbers) {
    auto p = temp_file("bad.csv", "t,x1\n0.5,abc\n");
    EXPECT_NE(error_of([&] { datasets::load_events_csv(p.string()); }).find("line 2"), std::string::npos);
    auto q = temp_file("short.csv", "t,x1,x2\n0.1,1,2\n0.2,3,4\n0.3,5\n");
    EXPECT_NE(error_of([&] { datasets::load_events_csv(q.string()); }).find("line 4"), std::string::npos);
    auto r = temp_file("nan.csv", "t,x1\n0.1,1\n0.2,nan\n");
    EXPECT_NE(error_of([&] { datasets::load_events_csv(r.string()); }).find("line 3"), std::string::npos);
    auto h = temp_file("header.csv", "time,x1\n0.1,1\n");
    EXPECT_NE(error_of([&] { datasets::load_events_csv(h.string()); }).find("line 1"), std::string::npos);
    auto e = temp_file("empty.csv", "t,x1\n");
    EXPECT_THROW(datasets::load_events_csv(e.string()), std::runtime_error);
    EXPECT_THROW(datasets::load_events_csv("/nonexistent/events.csv"), std::runtime_error);
    for (const auto& f : {p, q, r, h, e}) fs::remove(f);
}

TEST(EventsCsv, RoundTripPreservesValues) {
    datasets::PinwheelSpec spec;
    spec.n = 300;
    auto table = datasets::gen_pinwheel(spec, 9);
    table.t_min = -3.5;
    table.t_max = 12.25;
    fs::path p = fs::temp_directory_path() / "consflow_test_roundtrip.csv";
    datasets::save_events_csv(table, p.string());
    auto back = datasets::load_events_csv(p.string(), 9);
    ASSERT_EQ(back.size(), table.size());
    for (std::size_t i = 0; i < table.x.size(); ++i) EXPECT_NEAR(back.x[i], table.x[i], 1e-12);
    // min-max normalization of the written times recovers the table's own range
    const auto [mn, mx] = std::minmax_element(table.t.begin(), table.t.end());
    for (std::size_t r = 0; r < table.size(); ++r) {
        EXPECT_NEAR(back.t[r], (table.t[r] - *mn) / (*mx - *mn), 1e-12);
    }
    fs::remove(p);
}

TEST(EventsCsv, SplitIsSeededDisjointAndCovering) {
    datasets::EventTable t;
    t.dim = 1;
    t.t.assign(101, 0.5);
    t.x.assign(101, 0.0);
    datasets::split_table(t, 1);
    expect_valid_split(t);
    EXPECT_EQ(t.train.size(), 70u);
    EXPECT_EQ(t.val.size(), 15u);
    EXPECT_EQ(t.test.size(), 16u);
    auto first = t.train;
    datasets::split_table(t, 1);
    EXPECT_EQ(t.train, first);
    datasets::split_table(t, 2);
    EXPECT_NE(t.train, first);
    std::vector<double> ts, xs;
    t.gather({0, 5}, ts, xs);
    EXPECT_EQ(ts.size(), 2u);
    EXPECT_EQ(xs.size(), 2u);
}
