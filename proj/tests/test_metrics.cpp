#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "semreach/metrics.hpp"
#include "semreach/worldgen.hpp"

using namespace semreach;

namespace {

Scenario open_world() {
    Scenario s;
    s.world = {{10, 10, 1.0, {0.0, 0.0}}, std::vector<ClassId>(100, kFreeClass)};
    s.task = {{0, 3}, 0.0, default_class_table()};
    s.start = {0, 0};
    return s;
}

// Straight run along row 0 with the given step modes.
MissionTrace straight_trace(const std::vector<StepMode>& modes) {
    MissionTrace tr;
    tr.scenario = open_world();
    for (int c = 0; c <= static_cast<int>(modes.size()); ++c) tr.states.push_back({0, c});
    for (std::size_t t = 0; t < modes.size(); ++t) {
        StepRecord r;
        r.state = tr.states[t];
        r.mode = modes[t];
        tr.steps.push_back(r);
    }
    tr.termination = tr.scenario.task.in_goal(tr.scenario.geometry(), tr.states.back()) ? Termination::goal : Termination::timeout;
    return tr;
}

LabelledMetrics item(bool ok, double len = 10.0, double explore = 0.0, bool map = true) {
    LabelledMetrics m;
    m.framework = "ours";
    m.alpha = 0.1;
    m.metrics.sr_map = map;
    m.metrics.sr_mission = ok;
    m.metrics.path_length_m = len;
    m.metrics.exploration_proportion = explore;
    m.metrics.termination = ok ? Termination::goal : Termination::stuck;
    return m;
}

}  // namespace

TEST(Score, CleanRun) {
    const auto m = score_mission(straight_trace({StepMode::exploit, StepMode::exploit, StepMode::exploit}));
    EXPECT_TRUE(m.sr_map);
    EXPECT_TRUE(m.sr_mission);
    EXPECT_DOUBLE_EQ(m.path_length_m, 3.0);
    EXPECT_EQ(m.exploration_proportion, 0.0);
    EXPECT_EQ(m.steps, 3u);
}

TEST(Score, OneExploreStepInThree) {
    const auto m = score_mission(straight_trace({StepMode::exploit, StepMode::explore, StepMode::exploit}));
    EXPECT_DOUBLE_EQ(m.exploration_proportion, 1.0 / 3.0);
}

TEST(Score, AnyMissedSetFailsMapSuccess) {
    auto tr = straight_trace({StepMode::exploit, StepMode::exploit, StepMode::exploit});
    tr.steps[1].covered = false;
    const auto m = score_mission(tr);
    EXPECT_FALSE(m.sr_map);
    EXPECT_TRUE(m.sr_mission);
}

TEST(Score, UnsafePathFailsMission) {
    auto tr = straight_trace({StepMode::exploit, StepMode::exploit, StepMode::exploit});
    tr.scenario.world.truth[tr.scenario.geometry().index({2, 2})] = 1;  // person 2 m from (0, 2)
    EXPECT_FALSE(score_mission(tr).sr_mission);
    auto short_tr = straight_trace({StepMode::exploit});
    EXPECT_FALSE(score_mission(short_tr).sr_mission);
}

TEST(Score, DiagonalLength) {
    auto tr = straight_trace({StepMode::exploit});
    tr.states[1] = {1, 1};
    EXPECT_DOUBLE_EQ(score_mission(tr).path_length_m, std::sqrt(2.0));
}

TEST(Score, GeometryMismatchThrows) {
    const auto tr = straight_trace({StepMode::exploit});
    auto other = tr.scenario;
    other.world.geometry.width = 20;
    EXPECT_THROW(score_mission(tr, other), std::invalid_argument);
}

TEST(Aggregate, RatesAndMeans) {
    std::vector<LabelledMetrics> v;
    for (int i = 0; i < 60; ++i) v.push_back(item(true, 42.5));
    v.push_back(item(false, 99.0, 0.5, false));
    const auto rows = aggregate(v);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].n, 61u);
    EXPECT_EQ(format_fixed2(rows[0].sr_mission_pct), "98.36");
    EXPECT_DOUBLE_EQ(*rows[0].path_len_m, 42.5);
    EXPECT_EQ(*rows[0].explore_pct, 0.0);
    EXPECT_EQ(*rows[0].path_len_se, 0.0);
}

TEST(Aggregate, WilsonMatchesQuadraticRoots) {
    std::vector<LabelledMetrics> v;
    for (int i = 0; i < 61; ++i) v.push_back(item(i < 55));
    const auto row = aggregate(v)[0];
    const double n = 61, ph = 55.0 / 61.0, z = 1.959963984540054, z2n = z * z / n;
    // (p - ph)^2 = z^2 p (1 - p) / n
    const double a = 1.0 + z2n, b = -(2.0 * ph + z2n), c = ph * ph;
    const double disc = std::sqrt(b * b - 4.0 * a * c);
    EXPECT_NEAR(row.ci_low, 100.0 * (-b - disc) / (2.0 * a), 1e-9);
    EXPECT_NEAR(row.ci_high, 100.0 * (-b + disc) / (2.0 * a), 1e-9);
}

TEST(Aggregate, GroupsAndOrder) {
    std::vector<LabelledMetrics> v;
    auto add = [&](const char* f, double a) {
        auto m = item(true);
        m.framework = f;
        m.alpha = a;
        v.push_back(m);
    };
    add("ua", std::nan(""));
    add("ui", 0.15);
    add("ours", 0.1);
    add("ui", 0.05);
    add("ours", 0.05);
    const auto rows = aggregate(v);
    ASSERT_EQ(rows.size(), 5u);
    EXPECT_EQ(rows[0].framework, "ours");
    EXPECT_EQ(rows[0].alpha, 0.05);
    EXPECT_EQ(rows[1].alpha, 0.1);
    EXPECT_EQ(rows[2].framework, "ui");
    EXPECT_EQ(rows[3].alpha, 0.15);
    EXPECT_EQ(rows[4].framework, "ua");
    EXPECT_TRUE(std::isnan(rows[4].alpha));
    EXPECT_NE(report_csv(rows).find("\nua,NA,1,"), std::string::npos);
}

TEST(Aggregate, PermutationInvariant) {
    Rng rng(3);
    std::vector<LabelledMetrics> v;
    for (int i = 0; i < 200; ++i) v.push_back(item(rng.bernoulli(0.8), 30.0 + 40.0 * rng.uniform(), rng.uniform(), rng.bernoulli(0.9)));
    const auto ref = report_csv(aggregate(v));
    for (int k = 0; k < 5; ++k) {
        for (std::size_t i = v.size() - 1; i > 0; --i) std::swap(v[i], v[rng.below(i + 1)]);
        EXPECT_EQ(report_csv(aggregate(v)), ref);
    }
}

TEST(Aggregate, NoSuccessesGivesNA) {
    const std::vector<LabelledMetrics> v{item(false), item(false)};
    const auto rows = aggregate(v);
    EXPECT_FALSE(rows[0].path_len_m);
    EXPECT_FALSE(rows[0].explore_pct);
    EXPECT_NE(report_csv(rows).find("ours,0.10,2,100.00,0.00,NA,NA,0.00,"), std::string::npos);
}

TEST(Format, FixedTwo) {
    EXPECT_EQ(format_fixed2(98.3606), "98.36");
    EXPECT_EQ(format_fixed2(-0.001), "0.00");
    EXPECT_EQ(format_fixed2(0.15), "0.15");
}
