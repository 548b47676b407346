#include <gtest/gtest.h>

#include <map>
#include <set>

#include "semreach/worldgen.hpp"

using namespace semreach;

TEST(SampleScenario, Deterministic) {
    const auto cfg = default_distribution();
    EXPECT_EQ(sample_scenario(cfg, 42), sample_scenario(cfg, 42));
    EXPECT_NE(sample_scenario(cfg, 42).world.truth, sample_scenario(cfg, 43).world.truth);
}

TEST(SampleScenario, EmptyWorld) {
    auto cfg = default_distribution();
    cfg.objects.clear();
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto s = sample_scenario(cfg, seed);
        EXPECT_TRUE(s.world.occupied_cells().empty());
        EXPECT_FALSE(scenario_violation(s));
        EXPECT_GE(s.geometry().distance(s.start, s.task.goal), cfg.min_separation_m);
    }
}

TEST(SampleScenario, DefaultThousandSeedsValid) {
    const auto cfg = default_distribution();
    const auto& k = cfg.classes;
    std::size_t near_trees = 0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const auto s = sample_scenario(cfg, seed);
        ASSERT_FALSE(scenario_violation(s)) << "seed " << seed << ": " << *scenario_violation(s);
        ASSERT_TRUE(path_satisfies_task(Path{s.start, s.start}, s.world, Task{s.start, 0.0, s.classes()}));
        ASSERT_TRUE(ground_truth_shortest_path(s).has_value()) << "seed " << seed;

        std::map<ClassId, int> counts;
        for (ClassId c : s.world.truth) ++counts[c];
        ASSERT_EQ(counts[*k.find("tree")], 9);
        ASSERT_EQ(counts[*k.find("car")], 2);
        ASSERT_EQ(counts[*k.find("truck")], 3);
        ASSERT_EQ(counts[*k.find("person")], 1);

        const auto& g = s.geometry();
        for (CellIndex j = 0; j < g.size(); ++j) {
            if (s.world.truth[j] != *k.find("person")) continue;
            const auto p = g.pos(j);
            bool near = false;
            for (int dr = -2; dr <= 2; ++dr)
                for (int dc = -2; dc <= 2; ++dc) {
                    const GridPos q{p.row + dr, p.col + dc};
                    near = near || (g.contains(q) && s.world.truth[g.index(q)] == *k.find("tree"));
                }
            near_trees += near;
        }
    }
    // Bias 0.7 plus the uniform share that lands near trees by chance.
    EXPECT_GT(near_trees, 650u);
    EXPECT_LT(near_trees, 850u);
}

TEST(SampleScenario, OodKeepsValidity) {
    auto cfg = default_distribution();
    cfg.ood.randomize_tree_layout = true;
    const auto tree = *cfg.classes.find("tree");
    std::set<int> counts;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto s = sample_scenario(cfg, seed);
        ASSERT_FALSE(scenario_violation(s));
        counts.insert(static_cast<int>(std::count(s.world.truth.begin(), s.world.truth.end(), tree)));
    }
    EXPECT_GE(*counts.begin(), cfg.ood.tree_count_min);
    EXPECT_LE(*counts.rbegin(), cfg.ood.tree_count_max);
    EXPECT_GT(counts.size(), 3u);
}

TEST(SampleScenario, OverDenseConfigNamesConstraint) {
    auto cfg = default_distribution();
    cfg.geometry = {12, 6, 1.0, {0.0, 0.0}};
    cfg.objects.clear();
    cfg.min_separation_m = 40.0;
    cfg.max_retries = 5;
    try {
        sample_scenario(cfg, 1);
        FAIL() << "expected a generation error";
    } catch (const GenerationError& e) {
        EXPECT_EQ(e.seed(), 1u);
        EXPECT_NE(std::string(e.what()).find("separation"), std::string::npos) << e.what();
    }
}

TEST(SampleBatch, FiftyDistinct) {
    const auto cfg = default_distribution();
    const auto b = sample_batch(cfg, 100, 50);
    ASSERT_EQ(b.size(), 50u);
    for (std::size_t i = 0; i < b.size(); ++i)
        for (std::size_t j = i + 1; j < b.size(); ++j) EXPECT_FALSE(b[i] == b[j]);
}

TEST(SampleBatch, SingletonAndPrefix) {
    const auto cfg = default_distribution();
    EXPECT_EQ(sample_batch(cfg, 7, 1).front(), sample_scenario(cfg, 7));
    const auto five = sample_batch(cfg, 7, 5);
    const auto ten = sample_batch(cfg, 7, 10);
    EXPECT_TRUE(std::equal(five.begin(), five.end(), ten.begin()));
    EXPECT_THROW(sample_batch(cfg, 7, 0), std::invalid_argument);
}
