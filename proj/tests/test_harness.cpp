#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "semreach/harness.hpp"

using namespace semreach;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_experiment() {
    auto e = default_experiment();
    e.calibration.scenarios = 12;
    e.calibration.paths_per_scenario = 3;
    e.workers = 2;
    return e;
}

CampaignOptions small_campaign(std::size_t n) {
    CampaignOptions o;
    o.n_test = n;
    o.base_seed = 4;
    return o;
}

fs::path temp_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / ("semreach_test_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST(Calibrate, ArtifactShapeAndDeterminism) {
    const auto e = small_experiment();
    const auto a = calibrate(e, 10);
    EXPECT_EQ(a.scores.size(), 12u);
    EXPECT_EQ(a.paths_per_scenario, 3u);
    EXPECT_EQ(a.config_hash, config_hash(e));
    EXPECT_EQ(a.base_seed, 10u);
    for (std::size_t i = 0; i < a.scores.size(); ++i) {
        EXPECT_GE(a.scores[i], 0.0);
        EXPECT_LE(a.scores[i], 1.0);
        EXPECT_EQ(a.scores[i], 1.0 - a.true_probs[i]);
    }
    auto serial = e;
    serial.workers = 1;
    EXPECT_EQ(io::to_json(calibrate(serial, 10)).dump(), io::to_json(a).dump());
    EXPECT_NE(io::to_json(calibrate(e, 11)).dump(), io::to_json(a).dump());
}

TEST(Calibrate, IdentityModelGivesZeroQuantile) {
    auto e = small_experiment();
    e.sensor.true_confusion = ConfusionMatrix::identity(5);
    e.sensor.occlusion_confusion = 0.0;
    e.mapper.assumed_confusion = ConfusionMatrix::identity(5);
    const auto a = calibrate(e, 1);
    EXPECT_EQ(a.quantile, 0.0);
    EXPECT_EQ(a.threshold, 1.0);
}

TEST(Campaign, RowsAndPairing) {
    const auto e = small_experiment();
    const auto a = calibrate(e, 2);
    auto o = small_campaign(3);
    o.keep_traces = true;
    const auto r = run_campaign(e, a, o);
    EXPECT_EQ(r.rows.size(), 7u);
    EXPECT_EQ(r.missions.size(), 3u * 7u);
    EXPECT_EQ(r.errored(), 0u);
    EXPECT_EQ(r.violations(), 0u);
    EXPECT_FALSE(r.ood);
    for (const auto& row : r.rows) EXPECT_EQ(row.n, 3u);

    // Every framework sees the same world and the same first scan.
    for (std::size_t i = 0; i < 3; ++i) {
        const MissionTrace* first = nullptr;
        for (const auto& m : r.missions) {
            if (m.scenario_index != i) continue;
            ASSERT_TRUE(m.trace);
            if (!first) {
                first = &*m.trace;
                continue;
            }
            EXPECT_EQ(m.trace->scenario, first->scenario);
            EXPECT_EQ(m.trace->noise_seed, first->noise_seed);
            EXPECT_EQ(m.trace->steps.at(0).hits, first->steps.at(0).hits);
        }
    }
}

TEST(Campaign, WritesBundleAndReportRoundTrips) {
    const auto e = small_experiment();
    const auto a = calibrate(e, 2);
    auto o = small_campaign(1);
    o.keep_traces = true;
    const auto r = run_campaign(e, a, o);
    const auto dir = temp_dir("bundle");
    write_campaign(r, dir);
    std::size_t traces = 0;
    for (const auto& ent : fs::directory_iterator(dir / "traces")) {
        ++traces;
        std::ifstream in(ent.path());
        EXPECT_TRUE(verify_trace(io::read_trace(in)).empty()) << ent.path();
    }
    EXPECT_EQ(traces, 7u);
    EXPECT_TRUE(fs::exists(dir / "traces" / "ua_NA_0000.jsonl"));
    EXPECT_TRUE(fs::exists(dir / "traces" / "ours_0.10_0000.jsonl"));

    std::ifstream missions(dir / "missions.csv");
    const auto lm = read_missions_csv(missions);
    EXPECT_EQ(report_csv(aggregate(lm)), r.csv());
    std::ifstream report(dir / "report.csv");
    std::stringstream text;
    text << report.rdbuf();
    EXPECT_EQ(text.str(), r.csv());
    const auto summary = io::read_json_file((dir / "summary.json").string());
    EXPECT_EQ(summary.at("missions").get<std::size_t>(), 7u);
    EXPECT_EQ(summary.at("config_hash").get<std::string>(), config_hash(e));
    EXPECT_NE(report_svg(r.rows).find("<svg"), std::string::npos);
    fs::remove_all(dir);
}

TEST(Campaign, RefusesForeignArtifact) {
    const auto e = small_experiment();
    auto a = calibrate(e, 2);
    auto other = e;
    other.mapper.assumed_confusion = ConfusionMatrix::uniform_off_diagonal(5, 0.9);
    EXPECT_THROW(run_campaign(other, a, small_campaign(1)), std::invalid_argument);
    // Worker count is not part of the identity.
    auto more = e;
    more.workers = 3;
    EXPECT_NO_THROW(run_campaign(more, a, small_campaign(1)));
}

TEST(Ood, FlagAndPlainEquivalence) {
    const auto e = small_experiment();
    const auto a = calibrate(e, 2);
    const auto plain = run_campaign(e, a, small_campaign(2));
    const auto flagged = run_ood(e, a, small_campaign(2));
    EXPECT_TRUE(flagged.ood);
    EXPECT_EQ(flagged.csv(), plain.csv());

    auto shifted = e;
    shifted.distribution.ood.randomize_tree_layout = true;
    shifted.sensor.severity_scale = 0.3;
    EXPECT_TRUE(is_ood(shifted));
    EXPECT_EQ(config_hash(shifted), config_hash(e));
    const auto r = run_ood(shifted, a, small_campaign(2));
    EXPECT_EQ(r.errored(), 0u);
    EXPECT_EQ(r.violations(), 0u);
}

TEST(Campaign, FailedScenariosBecomeErroredRows) {
    auto e = small_experiment();
    e.distribution.min_separation_m = 66.0;
    e.distribution.max_retries = 1;
    std::vector<Score> scores(10, score_from_true_prob(0.5));
    auto a = make_artifact(scores, 0.1, CalibrationMode::marginal, std::nullopt);
    a.config_hash = config_hash(e);
    const auto r = run_campaign(e, a, small_campaign(30));
    EXPECT_GT(r.errored(), 0u);
    EXPECT_LT(r.errored(), r.missions.size());
    std::size_t counted = 0;
    for (const auto& row : r.rows) counted += row.n;
    EXPECT_EQ(counted + r.errored(), r.missions.size());
    EXPECT_NE(missions_csv(r.missions).find(",error,"), std::string::npos);
}

TEST(Workers, EnvOverrideAndExceptions) {
    ::setenv("SEMREACH_WORKERS", "3", 1);
    EXPECT_EQ(worker_count(7), 3u);
    ::unsetenv("SEMREACH_WORKERS");
    EXPECT_EQ(worker_count(7), 7u);
    EXPECT_GE(worker_count(0), 1u);

    std::vector<int> hit(100, 0);
    parallel_for(hit.size(), 4, [&](std::size_t i) { hit[i] = 1; });
    EXPECT_EQ(std::count(hit.begin(), hit.end(), 1), 100);
    EXPECT_THROW(parallel_for(10, 3,
                              [](std::size_t i) {
                                  if (i == 5) throw std::runtime_error("boom");
                              }),
                 std::runtime_error);
}

TEST(Seeds, StreamsAreSeparated) {
    EXPECT_NE(calibration_seed(1, 0), test_seed(1, 0));
    EXPECT_NE(test_seed(1, 0), test_seed(1, 1));
    EXPECT_NE(test_seed(1, 0), test_seed(2, 0));
    EXPECT_EQ(mission_noise(5).seed(), mission_noise(5).seed());
}
