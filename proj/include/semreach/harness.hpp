#pragma once
// Experiment orchestration: calibration campaigns, paired test campaigns
// over frameworks and alphas, persistence of reports and traces.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "semreach/conformal.hpp"
#include "semreach/io.hpp"
#include "semreach/mapper.hpp"
#include "semreach/metrics.hpp"
#include "semreach/planner.hpp"
#include "semreach/sensor.hpp"
#include "semreach/worldgen.hpp"

namespace semreach {

struct CalibrationSettings {
    std::size_t scenarios = 50;
    std::size_t paths_per_scenario = 10;
    CalibrationMode mode = CalibrationMode::marginal;
    std::optional<double> delta = 0.1;
    double alpha = 0.1;
};

struct ExperimentConfig {
    DistributionConfig distribution = default_distribution();
    SensorConfig sensor;
    MapperConfig mapper;
    PlannerConfig planner;
    CalibrationSettings calibration;
    unsigned workers = 0;  // 0: hardware concurrency

    void validate() const {
        distribution.validate();
        sensor.validate(distribution.classes);
        mapper.validate(distribution.classes);
        if (calibration.scenarios < 1) throw std::invalid_argument("calibration needs at least one scenario");
        if (calibration.paths_per_scenario < 1) throw std::invalid_argument("calibration needs at least one path per scenario");
        if (!(calibration.alpha > 0.0 && calibration.alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
        if (calibration.mode == CalibrationMode::dataset_conditional && !calibration.delta)
            throw std::invalid_argument("dataset-conditional calibration needs delta");
        if (planner.max_steps < 0) throw std::invalid_argument("max_steps must be non-negative");
    }
};

/// True labels are right 75% of the time; misreads go mostly to classes that
/// look alike (person as tree, truck as car). The mapper assumes a 95%
/// accurate sensor with errors spread evenly. A partly hidden cell reports
/// the class in front of it 80% of the time.
inline ExperimentConfig default_experiment() {
    ExperimentConfig e;
    const std::size_t n = e.distribution.classes.size();
    e.sensor.true_confusion = ConfusionMatrix(n, {
        0.75, 0.0625, 0.0625, 0.0625, 0.0625,  // free (only seen through misses)
        0.10, 0.75,   0.0,    0.0,    0.15,    // person
        0.10, 0.0,    0.75,   0.05,   0.10,    // car
        0.05, 0.0,    0.15,   0.75,   0.05,    // truck
        0.20, 0.0,    0.05,   0.0,    0.75,    // tree
    });
    e.sensor.occlusion_confusion = 0.8;
    e.mapper.assumed_confusion = ConfusionMatrix::uniform_off_diagonal(n, 0.95);
    return e;
}

// ---------------------------------------------------------------------------
// Config files

inline io::json to_json(const ExperimentConfig& e) {
    io::json cal{{"scenarios", e.calibration.scenarios},
                 {"paths_per_scenario", e.calibration.paths_per_scenario},
                 {"mode", io::to_string(e.calibration.mode)},
                 {"alpha", e.calibration.alpha}};
    cal["delta"] = e.calibration.delta ? io::json(*e.calibration.delta) : io::json(nullptr);
    return {{"schema_version", io::kSchemaVersion},
            {"distribution", io::to_json(e.distribution)},
            {"sensor", io::to_json(e.sensor)},
            {"mapper", io::to_json(e.mapper)},
            {"planner", io::to_json(e.planner)},
            {"calibration", cal},
            {"workers", e.workers}};
}

/// Missing keys keep the defaults of default_experiment().
inline ExperimentConfig experiment_from_json(const io::json& j) {
    if (j.contains("schema_version") && j.at("schema_version").get<int>() != io::kSchemaVersion)
        throw io::FormatError("experiment config: unsupported schema_version");
    ExperimentConfig e = default_experiment();
    if (j.contains("distribution")) e.distribution = io::distribution_from_json(j.at("distribution"), e.distribution);
    if (j.contains("sensor")) e.sensor = io::sensor_from_json(j.at("sensor"), e.sensor);
    if (j.contains("mapper")) e.mapper = io::mapper_from_json(j.at("mapper"), e.mapper);
    if (j.contains("planner")) e.planner = io::planner_from_json(j.at("planner"), e.planner);
    if (j.contains("calibration")) {
        const auto& c = j.at("calibration");
        io::detail::read_if(c, "scenarios", e.calibration.scenarios);
        io::detail::read_if(c, "paths_per_scenario", e.calibration.paths_per_scenario);
        if (c.contains("mode")) e.calibration.mode = io::mode_from_string(c.at("mode").get<std::string>());
        io::detail::read_if(c, "alpha", e.calibration.alpha);
        if (c.contains("delta"))
            e.calibration.delta = c.at("delta").is_null() ? std::nullopt : std::optional<double>(c.at("delta").get<double>());
    }
    io::detail::read_if(j, "workers", e.workers);
    e.validate();
    return e;
}

inline ExperimentConfig load_experiment(const std::string& path) { return experiment_from_json(io::read_json_file(path)); }

/// FNV-1a over the canonical JSON of everything that shapes the score
/// distribution. OOD toggles, severity and worker count are left out so an
/// in-distribution artifact can be applied to shifted test conditions.
inline std::string config_hash(const ExperimentConfig& e) {
    auto j = to_json(e);
    j.erase("workers");
    j["distribution"].erase("ood");
    j["sensor"].erase("severity_scale");
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
    return buf;
}

inline bool is_ood(const ExperimentConfig& e) {
    return e.distribution.ood.randomize_tree_layout || e.sensor.severity_scale > 0.0;
}

// ---------------------------------------------------------------------------
// Worker pool

/// SEMREACH_WORKERS overrides the config; 0 means hardware concurrency.
inline unsigned worker_count(unsigned configured = 0) {
    if (const char* env = std::getenv("SEMREACH_WORKERS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<unsigned>(v);
    }
    if (configured > 0) return configured;
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Calls f(i) for i in [0, n) on `workers` threads. Items are claimed from a
/// shared counter. The first exception is rethrown after all threads join.
template <class F>
void parallel_for(std::size_t n, unsigned workers, F&& f) {
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    auto run = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                f(i);
            } catch (...) {
                std::lock_guard lock(error_mu);
                if (!error) error = std::current_exception();
                next = n;
            }
        }
    };
    if (workers == 1) {
        run();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run);
        for (auto& t : pool) t.join();
    }
    if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Seeds

inline std::uint64_t calibration_seed(std::uint64_t base, std::size_t i) { return derive_seed(base, "calibration", i); }
inline std::uint64_t test_seed(std::uint64_t base, std::size_t i) { return derive_seed(base, "test", i); }
inline NoiseStream mission_noise(std::uint64_t scenario_seed) { return NoiseStream(derive_seed(scenario_seed, "mission")); }

// ---------------------------------------------------------------------------
// Calibration

class ScenarioError : public std::runtime_error {
public:
    ScenarioError(std::uint64_t seed, const std::string& what)
        : std::runtime_error("scenario seed " + std::to_string(seed) + ": " + what), seed_(seed) {}
    std::uint64_t seed() const noexcept { return seed_; }

private:
    std::uint64_t seed_;
};

/// Score of one calibration scenario. Paths and sensor noise are both derived
/// from the scenario seed.
inline Score calibration_score(const ExperimentConfig& e, const RangeSensor& sensor, std::uint64_t seed) {
    try {
        const auto s = sample_scenario(e.distribution, seed);
        Rng rng(derive_seed(seed, "paths"));
        const auto paths = generate_calibration_paths(s, e.calibration.paths_per_scenario, rng);
        return ncs_for_scenario(s, paths, sensor, e.mapper, NoiseStream(derive_seed(seed, "noise")));
    } catch (const GenerationError&) {
        throw;
    } catch (const std::exception& ex) {
        throw ScenarioError(seed, ex.what());
    }
}

inline CalibrationArtifact calibrate(const ExperimentConfig& e, std::uint64_t base_seed) {
    e.validate();
    const RangeSensor sensor(e.sensor, e.distribution.geometry.resolution);
    std::vector<Score> scores(e.calibration.scenarios);
    parallel_for(scores.size(), worker_count(e.workers),
                 [&](std::size_t i) { scores[i] = calibration_score(e, sensor, calibration_seed(base_seed, i)); });
    auto a = make_artifact(scores, e.calibration.alpha, e.calibration.mode, e.calibration.delta);
    a.paths_per_scenario = e.calibration.paths_per_scenario;
    a.config_hash = config_hash(e);
    a.base_seed = base_seed;
    return a;
}

// ---------------------------------------------------------------------------
// Test campaigns

struct CampaignOptions {
    std::vector<Framework> frameworks{Framework::ours, Framework::ui, Framework::ua};
    std::vector<double> alphas{0.05, 0.10, 0.15};
    std::size_t n_test = 200;
    std::uint64_t base_seed = 0;
    bool keep_traces = false;
};

struct MissionOutcome {
    std::size_t scenario_index = 0;
    std::uint64_t scenario_seed = 0;
    Framework framework = Framework::ours;
    double alpha = std::numeric_limits<double>::quiet_NaN();  // NaN for ua
    std::optional<MissionMetrics> metrics;                    // empty when errored
    std::string error;
    std::vector<std::string> violations;                      // from verify_trace
    std::optional<MissionTrace> trace;

    bool errored() const { return !metrics.has_value(); }
};

struct CampaignResult {
    std::vector<MissionOutcome> missions;
    std::vector<ReportRow> rows;
    bool ood = false;
    std::string config_hash;
    std::uint64_t base_seed = 0;

    std::string csv() const { return report_csv(rows); }
    std::size_t errored() const {
        return static_cast<std::size_t>(std::count_if(missions.begin(), missions.end(), [](const auto& m) { return m.errored(); }));
    }
    std::size_t violations() const {
        std::size_t v = 0;
        for (const auto& m : missions) v += m.violations.size();
        return v;
    }
};

struct MissionJob {
    Framework framework;
    double alpha;
};

/// ua does not depend on alpha and runs once per scenario.
inline std::vector<MissionJob> mission_jobs(const CampaignOptions& o) {
    std::vector<MissionJob> jobs;
    for (Framework f : o.frameworks) {
        if (f == Framework::ua) {
            jobs.push_back({f, std::numeric_limits<double>::quiet_NaN()});
            continue;
        }
        for (double a : o.alphas) jobs.push_back({f, a});
    }
    return jobs;
}

inline std::vector<LabelledMetrics> labelled_metrics(std::span<const MissionOutcome> missions) {
    std::vector<LabelledMetrics> out;
    for (const auto& m : missions)
        if (m.metrics) out.push_back({to_string(m.framework), m.alpha, *m.metrics});
    return out;
}

/// Every framework and alpha sees the same scenarios and the same sensor
/// noise stream per scenario. A mission that throws becomes an errored row.
inline CampaignResult run_campaign(const ExperimentConfig& e, const CalibrationArtifact& artifact, const CampaignOptions& o) {
    e.validate();
    if (o.n_test < 1) throw std::invalid_argument("run_campaign: n_test must be at least 1");
    const auto hash = config_hash(e);
    if (artifact.config_hash != hash)
        throw std::invalid_argument("calibration artifact was produced for config " + artifact.config_hash +
                                    ", not for this config (" + hash + ")");
    const auto jobs = mission_jobs(o);
    if (jobs.empty()) throw std::invalid_argument("run_campaign: nothing to run");
    std::vector<SetPolicy> policies;
    for (const auto& j : jobs) {
        switch (j.framework) {
            case Framework::ours: policies.push_back(SetPolicy::ours(artifact, j.alpha)); break;
            case Framework::ui: policies.push_back(SetPolicy::ui(j.alpha)); break;
            case Framework::ua: policies.push_back(SetPolicy::ua()); break;
        }
    }

    const unsigned workers = worker_count(e.workers);
    const RangeSensor sensor(e.sensor, e.distribution.geometry.resolution);
    std::vector<std::optional<Scenario>> scenarios(o.n_test);
    std::vector<std::string> scenario_errors(o.n_test);
    parallel_for(o.n_test, workers, [&](std::size_t i) {
        try {
            scenarios[i] = sample_scenario(e.distribution, test_seed(o.base_seed, i));
        } catch (const std::exception& ex) {
            scenario_errors[i] = ex.what();
        }
    });

    CampaignResult res;
    res.ood = is_ood(e);
    res.config_hash = hash;
    res.base_seed = o.base_seed;
    res.missions.resize(o.n_test * jobs.size());
    parallel_for(res.missions.size(), workers, [&](std::size_t w) {
        const std::size_t i = w / jobs.size(), k = w % jobs.size();
        auto& out = res.missions[w];
        out.scenario_index = i;
        out.scenario_seed = test_seed(o.base_seed, i);
        out.framework = jobs[k].framework;
        out.alpha = jobs[k].alpha;
        if (!scenarios[i]) {
            out.error = scenario_errors[i];
            return;
        }
        try {
            auto tr = run_mission(*scenarios[i], policies[k], sensor, e.mapper, e.planner, mission_noise(out.scenario_seed));
            out.violations = verify_trace(tr);
            out.metrics = score_mission(tr, *scenarios[i]);
            if (o.keep_traces) out.trace = std::move(tr);
        } catch (const std::exception& ex) {
            out.error = ex.what();
        }
    });
    const auto lm = labelled_metrics(res.missions);
    res.rows = aggregate(lm);
    return res;
}

/// Same as run_campaign; the report is flagged out-of-distribution.
inline CampaignResult run_ood(const ExperimentConfig& e, const CalibrationArtifact& artifact, const CampaignOptions& o) {
    auto r = run_campaign(e, artifact, o);
    r.ood = true;
    return r;
}

// ---------------------------------------------------------------------------
// Result bundle

inline std::string alpha_label(double a) { return std::isnan(a) ? std::string("NA") : format_fixed2(a); }

inline std::string trace_file_name(const MissionOutcome& m) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s_%s_%04zu.jsonl", to_string(m.framework), alpha_label(m.alpha).c_str(), m.scenario_index);
    return buf;
}

inline std::string missions_csv(std::span<const MissionOutcome> missions) {
    std::string out = "scenario,seed,framework,alpha,status,sr_map,sr_mission,path_len_m,explore_prop,termination,steps,violations\n";
    char num[64];
    for (const auto& m : missions) {
        out += std::to_string(m.scenario_index) + ',' + std::to_string(m.scenario_seed) + ',' + to_string(m.framework) + ',' +
               alpha_label(m.alpha) + ',';
        if (!m.metrics) {
            out += "error,,,,,,,\n";
            continue;
        }
        const auto& x = *m.metrics;
        out += std::string("ok,") + (x.sr_map ? "1" : "0") + ',' + (x.sr_mission ? "1" : "0") + ',';
        std::snprintf(num, sizeof num, "%.17g,", x.path_length_m);
        out += num;
        std::snprintf(num, sizeof num, "%.17g,", x.exploration_proportion);
        out += num;
        out += std::string(to_string(x.termination)) + ',' + std::to_string(x.steps) + ',' + std::to_string(m.violations.size()) + '\n';
    }
    return out;
}

/// Parses missions.csv back into labelled metrics; errored rows are skipped.
inline std::vector<LabelledMetrics> read_missions_csv(std::istream& in) {
    std::vector<LabelledMetrics> out;
    std::string line;
    if (!std::getline(in, line)) throw io::FormatError("missions.csv is empty");
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
        if (f.size() >= 5 && f[4] == "error") continue;
        if (f.size() != 12) throw io::FormatError("missions.csv line " + std::to_string(lineno) + ": expected 12 fields");
        LabelledMetrics m;
        m.framework = f[2];
        m.alpha = f[3] == "NA" ? std::numeric_limits<double>::quiet_NaN() : std::stod(f[3]);
        m.metrics.sr_map = f[5] == "1";
        m.metrics.sr_mission = f[6] == "1";
        m.metrics.path_length_m = std::stod(f[7]);
        m.metrics.exploration_proportion = std::stod(f[8]);
        m.metrics.termination = io::termination_from_string(f[9]);
        m.metrics.steps = std::stoul(f[10]);
        out.push_back(std::move(m));
    }
    return out;
}

/// Writes report.csv, missions.csv, summary.json and, if kept, traces/.
inline void write_campaign(const CampaignResult& r, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    io::write_text_file((dir / "report.csv").string(), r.csv());
    io::write_text_file((dir / "missions.csv").string(), missions_csv(r.missions));
    io::json errors = io::json::array();
    for (const auto& m : r.missions)
        if (m.errored())
            errors.push_back({{"scenario", m.scenario_index}, {"framework", to_string(m.framework)},
                              {"alpha", alpha_label(m.alpha)}, {"error", m.error}});
    io::write_json_file((dir / "summary.json").string(), {{"ood", r.ood},
                                                          {"config_hash", r.config_hash},
                                                          {"base_seed", r.base_seed},
                                                          {"missions", r.missions.size()},
                                                          {"errored", r.errored()},
                                                          {"violations", r.violations()},
                                                          {"errors", errors}});
    bool any_trace = false;
    for (const auto& m : r.missions) {
        if (!m.trace) continue;
        if (!any_trace) std::filesystem::create_directories(dir / "traces");
        any_trace = true;
        std::ofstream out(dir / "traces" / trace_file_name(m), std::ios::binary);
        if (!out) throw std::runtime_error("cannot write trace for scenario " + std::to_string(m.scenario_index));
        io::write_trace(out, *m.trace);
    }
}

/// Mission success rate against alpha for each alpha-dependent framework,
/// with alpha-free frameworks drawn as horizontal dashed lines.
inline std::string report_svg(std::span<const ReportRow> rows, bool ood = false) {
    constexpr double W = 640, H = 400, L = 60, R = 130, T = 40, B = 50;
    double amin = std::numeric_limits<double>::infinity(), amax = -amin;
    for (const auto& r : rows)
        if (!std::isnan(r.alpha)) {
            amin = std::min(amin, r.alpha);
            amax = std::max(amax, r.alpha);
        }
    if (!std::isfinite(amin)) amin = 0.0, amax = 0.2;
    if (amax - amin < 1e-9) amin -= 0.05, amax += 0.05;
    auto x = [&](double a) { return L + (a - amin) / (amax - amin) * (W - L - R); };
    auto y = [&](double pct) { return T + (100.0 - pct) / 100.0 * (H - T - B); };
    const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"};

    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(2);
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<text x=\"" << L << "\" y=\"20\" font-size=\"14\">Mission success rate vs alpha" << (ood ? " (OOD)" : "") << "</text>\n";
    s << "<line x1=\"" << L << "\" y1=\"" << y(0) << "\" x2=\"" << W - R << "\" y2=\"" << y(0) << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << L << "\" y1=\"" << y(0) << "\" x2=\"" << L << "\" y2=\"" << y(100) << "\" stroke=\"black\"/>\n";
    for (int p = 0; p <= 100; p += 20)
        s << "<text x=\"" << L - 8 << "\" y=\"" << y(p) + 4 << "\" text-anchor=\"end\">" << p << "</text>\n";
    for (const auto& r : rows)
        if (!std::isnan(r.alpha))
            s << "<text x=\"" << x(r.alpha) << "\" y=\"" << y(0) + 18 << "\" text-anchor=\"middle\">" << format_fixed2(r.alpha) << "</text>\n";
    s << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">alpha</text>\n";

    std::vector<std::string> names;
    for (const auto& r : rows)
        if (std::find(names.begin(), names.end(), r.framework) == names.end()) names.push_back(r.framework);
    for (std::size_t f = 0; f < names.size(); ++f) {
        const char* c = colors[f % 5];
        std::string pts;
        for (const auto& r : rows) {
            if (r.framework != names[f]) continue;
            if (std::isnan(r.alpha)) {
                s << "<line x1=\"" << L << "\" y1=\"" << y(r.sr_mission_pct) << "\" x2=\"" << W - R << "\" y2=\"" << y(r.sr_mission_pct)
                  << "\" stroke=\"" << c << "\" stroke-dasharray=\"6 4\"/>\n";
                continue;
            }
            s << "<line x1=\"" << x(r.alpha) << "\" y1=\"" << y(r.ci_low) << "\" x2=\"" << x(r.alpha) << "\" y2=\"" << y(r.ci_high)
              << "\" stroke=\"" << c << "\" stroke-opacity=\"0.5\"/>\n";
            s << "<circle cx=\"" << x(r.alpha) << "\" cy=\"" << y(r.sr_mission_pct) << "\" r=\"3\" fill=\"" << c << "\"/>\n";
            std::ostringstream p;
            p.setf(std::ios::fixed);
            p.precision(2);
            p << x(r.alpha) << ',' << y(r.sr_mission_pct) << ' ';
            pts += p.str();
        }
        if (!pts.empty()) s << "<polyline points=\"" << pts << "\" fill=\"none\" stroke=\"" << c << "\"/>\n";
        s << "<text x=\"" << W - R + 12 << "\" y=\"" << T + 18 * (f + 1) << "\" fill=\"" << c << "\">" << names[f] << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

}  // namespace semreach
