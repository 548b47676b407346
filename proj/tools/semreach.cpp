// semreach command line: calibrate, run, report, worldgen, replay.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "semreach/semreach.hpp"

namespace fs = std::filesystem;
using namespace semreach;

namespace {

ExperimentConfig load_or_default(const std::string& path) { return path.empty() ? default_experiment() : load_experiment(path); }

int cmd_calibrate(const std::string& config, std::uint64_t seed, const std::string& out) {
    const auto e = load_or_default(config);
    const auto a = calibrate(e, seed);
    io::write_json_file(out, io::to_json(a));
    std::printf("D=%zu alpha=%.4g alpha_used=%.4g s_hat=%.17g threshold=%.6g hash=%s\n", a.scores.size(), a.alpha,
                a.alpha_used, a.quantile, a.threshold, a.config_hash.c_str());
    return 0;
}

std::vector<Framework> parse_frameworks(const std::vector<std::string>& names) {
    std::vector<Framework> out;
    for (const auto& n : names) {
        const auto f = parse_framework(n);
        if (!f) throw CLI::ValidationError("--frameworks", "unknown framework '" + n + "'");
        out.push_back(*f);
    }
    return out;
}

int cmd_run(const std::string& config, const std::string& artifact, const std::vector<std::string>& frameworks,
            const std::vector<double>& alphas, std::size_t n, std::uint64_t seed, const std::string& out, bool ood,
            bool traces) {
    auto e = load_or_default(config);
    if (ood) e.distribution.ood.randomize_tree_layout = true;
    const auto a = io::artifact_from_json(io::read_json_file(artifact));
    CampaignOptions o;
    o.frameworks = parse_frameworks(frameworks);
    o.alphas = alphas;
    o.n_test = n;
    o.base_seed = seed;
    o.keep_traces = traces;
    const auto r = is_ood(e) ? run_ood(e, a, o) : run_campaign(e, a, o);
    write_campaign(r, out);
    std::cout << r.csv();
    if (r.errored() > 0) std::fprintf(stderr, "%zu mission(s) errored; see %s/summary.json\n", r.errored(), out.c_str());
    if (r.violations() > 0) {
        std::fprintf(stderr, "%zu trace invariant violation(s)\n", r.violations());
        return 3;
    }
    return 0;
}

int cmd_report(const std::string& in, const std::string& format, const std::string& out) {
    std::ifstream f(fs::path(in) / "missions.csv");
    if (!f) throw std::runtime_error("no missions.csv in " + in);
    const auto metrics = read_missions_csv(f);
    const auto rows = aggregate(metrics);
    bool ood = false;
    if (fs::exists(fs::path(in) / "summary.json")) ood = io::read_json_file((fs::path(in) / "summary.json").string()).value("ood", false);
    const std::string text = format == "svg" ? report_svg(rows, ood) : report_csv(rows);
    if (out.empty())
        std::cout << text;
    else
        io::write_text_file(out, text);
    return 0;
}

int cmd_worldgen(const std::string& config, std::size_t n, std::uint64_t seed, const std::string& out) {
    DistributionConfig d = default_distribution();
    if (!config.empty()) {
        const auto j = io::read_json_file(config);
        d = j.contains("distribution") ? experiment_from_json(j).distribution : io::distribution_from_json(j);
    }
    fs::create_directories(out);
    for (std::size_t i = 0; i < n; ++i) {
        const auto s = sample_scenario(d, seed + i);
        char name[64];
        std::snprintf(name, sizeof name, "scenario_%04zu.json", i);
        io::write_text_file((fs::path(out) / name).string(), io::to_json(s).dump() + "\n");
    }
    std::printf("wrote %zu scenario(s) to %s\n", n, out.c_str());
    return 0;
}

int cmd_replay(const std::vector<std::string>& inputs) {
    std::vector<fs::path> files;
    for (const auto& p : inputs) {
        if (fs::is_directory(p)) {
            for (const auto& ent : fs::directory_iterator(p))
                if (ent.path().extension() == ".jsonl") files.push_back(ent.path());
        } else {
            files.emplace_back(p);
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
        std::fprintf(stderr, "no trace files found\n");
        return 2;
    }
    std::size_t bad = 0;
    for (const auto& path : files) {
        std::vector<std::string> problems;
        try {
            std::ifstream in(path);
            if (!in) throw std::runtime_error("cannot open");
            problems = verify_trace(io::read_trace(in));
        } catch (const std::exception& ex) {
            problems.push_back(ex.what());
        }
        if (problems.empty()) continue;
        ++bad;
        for (const auto& p : problems) std::printf("%s: %s\n", path.string().c_str(), p.c_str());
    }
    std::printf("%zu trace(s) checked, %zu failed\n", files.size(), bad);
    return bad == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semantic reach-avoid planning over calibrated maps"};
    app.require_subcommand(1);

    std::string config, out, artifact, in, format = "csv";
    std::uint64_t seed = 1;
    std::size_t n = 200;
    std::vector<std::string> frameworks{"ours", "ui", "ua"};
    std::vector<double> alphas{0.05, 0.1, 0.15};
    std::vector<std::string> traces;
    bool ood = false, no_traces = false;

    auto* cal = app.add_subcommand("calibrate", "Score calibration scenarios and write the artifact");
    cal->add_option("--config", config, "Experiment config (JSON)")->check(CLI::ExistingFile);
    cal->add_option("--seed", seed, "Base seed");
    cal->add_option("--out", out, "Artifact path")->required();

    auto* run = app.add_subcommand("run", "Run a paired test campaign");
    run->add_option("--config", config, "Experiment config (JSON)")->check(CLI::ExistingFile);
    run->add_option("--artifact", artifact, "Calibration artifact")->required()->check(CLI::ExistingFile);
    run->add_option("--frameworks", frameworks, "Frameworks")->delimiter(',');
    run->add_option("--alphas", alphas, "Target miscoverage levels")->delimiter(',');
    run->add_option("--n", n, "Test scenarios")->check(CLI::PositiveNumber);
    run->add_option("--seed", seed, "Base seed");
    run->add_option("--out", out, "Output directory")->required();
    run->add_flag("--ood", ood, "Randomize the tree layout");
    run->add_flag("--no-traces", no_traces, "Skip writing per-mission traces");

    auto* rep = app.add_subcommand("report", "Aggregate a campaign directory");
    rep->add_option("--in", in, "Campaign directory")->required()->check(CLI::ExistingDirectory);
    rep->add_option("--format", format, "csv or svg")->check(CLI::IsMember({"csv", "svg"}));
    rep->add_option("--out", out, "Output file (stdout if omitted)");

    auto* wg = app.add_subcommand("worldgen", "Sample scenarios to JSON files");
    wg->add_option("--config", config, "Experiment or distribution config (JSON)")->check(CLI::ExistingFile);
    wg->add_option("--n", n, "Number of scenarios")->check(CLI::PositiveNumber);
    wg->add_option("--seed", seed, "First scenario seed");
    wg->add_option("--out", out, "Output directory")->required();

    auto* rp = app.add_subcommand("replay", "Re-verify mission traces");
    rp->add_option("--trace", traces, "Trace file(s) or directories")->required();

    auto* dc = app.add_subcommand("defaults", "Print the default experiment config");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*cal) return cmd_calibrate(config, seed, out);
        if (*run) return cmd_run(config, artifact, frameworks, alphas, n, seed, out, ood, !no_traces);
        if (*rep) return cmd_report(in, format, out);
        if (*wg) return cmd_worldgen(config, n, seed, out);
        if (*rp) return cmd_replay(traces);
        if (*dc) {
            std::cout << to_json(default_experiment()).dump(2) << '\n';
            return 0;
        }
    } catch (const std::exception& ex) {
        std::fprintf(stderr, "error: %s\n", ex.what());
        return 2;
    }
    return 0;
}
