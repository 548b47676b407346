#pragma once
// JSON forms of scenarios, configs, calibration artifacts and mission traces.
// Doubles are written in shortest round-trip form, so reading back what was
// written reproduces every value bit for bit. NaN is stored as null.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "semreach/conformal.hpp"
#include "semreach/domain.hpp"
#include "semreach/mapper.hpp"
#include "semreach/planner.hpp"
#include "semreach/sensor.hpp"
#include "semreach/worldgen.hpp"

namespace semreach::io {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline json number_or_null(double v) { return std::isnan(v) ? json(nullptr) : json(v); }
inline double number_or_nan(const json& j) { return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>(); }

inline void check_schema(const json& j, const char* what) {
    if (!j.contains("schema_version")) throw FormatError(std::string(what) + ": missing schema_version");
    if (j.at("schema_version").get<int>() != kSchemaVersion)
        throw FormatError(std::string(what) + ": unsupported schema_version " + j.at("schema_version").dump());
}

template <class T>
void read_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Domain

inline json to_json(const SemanticClassTable& t) {
    json a = json::array();
    for (const auto& c : t.classes()) a.push_back({{"id", c.id}, {"name", c.name}, {"d_m", c.safety_distance}});
    return a;
}

inline SemanticClassTable classes_from_json(const json& a) {
    std::vector<SemanticClass> v;
    for (const auto& c : a) v.push_back({c.at("id").get<ClassId>(), c.at("name").get<std::string>(), c.at("d_m").get<double>()});
    return SemanticClassTable(std::move(v));
}

inline json to_json(const GridGeometry& g) {
    return {{"width", g.width}, {"height", g.height}, {"resolution_m", g.resolution}, {"origin", {g.origin.x, g.origin.y}}};
}

inline GridGeometry geometry_from_json(const json& j) {
    GridGeometry g;
    g.width = j.at("width").get<int>();
    g.height = j.at("height").get<int>();
    g.resolution = j.at("resolution_m").get<double>();
    g.origin = {j.at("origin").at(0).get<double>(), j.at("origin").at(1).get<double>()};
    g.validate();
    return g;
}

inline json to_json(GridPos p) { return {{"row", p.row}, {"col", p.col}}; }
inline GridPos pos_from_json(const json& j) { return {j.at("row").get<int>(), j.at("col").get<int>()}; }

inline json to_json(const Scenario& s) {
    json goal = to_json(s.task.goal);
    goal["radius_m"] = s.task.goal_radius_m;
    return {{"schema_version", kSchemaVersion},
            {"seed", s.seed},
            {"geometry", to_json(s.geometry())},
            {"truth", s.world.truth},
            {"classes", to_json(s.classes())},
            {"start", to_json(s.start)},
            {"goal", goal}};
}

inline Scenario scenario_from_json(const json& j) {
    detail::check_schema(j, "scenario");
    Scenario s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.world.geometry = geometry_from_json(j.at("geometry"));
    s.world.truth = j.at("truth").get<std::vector<ClassId>>();
    s.task.classes = classes_from_json(j.at("classes"));
    s.start = pos_from_json(j.at("start"));
    s.task.goal = pos_from_json(j.at("goal"));
    s.task.goal_radius_m = j.at("goal").at("radius_m").get<double>();
    s.world.validate(s.task.classes);
    return s;
}

/// Belief snapshot: row-major PMFs (cell-major, class-minor) and J_t.
inline json to_json(const BeliefMap& b) {
    std::vector<double> pmf;
    pmf.reserve(b.geometry().size() * b.num_classes());
    for (CellIndex j = 0; j < b.geometry().size(); ++j) {
        const auto p = b.pmf(j);
        pmf.insert(pmf.end(), p.begin(), p.end());
    }
    const auto obs = b.observed_cells();
    return {{"schema_version", kSchemaVersion},
            {"geometry", to_json(b.geometry())},
            {"num_classes", b.num_classes()},
            {"pmf", pmf},
            {"observed", std::vector<CellIndex>(obs.begin(), obs.end())}};
}

// ---------------------------------------------------------------------------
// Configs

inline json to_json(const ConfusionMatrix& m) {
    json rows = json::array();
    for (std::size_t k = 0; k < m.size(); ++k) {
        const auto r = m.row(static_cast<ClassId>(k));
        rows.push_back(std::vector<double>(r.begin(), r.end()));
    }
    return rows;
}

/// Accepts a list of rows or a flat row-major list.
inline ConfusionMatrix confusion_from_json(const json& j) {
    if (!j.is_array() || j.empty()) throw FormatError("confusion matrix must be a non-empty array");
    if (j.front().is_array()) {
        std::vector<double> flat;
        for (const auto& row : j) {
            if (row.size() != j.size()) throw FormatError("confusion matrix must be square");
            for (const auto& v : row) flat.push_back(v.get<double>());
        }
        return {j.size(), std::move(flat)};
    }
    auto flat = j.get<std::vector<double>>();
    const auto n = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(flat.size()))));
    if (n * n != flat.size()) throw FormatError("flat confusion matrix length is not a square");
    return {n, std::move(flat)};
}

inline json to_json(const SensorConfig& c) {
    json j{{"range_m", c.range_m},
           {"ray_count", c.ray_count},
           {"true_confusion", to_json(c.true_confusion)},
           {"free_miss_rate", c.free_miss_rate},
           {"severity_scale", c.severity_scale},
           {"multi_return", c.multi_return},
           {"occlusion_confusion", c.occlusion_confusion}};
    j["fov_deg"] = c.fov_deg ? json(*c.fov_deg) : json(nullptr);
    return j;
}

inline SensorConfig sensor_from_json(const json& j, SensorConfig c = {}) {
    detail::read_if(j, "range_m", c.range_m);
    detail::read_if(j, "ray_count", c.ray_count);
    if (j.contains("true_confusion")) c.true_confusion = confusion_from_json(j.at("true_confusion"));
    detail::read_if(j, "free_miss_rate", c.free_miss_rate);
    detail::read_if(j, "severity_scale", c.severity_scale);
    detail::read_if(j, "multi_return", c.multi_return);
    detail::read_if(j, "occlusion_confusion", c.occlusion_confusion);
    if (j.contains("fov_deg")) c.fov_deg = j.at("fov_deg").is_null() ? std::nullopt : std::optional<double>(j.at("fov_deg").get<double>());
    return c;
}

inline json to_json(const MapperConfig& c) {
    return {{"assumed_confusion", to_json(c.assumed_confusion)}, {"prior", c.prior}, {"pmf_floor", c.pmf_floor}};
}

inline MapperConfig mapper_from_json(const json& j, MapperConfig c = {}) {
    if (j.contains("assumed_confusion")) c.assumed_confusion = confusion_from_json(j.at("assumed_confusion"));
    detail::read_if(j, "prior", c.prior);
    detail::read_if(j, "pmf_floor", c.pmf_floor);
    return c;
}

inline json to_json(const PlannerConfig& c) { return {{"max_steps", c.max_steps}}; }

inline PlannerConfig planner_from_json(const json& j, PlannerConfig c = {}) {
    detail::read_if(j, "max_steps", c.max_steps);
    return c;
}

inline const char* to_string(Placement p) {
    switch (p) {
        case Placement::fixed: return "fixed";
        case Placement::uniform: return "uniform";
        case Placement::near: return "near";
    }
    return "?";
}

inline Placement placement_from_string(const std::string& s) {
    if (s == "fixed") return Placement::fixed;
    if (s == "uniform") return Placement::uniform;
    if (s == "near") return Placement::near;
    throw FormatError("unknown placement '" + s + "'");
}

inline json to_json(const DistributionConfig& c) {
    json objs = json::array();
    for (const auto& o : c.objects) {
        json jo{{"class", c.classes.name(o.class_id)},
                {"placement", to_string(o.placement)},
                {"count", o.count},
                {"length", o.length}};
        if (o.placement == Placement::fixed) {
            json cells = json::array();
            for (const auto& p : o.fixed_cells) cells.push_back({p.row, p.col});
            jo["cells"] = cells;
        }
        if (o.placement == Placement::near) {
            jo["near"] = c.classes.name(o.near_class);
            jo["bias"] = o.bias;
            jo["near_radius_cells"] = o.near_radius_cells;
        }
        objs.push_back(jo);
    }
    return {{"schema_version", kSchemaVersion},
            {"geometry", to_json(c.geometry)},
            {"classes", to_json(c.classes)},
            {"objects", objs},
            {"min_separation_m", c.min_separation_m},
            {"goal_radius_m", c.goal_radius_m},
            {"max_retries", c.max_retries},
            {"ood",
             {{"randomize_tree_layout", c.ood.randomize_tree_layout},
              {"tree_count_range", {c.ood.tree_count_min, c.ood.tree_count_max}}}}};
}

/// Missing keys keep the values of `c` (the default distribution unless given).
inline DistributionConfig distribution_from_json(const json& j, DistributionConfig c = default_distribution()) {
    if (j.contains("schema_version")) detail::check_schema(j, "distribution");
    if (j.contains("geometry")) c.geometry = geometry_from_json(j.at("geometry"));
    if (j.contains("classes")) c.classes = classes_from_json(j.at("classes"));
    auto class_id = [&](const json& v) {
        if (v.is_number_integer()) return v.get<ClassId>();
        const auto k = c.classes.find(v.get<std::string>());
        if (!k) throw FormatError("unknown class '" + v.get<std::string>() + "'");
        return *k;
    };
    if (j.contains("objects")) {
        c.objects.clear();
        for (const auto& jo : j.at("objects")) {
            ObjectSpec o;
            o.class_id = class_id(jo.at("class"));
            o.placement = placement_from_string(jo.value("placement", std::string("uniform")));
            o.length = jo.value("length", 1);
            if (jo.contains("cells"))
                for (const auto& p : jo.at("cells")) o.fixed_cells.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
            o.count = jo.value("count", o.placement == Placement::fixed ? static_cast<int>(o.fixed_cells.size()) : 1);
            if (jo.contains("near")) o.near_class = class_id(jo.at("near"));
            detail::read_if(jo, "bias", o.bias);
            detail::read_if(jo, "near_radius_cells", o.near_radius_cells);
            c.objects.push_back(std::move(o));
        }
    }
    detail::read_if(j, "min_separation_m", c.min_separation_m);
    detail::read_if(j, "goal_radius_m", c.goal_radius_m);
    detail::read_if(j, "max_retries", c.max_retries);
    if (j.contains("ood")) {
        const auto& o = j.at("ood");
        detail::read_if(o, "randomize_tree_layout", c.ood.randomize_tree_layout);
        if (o.contains("tree_count_range")) {
            c.ood.tree_count_min = o.at("tree_count_range").at(0).get<int>();
            c.ood.tree_count_max = o.at("tree_count_range").at(1).get<int>();
        }
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Calibration artifact

inline const char* to_string(CalibrationMode m) {
    return m == CalibrationMode::marginal ? "marginal" : "dataset_conditional";
}

inline CalibrationMode mode_from_string(const std::string& s) {
    if (s == "marginal") return CalibrationMode::marginal;
    if (s == "dataset_conditional") return CalibrationMode::dataset_conditional;
    throw FormatError("unknown calibration mode '" + s + "'");
}

inline json to_json(const CalibrationArtifact& a) {
    json j{{"schema_version", kSchemaVersion},
           {"scores", a.scores},
           {"true_probs", a.true_probs},
           {"alpha", a.alpha},
           {"alpha_used", a.alpha_used},
           {"mode", to_string(a.mode)},
           {"quantile", a.quantile},
           {"threshold", a.threshold},
           {"D", a.scores.size()},
           {"paths_per_scenario", a.paths_per_scenario},
           {"config_hash", a.config_hash},
           {"base_seed", a.base_seed}};
    j["delta"] = a.delta ? json(*a.delta) : json(nullptr);
    return j;
}

inline CalibrationArtifact artifact_from_json(const json& j) {
    detail::check_schema(j, "calibration artifact");
    CalibrationArtifact a;
    a.scores = j.at("scores").get<std::vector<double>>();
    if (j.contains("true_probs")) {
        a.true_probs = j.at("true_probs").get<std::vector<double>>();
    } else {
        for (double s : a.scores) a.true_probs.push_back(1.0 - s);
    }
    if (a.true_probs.size() != a.scores.size()) throw FormatError("calibration artifact: score arrays differ in length");
    if (j.at("D").get<std::size_t>() != a.scores.size()) throw FormatError("calibration artifact: D does not match the scores");
    a.alpha = j.at("alpha").get<double>();
    a.alpha_used = j.at("alpha_used").get<double>();
    a.mode = mode_from_string(j.at("mode").get<std::string>());
    a.quantile = j.at("quantile").get<double>();
    a.threshold = j.contains("threshold") ? j.at("threshold").get<double>() : conformal_threshold(a.true_probs, a.alpha_used);
    if (j.contains("delta") && !j.at("delta").is_null()) a.delta = j.at("delta").get<double>();
    a.paths_per_scenario = j.at("paths_per_scenario").get<std::size_t>();
    a.config_hash = j.at("config_hash").get<std::string>();
    a.base_seed = j.at("base_seed").get<std::uint64_t>();
    return a;
}

// ---------------------------------------------------------------------------
// Mission traces: a header line, one line per scan, an end line.

inline const char* kind_of(const json& j) {
    static const std::string none;
    return j.contains("kind") ? j.at("kind").get_ref<const std::string&>().c_str() : none.c_str();
}

inline json entries_to_json(const std::vector<LabelEntry>& v) {
    json a = json::array();
    for (const auto& [j, k] : v) a.push_back({j, k});
    return a;
}

inline std::vector<LabelEntry> entries_from_json(const json& a) {
    std::vector<LabelEntry> v;
    for (const auto& e : a) v.emplace_back(e.at(0).get<CellIndex>(), e.at(1).get<ClassId>());
    return v;
}

inline void write_trace(std::ostream& os, const MissionTrace& tr) {
    json head{{"kind", "header"},
              {"schema_version", kSchemaVersion},
              {"scenario", to_json(tr.scenario)},
              {"framework", to_string(tr.framework)},
              {"alpha", detail::number_or_null(tr.alpha)},
              {"s_hat", detail::number_or_null(tr.s_hat)},
              {"threshold", detail::number_or_null(tr.threshold)},
              {"noise_seed", tr.noise_seed}};
    os << head.dump() << '\n';
    for (std::size_t t = 0; t < tr.steps.size(); ++t) {
        const auto& s = tr.steps[t];
        json line{{"kind", "step"},
                  {"t", t},
                  {"state", {s.state.row, s.state.col}},
                  {"mode", to_string(s.mode)},
                  {"set_histogram", s.set_histogram},
                  {"covered", s.covered},
                  {"labels", entries_to_json(s.labels)},
                  {"hits", entries_to_json(s.hits)}};
        line["next"] = t + 1 < tr.states.size() ? json{tr.states[t + 1].row, tr.states[t + 1].col} : json(nullptr);
        os << line.dump() << '\n';
    }
    json end{{"kind", "end"},
             {"termination", to_string(tr.termination)},
             {"final_state", {tr.states.back().row, tr.states.back().col}},
             {"num_states", tr.states.size()}};
    os << end.dump() << '\n';
}

inline Termination termination_from_string(const std::string& s) {
    if (s == "goal") return Termination::goal;
    if (s == "timeout") return Termination::timeout;
    if (s == "stuck") return Termination::stuck;
    throw FormatError("unknown termination '" + s + "'");
}

/// Parses a trace. Structural problems (missing lines, bad fields) throw;
/// semantic checks are left to verify_trace.
inline MissionTrace read_trace(std::istream& is) {
    MissionTrace tr;
    std::string line;
    bool have_header = false, have_end = false;
    std::size_t lineno = 0;
    std::size_t declared_states = 0;
    GridPos final_state{};
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (have_end) throw FormatError("trace line " + std::to_string(lineno) + ": content after the end line");
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw FormatError("trace line " + std::to_string(lineno) + ": " + e.what());
        }
        const std::string kind = kind_of(j);
        if (kind == "header") {
            if (have_header) throw FormatError("trace has two header lines");
            detail::check_schema(j, "trace");
            tr.scenario = scenario_from_json(j.at("scenario"));
            const auto fw = parse_framework(j.at("framework").get<std::string>());
            if (!fw) throw FormatError("trace: unknown framework");
            tr.framework = *fw;
            tr.alpha = detail::number_or_nan(j.at("alpha"));
            tr.s_hat = detail::number_or_nan(j.at("s_hat"));
            tr.threshold = detail::number_or_nan(j.value("threshold", json(nullptr)));
            tr.noise_seed = j.at("noise_seed").get<std::uint64_t>();
            have_header = true;
        } else if (kind == "step") {
            if (!have_header) throw FormatError("trace step before header");
            if (j.at("t").get<std::size_t>() != tr.steps.size())
                throw FormatError("trace line " + std::to_string(lineno) + ": steps out of order");
            StepRecord s;
            s.state = {j.at("state").at(0).get<int>(), j.at("state").at(1).get<int>()};
            const auto mode = j.at("mode").get<std::string>();
            if (mode != "exploit" && mode != "explore") throw FormatError("trace: unknown mode '" + mode + "'");
            s.mode = mode == "exploit" ? StepMode::exploit : StepMode::explore;
            s.set_histogram = j.at("set_histogram").get<std::vector<std::size_t>>();
            s.covered = j.at("covered").get<bool>();
            s.labels = entries_from_json(j.at("labels"));
            s.hits = entries_from_json(j.at("hits"));
            if (tr.states.empty()) tr.states.push_back(s.state);
            if (!j.at("next").is_null()) tr.states.push_back({j.at("next").at(0).get<int>(), j.at("next").at(1).get<int>()});
            tr.steps.push_back(std::move(s));
        } else if (kind == "end") {
            if (!have_header) throw FormatError("trace end before header");
            tr.termination = termination_from_string(j.at("termination").get<std::string>());
            final_state = {j.at("final_state").at(0).get<int>(), j.at("final_state").at(1).get<int>()};
            declared_states = j.at("num_states").get<std::size_t>();
            have_end = true;
        } else {
            throw FormatError("trace line " + std::to_string(lineno) + ": unknown kind '" + kind + "'");
        }
    }
    if (!have_header) throw FormatError("trace has no header");
    if (!have_end) throw FormatError("trace is truncated (no end line)");
    if (tr.states.empty()) tr.states.push_back(final_state);
    if (tr.states.size() != declared_states) throw FormatError("trace state count does not match the end line");
    if (tr.states.back() != final_state) throw FormatError("trace final state does not match the end line");
    return tr;
}

// ---------------------------------------------------------------------------
// Files

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path);
}

inline void write_json_file(const std::string& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

}  // namespace semreach::io
