#pragma once

// =============================================================================
// Scenarios: configuration, run orchestration and summaries
// =============================================================================
// A scenario picks a topology, its parameters, the time grid, an optional
// reconfiguration instant and a list of source faults. run() builds and
// simulates it, writes the waveform file and analyses every steady segment
// (between reconfiguration / fault events) with the 3-level or 2-level view.
// =============================================================================

#include "reconf/analysis.hpp"
#include "reconf/topologies.hpp"
#include "reconf/transient.hpp"
#include "reconf/waveform_csv.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace reconf {

// =============================================================================
// Config
// =============================================================================

/// ParseError: malformed input (where = line or flag). ValidationError:
/// well-formed input with an invalid value (where = field).
class ConfigError : public std::runtime_error {
public:
    enum class Kind { parse, validation };

    ConfigError(Kind kind, std::string where, const std::string& what)
        : std::runtime_error((kind == Kind::parse ? "ParseError(" : "ValidationError(") + where + "): " + what),
          kind_(kind),
          where_(std::move(where)) {}

    [[nodiscard]] Kind kind() const { return kind_; }
    [[nodiscard]] const std::string& where() const { return where_; }

private:
    Kind kind_;
    std::string where_;
};

inline constexpr double kDefaultDt = 50e-6;
inline constexpr double kDefaultTEnd = 10.0;
inline constexpr double kDefaultWindowCycles = 2.0;

struct ScenarioConfig {
    TopologyName topology = TopologyName::chb3;
    TopologyParams params;
    double dt = kDefaultDt;
    double t_end = kDefaultTEnd;
    /// Set (defaulted to 3 s) exactly when the topology is reconfigurable.
    std::optional<double> reconfigure_at;
    std::vector<FaultSpec> faults;
    /// Probes to record; empty means all.
    std::vector<std::string> probes;
    std::string output_path;
    double window_cycles = kDefaultWindowCycles;
};

/// `<open|short>:<source_index>[@<seconds>]`
inline FaultSpec parse_fault(const std::string& text, const std::string& where = "--fault") {
    auto colon = text.find(':');
    if (colon == std::string::npos) throw ConfigError(ConfigError::Kind::parse, where, "fault '" + text + "' must look like open:2@0");
    FaultSpec f;
    auto kind = text.substr(0, colon);
    if (kind == "open") f.kind = FaultKind::open;
    else if (kind == "short") f.kind = FaultKind::shorted;
    else throw ConfigError(ConfigError::Kind::parse, where, "fault kind must be open or short, got '" + kind + "'");

    auto rest = std::string_view(text).substr(colon + 1);
    auto at = rest.find('@');
    auto idx = rest.substr(0, at);
    unsigned long long index = 0;
    auto [p, ec] = std::from_chars(idx.data(), idx.data() + idx.size(), index);
    if (idx.empty() || ec != std::errc() || p != idx.data() + idx.size()) {
        throw ConfigError(ConfigError::Kind::parse, where, "bad source index in '" + text + "'");
    }
    f.source_index = static_cast<std::size_t>(index);
    if (at != std::string_view::npos) {
        auto t = rest.substr(at + 1);
        auto [q, ec2] = std::from_chars(t.data(), t.data() + t.size(), f.at);
        if (t.empty() || ec2 != std::errc() || q != t.data() + t.size()) {
            throw ConfigError(ConfigError::Kind::parse, where, "bad fault time in '" + text + "'");
        }
    }
    return f;
}

inline std::string format_fault(const FaultSpec& f) {
    std::ostringstream os;
    os.precision(17);
    os << to_string(f.kind) << ":" << f.source_index << "@" << f.at;
    return os.str();
}

/// Accumulates settings by key, then fills defaults and validates. Shared by
/// the config-file reader and the command line.
class ConfigBuilder {
public:
    /// Keys: topology, dt, t_end, reconfigure_at, r_on, r_off, v_dc, f_ref,
    /// load_r, fault (repeatable), probe (repeatable), out, window.
    void set(const std::string& key, const std::string& value, const std::string& where) {
        if (key == "topology") {
            try {
                topology_ = parse_topology(value);
            } catch (const TopologyError& e) {
                throw ConfigError(ConfigError::Kind::parse, where, e.what());
            }
        } else if (key == "dt") cfg_.dt = number(value, where);
        else if (key == "t_end") cfg_.t_end = number(value, where);
        else if (key == "reconfigure_at") cfg_.reconfigure_at = number(value, where);
        else if (key == "r_on") cfg_.params.r_on = number(value, where);
        else if (key == "r_off") cfg_.params.r_off = number(value, where);
        else if (key == "v_dc") cfg_.params.v_dc = number(value, where);
        else if (key == "f_ref") cfg_.params.f_ref = number(value, where);
        else if (key == "load_r") cfg_.params.load_r = number(value, where);
        else if (key == "fault") cfg_.faults.push_back(parse_fault(value, where));
        else if (key == "probe") cfg_.probes.push_back(value);
        else if (key == "out") cfg_.output_path = value;
        else if (key == "window") cfg_.window_cycles = number(value, where);
        else throw ConfigError(ConfigError::Kind::parse, where, "unknown key '" + key + "'");
    }

    [[nodiscard]] ScenarioConfig finish() const {
        if (!topology_) throw ConfigError(ConfigError::Kind::validation, "topology", "a topology is required");
        ScenarioConfig c = cfg_;
        c.topology = *topology_;
        if (is_reconfigurable(c.topology) && !c.reconfigure_at) c.reconfigure_at = kDefaultReconfigureAt;
        validate_config(c);
        return c;
    }

    static void validate_config(const ScenarioConfig& c) {
        using K = ConfigError::Kind;
        if (!(c.dt > 0.0) || !std::isfinite(c.dt)) throw ConfigError(K::validation, "dt", "must be > 0");
        if (!std::isfinite(c.t_end) || !(c.t_end >= c.dt)) throw ConfigError(K::validation, "t_end", "must be >= dt");
        if (c.reconfigure_at) {
            if (!is_reconfigurable(c.topology)) {
                throw ConfigError(K::validation, "reconfigure_at",
                                  std::string(to_string(c.topology)) + " is not reconfigurable");
            }
            if (!std::isfinite(*c.reconfigure_at) || !(*c.reconfigure_at > 0.0) || !(*c.reconfigure_at < c.t_end)) {
                throw ConfigError(K::validation, "reconfigure_at", "must lie in (0, t_end)");
            }
        } else if (is_reconfigurable(c.topology)) {
            throw ConfigError(K::validation, "reconfigure_at", "required for reconfigurable topologies");
        }
        try {
            check_params(c.params);
        } catch (const TopologyError& e) {
            throw ConfigError(K::validation, "params", e.what());
        }
        for (const auto& f : c.faults) {
            if (f.source_index >= 6) throw ConfigError(K::validation, "fault", "source index must be 0..5");
            if (!std::isfinite(f.at) || f.at < 0.0 || f.at > c.t_end) {
                throw ConfigError(K::validation, "fault", "fault time must lie in [0, t_end]");
            }
        }
        if (!(c.window_cycles > 0.0)) throw ConfigError(K::validation, "window", "must be > 0");
        if (!c.probes.empty()) {
            auto topo = build_topology(c.topology, c.params);
            for (const auto& name : c.probes) {
                bool known = std::any_of(topo.netlist.probes.begin(), topo.netlist.probes.end(),
                                         [&](const Probe& p) { return p.name == name; });
                if (!known) throw ConfigError(K::validation, "probe", "unknown probe '" + name + "'");
            }
        }
    }

private:
    static double number(const std::string& s, const std::string& where) {
        double v = 0.0;
        auto b = s.data(), e = s.data() + s.size();
        while (b != e && *b == ' ') ++b;
        while (e != b && e[-1] == ' ') --e;
        auto [p, ec] = std::from_chars(b, e, v);
        if (b == e || ec != std::errc() || p != e || !std::isfinite(v)) {
            throw ConfigError(ConfigError::Kind::parse, where, "'" + s + "' is not a number");
        }
        return v;
    }

    ScenarioConfig cfg_;
    std::optional<TopologyName> topology_;
};

/// Reads `key = value` lines (blank lines and `#` comments allowed) into a
/// builder; errors name the line.
inline void read_config_text(ConfigBuilder& b, const std::string& text) {
    std::istringstream is(text);
    std::string line;
    std::size_t n = 0;
    auto trim = [](std::string s) {
        auto a = s.find_first_not_of(" \t\r");
        auto z = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, z - a + 1);
    };
    while (std::getline(is, line)) {
        ++n;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        const std::string where = "line " + std::to_string(n);
        if (eq == std::string::npos) throw ConfigError(ConfigError::Kind::parse, where, "expected key = value");
        b.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)), where);
    }
}

inline ScenarioConfig parse_config_text(const std::string& text) {
    ConfigBuilder b;
    read_config_text(b, text);
    return b.finish();
}

// =============================================================================
// Run
// =============================================================================

enum class OutputMode { three_level, two_level };

inline const char* to_string(OutputMode m) { return m == OutputMode::three_level ? "3-level" : "2-level"; }

/// Analysis of one steady interval between events.
struct SegmentReport {
    OutputMode mode = OutputMode::three_level;
    double t_begin = 0.0;
    double t_end = 0.0;
    SampleWindow window;
    AnalysisReport report;
};

struct RunSummary {
    ScenarioConfig config;
    CensusReport census;
    std::vector<SegmentReport> segments;
    std::size_t samples = 0;
    double max_kcl_residual = 0.0;
    std::size_t factorizations = 0;
    double wall_time = 0.0;
    std::string waveform_path;
};

/// Topology with the scenario's reconfiguration time and faults applied.
inline BuiltTopology build_scenario(const ScenarioConfig& c) {
    auto topo = build_topology(c.topology, c.params);
    if (c.reconfigure_at) topo = with_reconfigure_time(std::move(topo), *c.reconfigure_at);
    for (const auto& f : c.faults) topo = apply_fault(std::move(topo), f);
    return topo;
}

/// Intervals between the reconfiguration and fault events, each analysed over
/// its last `window_cycles` cycles and skipping the first cycle after an event.
inline std::vector<SegmentReport> analyze_segments(const ScenarioConfig& c, const BuiltTopology& topo,
                                                   const TraceSet& trace) {
    std::vector<double> events;
    if (c.reconfigure_at) events.push_back(*c.reconfigure_at);
    for (const auto& f : c.faults)
        if (f.at > 0.0 && f.at < c.t_end) events.push_back(f.at);
    std::sort(events.begin(), events.end());
    events.erase(std::unique(events.begin(), events.end()), events.end());

    const double period = 1.0 / c.params.f_ref;
    auto first_index_at = [&](double t) {
        return std::min(trace.size(), static_cast<std::size_t>(std::ceil(t / trace.dt - 1e-9)));
    };

    std::vector<SegmentReport> out;
    double begin = 0.0;
    for (std::size_t i = 0; i <= events.size(); ++i) {
        const double end = i < events.size() ? events[i] : c.t_end;
        SegmentReport seg;
        seg.t_begin = begin;
        seg.t_end = end;
        const bool two_level = topo.phase_probes.empty() || (c.reconfigure_at && begin >= *c.reconfigure_at);
        seg.mode = two_level ? OutputMode::two_level : OutputMode::three_level;

        const std::size_t stop = i < events.size() ? first_index_at(end) : trace.size();
        const std::size_t earliest = begin > 0.0 ? first_index_at(begin + period) : 0;
        const auto span = static_cast<std::size_t>(std::llround(c.window_cycles * period / trace.dt));
        seg.window = {stop > span ? std::max(earliest, stop - span) : earliest, stop};

        std::vector<std::string> probes;
        for (const auto& name : two_level ? topo.pole_probes : topo.phase_probes) {
            if (std::find(trace.names.begin(), trace.names.end(), name) != trace.names.end()) probes.push_back(name);
        }
        if (!probes.empty() && seg.window.size() * 2 >= span && seg.window.size() > 0) {
            seg.report = analyze_probes(trace, probes, seg.window);
            out.push_back(std::move(seg));
        }
        begin = end;
    }
    return out;
}

inline RunSummary run(const ScenarioConfig& config, TraceSet* trace_out = nullptr) {
    ConfigBuilder::validate_config(config);
    const auto started = std::chrono::steady_clock::now();
    RunSummary s;
    s.config = config;
    auto topo = build_scenario(config);
    s.census = switch_census(topo.netlist);

    SimulateOptions opts;
    opts.probes = config.probes;
    TraceSet trace = simulate(topo.netlist, topo.signal_env, config.dt, config.t_end, opts);
    s.samples = trace.size();
    s.max_kcl_residual = trace.max_kcl_residual;
    s.factorizations = trace.factorizations;
    if (!config.output_path.empty()) {
        emit_waveforms(config.output_path, trace);
        s.waveform_path = config.output_path;
    }
    s.segments = analyze_segments(config, topo, trace);
    s.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (trace_out) *trace_out = std::move(trace);
    return s;
}

// =============================================================================
// Structured output
// =============================================================================

inline nlohmann::ordered_json to_json(const CensusReport& c) {
    return {{"igbt", c.igbt}, {"three_way", c.three_way}, {"ideal", c.ideal}, {"total", c.total}};
}

inline nlohmann::ordered_json to_json(const ScenarioConfig& c) {
    nlohmann::ordered_json j;
    j["topology"] = to_string(c.topology);
    j["v_dc"] = c.params.v_dc;
    j["r_on"] = c.params.r_on;
    j["r_off"] = c.params.r_off;
    j["f_ref"] = c.params.f_ref;
    j["load_r"] = c.params.load_r;
    j["dt"] = c.dt;
    j["t_end"] = c.t_end;
    j["reconfigure_at"] = c.reconfigure_at ? nlohmann::ordered_json(*c.reconfigure_at) : nlohmann::ordered_json(nullptr);
    j["faults"] = nlohmann::ordered_json::array();
    for (const auto& f : c.faults) j["faults"].push_back(format_fault(f));
    j["probes"] = c.probes;
    j["out"] = c.output_path;
    j["window"] = c.window_cycles;
    return j;
}

inline nlohmann::ordered_json to_json(const AnalysisReport& r) {
    nlohmann::ordered_json j;
    j["probes"] = r.probes;
    j["per_phase_peak"] = r.per_phase_peak;
    j["spread"] = r.spread;
    nlohmann::ordered_json levels = nlohmann::ordered_json::object();
    for (const auto& [k, v] : r.levels_per_probe) levels[k] = v;
    j["levels_per_probe"] = levels;
    if (r.deviation_rms) j["deviation_rms"] = *r.deviation_rms;
    return j;
}

inline nlohmann::ordered_json to_json(const RunSummary& s) {
    nlohmann::ordered_json j;
    j["config"] = to_json(s.config);
    j["census"] = to_json(s.census);
    j["samples"] = s.samples;
    j["max_kcl_residual"] = s.max_kcl_residual;
    j["factorizations"] = s.factorizations;
    j["segments"] = nlohmann::ordered_json::array();
    for (const auto& seg : s.segments) {
        nlohmann::ordered_json js;
        js["mode"] = to_string(seg.mode);
        js["t_begin"] = seg.t_begin;
        js["t_end"] = seg.t_end;
        js["window_samples"] = {seg.window.begin, seg.window.end};
        js["analysis"] = to_json(seg.report);
        j["segments"].push_back(js);
    }
    j["waveform_file"] = s.waveform_path;
    j["wall_time_s"] = s.wall_time;
    return j;
}

}  // namespace reconf
