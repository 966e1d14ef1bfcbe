#pragma once

// Command-line front end: `simulate`, `census` and `analyze`.
//
// Exit codes: 0 success, 2 usage/config error, 3 netlist/topology error,
// 4 simulation error, 5 I/O error. Errors print `error[<category>]: ...`
// on stderr.

#include "reconf/scenario.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace reconf::cli {

enum ExitCode : int { ok = 0, config_error = 2, topology_error = 3, simulation_error = 4, io_error = 5 };

namespace detail {

struct SimulateFlags {
    std::string config_file;
    std::string topology, dt, t_end, reconfigure_at, r_off, r_on, v_dc, f_ref, load_r, out, window;
    std::vector<std::string> faults;
    std::vector<std::string> probes;
};

inline void add_simulate_flags(CLI::App& app, SimulateFlags& f) {
    app.add_option("--config", f.config_file, "Scenario file of key = value lines; flags override it");
    app.add_option("--topology", f.topology, "chb3 | bridge2 | bridge2_ext | reconfig1 | reconfig2");
    app.add_option("--dt", f.dt, "Time step in seconds (default 50e-6)");
    app.add_option("--t-end", f.t_end, "Simulated time in seconds (default 10)");
    app.add_option("--reconfigure-at", f.reconfigure_at, "Reconfiguration instant in seconds (reconfig*, default 3)");
    app.add_option("--roff", f.r_off, "Switch off-resistance in ohms (default 1e12)");
    app.add_option("--ron", f.r_on, "Switch on-resistance in ohms (default 1e-3)");
    app.add_option("--vdc", f.v_dc, "Volts per DC source (default 48)");
    app.add_option("--f-ref", f.f_ref, "Output fundamental in Hz (default 50)");
    app.add_option("--load-r", f.load_r, "Load resistance per phase in ohms (default 100)");
    app.add_option("--fault", f.faults, "<open|short>:<source_index>@<seconds>, repeatable")->take_all();
    app.add_option("--probe", f.probes, "Record only these probes, repeatable")->take_all();
    app.add_option("--out", f.out, "Waveform CSV output path");
    app.add_option("--window", f.window, "Analysis window in fundamental cycles (default 2)");
}

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "'");
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

inline ScenarioConfig build_config(const CLI::App& app, const SimulateFlags& f) {
    ConfigBuilder b;
    if (!f.config_file.empty()) read_config_text(b, read_file(f.config_file));
    auto apply = [&](const char* flag, const char* key, const std::string& value) {
        if (app.count(flag) > 0) b.set(key, value, flag);
    };
    apply("--topology", "topology", f.topology);
    apply("--dt", "dt", f.dt);
    apply("--t-end", "t_end", f.t_end);
    apply("--reconfigure-at", "reconfigure_at", f.reconfigure_at);
    apply("--roff", "r_off", f.r_off);
    apply("--ron", "r_on", f.r_on);
    apply("--vdc", "v_dc", f.v_dc);
    apply("--f-ref", "f_ref", f.f_ref);
    apply("--load-r", "load_r", f.load_r);
    apply("--out", "out", f.out);
    apply("--window", "window", f.window);
    for (const auto& s : f.faults) b.set("fault", s, "--fault");
    for (const auto& s : f.probes) b.set("probe", s, "--probe");
    return b.finish();
}

inline std::vector<std::string> reversed(std::vector<std::string> args) {
    std::reverse(args.begin(), args.end());
    return args;
}

}  // namespace detail

/// Parses `simulate` flags (without the subcommand word) into a validated,
/// fully defaulted config. CLI11 errors are rethrown as ParseError.
inline ScenarioConfig parse_simulate_args(const std::vector<std::string>& args) {
    CLI::App app{"simulate"};
    detail::SimulateFlags flags;
    detail::add_simulate_flags(app, flags);
    try {
        auto rev = detail::reversed(args);
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        throw ConfigError(ConfigError::Kind::parse, "flags", e.what());
    }
    return detail::build_config(app, flags);
}

inline nlohmann::ordered_json census_json(TopologyName t) {
    nlohmann::ordered_json j{{"topology", to_string(t)}};
    j.update(to_json(switch_census(build_topology(t).netlist)));
    return j;
}

/// Metrics recomputed from a waveform file.
inline nlohmann::ordered_json analyze_file(const std::string& path, double window_cycles, double f_ref,
                                           const AnalysisOptions& opts = {}) {
    TraceSet trace = load_waveforms(path);
    if (trace.size() < 2) throw IoError("need at least two samples to analyze");
    auto w = last_cycles(trace, f_ref, window_cycles);

    nlohmann::ordered_json j;
    j["file"] = path;
    j["samples"] = trace.size();
    j["dt"] = trace.dt;
    j["window_samples"] = {w.begin, w.end};
    j["window_cycles"] = window_cycles;

    auto group = [&](const std::string& prefix) {
        std::vector<std::string> names;
        for (const auto& n : trace.names)
            if (n.rfind(prefix, 0) == 0) names.push_back(n);
        return names;
    };
    std::vector<std::pair<std::string, std::vector<std::string>>> groups;
    for (const char* prefix : {"phase_", "pole_"}) {
        auto names = group(prefix);
        if (!names.empty()) groups.emplace_back(prefix, names);
    }
    if (groups.empty()) groups.emplace_back("all", trace.names);

    j["groups"] = nlohmann::ordered_json::array();
    for (const auto& [label, names] : groups) {
        auto r = analyze_probes(trace, names, w, opts);
        auto jr = to_json(r);
        jr["group"] = label;
        j["groups"].push_back(jr);
    }
    return j;
}

/// Runs the command line. `args` excludes the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Reconfigurable converter simulator: 3-level cascaded H-bridge <-> 2-level bridge"};
    app.require_subcommand(1);

    auto* sim = app.add_subcommand("simulate", "Simulate a scenario, write waveforms, print a JSON summary");
    detail::SimulateFlags flags;
    detail::add_simulate_flags(*sim, flags);

    auto* census = app.add_subcommand("census", "Count switches per category for a topology");
    std::string census_topology;
    census->add_option("--topology", census_topology, "Topology name or 'all'")->required();

    auto* analyze = app.add_subcommand("analyze", "Recompute metrics from an existing waveform file");
    std::string in_path;
    double window = kDefaultWindowCycles, f_ref = 50.0;
    AnalysisOptions aopts;
    analyze->add_option("--in", in_path, "Waveform CSV")->required();
    analyze->add_option("--window", window, "Window in fundamental cycles, ending at the last sample");
    analyze->add_option("--f-ref", f_ref, "Fundamental frequency in Hz");
    analyze->add_option("--level-tol", aopts.level_tol, "Plateau tolerance in volts");
    analyze->add_option("--min-dwell", aopts.min_dwell, "Minimum plateau dwell in seconds");

    try {
        auto rev = detail::reversed(args);
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        // Prints help for --help, the parse error otherwise.
        return app.exit(e, out, err) == 0 ? ok : config_error;
    }

    try {
        if (*sim) {
            auto cfg = detail::build_config(*sim, flags);
            auto summary = run(cfg);
            out << to_json(summary).dump(2) << "\n";
        } else if (*census) {
            if (census_topology == "all") {
                nlohmann::ordered_json j = nlohmann::ordered_json::array();
                for (auto t : {TopologyName::chb3, TopologyName::bridge2, TopologyName::bridge2_ext,
                               TopologyName::reconfig1, TopologyName::reconfig2}) {
                    j.push_back(census_json(t));
                }
                out << j.dump(2) << "\n";
            } else {
                out << census_json(parse_topology(census_topology)).dump(2) << "\n";
            }
        } else if (*analyze) {
            out << analyze_file(in_path, window, f_ref, aopts).dump(2) << "\n";
        }
    } catch (const ConfigError& e) {
        err << "error[config]: " << e.what() << "\n";
        return config_error;
    } catch (const IoError& e) {
        err << "error[io]: " << e.what() << "\n";
        return io_error;
    } catch (const NetlistError& e) {
        err << "error[netlist]: " << e.what() << "\n";
        return topology_error;
    } catch (const TopologyError& e) {
        err << "error[topology]: " << e.what() << "\n";
        return topology_error;
    } catch (const SimulationError& e) {
        err << "error[simulation]: " << e.what() << "\n";
        return simulation_error;
    } catch (const SignalError& e) {
        err << "error[signal]: " << e.what() << "\n";
        return topology_error;
    } catch (const std::out_of_range& e) {
        err << "error[analysis]: " << e.what() << "\n";
        return config_error;
    } catch (const std::exception& e) {
        err << "error[internal]: " << e.what() << "\n";
        return simulation_error;
    }
    return ok;
}

}  // namespace reconf::cli
