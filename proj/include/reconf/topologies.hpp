#pragma once

// =============================================================================
// Converter topologies
// =============================================================================
// Builders for the five circuits of the reconfigurable converter family:
//
//   chb3        three-phase 3-level cascaded H-bridge (2 cells per phase)
//   bridge2     three-phase 2-level bridge, legs driven by pulse generators
//   bridge2_ext 2-level bridge whose legs are driven by H-bridge gate modules
//   reconfig1   chb3 + bridge2 in one netlist, switched by two step signals
//   reconfig2   chb3 + bridge2_ext in one netlist
//
// All circuits share the same six DC sources. Source index 2k is the upper
// source of phase/pair k, 2k+1 the lower one. Phase k is displaced by
// -k * 120 degrees. The load is a balanced floating-neutral wye.
//
// Every builder emits a `doc` string listing each component with its nodes
// and gate so the wiring can be audited.
// =============================================================================

#include "reconf/circuit.hpp"
#include "reconf/signals.hpp"

#include <array>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace reconf {

struct TopologyParams {
    double v_dc = 48.0;
    double r_on = kDefaultRon;
    double r_off = kDefaultRoff;
    double f_ref = 50.0;
    double load_r = 100.0;
};

class TopologyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Thrown by apply_fault for a source index the topology does not have.
class UnknownSource : public TopologyError {
public:
    using TopologyError::TopologyError;
};

inline void check_params(const TopologyParams& p) {
    auto finite_pos = [](double v) { return std::isfinite(v) && v > 0.0; };
    if (!finite_pos(p.v_dc)) throw TopologyError("v_dc must be finite and > 0");
    if (!finite_pos(p.r_on)) throw TopologyError("r_on must be finite and > 0");
    if (!std::isfinite(p.r_off) || !(p.r_off > p.r_on)) throw TopologyError("r_off must be finite and > r_on");
    if (!finite_pos(p.f_ref)) throw TopologyError("f_ref must be finite and > 0");
    if (!finite_pos(p.load_r)) throw TopologyError("load_r must be finite and > 0");
}

enum class TopologyName { chb3, bridge2, bridge2_ext, reconfig1, reconfig2 };

inline const char* to_string(TopologyName t) {
    switch (t) {
        case TopologyName::chb3: return "chb3";
        case TopologyName::bridge2: return "bridge2";
        case TopologyName::bridge2_ext: return "bridge2_ext";
        case TopologyName::reconfig1: return "reconfig1";
        case TopologyName::reconfig2: return "reconfig2";
    }
    return "?";
}

inline TopologyName parse_topology(const std::string& s) {
    for (auto t : {TopologyName::chb3, TopologyName::bridge2, TopologyName::bridge2_ext, TopologyName::reconfig1,
                   TopologyName::reconfig2}) {
        if (s == to_string(t)) return t;
    }
    throw TopologyError("unknown topology '" + s + "' (expected chb3, bridge2, bridge2_ext, reconfig1 or reconfig2)");
}

inline bool is_reconfigurable(TopologyName t) { return t == TopologyName::reconfig1 || t == TopologyName::reconfig2; }

struct BuiltTopology {
    TopologyName name = TopologyName::chb3;
    TopologyParams params;
    Netlist netlist;
    SignalEnv signal_env;
    /// Reconfiguration step signals; empty for standalone circuits.
    std::vector<std::string> mode_signals;
    /// 3-level view: stacked-cell output pair per phase (A, B, C). Empty for
    /// the standalone 2-level bridges.
    std::vector<std::string> phase_probes;
    /// 2-level view: leg output to the negative rail per phase. Empty for chb3.
    std::vector<std::string> pole_probes;
    /// Component ids of the six DC sources, by source index.
    std::vector<std::string> sources;
    /// Bus tie components of each series pair (2-level bus only).
    std::vector<std::vector<std::string>> pair_ties;
    std::string doc;
};

struct CensusReport {
    std::size_t igbt = 0;
    std::size_t three_way = 0;
    std::size_t ideal = 0;
    std::size_t total = 0;

    friend bool operator==(const CensusReport&, const CensusReport&) = default;
};

inline CensusReport switch_census(const Netlist& n) {
    CensusReport r;
    for (const auto& c : n.components) {
        if (const auto* s = std::get_if<ControlledSwitch>(&c.kind)) {
            (s->category == SwitchCategory::igbt ? r.igbt : r.ideal)++;
        } else if (std::holds_alternative<ThreeWaySwitch>(c.kind)) {
            r.three_way++;
        }
    }
    r.total = r.igbt + r.three_way + r.ideal;
    return r;
}

namespace detail {

inline constexpr std::array<char, 3> kPhaseLetters{'a', 'b', 'c'};

inline std::string phase_id(std::size_t k) { return std::string(1, kPhaseLetters[k]); }

/// Incremental netlist construction with named nodes.
class NetBuilder {
public:
    explicit NetBuilder(const TopologyParams& p) : p_(p) { net_.node_names.push_back("gnd"); }

    NodeId node(const std::string& name) {
        if (name == "gnd") return kGround;
        auto [it, inserted] = nodes_.try_emplace(name, NodeId{net_.node_names.size()});
        if (inserted) net_.node_names.push_back(name);
        return it->second;
    }

    void source(const std::string& id, const std::string& pos, const std::string& neg) {
        net_.components.push_back({id, DcSource{node(pos), node(neg), p_.v_dc, 0.0, std::nullopt}});
        line(id, "DcSource", {pos, neg}, std::to_string(p_.v_dc) + " V");
    }

    void resistor(const std::string& id, const std::string& a, const std::string& b, double ohms,
                  const std::string& role = {}) {
        net_.components.push_back({id, Resistor{node(a), node(b), ohms}});
        line(id, "Resistor", {a, b}, role);
    }

    void igbt(const std::string& id, const std::string& a, const std::string& b, const std::string& gate) {
        sw(id, a, b, SwitchCategory::igbt, gate);
    }

    void ideal(const std::string& id, const std::string& a, const std::string& b, const std::string& gate) {
        sw(id, a, b, SwitchCategory::ideal, gate);
    }

    void three_way(const std::string& id, const std::string& common, const std::string& a, const std::string& b,
                   const std::string& select) {
        net_.components.push_back(
            {id, ThreeWaySwitch{node(common), node(a), node(b), p_.r_on, p_.r_off, SignalRef{select}}});
        line(id, "ThreeWay", {common, a, b}, "select=" + select);
    }

    void probe(const std::string& name, const std::string& pos, const std::string& neg) {
        net_.probes.push_back({name, node(pos), node(neg)});
        doc_ << "  probe " << name << " = V(" << pos << ") - V(" << neg << ")\n";
    }

    void note(const std::string& text) { doc_ << text << "\n"; }

    Netlist take_netlist() { return std::move(net_); }
    std::string take_doc() { return doc_.str(); }

private:
    void sw(const std::string& id, const std::string& a, const std::string& b, SwitchCategory cat,
            const std::string& gate) {
        net_.components.push_back({id, ControlledSwitch{node(a), node(b), cat, p_.r_on, p_.r_off, SignalRef{gate}}});
        line(id, to_string(cat), {a, b}, "gate=" + gate);
    }

    void line(const std::string& id, const std::string& kind, std::initializer_list<std::string> nodes,
              const std::string& extra) {
        doc_ << "  " << id << " " << kind << " (";
        bool first = true;
        for (const auto& n : nodes) {
            doc_ << (first ? "" : ", ") << n;
            first = false;
        }
        doc_ << ")";
        if (!extra.empty()) doc_ << " " << extra;
        doc_ << "\n";
    }

    TopologyParams p_;
    Netlist net_;
    std::map<std::string, NodeId> nodes_;
    std::ostringstream doc_;
};

inline double phase_angle(std::size_t k) { return -static_cast<double>(k) * kTwoPi / 3.0; }

inline std::string module_gate(std::size_t k, int ch) { return "hb_" + phase_id(k) + ".s" + std::to_string(ch); }

/// One fundamental-frequency gate module per phase, shared by both cells.
inline void add_gate_modules(SignalEnv& env, const TopologyParams& p) {
    for (std::size_t k = 0; k < 3; ++k) {
        for (int ch = 1; ch <= 4; ++ch) {
            env[module_gate(k, ch)] = Generator{HBridgeGateSpec{p.f_ref, phase_angle(k), BridgePolarity::direct}, ch};
        }
    }
}

/// Separate pulse generators for each 2-level leg: 180 degree conduction,
/// legs 120 degrees apart, upper and lower half a period apart.
inline void add_pulse_generators(SignalEnv& env, const TopologyParams& p) {
    const double period = 1.0 / p.f_ref;
    for (std::size_t k = 0; k < 3; ++k) {
        const double delay = static_cast<double>(k) * period / 3.0;
        env["pg_" + phase_id(k) + "_hi"] = Generator{PulseSpec{period, 0.5, delay, 1.0}, 0};
        env["pg_" + phase_id(k) + "_lo"] = Generator{PulseSpec{period, 0.5, delay + period / 2.0, 1.0}, 0};
    }
}

/// 2-level leg gates derived from H-bridge gate modules. Two modules per
/// phase, leading and lagging the phase by 15 degrees: S1 of either conducts
/// over 210 degrees, their intersection is exactly the 180 degree window where
/// the phase reference is positive. The lower gate is the union of the S2s,
/// which is the complement.
inline void add_module_leg_gates(SignalEnv& env, const TopologyParams& p) {
    env.try_emplace("off", constant_signal(0.0));
    env.try_emplace("on", constant_signal(1.0));
    const double skew = kTwoPi / 24.0;
    for (std::size_t k = 0; k < 3; ++k) {
        const auto ph = phase_id(k);
        const auto lead = "hbx_" + ph + "_lead", lag = "hbx_" + ph + "_lag";
        for (int ch = 1; ch <= 2; ++ch) {
            env[lead + ".s" + std::to_string(ch)] =
                Generator{HBridgeGateSpec{p.f_ref, phase_angle(k) + skew, BridgePolarity::direct}, ch};
            env[lag + ".s" + std::to_string(ch)] =
                Generator{HBridgeGateSpec{p.f_ref, phase_angle(k) - skew, BridgePolarity::direct}, ch};
        }
        env["leg_" + ph + "_hi"] = Mux{lead + ".s1", "off", lag + ".s1"};
        env["leg_" + ph + "_lo"] = Mux{lead + ".s2", lag + ".s2", "on"};
    }
}

inline std::string cell_node(std::size_t k, int cell, const char* terminal) {
    return phase_id(k) + ".c" + std::to_string(cell) + "." + terminal;
}

/// Four IGBTs of one H-bridge cell: Q1 p->la, Q2 la->n, Q3 p->lb, Q4 lb->n.
/// `gates[i]` drives Q(i+1).
inline void add_cell(NetBuilder& b, std::size_t k, int cell, const std::array<std::string, 4>& gates,
                     const std::string& p, const std::string& n, const std::string& la, const std::string& lb) {
    const std::string base = "Q_" + phase_id(k) + std::to_string(cell) + "_";
    b.igbt(base + "1", p, la, gates[0]);
    b.igbt(base + "2", la, n, gates[1]);
    b.igbt(base + "3", p, lb, gates[2]);
    b.igbt(base + "4", lb, n, gates[3]);
}

inline std::array<std::string, 4> module_gates(std::size_t k) {
    return {module_gate(k, 1), module_gate(k, 2), module_gate(k, 3), module_gate(k, 4)};
}

inline void add_load(NetBuilder& b, const std::string& terminal, std::size_t k, double ohms) {
    b.resistor("R_load_" + phase_id(k), terminal, "load.n", ohms, "load, floating wye neutral");
}

inline std::string header(const char* title, const TopologyParams& p) {
    std::ostringstream os;
    os << title << "\n"
       << "params: v_dc=" << p.v_dc << " V, r_on=" << p.r_on << " ohm, r_off=" << p.r_off
       << " ohm, f_ref=" << p.f_ref << " Hz, load_r=" << p.load_r << " ohm/phase\n";
    return os.str();
}

/// Three series pairs of sources tied in parallel onto bus.p / bus.n through
/// resistive links, with two open midpoint isolators (standalone 2-level bus).
inline void add_standalone_bus(NetBuilder& b, BuiltTopology& t, const TopologyParams& p) {
    b.note("bus: three series source pairs tied in parallel through r_on links; bus.n is ground");
    for (std::size_t k = 0; k < 3; ++k) {
        const std::string pair = "pair" + std::to_string(k);
        b.source("E_" + phase_id(k) + "1", pair + ".p", pair + ".mid");
        b.source("E_" + phase_id(k) + "2", pair + ".mid", pair + ".n");
        t.sources.push_back("E_" + phase_id(k) + "1");
        t.sources.push_back("E_" + phase_id(k) + "2");
        b.resistor("T_" + std::to_string(k) + "_pos", pair + ".p", "bus.p", p.r_on, "hard-wired bus tie");
        b.resistor("T_" + std::to_string(k) + "_neg", pair + ".n", "gnd", p.r_on, "hard-wired bus tie");
        t.pair_ties.push_back({"T_" + std::to_string(k) + "_pos", "T_" + std::to_string(k) + "_neg"});
    }
    b.note("bus-side isolators between pair midpoints, held open (gate 0):");
    b.ideal("S_iso_01", "pair0.mid", "pair1.mid", "off");
    b.ideal("S_iso_12", "pair1.mid", "pair2.mid", "off");
}

inline void finish(NetBuilder& b, BuiltTopology& t) {
    t.netlist = b.take_netlist();
    t.doc += b.take_doc();
    auto c = switch_census(t.netlist);
    std::ostringstream os;
    os << "census: IGBT " << c.igbt << ", 3-way " << c.three_way << ", ideal " << c.ideal << ", total " << c.total
       << "\n";
    t.doc += os.str();
}

}  // namespace detail

// =============================================================================
// Standalone circuits
// =============================================================================

/// Three-phase 3-level cascaded H-bridge: two identically gated cells per
/// phase stacked in series, phase bottoms joined at the converter neutral
/// (ground). Phase probe = top of cell 1 to bottom of cell 2.
inline BuiltTopology build_chb3(const TopologyParams& p = {}) {
    check_params(p);
    BuiltTopology t;
    t.name = TopologyName::chb3;
    t.params = p;
    t.doc = detail::header("chb3: three-phase 3-level cascaded H-bridge", p);
    detail::add_gate_modules(t.signal_env, p);

    detail::NetBuilder b(p);
    for (std::size_t k = 0; k < 3; ++k) {
        const auto ph = detail::phase_id(k);
        b.note("phase " + ph + ": cell 1 over cell 2, both gated by module hb_" + ph);
        for (int cell = 1; cell <= 2; ++cell) {
            const auto p_node = detail::cell_node(k, cell, "p");
            const auto n_node = detail::cell_node(k, cell, "n");
            b.source("E_" + ph + std::to_string(cell), p_node, n_node);
            t.sources.push_back("E_" + ph + std::to_string(cell));
            // cell 1's leg B feeds cell 2's leg A; cell 2's leg B is the neutral.
            const auto la = cell == 1 ? detail::cell_node(k, 1, "la") : ph + ".link";
            const auto lb = cell == 1 ? ph + ".link" : std::string("gnd");
            detail::add_cell(b, k, cell, detail::module_gates(k), p_node, n_node, la, lb);
        }
        detail::add_load(b, detail::cell_node(k, 1, "la"), k, p.load_r);
        b.probe("phase_" + ph, detail::cell_node(k, 1, "la"), "gnd");
        t.phase_probes.push_back("phase_" + ph);
    }
    detail::finish(b, t);
    return t;
}

/// Three-phase 2-level bridge on the paralleled-pair bus, each switch driven
/// by its own pulse generator. The two ideal switches are open.
inline BuiltTopology build_bridge2(const TopologyParams& p = {}) {
    check_params(p);
    BuiltTopology t;
    t.name = TopologyName::bridge2;
    t.params = p;
    t.doc = detail::header("bridge2: three-phase 2-level bridge, separate pulse generators", p);
    detail::add_pulse_generators(t.signal_env, p);
    t.signal_env["off"] = constant_signal(0.0);

    detail::NetBuilder b(p);
    detail::add_standalone_bus(b, t, p);
    for (std::size_t k = 0; k < 3; ++k) {
        const auto ph = detail::phase_id(k);
        b.igbt("Q_" + ph + "_hi", "bus.p", "pole." + ph, "pg_" + ph + "_hi");
        b.igbt("Q_" + ph + "_lo", "pole." + ph, "gnd", "pg_" + ph + "_lo");
        detail::add_load(b, "pole." + ph, k, p.load_r);
        b.probe("pole_" + ph, "pole." + ph, "gnd");
        t.pole_probes.push_back("pole_" + ph);
    }
    detail::finish(b, t);
    return t;
}

/// 2-level bridge whose legs are driven by H-bridge gate modules instead of
/// separate pulse generators. Same bus and pole structure as bridge2 and the
/// same 180 degree leg timing, so the pole waveforms are equivalent.
inline BuiltTopology build_bridge2_ext(const TopologyParams& p = {}) {
    check_params(p);
    BuiltTopology t;
    t.name = TopologyName::bridge2_ext;
    t.params = p;
    t.doc = detail::header("bridge2_ext: 2-level bridge, legs gated by H-bridge gate modules", p);
    detail::add_module_leg_gates(t.signal_env, p);

    detail::NetBuilder b(p);
    detail::add_standalone_bus(b, t, p);
    b.note("legs: 6 IGBTs; leg k upper = hbx_k_lead.s1 AND hbx_k_lag.s1, lower = hbx_k_lead.s2 OR hbx_k_lag.s2");
    for (std::size_t k = 0; k < 3; ++k) {
        const auto ph = detail::phase_id(k);
        b.igbt("Q_" + ph + "_hi", "bus.p", "pole." + ph, "leg_" + ph + "_hi");
        b.igbt("Q_" + ph + "_lo", "pole." + ph, "gnd", "leg_" + ph + "_lo");
        detail::add_load(b, "pole." + ph, k, p.load_r);
        b.probe("pole_" + ph, "pole." + ph, "gnd");
        t.pole_probes.push_back("pole_" + ph);
    }
    detail::finish(b, t);
    return t;
}

// =============================================================================
// Reconfigurable circuits
// =============================================================================

/// Series on-switch count between bus.p and each phase's upper leg rail in
/// 2-level mode (not counting the rail switch itself).
inline std::array<std::size_t, 3> upper_rail_chain(int variant) {
    return variant == 1 ? std::array<std::size_t, 3>{0, 2, 6} : std::array<std::size_t, 3>{3, 4, 5};
}

inline constexpr double kDefaultReconfigureAt = 3.0;

/// One netlist holding the 24 cell IGBTs of chb3 plus a reconfiguration
/// network. Two step signals switch it at the reconfiguration time:
/// mode_a (1 -> 0) drives the 3-level connections, mode_b (0 -> 1) the 2-level
/// ones and every three-way selector.
///
/// Per phase k, sources are wired through switches:
///   3-level: E_k1 -> cell 1 rails, E_k2 -> cell 2 rails, cell 1 leg B to
///            cell 2 leg A, cell 2 leg B to the converter neutral (ground).
///   2-level: E_k1 and E_k2 in series, tied to bus.p / bus.n; cell 1 rails
///            moved onto the bus so its leg A is the pole; cell 2 leg B is
///            parked on the pole.
/// Variant 1 drives the poles from separate pulse generators (muxed onto
/// cell 1's Q1/Q2) and parks every other IGBT off. Variant 2 drives them from
/// the module-derived leg gates of bridge2_ext, leaves the remaining IGBTs on
/// their modules (they only switch disconnected nodes in 2-level mode) and
/// swaps paired ideal switches for three-way selectors.
inline BuiltTopology build_reconfig(int variant, const TopologyParams& p = {}) {
    if (variant != 1 && variant != 2) throw TopologyError("reconfigurable variant must be 1 or 2");
    check_params(p);
    BuiltTopology t;
    t.name = variant == 1 ? TopologyName::reconfig1 : TopologyName::reconfig2;
    t.params = p;
    t.doc = detail::header(variant == 1 ? "reconfig1: chb3 <-> bridge2 (pulse generators)"
                                        : "reconfig2: chb3 <-> bridge2_ext (gate modules)",
                           p);
    auto& env = t.signal_env;
    detail::add_gate_modules(env, p);
    env["off"] = constant_signal(0.0);
    env["mode_a"] = Generator{StepSpec{kDefaultReconfigureAt, 1.0, 0.0}, 0};
    env["mode_b"] = Generator{StepSpec{kDefaultReconfigureAt, 0.0, 1.0}, 0};
    t.mode_signals = {"mode_a", "mode_b"};
    if (variant == 1) {
        detail::add_pulse_generators(env, p);
    } else {
        detail::add_module_leg_gates(env, p);
    }

    const auto chains = upper_rail_chain(variant);
    detail::NetBuilder b(p);
    {
        std::ostringstream os;
        os << "2-level upper-rail series on-switches per phase (a, b, c): " << chains[0] + 1 << ", "
           << chains[1] + 1 << ", " << chains[2] + 1;
        b.note(os.str());
    }
    for (std::size_t k = 0; k < 3; ++k) {
        const auto ph = detail::phase_id(k);
        const auto s1p = ph + ".s1p", s1n = ph + ".s1n", s2p = ph + ".s2p", s2n = ph + ".s2n";
        const auto c1p = detail::cell_node(k, 1, "p"), c1n = detail::cell_node(k, 1, "n");
        const auto c1a = detail::cell_node(k, 1, "la"), c1b = detail::cell_node(k, 1, "lb");
        const auto c2p = detail::cell_node(k, 2, "p"), c2n = detail::cell_node(k, 2, "n");
        const auto c2a = detail::cell_node(k, 2, "la"), c2b = detail::cell_node(k, 2, "lb");

        b.note("phase " + ph + ":");
        b.source("E_" + ph + "1", s1p, s1n);
        b.source("E_" + ph + "2", s2p, s2n);
        t.sources.push_back("E_" + ph + "1");
        t.sources.push_back("E_" + ph + "2");

        std::array<std::string, 4> g1 = detail::module_gates(k), g2 = detail::module_gates(k);
        if (variant == 1) {
            const std::string pid = ph;
            env["g_" + pid + "1_1"] = Mux{"mode_b", detail::module_gate(k, 1), "pg_" + pid + "_hi"};
            env["g_" + pid + "1_2"] = Mux{"mode_b", detail::module_gate(k, 2), "pg_" + pid + "_lo"};
            g1[0] = "g_" + pid + "1_1";
            g1[1] = "g_" + pid + "1_2";
            for (int ch = 3; ch <= 4; ++ch) {
                g1[static_cast<std::size_t>(ch - 1)] = "g_" + pid + "1_" + std::to_string(ch);
                env[g1[static_cast<std::size_t>(ch - 1)]] = Mux{"mode_b", detail::module_gate(k, ch), "off"};
            }
            for (int ch = 1; ch <= 4; ++ch) {
                g2[static_cast<std::size_t>(ch - 1)] = "g_" + pid + "2_" + std::to_string(ch);
                env[g2[static_cast<std::size_t>(ch - 1)]] = Mux{"mode_b", detail::module_gate(k, ch), "off"};
            }
        } else {
            env["g_" + ph + "1_1"] = Mux{"mode_b", detail::module_gate(k, 1), "leg_" + ph + "_hi"};
            env["g_" + ph + "1_2"] = Mux{"mode_b", detail::module_gate(k, 2), "leg_" + ph + "_lo"};
            g1[0] = "g_" + ph + "1_1";
            g1[1] = "g_" + ph + "1_2";
        }
        detail::add_cell(b, k, 1, g1, c1p, c1n, c1a, c1b);
        detail::add_cell(b, k, 2, g2, c2p, c2n, c2a, c2b);

        // Upper-rail chain from bus.p down to this phase's rail end.
        std::string rail_end = "bus.p";
        for (std::size_t i = 0; i < chains[k]; ++i) {
            std::string next = ph + ".rail" + std::to_string(i + 1);
            b.ideal("S_" + ph + "_chain" + std::to_string(i + 1), rail_end, next, "mode_b");
            rail_end = next;
        }

        b.ideal("S_" + ph + "_link", c1b, c2a, "mode_a");
        b.ideal("S_" + ph + "_s2n", s2n, c2n, "mode_a");
        b.ideal("S_" + ph + "_tie_pos", s1p, "bus.p", "mode_b");
        b.ideal("S_" + ph + "_tie_neg", s2n, "bus.n", "mode_b");
        t.pair_ties.push_back({"S_" + ph + "_tie_pos", "S_" + ph + "_tie_neg"});
        b.three_way("W_" + ph + "_pair", s2p, c2p, s1n, "mode_b");
        b.three_way("W_" + ph + "_out", c2b, "gnd", c1a, "mode_b");
        if (variant == 1) {
            b.ideal("S_" + ph + "_s1p", s1p, c1p, "mode_a");
            b.ideal("S_" + ph + "_s1n", s1n, c1n, "mode_a");
            b.ideal("S_" + ph + "_rail_pos", rail_end, c1p, "mode_b");
            b.ideal("S_" + ph + "_rail_neg", c1n, "bus.n", "mode_b");
        } else {
            b.three_way("W_" + ph + "_rail_pos", c1p, s1p, rail_end, "mode_b");
            b.three_way("W_" + ph + "_rail_neg", c1n, s1n, "bus.n", "mode_b");
        }

        detail::add_load(b, c1a, k, p.load_r);
    }
    b.note("bus-side isolators between pair midpoints, held open (gate 0):");
    b.ideal("S_iso_01", "a.s1n", "b.s1n", "off");
    b.ideal("S_iso_12", "b.s1n", "c.s1n", "off");

    for (std::size_t k = 0; k < 3; ++k) {
        const auto ph = detail::phase_id(k);
        b.probe("phase_" + ph, detail::cell_node(k, 1, "la"), detail::cell_node(k, 2, "lb"));
        t.phase_probes.push_back("phase_" + ph);
    }
    for (std::size_t k = 0; k < 3; ++k) {
        const auto ph = detail::phase_id(k);
        b.probe("pole_" + ph, detail::cell_node(k, 1, "la"), "bus.n");
        t.pole_probes.push_back("pole_" + ph);
    }
    detail::finish(b, t);
    return t;
}

inline BuiltTopology build_topology(TopologyName name, const TopologyParams& p = {}) {
    switch (name) {
        case TopologyName::chb3: return build_chb3(p);
        case TopologyName::bridge2: return build_bridge2(p);
        case TopologyName::bridge2_ext: return build_bridge2_ext(p);
        case TopologyName::reconfig1: return build_reconfig(1, p);
        case TopologyName::reconfig2: return build_reconfig(2, p);
    }
    throw TopologyError("unknown topology");
}

/// Moves the reconfiguration event of a reconfigurable topology.
inline BuiltTopology with_reconfigure_time(BuiltTopology t, double at) {
    if (t.mode_signals.empty()) throw TopologyError(std::string(to_string(t.name)) + " has no reconfiguration signals");
    for (const auto& name : t.mode_signals) {
        auto& gen = std::get<Generator>(t.signal_env.at(name));
        std::get<StepSpec>(gen.spec).step_time = at;
    }
    return t;
}

// =============================================================================
// Faults
// =============================================================================

enum class FaultKind { open, shorted };

inline const char* to_string(FaultKind k) { return k == FaultKind::open ? "open" : "short"; }

struct FaultSpec {
    std::size_t source_index = 0;
    FaultKind kind = FaultKind::open;
    double at = 0.0;

    friend bool operator==(const FaultSpec&, const FaultSpec&) = default;
};

/// Nullifies source `fault.source_index` from `fault.at` on: its EMF drops to
/// 0 V while its branch keeps conducting (at r_on for an open source, at its
/// own series resistance for a short). Where the source feeds the paralleled
/// 2-level bus, the faulted pair's bus ties are opened from the same instant
/// so the healthy pairs keep holding the bus. Hard-wired ties are replaced
/// by ideal switches for that purpose, which shows up in the census.
inline BuiltTopology apply_fault(BuiltTopology t, const FaultSpec& fault) {
    if (fault.source_index >= t.sources.size()) {
        throw UnknownSource("source index " + std::to_string(fault.source_index) + " out of range (topology has " +
                            std::to_string(t.sources.size()) + " sources)");
    }
    if (!std::isfinite(fault.at) || fault.at < 0.0) throw TopologyError("fault time must be finite and >= 0");

    const std::string active = "fault.src" + std::to_string(fault.source_index);
    t.signal_env[active] = Generator{StepSpec{fault.at, 0.0, 1.0}, 0};
    t.signal_env.try_emplace("off", constant_signal(0.0));
    t.signal_env.try_emplace("on", constant_signal(1.0));

    auto find = [&](const std::string& id) -> Component& {
        for (auto& c : t.netlist.components)
            if (c.id == id) return c;
        throw TopologyError("component '" + id + "' not found");
    };

    auto& src = std::get<DcSource>(find(t.sources[fault.source_index]).kind);
    src.fault = SourceFault{SignalRef{active}, fault.kind == FaultKind::open ? t.params.r_on : src.series_r};

    std::ostringstream os;
    os << "fault: " << to_string(fault.kind) << " on " << t.sources[fault.source_index] << " from t=" << fault.at
       << " s";
    const std::size_t pair = fault.source_index / 2;
    if (pair < t.pair_ties.size()) {
        os << "; pair " << pair << " ties opened:";
        for (const auto& id : t.pair_ties[pair]) {
            auto& c = find(id);
            const std::string gate = "fault.tie." + id;
            if (auto* sw = std::get_if<ControlledSwitch>(&c.kind)) {
                t.signal_env[gate] = Mux{active, sw->gate.name, "off"};
                sw->gate = SignalRef{gate};
            } else if (auto* r = std::get_if<Resistor>(&c.kind)) {
                t.signal_env[gate] = Mux{active, "on", "off"};
                c.kind = ControlledSwitch{r->a, r->b, SwitchCategory::ideal, r->ohms, t.params.r_off, SignalRef{gate}};
            }
            os << " " << id;
        }
    }
    t.doc += os.str() + "\n";
    return t;
}

}  // namespace reconf
