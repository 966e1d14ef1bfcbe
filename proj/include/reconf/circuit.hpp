#pragma once

// =============================================================================
// Switched resistive networks: netlist, validation and MNA solution
// =============================================================================
// Every switch is a two-state resistor (r_on / r_off), so for a given set of
// gate values the network is linear and resistive. The unknowns are the
// non-ground node voltages plus one current per DC source:
//
//   row(node n):    sum_j g_nj (V_n - V_j) - I_s [n = pos(s)] + I_s [n = neg(s)] = 0
//   row(source s):  V_pos - V_neg + R_s I_s = E_s
//
// I_s is the current delivered by source s out of its positive terminal.
// =============================================================================

#include "reconf/signals.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

namespace reconf {

// =============================================================================
// Domain types
// =============================================================================

/// Node index; 0 is the ground/reference node.
struct NodeId {
    std::size_t index = 0;

    friend bool operator==(NodeId, NodeId) = default;
    friend auto operator<=>(NodeId, NodeId) = default;
};

inline constexpr NodeId kGround{0};

enum class SwitchCategory { igbt, ideal };

inline const char* to_string(SwitchCategory c) { return c == SwitchCategory::igbt ? "IGBT" : "Ideal"; }

inline constexpr double kDefaultRon = 1e-3;
inline constexpr double kDefaultRoff = 1e12;

/// Step-controlled fault substitution on a DC source: while `active` reads on,
/// the EMF is zero and the branch resistance becomes `series_r`.
struct SourceFault {
    SignalRef active;
    double series_r = 0.0;
};

struct DcSource {
    NodeId pos;
    NodeId neg;
    double volts = 48.0;
    double series_r = 0.0;
    std::optional<SourceFault> fault;
};

struct Resistor {
    NodeId a;
    NodeId b;
    double ohms = 1.0;
};

struct ControlledSwitch {
    NodeId a;
    NodeId b;
    SwitchCategory category = SwitchCategory::ideal;
    double r_on = kDefaultRon;
    double r_off = kDefaultRoff;
    SignalRef gate;
};

/// Single-pole double-throw selector: common-throw_a conducts while select
/// reads off, common-throw_b while it reads on.
struct ThreeWaySwitch {
    NodeId common;
    NodeId throw_a;
    NodeId throw_b;
    double r_on = kDefaultRon;
    double r_off = kDefaultRoff;
    SignalRef select;
};

using ComponentKind = std::variant<DcSource, Resistor, ControlledSwitch, ThreeWaySwitch>;

struct Component {
    std::string id;
    ComponentKind kind;
};

/// Voltage tap: V(pos) - V(neg).
struct Probe {
    std::string name;
    NodeId pos;
    NodeId neg;
};

struct Netlist {
    std::size_t node_count = 1;
    std::vector<Component> components;
    std::vector<Probe> probes;
    std::vector<std::string> node_names;  // optional, indexed by node
};

/// Terminals of a component in declaration order.
inline std::vector<NodeId> terminals(const Component& c) {
    return std::visit(
        [](const auto& k) -> std::vector<NodeId> {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, DcSource>) return {k.pos, k.neg};
            else if constexpr (std::is_same_v<T, ThreeWaySwitch>) return {k.common, k.throw_a, k.throw_b};
            else return {k.a, k.b};
        },
        c.kind);
}

inline std::string node_label(const Netlist& n, NodeId id) {
    if (id.index < n.node_names.size() && !n.node_names[id.index].empty()) {
        return n.node_names[id.index] + " (#" + std::to_string(id.index) + ")";
    }
    return "#" + std::to_string(id.index);
}

// =============================================================================
// Validation
// =============================================================================

enum class IssueKind { disconnected_graph, missing_ground, duplicate_id, bad_resistance, bad_probe };

inline const char* to_string(IssueKind k) {
    switch (k) {
        case IssueKind::disconnected_graph: return "DisconnectedGraph";
        case IssueKind::missing_ground: return "MissingGround";
        case IssueKind::duplicate_id: return "DuplicateId";
        case IssueKind::bad_resistance: return "BadResistance";
        case IssueKind::bad_probe: return "BadProbe";
    }
    return "?";
}

struct NetlistIssue {
    IssueKind kind;
    std::string subject;  // offending component, node or probe
    std::string detail;
};

class NetlistError : public std::runtime_error {
public:
    explicit NetlistError(std::vector<NetlistIssue> issues)
        : std::runtime_error(format(issues)), issues_(std::move(issues)) {}

    [[nodiscard]] const std::vector<NetlistIssue>& issues() const { return issues_; }

    [[nodiscard]] bool has(IssueKind k) const {
        return std::any_of(issues_.begin(), issues_.end(), [k](const auto& i) { return i.kind == k; });
    }

private:
    static std::string format(const std::vector<NetlistIssue>& issues) {
        std::ostringstream os;
        os << "netlist validation failed:";
        for (const auto& i : issues) os << "\n  " << to_string(i.kind) << " [" << i.subject << "]: " << i.detail;
        return os.str();
    }

    std::vector<NetlistIssue> issues_;
};

namespace detail {

inline bool positive_finite(double r) { return std::isfinite(r) && r > 0.0; }

inline void check_switch_resistances(const std::string& id, double r_on, double r_off,
                                     std::vector<NetlistIssue>& out) {
    if (!positive_finite(r_on)) {
        out.push_back({IssueKind::bad_resistance, id, "r_on must be finite and > 0"});
    } else if (!std::isfinite(r_off) || !(r_off > r_on)) {
        out.push_back({IssueKind::bad_resistance, id, "r_off must be finite and > r_on"});
    }
}

}  // namespace detail

/// Checks a netlist and returns a copy with dense node numbering (in order of
/// first appearance, ground kept at 0). Every violation found is reported in
/// one NetlistError.
inline Netlist validate(const Netlist& input) {
    std::vector<NetlistIssue> issues;

    std::set<std::string> ids;
    for (const auto& c : input.components) {
        if (!ids.insert(c.id).second) {
            issues.push_back({IssueKind::duplicate_id, c.id, "component id used more than once"});
        }
        std::visit(
            [&](const auto& k) {
                using T = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<T, DcSource>) {
                    if (!std::isfinite(k.volts)) issues.push_back({IssueKind::bad_resistance, c.id, "source volts must be finite"});
                    if (!std::isfinite(k.series_r) || k.series_r < 0.0) {
                        issues.push_back({IssueKind::bad_resistance, c.id, "series_r must be finite and >= 0"});
                    }
                    if (k.fault && (!std::isfinite(k.fault->series_r) || k.fault->series_r < 0.0)) {
                        issues.push_back({IssueKind::bad_resistance, c.id, "fault series_r must be finite and >= 0"});
                    }
                } else if constexpr (std::is_same_v<T, Resistor>) {
                    if (!detail::positive_finite(k.ohms)) {
                        issues.push_back({IssueKind::bad_resistance, c.id, "resistance must be finite and > 0"});
                    }
                } else {
                    detail::check_switch_resistances(c.id, k.r_on, k.r_off, issues);
                }
            },
            c.kind);
    }

    std::set<std::string> probe_names;
    for (const auto& p : input.probes) {
        if (p.name.empty() || p.name.find_first_of(",\r\n\"") != std::string::npos) {
            issues.push_back({IssueKind::bad_probe, p.name, "probe names must be non-empty without commas, quotes or newlines"});
        } else if (p.name == "time") {
            issues.push_back({IssueKind::bad_probe, p.name, "'time' is reserved for the time column"});
        } else if (!probe_names.insert(p.name).second) {
            issues.push_back({IssueKind::bad_probe, p.name, "duplicate probe name"});
        }
    }

    // Dense renumbering over nodes that are actually used.
    std::map<std::size_t, std::size_t> remap;
    remap[0] = 0;
    bool ground_used = false;
    auto touch = [&](NodeId n) {
        if (n.index == 0) ground_used = true;
        remap.try_emplace(n.index, remap.size());
    };
    for (const auto& c : input.components)
        for (auto n : terminals(c)) touch(n);
    if (!ground_used) {
        issues.push_back({IssueKind::missing_ground, "node 0", "no component touches the ground node"});
    }
    for (const auto& p : input.probes) {
        for (auto n : {p.pos, p.neg}) {
            if (!remap.count(n.index)) {
                issues.push_back({IssueKind::bad_probe, p.name, "probe node #" + std::to_string(n.index) + " is not connected to any component"});
            }
        }
    }

    // Connectivity, every component is an edge set (switches included).
    std::vector<std::vector<std::size_t>> adj(remap.size());
    for (const auto& c : input.components) {
        auto t = terminals(c);
        for (std::size_t i = 1; i < t.size(); ++i) {
            auto u = remap[t[0].index], v = remap[t[i].index];
            adj[u].push_back(v);
            adj[v].push_back(u);
        }
    }
    std::vector<bool> seen(adj.size(), false);
    std::queue<std::size_t> q;
    q.push(0);
    seen[0] = true;
    while (!q.empty()) {
        auto u = q.front();
        q.pop();
        for (auto v : adj[u]) {
            if (!seen[v]) {
                seen[v] = true;
                q.push(v);
            }
        }
    }
    if (ground_used) {
        for (const auto& [orig, dense] : remap) {
            if (!seen[dense]) {
                issues.push_back({IssueKind::disconnected_graph, node_label(input, NodeId{orig}),
                                  "node has no path to ground"});
            }
        }
    }

    if (!issues.empty()) throw NetlistError(std::move(issues));

    Netlist out;
    out.node_count = remap.size();
    auto map_node = [&](NodeId n) { return NodeId{remap.at(n.index)}; };
    for (auto c : input.components) {
        std::visit(
            [&](auto& k) {
                using T = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<T, DcSource>) {
                    k.pos = map_node(k.pos);
                    k.neg = map_node(k.neg);
                } else if constexpr (std::is_same_v<T, ThreeWaySwitch>) {
                    k.common = map_node(k.common);
                    k.throw_a = map_node(k.throw_a);
                    k.throw_b = map_node(k.throw_b);
                } else {
                    k.a = map_node(k.a);
                    k.b = map_node(k.b);
                }
            },
            c.kind);
        out.components.push_back(std::move(c));
    }
    for (auto p : input.probes) {
        p.pos = map_node(p.pos);
        p.neg = map_node(p.neg);
        out.probes.push_back(std::move(p));
    }
    out.node_names.assign(out.node_count, {});
    for (const auto& [orig, dense] : remap) {
        if (orig < input.node_names.size()) out.node_names[dense] = input.node_names[orig];
    }
    return out;
}

/// Signal references used by a netlist, in order of first use.
inline std::vector<std::string> referenced_signals(const Netlist& n) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    auto add = [&](const std::string& s) {
        if (seen.insert(s).second) out.push_back(s);
    };
    for (const auto& c : n.components) {
        if (const auto* s = std::get_if<ControlledSwitch>(&c.kind)) add(s->gate.name);
        if (const auto* s = std::get_if<ThreeWaySwitch>(&c.kind)) add(s->select.name);
        if (const auto* s = std::get_if<DcSource>(&c.kind); s && s->fault) add(s->fault->active.name);
    }
    return out;
}

/// Every referenced signal must resolve and emit only gate levels 0/1.
inline void check_bindings(const Netlist& n, const SignalEnv& env) {
    CompiledSignals compiled(env);
    for (const auto& name : referenced_signals(n)) {
        if (!compiled.contains(name)) throw SignalError("netlist refers to unknown signal '" + name + "'");
        for (double level : compiled.possible_levels(name)) {
            if (level != 0.0 && level != 1.0) {
                throw SignalError("gate-bound signal '" + name + "' may emit level " + std::to_string(level) +
                                  "; gate signals must be 0 or 1");
            }
        }
    }
}

// =============================================================================
// Effective resistances
// =============================================================================

using GateValues = std::unordered_map<std::string, double>;

class MissingGateValue : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Resistance of each conducting pair of a component: one value for two-
/// terminal parts, (common-throw_a, common-throw_b) for a three-way switch.
struct PairResistance {
    double first = 0.0;
    std::optional<double> second;
};

namespace detail {

inline double lookup_gate(const GateValues& g, const SignalRef& ref, const std::string& owner) {
    auto it = g.find(ref.name);
    if (it == g.end()) throw MissingGateValue("no value for signal '" + ref.name + "' used by " + owner);
    return it->second;
}

inline bool gate_on(double v) { return v >= kGateThreshold; }

}  // namespace detail

inline PairResistance effective_resistance(const Component& c, const GateValues& gates) {
    return std::visit(
        [&](const auto& k) -> PairResistance {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, DcSource>) {
                if (k.fault && detail::gate_on(detail::lookup_gate(gates, k.fault->active, c.id))) {
                    return {k.fault->series_r, std::nullopt};
                }
                return {k.series_r, std::nullopt};
            } else if constexpr (std::is_same_v<T, Resistor>) {
                return {k.ohms, std::nullopt};
            } else if constexpr (std::is_same_v<T, ControlledSwitch>) {
                return {detail::gate_on(detail::lookup_gate(gates, k.gate, c.id)) ? k.r_on : k.r_off, std::nullopt};
            } else {
                bool b = detail::gate_on(detail::lookup_gate(gates, k.select, c.id));
                return b ? PairResistance{k.r_off, k.r_on} : PairResistance{k.r_on, k.r_off};
            }
        },
        c.kind);
}

// =============================================================================
// MNA assembly and solve
// =============================================================================

class SingularSystem : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Solution {
    std::vector<double> node_voltages;    // index = node, [0] = 0
    std::vector<double> source_currents;  // one per DcSource, in component order
};

/// Per-component operating point resolved from gate values: a conductance per
/// conducting pair, plus EMF and branch resistance for sources.
struct StampState {
    std::vector<double> g1;
    std::vector<double> g2;
    std::vector<double> emf;
    std::vector<double> branch_r;
};

namespace detail {

/// Resolves every component against an accessor `gate(ref) -> double`.
template <class GateFn>
StampState resolve_state(const Netlist& n, GateFn&& gate) {
    StampState st;
    st.g1.assign(n.components.size(), 0.0);
    st.g2.assign(n.components.size(), 0.0);
    for (std::size_t i = 0; i < n.components.size(); ++i) {
        const auto& c = n.components[i];
        std::visit(
            [&](const auto& k) {
                using T = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<T, DcSource>) {
                    bool faulted = k.fault && gate_on(gate(k.fault->active, c.id));
                    st.emf.push_back(faulted ? 0.0 : k.volts);
                    st.branch_r.push_back(faulted ? k.fault->series_r : k.series_r);
                } else if constexpr (std::is_same_v<T, Resistor>) {
                    st.g1[i] = 1.0 / k.ohms;
                } else if constexpr (std::is_same_v<T, ControlledSwitch>) {
                    st.g1[i] = 1.0 / (gate_on(gate(k.gate, c.id)) ? k.r_on : k.r_off);
                } else {
                    bool b = gate_on(gate(k.select, c.id));
                    st.g1[i] = 1.0 / (b ? k.r_off : k.r_on);
                    st.g2[i] = 1.0 / (b ? k.r_on : k.r_off);
                }
            },
            c.kind);
    }
    return st;
}

inline void stamp_conductance(Eigen::MatrixXd& A, NodeId a, NodeId b, double g) {
    const auto ia = static_cast<Eigen::Index>(a.index) - 1;
    const auto ib = static_cast<Eigen::Index>(b.index) - 1;
    if (ia >= 0) A(ia, ia) += g;
    if (ib >= 0) A(ib, ib) += g;
    if (ia >= 0 && ib >= 0) {
        A(ia, ib) -= g;
        A(ib, ia) -= g;
    }
}

}  // namespace detail

inline std::size_t source_count(const Netlist& n) {
    return static_cast<std::size_t>(std::count_if(n.components.begin(), n.components.end(),
                                                  [](const auto& c) { return std::holds_alternative<DcSource>(c.kind); }));
}

inline Eigen::MatrixXd assemble_matrix(const Netlist& n, const StampState& st) {
    const auto nodes = static_cast<Eigen::Index>(n.node_count) - 1;
    const auto size = nodes + static_cast<Eigen::Index>(st.emf.size());
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(size, size);
    Eigen::Index src = 0;
    for (std::size_t i = 0; i < n.components.size(); ++i) {
        const auto& c = n.components[i];
        if (const auto* s = std::get_if<DcSource>(&c.kind)) {
            const auto row = nodes + src;
            const auto p = static_cast<Eigen::Index>(s->pos.index) - 1;
            const auto q = static_cast<Eigen::Index>(s->neg.index) - 1;
            if (p >= 0) {
                A(p, row) -= 1.0;
                A(row, p) += 1.0;
            }
            if (q >= 0) {
                A(q, row) += 1.0;
                A(row, q) -= 1.0;
            }
            A(row, row) += st.branch_r[static_cast<std::size_t>(src)];
            ++src;
        } else if (const auto* r = std::get_if<Resistor>(&c.kind)) {
            detail::stamp_conductance(A, r->a, r->b, st.g1[i]);
        } else if (const auto* sw = std::get_if<ControlledSwitch>(&c.kind)) {
            detail::stamp_conductance(A, sw->a, sw->b, st.g1[i]);
        } else {
            const auto& tw = std::get<ThreeWaySwitch>(c.kind);
            detail::stamp_conductance(A, tw.common, tw.throw_a, st.g1[i]);
            detail::stamp_conductance(A, tw.common, tw.throw_b, st.g2[i]);
        }
    }
    return A;
}

inline Eigen::VectorXd assemble_rhs(const Netlist& n, const StampState& st) {
    const auto nodes = static_cast<Eigen::Index>(n.node_count) - 1;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(nodes + static_cast<Eigen::Index>(st.emf.size()));
    for (std::size_t s = 0; s < st.emf.size(); ++s) b(nodes + static_cast<Eigen::Index>(s)) = st.emf[s];
    return b;
}

/// LU factorization of one MNA matrix, with singularity detection.
class MnaFactor {
public:
    explicit MnaFactor(const Eigen::MatrixXd& A) : A_(A), lu_(A) {
        const auto& d = lu_.matrixLU().diagonal();
        for (Eigen::Index i = 0; i < d.size(); ++i) {
            if (d(i) == 0.0 || !std::isfinite(d(i))) {
                throw SingularSystem("MNA matrix is singular (zero pivot at row " + std::to_string(i) + ")");
            }
        }
    }

    /// Solve with one step of iterative refinement. The refined vector is kept
    /// only when it lowers the residual; on badly conditioned systems a
    /// working-precision correction can make the answer worse.
    [[nodiscard]] Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
        Eigen::VectorXd x = lu_.solve(b);
        Eigen::VectorXd r = b - A_ * x;
        Eigen::VectorXd refined = x + lu_.solve(r);
        const Eigen::VectorXd r2 = b - A_ * refined;
        if (r2.lpNorm<Eigen::Infinity>() < r.lpNorm<Eigen::Infinity>()) return refined;
        return x;
    }

private:
    Eigen::MatrixXd A_;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
};

inline Solution unpack_solution(const Netlist& n, const Eigen::VectorXd& x) {
    Solution sol;
    const auto nodes = static_cast<Eigen::Index>(n.node_count) - 1;
    sol.node_voltages.assign(n.node_count, 0.0);
    for (Eigen::Index i = 0; i < nodes; ++i) sol.node_voltages[static_cast<std::size_t>(i + 1)] = x(i);
    for (Eigen::Index i = nodes; i < x.size(); ++i) sol.source_currents.push_back(x(i));
    return sol;
}

/// Solves the network for one set of gate values. Expects a validated netlist.
inline Solution solve_step(const Netlist& n, const GateValues& gates) {
    auto st = detail::resolve_state(n, [&](const SignalRef& r, const std::string& owner) {
        return detail::lookup_gate(gates, r, owner);
    });
    MnaFactor lu(assemble_matrix(n, st));
    return unpack_solution(n, lu.solve(assemble_rhs(n, st)));
}

// =============================================================================
// Branch currents and KCL check
// =============================================================================

struct KclReport {
    double max_abs_residual = 0.0;   // A
    double max_branch_current = 0.0; // A
    /// Residual relative to the largest branch current (0 when nothing flows).
    [[nodiscard]] double relative() const {
        return max_branch_current > 0.0 ? max_abs_residual / max_branch_current : max_abs_residual;
    }
};

inline KclReport kcl_check(const Netlist& n, const StampState& st, const Solution& sol) {
    std::vector<double> net(n.node_count, 0.0);  // current leaving each node
    double max_i = 0.0;
    const auto& v = sol.node_voltages;
    auto branch = [&](NodeId a, NodeId b, double g) {
        double i = g * (v[a.index] - v[b.index]);
        net[a.index] += i;
        net[b.index] -= i;
        max_i = std::max(max_i, std::abs(i));
    };
    std::size_t src = 0;
    for (std::size_t i = 0; i < n.components.size(); ++i) {
        const auto& c = n.components[i];
        if (const auto* s = std::get_if<DcSource>(&c.kind)) {
            double cur = sol.source_currents[src++];
            net[s->pos.index] -= cur;
            net[s->neg.index] += cur;
            max_i = std::max(max_i, std::abs(cur));
        } else if (const auto* r = std::get_if<Resistor>(&c.kind)) {
            branch(r->a, r->b, st.g1[i]);
        } else if (const auto* sw = std::get_if<ControlledSwitch>(&c.kind)) {
            branch(sw->a, sw->b, st.g1[i]);
        } else {
            const auto& tw = std::get<ThreeWaySwitch>(c.kind);
            branch(tw.common, tw.throw_a, st.g1[i]);
            branch(tw.common, tw.throw_b, st.g2[i]);
        }
    }
    KclReport rep;
    rep.max_branch_current = max_i;
    for (std::size_t k = 1; k < net.size(); ++k) rep.max_abs_residual = std::max(rep.max_abs_residual, std::abs(net[k]));
    return rep;
}

inline KclReport kcl_check(const Netlist& n, const GateValues& gates, const Solution& sol) {
    auto st = detail::resolve_state(n, [&](const SignalRef& r, const std::string& owner) {
        return detail::lookup_gate(gates, r, owner);
    });
    return kcl_check(n, st, sol);
}

/// Current through a two-terminal switch or resistor, from its first terminal
/// to its second (for three-way switches: common to throw_a).
inline double branch_current(const Netlist& n, std::size_t component, const GateValues& gates, const Solution& sol) {
    const auto& c = n.components.at(component);
    auto r = effective_resistance(c, gates);
    auto t = terminals(c);
    return (sol.node_voltages[t[0].index] - sol.node_voltages[t[1].index]) / r.first;
}

inline double probe_voltage(const Probe& p, const Solution& sol) {
    return sol.node_voltages[p.pos.index] - sol.node_voltages[p.neg.index];
}

}  // namespace reconf
