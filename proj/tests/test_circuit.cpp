#include "reconf/circuit.hpp"
#include "reconf/topologies.hpp"
#include "support/nodal_oracle.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace reconf;

namespace {

Component resistor(const std::string& id, std::size_t a, std::size_t b, double ohms) {
    return {id, Resistor{{a}, {b}, ohms}};
}

Component source(const std::string& id, std::size_t pos, std::size_t neg, double volts, double series_r = 0.0) {
    return {id, DcSource{{pos}, {neg}, volts, series_r, std::nullopt}};
}

Component sw(const std::string& id, std::size_t a, std::size_t b, const std::string& gate,
             double r_on = kDefaultRon, double r_off = kDefaultRoff) {
    return {id, ControlledSwitch{{a}, {b}, SwitchCategory::ideal, r_on, r_off, SignalRef{gate}}};
}

/// 48 V source across two equal resistors.
Netlist divider() {
    Netlist n;
    n.node_count = 3;
    n.components = {source("E", 1, 0, 48.0), resistor("R1", 1, 2, 100.0), resistor("R2", 2, 0, 100.0)};
    n.probes = {{"mid", {2}, kGround}};
    return n;
}

NetlistError validation_error(const Netlist& n) {
    try {
        validate(n);
    } catch (const NetlistError& e) {
        return e;
    }
    ADD_FAILURE() << "netlist unexpectedly valid";
    return NetlistError({});
}

}  // namespace

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

TEST(Validate, AcceptsMinimalNetlist) {
    auto v = validate(divider());
    EXPECT_EQ(v.node_count, 3u);
    EXPECT_EQ(v.components.size(), 3u);
}

TEST(Validate, MissingGround) {
    Netlist n;
    n.node_count = 3;
    n.components = {source("E", 1, 2, 48.0), resistor("R", 1, 2, 10.0)};
    EXPECT_TRUE(validation_error(n).has(IssueKind::missing_ground));
}

TEST(Validate, ZeroOnResistanceRejected) {
    auto n = divider();
    n.components.push_back(sw("S", 1, 2, "g", 0.0));
    auto e = validation_error(n);
    EXPECT_TRUE(e.has(IssueKind::bad_resistance));
    EXPECT_NE(std::string(e.what()).find("S"), std::string::npos);
}

TEST(Validate, OffNotAboveOnRejected) {
    auto n = divider();
    n.components.push_back(sw("S", 1, 2, "g", 1.0, 1.0));
    EXPECT_TRUE(validation_error(n).has(IssueKind::bad_resistance));
}

TEST(Validate, NonPositiveResistorRejected) {
    auto n = divider();
    n.components.push_back(resistor("Rneg", 1, 2, -5.0));
    EXPECT_TRUE(validation_error(n).has(IssueKind::bad_resistance));
}

TEST(Validate, DuplicateIdRejected) {
    auto n = divider();
    n.components.push_back(resistor("R1", 1, 0, 10.0));
    EXPECT_TRUE(validation_error(n).has(IssueKind::duplicate_id));
}

TEST(Validate, DisconnectedNodeRejected) {
    auto n = divider();
    n.node_count = 5;
    n.components.push_back(resistor("Rfloat", 3, 4, 10.0));
    EXPECT_TRUE(validation_error(n).has(IssueKind::disconnected_graph));
}

TEST(Validate, ReportsEveryIssueAtOnce) {
    auto n = divider();
    n.node_count = 5;
    n.components.push_back(resistor("Rfloat", 3, 4, 10.0));
    n.components.push_back(resistor("R1", 1, 0, 0.0));
    auto e = validation_error(n);
    EXPECT_TRUE(e.has(IssueKind::disconnected_graph));
    EXPECT_TRUE(e.has(IssueKind::duplicate_id));
    EXPECT_TRUE(e.has(IssueKind::bad_resistance));
}

TEST(Validate, BadProbeNames) {
    for (const char* name : {"a,b", "", "time", "q\"uote"}) {
        auto n = divider();
        n.probes.push_back({name, {1}, kGround});
        EXPECT_TRUE(validation_error(n).has(IssueKind::bad_probe)) << name;
    }
    auto n = divider();
    n.probes.push_back({"mid", {1}, kGround});
    EXPECT_TRUE(validation_error(n).has(IssueKind::bad_probe));
}

TEST(Validate, DenseRenumbering) {
    Netlist n;
    n.node_count = 8;
    n.components = {source("E", 3, 0, 10.0), resistor("R1", 3, 7, 1.0), resistor("R2", 7, 0, 1.0)};
    n.probes = {{"p", {7}, kGround}};
    auto v = validate(n);
    EXPECT_EQ(v.node_count, 3u);
    const auto& e = std::get<DcSource>(v.components[0].kind);
    EXPECT_EQ(e.pos.index, 1u);
    EXPECT_EQ(v.probes[0].pos.index, 2u);
    auto sol = solve_step(v, {});
    EXPECT_NEAR(probe_voltage(v.probes[0], sol), 5.0, 1e-12);
}

TEST(Validate, UnknownGateSignalRejectedAtBinding) {
    auto n = divider();
    n.components.push_back(sw("S", 1, 2, "nowhere"));
    SignalEnv env;
    EXPECT_THROW(check_bindings(n, env), SignalError);
}

TEST(Validate, NonBinaryGateSignalRejected) {
    auto n = divider();
    n.components.push_back(sw("S", 1, 2, "g"));
    SignalEnv env;
    env["g"] = Generator{StepSpec{1.0, 0.0, 5.0}, 0};
    EXPECT_THROW(check_bindings(n, env), SignalError);
    env["g"] = Generator{StepSpec{1.0, 0.0, 1.0}, 0};
    EXPECT_NO_THROW(check_bindings(n, env));
}

// ---------------------------------------------------------------------------
// Effective resistance
// ---------------------------------------------------------------------------

TEST(EffectiveResistance, SwitchFollowsGate) {
    auto c = sw("S", 1, 0, "g");
    EXPECT_EQ(effective_resistance(c, {{"g", 0.0}}).first, 1e12);
    EXPECT_EQ(effective_resistance(c, {{"g", 1.0}}).first, 1e-3);
    EXPECT_FALSE(effective_resistance(c, {{"g", 1.0}}).second.has_value());
}

TEST(EffectiveResistance, ThreeWayPairs) {
    Component c{"W", ThreeWaySwitch{{1}, {2}, {3}, 1e-3, 1e12, SignalRef{"sel"}}};
    auto off = effective_resistance(c, {{"sel", 0.0}});
    EXPECT_EQ(off.first, 1e-3);
    EXPECT_EQ(*off.second, 1e12);
    auto on = effective_resistance(c, {{"sel", 1.0}});
    EXPECT_EQ(on.first, 1e12);
    EXPECT_EQ(*on.second, 1e-3);
}

TEST(EffectiveResistance, PassiveParts) {
    EXPECT_EQ(effective_resistance(resistor("R", 1, 0, 47.0), {}).first, 47.0);
    EXPECT_EQ(effective_resistance(source("E", 1, 0, 48.0, 0.5), {}).first, 0.5);
}

TEST(EffectiveResistance, MissingGateValue) {
    EXPECT_THROW(effective_resistance(sw("S", 1, 0, "g"), {}), MissingGateValue);
}

// ---------------------------------------------------------------------------
// DC solve
// ---------------------------------------------------------------------------

TEST(SolveStep, DividerMidpoint) {
    auto n = validate(divider());
    auto sol = solve_step(n, {});
    EXPECT_NEAR(probe_voltage(n.probes[0], sol), 24.0, 1e-12);
    EXPECT_NEAR(sol.source_currents[0], 0.24, 1e-14);
}

TEST(SolveStep, SeriesSourcesThroughClosedSwitch) {
    Netlist n;
    n.node_count = 4;
    n.components = {source("E1", 1, 0, 48.0), source("E2", 2, 1, 48.0), sw("S", 2, 3, "g"),
                    resistor("Rload", 3, 0, 100.0)};
    n.probes = {{"load", {3}, kGround}};
    n = validate(n);
    auto sol = solve_step(n, {{"g", 1.0}});
    EXPECT_NEAR(probe_voltage(n.probes[0], sol), 96.0, 96.0 * 1e-3);
    auto open = solve_step(n, {{"g", 0.0}});
    EXPECT_NEAR(probe_voltage(n.probes[0], open), 0.0, 1e-6);
}

TEST(SolveStep, SeriesResistanceDropsSourceVoltage) {
    Netlist n;
    n.node_count = 2;
    n.components = {source("E", 1, 0, 10.0, 1.0), resistor("R", 1, 0, 9.0)};
    auto sol = solve_step(validate(n), {});
    EXPECT_NEAR(sol.node_voltages[1], 9.0, 1e-12);
    EXPECT_NEAR(sol.source_currents[0], 1.0, 1e-12);
}

TEST(SolveStep, FaultedSourceLosesEmf) {
    Netlist n;
    n.node_count = 2;
    DcSource e{{1}, kGround, 48.0, 0.0, SourceFault{SignalRef{"f"}, 1e-3}};
    n.components = {{"E", e}, resistor("R", 1, 0, 100.0)};
    n = validate(n);
    EXPECT_NEAR(solve_step(n, {{"f", 0.0}}).node_voltages[1], 48.0, 1e-12);
    EXPECT_NEAR(solve_step(n, {{"f", 1.0}}).node_voltages[1], 0.0, 1e-12);
}

TEST(SolveStep, ParallelIdealSourcesAreSingular) {
    Netlist n;
    n.node_count = 2;
    n.components = {source("E1", 1, 0, 48.0), source("E2", 1, 0, 47.0), resistor("R", 1, 0, 10.0)};
    EXPECT_THROW(solve_step(validate(n), {}), SingularSystem);
}

TEST(SolveStep, MatchesNodalOracleOnRandomNetworks) {
    std::mt19937_64 rng(20240611);
    for (int i = 0; i < 120; ++i) {
        auto rc = oracle::random_case(rng);
        ASSERT_NO_THROW(validate(rc.netlist)) << "case " << i;
        auto got = solve_step(rc.netlist, rc.gates);
        auto expected = oracle::solve(rc.net);
        EXPECT_LE(oracle::relative_mismatch(expected, got), 1e-9) << "case " << i;
    }
}

// ---------------------------------------------------------------------------
// Properties
// ---------------------------------------------------------------------------

TEST(SolveProperty, KirchhoffCurrentLawHolds) {
    std::mt19937_64 rng(99);
    for (int i = 0; i < 100; ++i) {
        auto rc = oracle::random_case(rng, 6, 10, 2);
        auto sol = solve_step(rc.netlist, rc.gates);
        auto kcl = kcl_check(rc.netlist, rc.gates, sol);
        EXPECT_LE(kcl.relative(), 1e-9) << "case " << i;
    }
}

TEST(SolveProperty, KirchhoffOnConverterTopologies) {
    for (auto name : {TopologyName::chb3, TopologyName::bridge2, TopologyName::reconfig1, TopologyName::reconfig2}) {
        auto t = build_topology(name);
        auto n = validate(t.netlist);
        CompiledSignals sig(t.signal_env);
        for (double time : {0.0013, 0.0071, 0.0139}) {
            sig.evaluate(time);
            GateValues g;
            for (std::size_t i = 0; i < sig.names().size(); ++i) g[sig.names()[i]] = sig.values()[i];
            auto sol = solve_step(n, g);
            EXPECT_LE(kcl_check(n, g, sol).relative(), 1e-9) << to_string(name) << " t=" << time;
        }
    }
}

TEST(SolveProperty, Superposition) {
    std::mt19937_64 rng(4242);
    for (int i = 0; i < 60; ++i) {
        auto rc = oracle::random_case(rng, 6, 10, 2, false);
        auto both = solve_step(rc.netlist, rc.gates);
        auto only = [&](std::size_t keep) {
            auto n = rc.netlist;
            std::size_t s = 0;
            for (auto& c : n.components) {
                if (auto* e = std::get_if<DcSource>(&c.kind)) {
                    if (s++ != keep) e->volts = 0.0;
                }
            }
            return solve_step(n, rc.gates);
        };
        auto a = only(0), b = only(1);
        double scale = 0.0;
        for (double v : both.node_voltages) scale = std::max(scale, std::abs(v));
        for (std::size_t k = 0; k < both.node_voltages.size(); ++k) {
            EXPECT_NEAR(both.node_voltages[k], a.node_voltages[k] + b.node_voltages[k], 1e-9 * (1.0 + scale))
                << "case " << i << " node " << k;
        }
    }
}

TEST(SolveProperty, OpenLimitConvergesAsOffResistanceGrows) {
    // Node voltages of a converter netlist settle as r_off grows, and the
    // current leaking through open switches shrinks.
    for (auto name : {TopologyName::reconfig1, TopologyName::reconfig2}) {
        std::vector<std::vector<double>> volts;
        std::vector<double> leak;
        for (double r_off : {1e6, 1e9, 1e12}) {
            TopologyParams p;
            p.r_off = r_off;
            auto t = build_topology(name, p);
            auto n = validate(t.netlist);
            CompiledSignals sig(t.signal_env);
            sig.evaluate(0.0071);
            GateValues g;
            for (std::size_t i = 0; i < sig.names().size(); ++i) g[sig.names()[i]] = sig.values()[i];
            auto sol = solve_step(n, g);
            volts.push_back(sol.node_voltages);
            double worst = 0.0;
            for (std::size_t i = 0; i < n.components.size(); ++i) {
                if (const auto* s = std::get_if<ControlledSwitch>(&n.components[i].kind)) {
                    if (g.at(s->gate.name) < kGateThreshold) {
                        worst = std::max(worst, std::abs(branch_current(n, i, g, sol)));
                    }
                }
            }
            leak.push_back(worst);
        }
        EXPECT_GT(leak[0], leak[1]);
        EXPECT_GT(leak[1], leak[2]);
        double step = 0.0;
        for (std::size_t k = 0; k < volts[1].size(); ++k) step = std::max(step, std::abs(volts[1][k] - volts[2][k]));
        EXPECT_LE(step, 1e-3) << to_string(name);
    }
}

TEST(Kcl, BranchCurrentDirection) {
    auto n = validate(divider());
    auto sol = solve_step(n, {});
    EXPECT_NEAR(branch_current(n, 1, {}, sol), 0.24, 1e-12);
    EXPECT_NEAR(branch_current(n, 2, {}, sol), 0.24, 1e-12);
    auto r = kcl_check(n, GateValues{}, sol);
    EXPECT_NEAR(r.max_branch_current, 0.24, 1e-12);
    EXPECT_LE(r.max_abs_residual, 1e-12);
}
