#include "reconf/analysis.hpp"
#include "reconf/topologies.hpp"
#include "reconf/transient.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace reconf;

namespace {

constexpr double kDt = 50e-6;

TraceSet run(const BuiltTopology& t, double t_end) { return simulate(t.netlist, t.signal_env, kDt, t_end); }

/// Plateau levels merged within `tol`, ascending.
std::vector<double> levels(std::span<const double> x, double tol = kDefaultLevelTol) {
    auto p = find_plateaus(x, kDt, tol, kDefaultMinDwell);
    std::sort(p.begin(), p.end());
    std::vector<double> out;
    for (double v : p)
        if (out.empty() || v - out.back() > tol) out.push_back(v);
    return out;
}

void expect_levels_near(const std::vector<double>& got, const std::vector<double>& want, double tol,
                        const std::string& what) {
    ASSERT_EQ(got.size(), want.size()) << what;
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], tol) << what << " level " << i;
}

SampleWindow cycles_before(double t, double cycles = 2.0) {
    return last_cycles(static_cast<std::size_t>(std::llround(t / kDt)), kDt, 50.0, cycles);
}

}  // namespace

// ---------------------------------------------------------------------------
// Census
// ---------------------------------------------------------------------------

TEST(Census, MatchesTableForEveryTopology) {
    struct Row {
        TopologyName name;
        CensusReport expected;
    };
    for (const auto& row : {Row{TopologyName::chb3, {24, 0, 0, 24}}, Row{TopologyName::bridge2, {6, 0, 2, 8}},
                            Row{TopologyName::bridge2_ext, {6, 0, 2, 8}},
                            Row{TopologyName::reconfig1, {24, 6, 34, 64}},
                            Row{TopologyName::reconfig2, {24, 12, 26, 62}}}) {
        EXPECT_EQ(switch_census(build_topology(row.name).netlist), row.expected) << to_string(row.name);
    }
}

TEST(Census, AgreesWithConstructionListing) {
    for (auto name : {TopologyName::chb3, TopologyName::bridge2, TopologyName::bridge2_ext, TopologyName::reconfig1,
                      TopologyName::reconfig2}) {
        auto t = build_topology(name);
        auto c = switch_census(t.netlist);
        std::size_t igbt = 0, ideal = 0, three = 0;
        std::istringstream doc(t.doc);
        for (std::string line; std::getline(doc, line);) {
            if (line.find(" IGBT (") != std::string::npos) ++igbt;
            if (line.find(" Ideal (") != std::string::npos) ++ideal;
            if (line.find(" ThreeWay (") != std::string::npos) ++three;
        }
        EXPECT_EQ(igbt, c.igbt) << to_string(name);
        EXPECT_EQ(ideal, c.ideal) << to_string(name);
        EXPECT_EQ(three, c.three_way) << to_string(name);
    }
}

TEST(Census, ListingNamesEveryComponent) {
    auto t = build_reconfig(2);
    for (const auto& c : t.netlist.components) EXPECT_NE(t.doc.find(c.id), std::string::npos) << c.id;
}

TEST(Topology, NameRoundTrip) {
    for (auto name : {TopologyName::chb3, TopologyName::bridge2, TopologyName::bridge2_ext, TopologyName::reconfig1,
                      TopologyName::reconfig2}) {
        EXPECT_EQ(parse_topology(to_string(name)), name);
    }
    EXPECT_THROW(parse_topology("chb5"), TopologyError);
}

TEST(Topology, RejectsBadParameters) {
    TopologyParams p;
    p.r_off = p.r_on;
    EXPECT_THROW(build_chb3(p), TopologyError);
    p = {};
    p.v_dc = 0.0;
    EXPECT_THROW(build_bridge2(p), TopologyError);
}

TEST(Topology, EveryBuilderValidates) {
    for (auto name : {TopologyName::chb3, TopologyName::bridge2, TopologyName::bridge2_ext, TopologyName::reconfig1,
                      TopologyName::reconfig2}) {
        auto t = build_topology(name);
        EXPECT_NO_THROW(validate(t.netlist)) << to_string(name);
        EXPECT_NO_THROW(check_bindings(t.netlist, t.signal_env)) << to_string(name);
        EXPECT_EQ(t.sources.size(), 6u);
    }
}

// ---------------------------------------------------------------------------
// 3-level cascaded H-bridge
// ---------------------------------------------------------------------------

TEST(Chb3, ThreeLevelPhaseOutputs) {
    auto t = build_chb3();
    auto tr = run(t, 0.1);
    for (const auto& name : t.phase_probes) expect_levels_near(levels(tr[name]), {-96.0, 0.0, 96.0}, 0.5, name);
}

TEST(Chb3, LevelsScaleWithSourceVoltage) {
    TopologyParams p;
    p.v_dc = 1.0;
    auto t = build_chb3(p);
    auto tr = run(t, 0.06);
    for (const auto& name : t.phase_probes) {
        expect_levels_near(levels(tr[name], 0.1), {-2.0, 0.0, 2.0}, 1e-3, name);
    }
}

TEST(Chb3, PhasesAreDisplacedByOneThirdPeriod) {
    auto t = build_chb3();
    auto tr = run(t, 0.06);
    const std::size_t shift = static_cast<std::size_t>(std::llround(0.02 / 3.0 / kDt));  // not exact: 133.33
    int mismatches = 0;
    const auto& a = tr["phase_a"];
    const auto& b = tr["phase_b"];
    for (std::size_t k = 0; k + shift < a.size(); ++k) {
        if (std::abs(a[k] - b[k + shift]) > 1.0) ++mismatches;
    }
    EXPECT_LT(mismatches, static_cast<int>(a.size() / 50));
}

TEST(Chb3, ScalingIsLinear) {
    auto base = run(build_chb3(), 0.04);
    for (double k : {0.5, 2.0}) {
        TopologyParams p;
        p.v_dc = 48.0 * k;
        auto scaled = run(build_chb3(p), 0.04);
        for (const auto& name : base.names) {
            for (std::size_t i = 0; i < base.size(); ++i) {
                EXPECT_NEAR(scaled[name][i], k * base[name][i], 1e-9 * 96.0 * k) << name << " sample " << i;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// 2-level bridges
// ---------------------------------------------------------------------------

TEST(Bridge2, TwoLevelPoles) {
    auto t = build_bridge2();
    auto tr = run(t, 0.06);
    for (const auto& name : t.pole_probes) expect_levels_near(levels(tr[name]), {0.0, 96.0}, 0.5, name);
}

TEST(Bridge2, LineToLineIsThreeLevel) {
    auto t = build_bridge2();
    auto tr = run(t, 0.06);
    std::vector<double> ab(tr.size());
    for (std::size_t k = 0; k < tr.size(); ++k) ab[k] = tr["pole_a"][k] - tr["pole_b"][k];
    for (double v : ab) EXPECT_TRUE(std::abs(v) <= 0.5 || std::abs(std::abs(v) - 96.0) <= 0.5) << v;
    expect_levels_near(levels(ab), {-96.0, 0.0, 96.0}, 0.5, "a-b");
}

TEST(Bridge2Ext, SamePlateausAsBridge2) {
    auto a = run(build_bridge2(), 0.1);
    auto b = run(build_bridge2_ext(), 0.1);
    for (const auto& name : a.names) {
        auto la = levels(a[name], 1e-7);
        auto lb = levels(b[name], 1e-7);
        expect_levels_near(lb, la, 1e-6, name);
        // Same switching pattern; only samples exactly on an edge may differ.
        std::size_t differ = 0;
        for (std::size_t k = 0; k < a.size(); ++k) differ += std::abs(a[name][k] - b[name][k]) > 1e-6 ? 1 : 0;
        EXPECT_LE(differ, a.size() / 100) << name;
    }
}

TEST(Bridge2Ext, LegsGatedByModules) {
    auto t = build_bridge2_ext();
    for (const auto& c : t.netlist.components) {
        if (const auto* s = std::get_if<ControlledSwitch>(&c.kind); s && s->category == SwitchCategory::igbt) {
            EXPECT_EQ(s->gate.name.rfind("leg_", 0), 0u) << c.id;
        }
    }
    for (const auto& [name, expr] : t.signal_env) {
        if (const auto* g = std::get_if<Generator>(&expr)) {
            EXPECT_FALSE(std::holds_alternative<PulseSpec>(g->spec)) << name;
        }
    }
}

TEST(Bridge2Ext, ComplementPolarityShiftsPoleHalfPeriod) {
    auto t = build_bridge2_ext();
    auto swapped = t;
    for (auto& [name, expr] : swapped.signal_env) {
        if (name.rfind("hbx_a_", 0) != 0) continue;
        std::get<HBridgeGateSpec>(std::get<Generator>(expr).spec).polarity = BridgePolarity::complement;
    }
    auto a = run(t, 0.08);
    auto b = run(swapped, 0.08);
    const std::size_t half = static_cast<std::size_t>(std::llround(0.01 / kDt));
    std::size_t differ = 0, total = 0;
    for (std::size_t k = 0; k + half < a.size(); ++k, ++total) {
        bool orig_high = a["pole_a"][k + half] > 48.0;
        bool swapped_high = b["pole_a"][k] > 48.0;
        differ += orig_high != swapped_high ? 1 : 0;
    }
    EXPECT_LE(differ, total / 100);
    // Inverting in time is not the identity.
    std::size_t same_time_differ = 0;
    for (std::size_t k = 0; k < a.size(); ++k) same_time_differ += (a["pole_a"][k] > 48.0) != (b["pole_a"][k] > 48.0);
    EXPECT_GT(same_time_differ, a.size() / 2);
}

// ---------------------------------------------------------------------------
// Reconfigurable converters
// ---------------------------------------------------------------------------

class Reconfig : public ::testing::TestWithParam<int> {};

TEST_P(Reconfig, ModeAMatchesCascadedBridge) {
    auto t = with_reconfigure_time(build_reconfig(GetParam()), 0.1);
    auto tr = run(t, 0.2);
    auto ref = run(build_chb3(), 0.2);
    auto w = cycles_before(0.1);
    for (const auto& name : t.phase_probes) {
        EXPECT_LE(deviation_rms(tr, ref, name, w), 0.5) << name;
        expect_levels_near(levels(std::span<const double>(tr[name]).subspan(w.begin, w.size())), {-96.0, 0.0, 96.0},
                           0.5, name);
    }
}

TEST_P(Reconfig, ModeBMatchesTwoLevelBridge) {
    auto t = with_reconfigure_time(build_reconfig(GetParam()), 0.1);
    auto tr = run(t, 0.2);
    auto ref = run(GetParam() == 1 ? build_bridge2() : build_bridge2_ext(), 0.2);
    auto w = last_cycles(tr, 50.0, 2.0);
    for (const auto& name : t.pole_probes) {
        EXPECT_LE(deviation_rms(tr, ref, name, w), 0.5) << name;
        expect_levels_near(levels(std::span<const double>(tr[name]).subspan(w.begin, w.size())), {0.0, 96.0}, 0.5,
                           name);
    }
}

TEST_P(Reconfig, ModeSignalsAreComplementarySteps) {
    auto t = build_reconfig(GetParam());
    ASSERT_EQ(t.mode_signals.size(), 2u);
    CompiledSignals s(t.signal_env);
    for (double time : {0.0, 2.999, 3.0, 5.0}) {
        s.evaluate(time);
        const double a = s.value(s.slot("mode_a")), b = s.value(s.slot("mode_b"));
        EXPECT_EQ(a + b, 1.0);
        EXPECT_EQ(b, time >= 3.0 ? 1.0 : 0.0);
    }
}

TEST_P(Reconfig, FaultOnCellHalvesThatPhase) {
    for (auto kind : {FaultKind::open, FaultKind::shorted}) {
        auto t = apply_fault(with_reconfigure_time(build_reconfig(GetParam()), 0.1), FaultSpec{1, kind, 0.0});
        auto tr = run(t, 0.1);
        auto w = last_cycles(tr.size() - 1, kDt, 50.0, 2.0);
        EXPECT_NEAR(phase_peak(tr["phase_a"], w), 48.0, 0.48);
        EXPECT_NEAR(phase_peak(tr["phase_b"], w), 96.0, 0.96);
        EXPECT_NEAR(phase_peak(tr["phase_c"], w), 96.0, 0.96);
    }
}

TEST_P(Reconfig, ModeBRidesThroughSourceFault) {
    auto healthy_t = with_reconfigure_time(build_reconfig(GetParam()), 0.1);
    auto faulted_t = apply_fault(healthy_t, FaultSpec{0, FaultKind::open, 0.0});
    auto healthy = run(healthy_t, 0.2);
    auto faulted = run(faulted_t, 0.2);
    auto w = last_cycles(healthy, 50.0, 2.0);
    for (const auto& name : healthy_t.pole_probes) {
        EXPECT_LE(deviation_rms(faulted, healthy, name, w), 0.02 * 96.0) << name;
    }
}

TEST_P(Reconfig, SpreadShrinksWithOnResistance) {
    double previous = std::numeric_limits<double>::infinity();
    for (double r_on : {1e-3, 5e-4, 2.5e-4}) {
        TopologyParams p;
        p.r_on = r_on;
        auto t = with_reconfigure_time(build_reconfig(GetParam(), p), 0.02);
        auto tr = run(t, 0.06);
        auto r = analyze_probes(tr, t.pole_probes, last_cycles(tr, 50.0, 2.0));
        EXPECT_LT(r.spread, previous) << "r_on " << r_on;
        previous = r.spread;
    }
}

INSTANTIATE_TEST_SUITE_P(Variants, Reconfig, ::testing::Values(1, 2));

TEST(Reconfig, VariantTwoHasSmallerSpread) {
    double spread[2];
    for (int v = 1; v <= 2; ++v) {
        auto t = with_reconfigure_time(build_reconfig(v), 0.02);
        auto tr = run(t, 0.08);
        spread[v - 1] = analyze_probes(tr, t.pole_probes, last_cycles(tr, 50.0, 2.0)).spread;
    }
    EXPECT_GT(spread[0], spread[1]);
    EXPECT_GT(spread[1], 0.0);
}

// ---------------------------------------------------------------------------
// Faults and events
// ---------------------------------------------------------------------------

TEST(Fault, ChbOpenAndShortAgree) {
    auto open = run(apply_fault(build_chb3(), FaultSpec{1, FaultKind::open, 0.0}), 0.06);
    auto shorted = run(apply_fault(build_chb3(), FaultSpec{1, FaultKind::shorted, 0.0}), 0.06);
    auto w = last_cycles(open, 50.0, 2.0);
    for (const auto& name : open.names) {
        const double a = phase_peak(open[name], w), b = phase_peak(shorted[name], w);
        EXPECT_LE(std::abs(a - b), 0.02 * std::max(a, b)) << name;
    }
    EXPECT_NEAR(phase_peak(open["phase_a"], w), 48.0, 0.48);
}

TEST(Fault, TakesEffectAtItsTime) {
    auto t = apply_fault(build_chb3(), FaultSpec{4, FaultKind::open, 0.04});
    auto tr = run(t, 0.08);
    EXPECT_NEAR(phase_peak(tr["phase_c"], cycles_before(0.04)), 96.0, 0.96);
    EXPECT_NEAR(phase_peak(tr["phase_c"], last_cycles(tr, 50.0, 1.0)), 48.0, 0.48);
}

TEST(Fault, StandaloneBusKeepsTwoLevelOutput) {
    auto t = apply_fault(build_bridge2(), FaultSpec{3, FaultKind::open, 0.0});
    EXPECT_EQ(switch_census(t.netlist), (CensusReport{6, 0, 4, 10}));
    auto tr = run(t, 0.06);
    auto healthy = run(build_bridge2(), 0.06);
    auto w = last_cycles(tr, 50.0, 2.0);
    for (const auto& name : t.pole_probes) EXPECT_LE(deviation_rms(tr, healthy, name, w), 0.02 * 96.0);
}

TEST(Fault, UnknownSourceRejected) {
    EXPECT_THROW(apply_fault(build_chb3(), FaultSpec{6, FaultKind::open, 0.0}), UnknownSource);
    EXPECT_THROW(apply_fault(build_chb3(), FaultSpec{0, FaultKind::open, -1.0}), TopologyError);
}

TEST(Fault, ReconfigCensusUnchanged) {
    auto t = apply_fault(build_reconfig(1), FaultSpec{2, FaultKind::shorted, 1.0});
    EXPECT_EQ(switch_census(t.netlist), (CensusReport{24, 6, 34, 64}));
}

TEST(ReconfigureTime, MovesBothModeSignals) {
    auto t = with_reconfigure_time(build_reconfig(1), 0.25);
    CompiledSignals s(t.signal_env);
    s.evaluate(0.2499);
    EXPECT_EQ(s.value(s.slot("mode_b")), 0.0);
    s.evaluate(0.25);
    EXPECT_EQ(s.value(s.slot("mode_b")), 1.0);
    EXPECT_EQ(s.value(s.slot("mode_a")), 0.0);
    EXPECT_THROW(with_reconfigure_time(build_chb3(), 1.0), TopologyError);
}
