#pragma once

// Fixed-step time marching over a switched resistive network. Each step is a
// DC solve of the network at the current gate values. The network has no
// state, so the solution only depends on which switches conduct (and which
// source faults are active); solves are cached per such pattern.

#include "reconf/circuit.hpp"

#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace reconf {

/// Sampled probe voltages on a uniform time grid: samples[p][k] is probe p at
/// t0 + k*dt.
struct TraceSet {
    double t0 = 0.0;
    double dt = 0.0;
    std::vector<std::string> names;
    std::vector<std::vector<double>> samples;

    /// Worst relative KCL residual over all solved steps.
    double max_kcl_residual = 0.0;
    std::size_t factorizations = 0;

    [[nodiscard]] std::size_t size() const { return samples.empty() ? 0 : samples.front().size(); }
    [[nodiscard]] double time(std::size_t k) const { return t0 + static_cast<double>(k) * dt; }

    [[nodiscard]] std::size_t index_of(const std::string& probe) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == probe) return i;
        throw std::out_of_range("trace has no probe '" + probe + "'");
    }

    [[nodiscard]] const std::vector<double>& operator[](const std::string& probe) const {
        return samples[index_of(probe)];
    }
};

/// Solver failure at a given timestep.
class SimulationError : public std::runtime_error {
public:
    SimulationError(std::size_t step, double t, const std::string& what)
        : std::runtime_error("step " + std::to_string(step) + " (t=" + std::to_string(t) + " s): " + what),
          step_(step) {}

    [[nodiscard]] std::size_t step() const { return step_; }

private:
    std::size_t step_;
};

/// Number of samples for [0, t_end] at spacing dt: floor(t_end/dt) + 1. A
/// small relative guard absorbs representation error in t_end/dt.
inline std::size_t sample_count(double dt, double t_end) {
    return static_cast<std::size_t>(std::floor(t_end / dt * (1.0 + 1e-12))) + 1;
}

struct SimulateOptions {
    /// Probe names to record; empty records every probe.
    std::vector<std::string> probes;
    /// Bound on cached switch-state solutions; the cache is flushed when full.
    std::size_t max_cached_factors = 512;
};

/// Steps a validated netlist; reusable across runs of the same circuit.
class TransientEngine {
public:
    TransientEngine(const Netlist& netlist, const SignalEnv& env) : netlist_(netlist), signals_(env) {
        check_bindings(netlist_, env);
        for (const auto& c : netlist_.components) {
            std::visit(
                [&](const auto& k) {
                    using T = std::decay_t<decltype(k)>;
                    if constexpr (std::is_same_v<T, DcSource>) {
                        if (k.fault) slots_.push_back(signals_.slot(k.fault->active.name));
                    } else if constexpr (std::is_same_v<T, ControlledSwitch>) {
                        slots_.push_back(signals_.slot(k.gate.name));
                    } else if constexpr (std::is_same_v<T, ThreeWaySwitch>) {
                        slots_.push_back(signals_.slot(k.select.name));
                    }
                },
                c.kind);
        }
    }

    TraceSet run(double dt, double t_end, const SimulateOptions& opts = {}) {
        if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("dt must be > 0");
        if (!(t_end >= dt) || !std::isfinite(t_end)) throw std::invalid_argument("t_end must be >= dt");

        TraceSet out;
        out.t0 = 0.0;
        out.dt = dt;
        std::vector<const Probe*> probes;
        if (opts.probes.empty()) {
            for (const auto& p : netlist_.probes) probes.push_back(&p);
        } else {
            for (const auto& name : opts.probes) {
                auto it = std::find_if(netlist_.probes.begin(), netlist_.probes.end(),
                                       [&](const Probe& p) { return p.name == name; });
                if (it == netlist_.probes.end()) throw std::invalid_argument("unknown probe '" + name + "'");
                probes.push_back(&*it);
            }
        }
        const std::size_t count = sample_count(dt, t_end);
        for (const auto* p : probes) {
            out.names.push_back(p->name);
            out.samples.emplace_back();
            out.samples.back().reserve(count);
        }

        std::size_t factors_before = factorizations_;
        for (std::size_t k = 0; k < count; ++k) {
            const double t = static_cast<double>(k) * dt;
            try {
                const Solution& sol = step(t);
                out.max_kcl_residual = std::max(out.max_kcl_residual, last_kcl_.relative());
                for (std::size_t i = 0; i < probes.size(); ++i) out.samples[i].push_back(probe_voltage(*probes[i], sol));
            } catch (const SimulationError&) {
                throw;
            } catch (const std::exception& e) {
                throw SimulationError(k, t, e.what());
            }
        }
        out.factorizations = factorizations_ - factors_before;
        return out;
    }

    /// Solves the network at time t.
    const Solution& step(double t) {
        signals_.evaluate(t);
        std::string key(slots_.size(), '0');
        for (std::size_t i = 0; i < slots_.size(); ++i)
            if (signals_.value(slots_[i]) >= kGateThreshold) key[i] = '1';

        auto gate = [&](const SignalRef& r, const std::string&) { return signals_.value(signals_.slot(r.name)); };
        auto it = cache_.find(key);
        if (it == cache_.end()) {
            if (cache_.size() >= max_cached_) cache_.clear();
            auto st = detail::resolve_state(netlist_, gate);
            MnaFactor factor(assemble_matrix(netlist_, st));
            ++factorizations_;
            // EMFs are the only right-hand side and are fixed by the same key
            // (fault states are part of it), so the whole solution is reusable.
            Solution sol = unpack_solution(netlist_, factor.solve(assemble_rhs(netlist_, st)));
            KclReport kcl = kcl_check(netlist_, st, sol);
            it = cache_.emplace(key, std::make_shared<Entry>(Entry{std::move(sol), kcl})).first;
        }
        last_kcl_ = it->second->kcl;
        return it->second->solution;
    }

    [[nodiscard]] const KclReport& last_kcl() const { return last_kcl_; }
    [[nodiscard]] const Netlist& netlist() const { return netlist_; }

    void set_max_cached_factors(std::size_t n) { max_cached_ = std::max<std::size_t>(n, 1); }

private:
    struct Entry {
        Solution solution;
        KclReport kcl;
    };

    Netlist netlist_;
    CompiledSignals signals_;
    std::vector<std::size_t> slots_;
    std::unordered_map<std::string, std::shared_ptr<Entry>> cache_;
    std::size_t max_cached_ = 512;
    std::size_t factorizations_ = 0;
    KclReport last_kcl_;
};

/// Validates, then samples every probe at t = k*dt for k = 0..floor(t_end/dt).
inline TraceSet simulate(const Netlist& netlist, const SignalEnv& env, double dt, double t_end,
                         const SimulateOptions& opts = {}) {
    TransientEngine engine(validate(netlist), env);
    engine.set_max_cached_factors(opts.max_cached_factors);
    return engine.run(dt, t_end, opts);
}

}  // namespace reconf
