#pragma once

// =============================================================================
// Gate and reference signal generators
// =============================================================================
// Pure functions of time: step, pulse, sine-triangle 2-level PWM and the
// fundamental-frequency H-bridge gate set. A SignalEnv binds names to
// generators (or to small muxes over other names) so that netlists can refer
// to gate waveforms by name.
// =============================================================================

#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace reconf {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Gate inputs at or above this value read as "on".
inline constexpr double kGateThreshold = 0.5;

class SignalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a PWM carrier is slower than twice the reference.
class CarrierTooSlow : public SignalError {
public:
    using SignalError::SignalError;
};

// =============================================================================
// Signal specs
// =============================================================================

struct StepSpec {
    double step_time = 0.0;
    double before = 0.0;
    double after = 1.0;
};

struct PulseSpec {
    double period = 0.02;
    double duty = 0.5;
    double phase_delay = 0.0;
    double amplitude = 1.0;
};

struct Pwm2Spec {
    double f_ref = 50.0;
    double f_carrier = 1050.0;
    double mod_index = 0.8;
    double phase = 0.0;
};

/// Which devices of an H-bridge realize each output state.
///  - direct:     +V by (S1,S4), -V by (S2,S3), zero by (S1,S3)
///  - complement: output sign inverted, zero by (S1,S3)
///  - zero_leg_a: as direct, but zero by (S2,S4)
///  - zero_leg_b: sign inverted, zero by (S2,S4)
enum class BridgePolarity { direct, complement, zero_leg_a, zero_leg_b };

struct HBridgeGateSpec {
    double f_ref = 50.0;
    double phase = 0.0;
    BridgePolarity polarity = BridgePolarity::direct;
};

using SignalSpec = std::variant<StepSpec, PulseSpec, Pwm2Spec, HBridgeGateSpec>;

/// Named reference into a SignalEnv.
struct SignalRef {
    std::string name;

    friend bool operator==(const SignalRef&, const SignalRef&) = default;
};

// =============================================================================
// Evaluation
// =============================================================================

namespace detail {

/// Fractional part mapped into [0, 1).
inline double frac(double x) {
    double f = x - std::floor(x);
    return f >= 1.0 ? 0.0 : f;
}

}  // namespace detail

inline double eval_step(double t, const StepSpec& s) {
    return t < s.step_time ? s.before : s.after;
}

inline double eval_pulse(double t, const PulseSpec& s) {
    if (s.duty <= 0.0) return 0.0;
    if (s.duty >= 1.0) return s.amplitude;
    return detail::frac((t - s.phase_delay) / s.period) < s.duty ? s.amplitude : 0.0;
}

/// Symmetric +-1 triangle carrier, starting at -1 and rising.
inline double triangle_carrier(double t, double f_carrier) {
    double u = detail::frac(t * f_carrier);
    return u < 0.5 ? -1.0 + 4.0 * u : 3.0 - 4.0 * u;
}

inline double eval_pwm2(double t, const Pwm2Spec& s) {
    if (s.f_carrier < 2.0 * s.f_ref) {
        throw CarrierTooSlow("PWM carrier " + std::to_string(s.f_carrier) +
                             " Hz is below twice the reference " + std::to_string(s.f_ref) + " Hz");
    }
    double ref = s.mod_index * std::sin(kTwoPi * s.f_ref * t + s.phase);
    return ref >= triangle_carrier(t, s.f_carrier) ? 1.0 : 0.0;
}

/// Zero-state band of the fundamental-frequency gate set: |sin| <= sin(pi/12).
inline const double kZeroStateThreshold = std::sin(std::numbers::pi / 12.0);

/// Gates S1..S4 of one H-bridge. S1/S2 drive leg A, S3/S4 drive leg B; the
/// bridge output is V(leg A) - V(leg B).
using BridgeGates = std::array<double, 4>;

inline BridgeGates hbridge_gate_set(double t, const HBridgeGateSpec& s) {
    double v = std::sin(kTwoPi * s.f_ref * t + s.phase);
    bool inverted = s.polarity == BridgePolarity::complement || s.polarity == BridgePolarity::zero_leg_b;
    bool low_zero = s.polarity == BridgePolarity::zero_leg_a || s.polarity == BridgePolarity::zero_leg_b;
    if (inverted) v = -v;

    if (v > kZeroStateThreshold) return {1.0, 0.0, 0.0, 1.0};
    if (v < -kZeroStateThreshold) return {0.0, 1.0, 1.0, 0.0};
    return low_zero ? BridgeGates{0.0, 1.0, 0.0, 1.0} : BridgeGates{1.0, 0.0, 1.0, 0.0};
}

/// Evaluate a spec; `channel` selects S1..S4 (1-based) for gate sets and is
/// ignored for scalar specs.
inline double eval_signal(double t, const SignalSpec& spec, int channel = 0) {
    return std::visit(
        [&](const auto& s) -> double {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, StepSpec>) {
                return eval_step(t, s);
            } else if constexpr (std::is_same_v<T, PulseSpec>) {
                return eval_pulse(t, s);
            } else if constexpr (std::is_same_v<T, Pwm2Spec>) {
                return eval_pwm2(t, s);
            } else {
                if (channel < 1 || channel > 4) {
                    throw SignalError("H-bridge gate set channel must be 1..4, got " + std::to_string(channel));
                }
                return hbridge_gate_set(t, s)[static_cast<std::size_t>(channel - 1)];
            }
        },
        spec);
}

/// Checks the parameter ranges of a spec; returns a message or empty string.
inline std::string check_spec(const SignalSpec& spec) {
    return std::visit(
        [](const auto& s) -> std::string {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, StepSpec>) {
                if (!std::isfinite(s.step_time) || !std::isfinite(s.before) || !std::isfinite(s.after))
                    return "step values must be finite";
            } else if constexpr (std::is_same_v<T, PulseSpec>) {
                if (!(s.period > 0.0)) return "pulse period must be > 0";
                if (!(s.duty >= 0.0 && s.duty <= 1.0)) return "pulse duty must be in [0,1]";
            } else if constexpr (std::is_same_v<T, Pwm2Spec>) {
                if (!(s.f_ref > 0.0) || !(s.f_carrier > 0.0)) return "PWM frequencies must be > 0";
                if (!(s.mod_index >= 0.0 && s.mod_index <= 1.0)) return "PWM modulation index must be in [0,1]";
                if (s.f_carrier < 2.0 * s.f_ref) return "PWM carrier must be at least twice the reference";
            } else {
                if (!(s.f_ref > 0.0)) return "gate set f_ref must be > 0";
            }
            return {};
        },
        spec);
}

// =============================================================================
// Signal environment
// =============================================================================

/// A generator output (channel 1..4 for H-bridge gate sets, 0 otherwise).
struct Generator {
    SignalSpec spec;
    int channel = 0;
};

/// `high` when `select` reads on, `low` otherwise.
struct Mux {
    std::string select;
    std::string low;
    std::string high;
};

using SignalExpr = std::variant<Generator, Mux>;

/// Named signal table. Ordered so iteration (and hence compiled layouts) is
/// deterministic.
using SignalEnv = std::map<std::string, SignalExpr>;

inline SignalExpr constant_signal(double level) {
    return Generator{StepSpec{0.0, level, level}, 0};
}

/// Flat evaluation plan for a SignalEnv: every entry gets a slot, muxes are
/// ordered after their inputs.
class CompiledSignals {
public:
    explicit CompiledSignals(const SignalEnv& env) {
        enum class Mark { none, visiting, done };
        std::map<std::string, Mark> marks;
        for (const auto& [name, _] : env) marks[name] = Mark::none;

        auto visit = [&](auto&& self, const std::string& name, const std::string& from) -> void {
            auto it = env.find(name);
            if (it == env.end()) {
                throw SignalError("signal '" + from + "' refers to unknown signal '" + name + "'");
            }
            Mark& m = marks[name];
            if (m == Mark::done) return;
            if (m == Mark::visiting) throw SignalError("signal '" + name + "' is part of a mux cycle");
            m = Mark::visiting;
            if (const auto* mux = std::get_if<Mux>(&it->second)) {
                self(self, mux->select, name);
                self(self, mux->low, name);
                self(self, mux->high, name);
            } else {
                const auto& gen = std::get<Generator>(it->second);
                if (auto msg = check_spec(gen.spec); !msg.empty()) {
                    throw SignalError("signal '" + name + "': " + msg);
                }
                bool gate_set = std::holds_alternative<HBridgeGateSpec>(gen.spec);
                if (gate_set && (gen.channel < 1 || gen.channel > 4)) {
                    throw SignalError("signal '" + name + "': gate set channel must be 1..4");
                }
            }
            m = Mark::done;
            slot_of_[name] = order_.size();
            order_.push_back(it->second);
            names_.push_back(name);
        };
        for (const auto& [name, _] : env) visit(visit, name, name);

        for (auto& expr : order_) {
            if (auto* mux = std::get_if<Mux>(&expr)) {
                mux_inputs_.push_back({slot_of_.at(mux->select), slot_of_.at(mux->low), slot_of_.at(mux->high)});
            } else {
                mux_inputs_.push_back({0, 0, 0});
            }
        }
        values_.assign(order_.size(), 0.0);
    }

    [[nodiscard]] bool contains(const std::string& name) const { return slot_of_.count(name) != 0; }

    [[nodiscard]] std::size_t slot(const std::string& name) const {
        auto it = slot_of_.find(name);
        if (it == slot_of_.end()) throw SignalError("unknown signal '" + name + "'");
        return it->second;
    }

    /// Evaluates every signal at time t; results are read back with value().
    void evaluate(double t) {
        for (std::size_t i = 0; i < order_.size(); ++i) {
            if (std::holds_alternative<Mux>(order_[i])) {
                const auto& in = mux_inputs_[i];
                values_[i] = values_[in[0]] >= kGateThreshold ? values_[in[2]] : values_[in[1]];
            } else {
                const auto& gen = std::get<Generator>(order_[i]);
                values_[i] = eval_signal(t, gen.spec, gen.channel);
            }
        }
    }

    [[nodiscard]] double value(std::size_t slot) const { return values_[slot]; }
    [[nodiscard]] const std::vector<std::string>& names() const { return names_; }
    [[nodiscard]] const std::vector<double>& values() const { return values_; }

    /// Levels a generator can emit, or empty when the set is unbounded (PWM
    /// and gate sets only ever emit 0/1, muxes inherit their inputs).
    [[nodiscard]] std::vector<double> possible_levels(const std::string& name) const {
        const auto& expr = order_[slot(name)];
        if (const auto* mux = std::get_if<Mux>(&expr)) {
            auto lo = possible_levels(mux->low);
            auto hi = possible_levels(mux->high);
            lo.insert(lo.end(), hi.begin(), hi.end());
            return lo;
        }
        const auto& gen = std::get<Generator>(expr);
        return std::visit(
            [](const auto& s) -> std::vector<double> {
                using T = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<T, StepSpec>) {
                    return {s.before, s.after};
                } else if constexpr (std::is_same_v<T, PulseSpec>) {
                    return {0.0, s.amplitude};
                } else {
                    return {0.0, 1.0};
                }
            },
            gen.spec);
    }

private:
    std::vector<SignalExpr> order_;
    std::vector<std::string> names_;
    std::vector<std::array<std::size_t, 3>> mux_inputs_;
    std::map<std::string, std::size_t> slot_of_;
    std::vector<double> values_;
};

}  // namespace reconf
