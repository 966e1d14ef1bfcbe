#pragma once

// Waveform metrics: plateau peak, inter-phase amplitude spread, dwell-based
// level counting and RMS deviation between aligned traces.

#include "reconf/transient.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace reconf {

class WindowOutOfRange : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

class LengthMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Half-open sample range [begin, end).
struct SampleWindow {
    std::size_t begin = 0;
    std::size_t end = 0;

    [[nodiscard]] std::size_t size() const { return end > begin ? end - begin : 0; }
};

inline constexpr double kDefaultLevelTol = 0.5;    // V
inline constexpr double kDefaultMinDwell = 1e-3;   // s

/// The last `cycles` fundamental periods ending at sample `end` (exclusive).
inline SampleWindow last_cycles(std::size_t end, double dt, double f_ref, double cycles) {
    if (!(cycles > 0.0)) throw WindowOutOfRange("window must span at least part of a cycle");
    const auto span = static_cast<std::size_t>(std::llround(cycles / (f_ref * dt)));
    if (span == 0 || span > end) {
        throw WindowOutOfRange("window of " + std::to_string(cycles) + " cycles needs " + std::to_string(span) +
                               " samples, only " + std::to_string(end) + " available");
    }
    return {end - span, end};
}

inline SampleWindow last_cycles(const TraceSet& trace, double f_ref, double cycles) {
    return last_cycles(trace.size(), trace.dt, f_ref, cycles);
}

namespace detail {

inline void check_window(std::span<const double> x, SampleWindow w) {
    if (w.end > x.size() || w.begin >= w.end) {
        throw WindowOutOfRange("window [" + std::to_string(w.begin) + ", " + std::to_string(w.end) +
                               ") outside trace of " + std::to_string(x.size()) + " samples");
    }
}

}  // namespace detail

/// Largest |sample| in the window.
inline double phase_peak(std::span<const double> x, SampleWindow w) {
    detail::check_window(x, w);
    double peak = 0.0;
    for (std::size_t k = w.begin; k < w.end; ++k) peak = std::max(peak, std::abs(x[k]));
    return peak;
}

inline double amplitude_spread(std::span<const double> peaks) {
    if (peaks.empty()) throw std::invalid_argument("amplitude_spread needs at least one peak");
    for (double p : peaks)
        if (!std::isfinite(p)) throw std::invalid_argument("amplitude_spread needs finite peaks");
    auto [lo, hi] = std::minmax_element(peaks.begin(), peaks.end());
    return *hi - *lo;
}

/// Mean value of every plateau: a maximal run of samples staying within
/// +-level_tol of the run's first sample, lasting at least min_dwell
/// (run length * dt).
inline std::vector<double> find_plateaus(std::span<const double> x, double dt, double level_tol, double min_dwell) {
    if (!(level_tol > 0.0)) throw std::invalid_argument("level_tol must be > 0");
    if (!(dt > 0.0) || min_dwell < dt * (1.0 - 1e-9)) throw std::invalid_argument("min_dwell must be >= dt");
    std::vector<double> out;
    std::size_t start = 0;
    while (start < x.size()) {
        const double anchor = x[start];
        std::size_t end = start + 1;
        double sum = anchor;
        while (end < x.size() && std::abs(x[end] - anchor) <= level_tol) sum += x[end++];
        const std::size_t len = end - start;
        if (static_cast<double>(len) * dt >= min_dwell * (1.0 - 1e-9)) out.push_back(sum / static_cast<double>(len));
        start = end;
    }
    return out;
}

/// Number of distinct plateau levels. Plateau means closer than level_tol
/// are the same level.
inline std::size_t count_levels(std::span<const double> x, double dt, double level_tol = kDefaultLevelTol,
                                double min_dwell = kDefaultMinDwell) {
    auto levels = find_plateaus(x, dt, level_tol, min_dwell);
    std::sort(levels.begin(), levels.end());
    std::size_t count = 0;
    double cluster_start = 0.0;
    for (double v : levels) {
        if (count == 0 || v - cluster_start > level_tol) {
            ++count;
            cluster_start = v;
        }
    }
    return count;
}

/// Root-mean-square of the pointwise difference over a window.
inline double deviation_rms(std::span<const double> x, std::span<const double> reference, SampleWindow w) {
    if (x.size() != reference.size()) {
        throw LengthMismatch("trace lengths differ: " + std::to_string(x.size()) + " vs " +
                             std::to_string(reference.size()));
    }
    detail::check_window(x, w);
    double acc = 0.0;
    for (std::size_t k = w.begin; k < w.end; ++k) {
        const double d = x[k] - reference[k];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(w.size()));
}

/// Probe-level overload; both traces must share the time grid.
inline double deviation_rms(const TraceSet& trace, const TraceSet& reference, const std::string& probe,
                            SampleWindow w) {
    if (trace.dt != reference.dt || trace.t0 != reference.t0) {
        throw LengthMismatch("traces are not on the same time grid");
    }
    return deviation_rms(trace[probe], reference[probe], w);
}

struct AnalysisReport {
    std::vector<std::string> probes;
    std::vector<double> per_phase_peak;
    double spread = 0.0;
    std::map<std::string, std::size_t> levels_per_probe;
    std::optional<double> deviation_rms;
};

struct AnalysisOptions {
    double level_tol = kDefaultLevelTol;
    double min_dwell = kDefaultMinDwell;
};

inline AnalysisReport analyze_probes(const TraceSet& trace, const std::vector<std::string>& probes, SampleWindow w,
                                     const AnalysisOptions& opts = {}) {
    AnalysisReport r;
    r.probes = probes;
    for (const auto& name : probes) {
        std::span<const double> x = trace[name];
        r.per_phase_peak.push_back(phase_peak(x, w));
        r.levels_per_probe[name] = count_levels(x.subspan(w.begin, w.size()), trace.dt, opts.level_tol, opts.min_dwell);
    }
    r.spread = r.per_phase_peak.empty() ? 0.0 : amplitude_spread(r.per_phase_peak);
    return r;
}

}  // namespace reconf
