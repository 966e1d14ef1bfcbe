#pragma once

// Waveform files: `time,<probe...>` header, one row per sample, `\n` line
// endings, no trailing delimiter. Time is written with 9 significant digits,
// voltages with 6 digits after the decimal point.

#include "reconf/transient.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace reconf {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void append_time(std::string& out, double t) {
    char buf[32];
    int n = std::snprintf(buf, sizeof buf, "%.9g", t);
    out.append(buf, static_cast<std::size_t>(n));
}

inline void append_volts(std::string& out, double v) {
    if (std::abs(v) < 5e-7) v = 0.0;  // no "-0.000000"
    char buf[48];
    int n = std::snprintf(buf, sizeof buf, "%.6f", v);
    out.append(buf, static_cast<std::size_t>(n));
}

inline double parse_number(std::string_view s, std::size_t line) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw IoError("line " + std::to_string(line) + ": bad number '" + std::string(s) + "'");
    }
    return v;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(',', start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

}  // namespace detail

inline void write_waveforms(std::ostream& os, const TraceSet& traces) {
    if (traces.size() == 0 || traces.names.empty()) throw IoError("refusing to write an empty trace set");
    for (const auto& name : traces.names) {
        if (name.find_first_of(",\r\n") != std::string::npos) throw IoError("probe name '" + name + "' contains a delimiter");
    }
    std::string line = "time";
    for (const auto& name : traces.names) line += "," + name;
    line += "\n";
    os << line;
    for (std::size_t k = 0; k < traces.size(); ++k) {
        line.clear();
        detail::append_time(line, traces.time(k));
        for (const auto& s : traces.samples) {
            line += ',';
            detail::append_volts(line, s[k]);
        }
        line += '\n';
        os << line;
    }
    if (!os) throw IoError("write failed");
}

inline void emit_waveforms(const std::string& path, const TraceSet& traces) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    write_waveforms(f, traces);
    f.close();
    if (!f) throw IoError("failed writing '" + path + "'");
}

/// Reads a waveform file back. dt is taken from the first two rows and every
/// later row must sit on that grid (to within the written precision).
inline TraceSet read_waveforms(std::istream& is) {
    TraceSet out;
    std::string line;
    std::size_t lineno = 1;
    if (!std::getline(is, line)) throw IoError("empty waveform file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = detail::split_commas(line);
    if (header.empty() || header[0] != "time") throw IoError("line 1: header must start with 'time'");
    for (std::size_t i = 1; i < header.size(); ++i) {
        if (header[i].empty()) throw IoError("line 1: empty probe name");
        out.names.emplace_back(header[i]);
    }
    if (out.names.empty()) throw IoError("line 1: no probe columns");
    out.samples.resize(out.names.size());

    std::vector<double> times;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = detail::split_commas(line);
        if (cells.size() != header.size()) {
            throw IoError("line " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                          " fields, got " + std::to_string(cells.size()));
        }
        times.push_back(detail::parse_number(cells[0], lineno));
        for (std::size_t i = 1; i < cells.size(); ++i) out.samples[i - 1].push_back(detail::parse_number(cells[i], lineno));
    }
    if (times.empty()) throw IoError("waveform file has no samples");
    out.t0 = times.front();
    out.dt = times.size() > 1 ? times[1] - times[0] : 0.0;
    if (times.size() > 1 && !(out.dt > 0.0)) throw IoError("time column must increase");
    for (std::size_t k = 2; k < times.size(); ++k) {
        double expect = out.t0 + static_cast<double>(k) * out.dt;
        if (std::abs(times[k] - expect) > 1e-6 * out.dt + 1e-8 * std::abs(expect)) {
            throw IoError("line " + std::to_string(k + 2) + ": time " + std::to_string(times[k]) + " is off the uniform grid");
        }
    }
    // Recover dt from the whole span to undo the rounding of the first step.
    if (times.size() > 2) out.dt = (times.back() - out.t0) / static_cast<double>(times.size() - 1);
    return out;
}

inline TraceSet load_waveforms(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "'");
    return read_waveforms(f);
}

}  // namespace reconf
