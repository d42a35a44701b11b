#pragma once

// Downlink throughput traces: piecewise-constant bandwidth over time, with
// exact integration and the inverse (how long a transfer of a given volume
// takes when started at a given instant).

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "abrbench/errors.hpp"
#include "abrbench/rng.hpp"

namespace abrbench {

/// What happens after the last sample.
enum class LoopMode {
    wrap,      ///< the trace repeats with period `Trace::period()`
    hold_last, ///< the last bandwidth holds forever
};

struct TraceSample {
    double time_s = 0.0;
    double mbps = 0.0;

    friend bool operator==(const TraceSample&, const TraceSample&) = default;
};

/// Immutable throughput trace. Bandwidth is constant from each sample's
/// timestamp until the next one. In wrap mode the final sample lasts as long
/// as the interval preceding it (1 s for a single-sample trace), which fixes
/// the period.
class Trace {
public:
    Trace(std::vector<TraceSample> samples, LoopMode mode = LoopMode::wrap, std::string id = {})
        : samples_(std::move(samples)), mode_(mode), id_(std::move(id)) {
        if (samples_.empty()) throw DomainError("trace has no samples");
        if (samples_.front().time_s != 0.0) throw DomainError("trace must start at t=0");
        for (std::size_t k = 0; k < samples_.size(); ++k) {
            const auto& s = samples_[k];
            if (!std::isfinite(s.time_s) || !std::isfinite(s.mbps))
                throw DomainError("trace sample " + std::to_string(k) + " is not finite");
            if (!(s.mbps > 0.0))
                throw DomainError("trace sample " + std::to_string(k) + " has non-positive bandwidth");
            if (k > 0 && !(s.time_s > samples_[k - 1].time_s))
                throw DomainError("trace timestamps not strictly increasing at sample " +
                                  std::to_string(k));
        }
        const std::size_t n = samples_.size();
        const double last_step = n >= 2 ? samples_[n - 1].time_s - samples_[n - 2].time_s : 1.0;
        period_ = samples_.back().time_s + last_step;
        cumulative_.resize(n + 1);
        cumulative_[0] = 0.0;
        for (std::size_t k = 0; k < n; ++k)
            cumulative_[k + 1] = cumulative_[k] + samples_[k].mbps * (segment_end(k) - samples_[k].time_s);
        constant_ = std::all_of(samples_.begin(), samples_.end(),
                                [&](const TraceSample& s) { return s.mbps == samples_.front().mbps; });
    }

    const std::vector<TraceSample>& samples() const noexcept { return samples_; }
    LoopMode mode() const noexcept { return mode_; }
    const std::string& id() const noexcept { return id_; }
    void set_id(std::string id) { id_ = std::move(id); }

    /// Length of one repetition in wrap mode; end of the last finite segment otherwise.
    double period() const noexcept { return period_; }
    bool is_constant() const noexcept { return constant_; }

    double bandwidth_at(double t) const {
        if (t < 0.0) throw DomainError("negative trace time");
        return samples_[locate(t).segment].mbps;
    }

    /// Megabits delivered over [t0, t0 + d].
    double integrate(double t0, double d) const {
        if (t0 < 0.0) throw DomainError("integrate: t0 < 0");
        if (d < 0.0) throw DomainError("integrate: d < 0");
        if (d == 0.0) return 0.0;
        return primitive(t0 + d) - primitive(t0);
    }

    /// Seconds of data phase needed to move `volume` megabits starting at t0.
    double data_time(double t0, double volume) const {
        if (t0 < 0.0) throw DomainError("transfer: t0 < 0");
        if (!(volume > 0.0)) throw DomainError("transfer: volume must be positive");
        Position pos = locate(t0);
        double remaining = volume;
        double elapsed = 0.0;
        const std::size_t n = samples_.size();
        for (;;) {
            const double rate = samples_[pos.segment].mbps;
            if (is_open_ended(pos.segment)) return elapsed + remaining / rate;
            const double span = segment_end(pos.segment) - pos.offset;
            const double available = rate * span;
            if (available >= remaining) return elapsed + remaining / rate;
            remaining -= available;
            elapsed += span;
            if (pos.segment + 1 < n) {
                pos = {pos.segment + 1, samples_[pos.segment + 1].time_s};
                continue;
            }
            // wrap: skip whole periods at once
            pos = {0, 0.0};
            const double per_period = cumulative_[n];
            auto whole = std::floor(remaining / per_period);
            if (whole >= 1.0 && whole * per_period >= remaining) whole -= 1.0;
            if (whole >= 1.0) {
                remaining -= whole * per_period;
                elapsed += whole * period_;
            }
        }
    }

private:
    struct Position {
        std::size_t segment;
        double offset; // local time inside the (first) period
    };

    bool is_open_ended(std::size_t k) const {
        return mode_ == LoopMode::hold_last && k + 1 == samples_.size();
    }

    double segment_end(std::size_t k) const {
        return k + 1 < samples_.size() ? samples_[k + 1].time_s : period_;
    }

    Position locate(double t) const {
        double local = t;
        if (mode_ == LoopMode::wrap && t >= period_) {
            local = std::fmod(t, period_);
        }
        auto it = std::upper_bound(samples_.begin(), samples_.end(), local,
                                   [](double v, const TraceSample& s) { return v < s.time_s; });
        return {static_cast<std::size_t>(std::distance(samples_.begin(), it)) - 1, local};
    }

    // Integral of bandwidth over [0, t].
    double primitive(double t) const {
        double base = 0.0;
        double local = t;
        if (mode_ == LoopMode::wrap && t >= period_) {
            const double cycles = std::floor(t / period_);
            local = t - cycles * period_;
            if (local < 0.0) local = 0.0;
            if (local >= period_) local = std::nextafter(period_, 0.0);
            base = cycles * cumulative_.back();
        }
        auto it = std::upper_bound(samples_.begin(), samples_.end(), local,
                                   [](double v, const TraceSample& s) { return v < s.time_s; });
        const auto k = static_cast<std::size_t>(std::distance(samples_.begin(), it)) - 1;
        return base + cumulative_[k] + samples_[k].mbps * (local - samples_[k].time_s);
    }

    std::vector<TraceSample> samples_;
    LoopMode mode_;
    std::string id_;
    double period_ = 0.0;
    bool constant_ = false;
    std::vector<double> cumulative_; // cumulative_[k] = integral over [0, samples_[k].time_s]
};

/// Integral of c_t over [t0, t0 + d] in megabits.
inline double integrate_throughput(const Trace& trace, double t0, double d) {
    return trace.integrate(t0, d);
}

/// Total chunk download time: `rtt` of dead time followed by the data phase
/// that delivers `volume` megabits.
inline double transfer_time(const Trace& trace, double t0, double volume, double rtt) {
    if (!(volume > 0.0)) throw DomainError("transfer_time: volume must be positive");
    if (rtt < 0.0) throw DomainError("transfer_time: rtt < 0");
    if (t0 < 0.0) throw DomainError("transfer_time: t0 < 0");
    return rtt + trace.data_time(t0 + rtt, volume);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline bool parse_double(std::string_view s, double& out) {
    s = trim(s);
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

inline void append_double(std::string& out, double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, ptr);
}

} // namespace detail

/// Parses `timestamp_seconds,bandwidth_mbps` rows. Blank lines and `#` comment lines are skipped.
inline Trace load_trace(std::string_view text, std::string id = {}, LoopMode mode = LoopMode::wrap) {
    std::vector<TraceSample> samples;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const std::size_t eol = std::min(text.find('\n', pos), text.size());
        const std::string_view line = detail::trim(text.substr(pos, eol - pos));
        pos = eol + 1;
        ++line_no;
        if (line.empty() || line.front() == '#') continue;
        const auto comma = line.find(',');
        if (comma == std::string_view::npos || line.find(',', comma + 1) != std::string_view::npos)
            throw ParseError("expected exactly two comma-separated fields", line_no);
        TraceSample s;
        if (!detail::parse_double(line.substr(0, comma), s.time_s))
            throw ParseError("malformed timestamp", line_no);
        if (!detail::parse_double(line.substr(comma + 1), s.mbps))
            throw ParseError("malformed bandwidth", line_no);
        if (!(s.mbps > 0.0)) throw ParseError("non-positive bandwidth", line_no);
        if (samples.empty() && s.time_s != 0.0) throw ParseError("first timestamp must be 0", line_no);
        if (!samples.empty() && !(s.time_s > samples.back().time_s))
            throw ParseError("timestamps not strictly increasing", line_no);
        samples.push_back(s);
    }
    if (samples.empty()) throw ParseError("trace is empty");
    return Trace(std::move(samples), mode, std::move(id));
}

inline std::string to_csv(const Trace& trace) {
    std::string out;
    for (const auto& s : trace.samples()) {
        detail::append_double(out, s.time_s);
        out += ',';
        detail::append_double(out, s.mbps);
        out += '\n';
    }
    return out;
}

/// Parameters of the synthetic generator.
struct SynthModel {
    double mean_mbps = 2.0;
    double volatility = 0.3; ///< innovation std-dev of the log-bandwidth walk
    double duration_s = 400.0;
    double step_s = 1.0;
};

/// Log-space AR(1) walk around `mean_mbps`, clamped to [0.05, 20] x mean.
inline Trace synth_trace(std::uint64_t seed, const SynthModel& model, std::string id = {}) {
    constexpr double kPersistence = 0.9;
    if (!(model.mean_mbps > 0.0) || !std::isfinite(model.mean_mbps))
        throw DomainError("synth: mean must be positive");
    if (!(model.volatility >= 0.0 && model.volatility < 1.0))
        throw DomainError("synth: volatility must be in [0, 1)");
    if (!(model.step_s > 0.0)) throw DomainError("synth: step must be positive");
    if (!(model.duration_s >= model.step_s)) throw DomainError("synth: duration shorter than one step");

    Rng rng(seed);
    const auto count = static_cast<std::size_t>(std::ceil(model.duration_s / model.step_s - 1e-9));
    const double lo = 0.05 * model.mean_mbps;
    const double hi = 20.0 * model.mean_mbps;
    std::vector<TraceSample> samples;
    samples.reserve(count);
    double log_dev = 0.0;
    for (std::size_t k = 0; k < count; ++k) {
        const double bw = std::clamp(model.mean_mbps * std::exp(log_dev), lo, hi);
        samples.push_back({static_cast<double>(k) * model.step_s, bw});
        log_dev = kPersistence * log_dev + model.volatility * rng.normal();
    }
    return Trace(std::move(samples), LoopMode::wrap, std::move(id));
}

} // namespace abrbench
