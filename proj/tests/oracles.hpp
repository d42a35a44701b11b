#pragma once

// Reference computations used only by tests. These deliberately avoid the
// library's integration, buffer, and search code paths.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "abrbench/expert.hpp"
#include "abrbench/media.hpp"
#include "abrbench/trace.hpp"

namespace abrbench::oracle {

/// Bandwidth lookup by linear scan over the samples.
inline double bandwidth(const Trace& trace, double t) {
    const auto& s = trace.samples();
    if (trace.mode() == LoopMode::wrap) {
        while (t >= trace.period()) t -= trace.period();
    }
    double bw = s.front().mbps;
    for (const auto& x : s)
        if (x.time_s <= t) bw = x.mbps;
    return bw;
}

/// Midpoint Riemann sum with step dt.
inline double riemann_integral(const Trace& trace, double t0, double d, double dt = 1e-4) {
    const auto steps = static_cast<long>(std::llround(d / dt));
    double total = 0.0;
    for (long k = 0; k < steps; ++k) total += bandwidth(trace, t0 + (k + 0.5) * dt) * dt;
    return total;
}

/// Transfer duration by fine stepping until the volume is delivered, with
/// the final partial step solved linearly.
inline double stepped_transfer(const Trace& trace, double t0, double volume, double rtt, double dt = 1e-4) {
    double t = t0 + rtt;
    double left = volume;
    for (;;) {
        const double bw = bandwidth(trace, t + 0.5 * dt);
        if (bw * dt >= left) return t + left / bw - t0;
        left -= bw * dt;
        t += dt;
    }
}

/// Horizon QoE of `levels` when chunk j takes rtt + size / cbar[j] seconds,
/// written out directly from the buffer/reward equations.
inline double fixed_throughput_objective(const ExpertProblem& p, const std::vector<Level>& levels,
                                         const std::vector<double>& cbar) {
    const auto& m = *p.manifest;
    const auto& q = *p.params;
    double b = p.start.buffer_s;
    double value = 0.0;
    std::optional<double> prev;
    if (p.start.last_level) prev = m.bitrate(*p.start.last_level);
    for (std::size_t j = 0; j < levels.size(); ++j) {
        const double r = m.bitrate(levels[j]);
        const double tau = q.rtt_s + m.size(p.start.next_chunk + static_cast<int>(j), levels[j]) / cbar[j];
        const double e = tau > b ? tau - b : 0.0;
        value += r - q.alpha1 * e - (prev ? q.alpha2 * std::fabs(r - *prev) : 0.0);
        double nb = (b > tau ? b - tau : 0.0) + m.chunk_duration();
        if (nb > q.buffer_cap_s) nb = q.buffer_cap_s;
        b = nb;
        prev = r;
    }
    return value;
}

/// Calls `visit` for every level sequence of length n over `levels` levels,
/// in lexicographic order.
inline void for_each_sequence(int levels, int n, const std::function<void(const std::vector<Level>&)>& visit) {
    std::vector<Level> seq(static_cast<std::size_t>(n), 0);
    for (;;) {
        visit(seq);
        int pos = n - 1;
        while (pos >= 0 && seq[static_cast<std::size_t>(pos)] == levels - 1) seq[static_cast<std::size_t>(pos--)] = 0;
        if (pos < 0) return;
        ++seq[static_cast<std::size_t>(pos)];
    }
}

/// Best objective of the fixed-throughput problem by brute force.
inline double brute_fixed_throughput(const ExpertProblem& p, const std::vector<double>& cbar) {
    double best = -std::numeric_limits<double>::infinity();
    for_each_sequence(p.manifest->level_count(), p.effective_horizon(), [&](const std::vector<Level>& s) {
        best = std::max(best, fixed_throughput_objective(p, s, cbar));
    });
    return best;
}

} // namespace abrbench::oracle
