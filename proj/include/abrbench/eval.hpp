#pragma once

// Session metrics, trace-average comparison, and per-trace ranking points.

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <tuple>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "abrbench/errors.hpp"
#include "abrbench/simulator.hpp"
#include "abrbench/trace.hpp"

namespace abrbench {

struct QoEComponents {
    double utility = 0.0;
    double rebuffer_penalty = 0.0;
    double switch_penalty = 0.0;
    double total = 0.0;

    friend bool operator==(const QoEComponents&, const QoEComponents&) = default;
};

inline QoEComponents session_metrics(const SessionLog& log) {
    QoEComponents c;
    for (const auto& s : log.steps) {
        c.utility += s.utility;
        c.rebuffer_penalty += s.rebuffer_penalty;
        c.switch_penalty += s.switch_penalty;
    }
    c.total = c.utility - c.rebuffer_penalty - c.switch_penalty;
    return c;
}

/// QoE per (trace, policy).
class QoEMatrix {
public:
    void set(const std::string& trace_id, const std::string& policy, const QoEComponents& c) {
        cells_[{trace_id, policy}] = c;
        traces_.insert(trace_id);
        policies_.insert(policy);
    }

    const QoEComponents& at(const std::string& trace_id, const std::string& policy) const {
        const auto it = cells_.find({trace_id, policy});
        if (it == cells_.end()) throw UsageError("QoE matrix has no cell for trace '" + trace_id + "', policy '" + policy + "'");
        return it->second;
    }

    bool contains(const std::string& trace_id, const std::string& policy) const {
        return cells_.count({trace_id, policy}) > 0;
    }

    std::vector<std::string> traces() const { return {traces_.begin(), traces_.end()}; }
    std::vector<std::string> policies() const { return {policies_.begin(), policies_.end()}; }

private:
    std::map<std::pair<std::string, std::string>, QoEComponents> cells_;
    std::set<std::string> traces_;
    std::set<std::string> policies_;
};

inline constexpr std::array<int, 6> kRankPoints{25, 18, 15, 12, 10, 8};

struct PolicyRanking {
    std::string policy;
    std::vector<int> rank_counts;          ///< rank_counts[r] = traces where the policy placed r+1
    std::vector<double> rank_percent;
    double average_rank = 0.0;
    int points = 0;
};

/// Per trace, policies are ranked by QoE descending; tied policies share the
/// better rank and its points (1, 1, 3, ...).
inline std::vector<PolicyRanking> rank_points(const QoEMatrix& matrix) {
    const auto policies = matrix.policies();
    const auto traces = matrix.traces();
    if (policies.size() > kRankPoints.size())
        throw UsageError("ranking supports at most " + std::to_string(kRankPoints.size()) + " policies");
    std::vector<PolicyRanking> out(policies.size());
    for (std::size_t p = 0; p < policies.size(); ++p) {
        out[p].policy = policies[p];
        out[p].rank_counts.assign(policies.size(), 0);
    }
    std::vector<double> rank_sum(policies.size(), 0.0);
    for (const auto& t : traces) {
        std::vector<double> qoe(policies.size());
        for (std::size_t p = 0; p < policies.size(); ++p) qoe[p] = matrix.at(t, policies[p]).total;
        for (std::size_t p = 0; p < policies.size(); ++p) {
            const auto better = std::count_if(qoe.begin(), qoe.end(), [&](double v) { return v > qoe[p]; });
            const auto rank = static_cast<std::size_t>(better); // 0-based
            out[p].rank_counts[rank] += 1;
            out[p].points += kRankPoints[rank];
            rank_sum[p] += static_cast<double>(rank + 1);
        }
    }
    for (std::size_t p = 0; p < policies.size(); ++p) {
        const double n = static_cast<double>(traces.size());
        out[p].average_rank = traces.empty() ? 0.0 : rank_sum[p] / n;
        for (int c : out[p].rank_counts) out[p].rank_percent.push_back(traces.empty() ? 0.0 : 100.0 * c / n);
    }
    return out;
}

/// One evaluated session.
struct RunRecord {
    std::string policy;
    std::string trace_id;
    std::uint64_t seed = 0;
    QoEComponents qoe;
};

struct PolicySummary {
    std::string policy;
    QoEComponents average;
    double max_seed_qoe = 0.0; ///< best per-seed trace-average QoE
    double min_seed_qoe = 0.0;
    double average_rank = 0.0;
    int points = 0;
    std::vector<double> rank_percent;
};

struct ComparisonReport {
    std::vector<PolicySummary> policies;
    QoEMatrix matrix; ///< per (trace, policy) mean over seeds
};

inline ComparisonReport compare(const std::vector<RunRecord>& runs) {
    if (runs.empty()) throw UsageError("compare: no runs");
    struct Acc {
        QoEComponents sum;
        int n = 0;
        void add(const QoEComponents& c) {
            sum.utility += c.utility;
            sum.rebuffer_penalty += c.rebuffer_penalty;
            sum.switch_penalty += c.switch_penalty;
            sum.total += c.total;
            ++n;
        }
        QoEComponents mean() const {
            return {sum.utility / n, sum.rebuffer_penalty / n, sum.switch_penalty / n, sum.total / n};
        }
    };
    std::vector<const RunRecord*> sorted;
    for (const auto& r : runs) sorted.push_back(&r);
    std::sort(sorted.begin(), sorted.end(), [](const RunRecord* a, const RunRecord* b) {
        return std::tie(a->policy, a->trace_id, a->seed) < std::tie(b->policy, b->trace_id, b->seed);
    });

    std::map<std::string, Acc> per_policy;
    std::map<std::pair<std::string, std::string>, Acc> per_cell;
    std::map<std::pair<std::string, std::uint64_t>, Acc> per_seed;
    for (const auto* r : sorted) {
        per_policy[r->policy].add(r->qoe);
        per_cell[{r->trace_id, r->policy}].add(r->qoe);
        per_seed[{r->policy, r->seed}].add(r->qoe);
    }

    ComparisonReport report;
    for (const auto& [key, acc] : per_cell) report.matrix.set(key.first, key.second, acc.mean());

    std::map<std::string, PolicyRanking> ranks;
    if (per_policy.size() <= kRankPoints.size()) {
        // every policy must have every trace for ranking
        bool complete = true;
        for (const auto& t : report.matrix.traces())
            for (const auto& p : report.matrix.policies()) complete = complete && report.matrix.contains(t, p);
        if (complete)
            for (auto& r : rank_points(report.matrix)) ranks[r.policy] = std::move(r);
    }

    for (const auto& [policy, acc] : per_policy) {
        PolicySummary s;
        s.policy = policy;
        s.average = acc.mean();
        s.max_seed_qoe = -std::numeric_limits<double>::infinity();
        s.min_seed_qoe = std::numeric_limits<double>::infinity();
        for (const auto& [key, seed_acc] : per_seed) {
            if (key.first != policy) continue;
            s.max_seed_qoe = std::max(s.max_seed_qoe, seed_acc.mean().total);
            s.min_seed_qoe = std::min(s.min_seed_qoe, seed_acc.mean().total);
        }
        if (auto it = ranks.find(policy); it != ranks.end()) {
            s.average_rank = it->second.average_rank;
            s.points = it->second.points;
            s.rank_percent = it->second.rank_percent;
        }
        report.policies.push_back(std::move(s));
    }
    return report;
}

inline constexpr const char* kReportHeader =
    "policy,avg_qoe,avg_bitrate_utility,avg_rebuffer_penalty,avg_switch_penalty,avg_rank,points";
inline constexpr const char* kPlotHeader = "trace_id,policy,qoe";

inline std::string report_csv(const ComparisonReport& report) {
    std::string out = std::string(kReportHeader) + "\n";
    for (const auto& p : report.policies) {
        out += p.policy;
        for (double v : {p.average.total, p.average.utility, p.average.rebuffer_penalty, p.average.switch_penalty,
                         p.average_rank}) {
            out += ',';
            detail::append_double(out, v);
        }
        out += ',' + std::to_string(p.points) + '\n';
    }
    return out;
}

inline std::string plot_csv(const ComparisonReport& report) {
    std::string out = std::string(kPlotHeader) + "\n";
    for (const auto& t : report.matrix.traces())
        for (const auto& p : report.matrix.policies()) {
            if (!report.matrix.contains(t, p)) continue;
            out += t + ',' + p + ',';
            detail::append_double(out, report.matrix.at(t, p).total);
            out += '\n';
        }
    return out;
}

inline nlohmann::json to_json(const QoEMatrix& matrix) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& t : matrix.traces())
        for (const auto& p : matrix.policies()) {
            if (!matrix.contains(t, p)) continue;
            const auto& c = matrix.at(t, p);
            cells.push_back({{"trace_id", t},
                             {"policy", p},
                             {"qoe", c.total},
                             {"utility", c.utility},
                             {"rebuffer_penalty", c.rebuffer_penalty},
                             {"switch_penalty", c.switch_penalty}});
        }
    return {{"cells", cells}};
}

inline QoEMatrix matrix_from_json(const nlohmann::json& j) {
    try {
        QoEMatrix m;
        for (const auto& c : j.at("cells")) {
            QoEComponents q{c.value("utility", 0.0), c.value("rebuffer_penalty", 0.0), c.value("switch_penalty", 0.0),
                            c.at("qoe").get<double>()};
            m.set(c.at("trace_id").get<std::string>(), c.at("policy").get<std::string>(), q);
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("QoE matrix: ") + e.what());
    }
}

inline nlohmann::json to_json(const std::vector<PolicyRanking>& ranks) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : ranks)
        out.push_back({{"policy", r.policy},
                       {"rank_counts", r.rank_counts},
                       {"rank_percent", r.rank_percent},
                       {"average_rank", r.average_rank},
                       {"points", r.points}});
    return out;
}

inline nlohmann::json to_json(const ComparisonReport& report) {
    nlohmann::json policies = nlohmann::json::array();
    for (const auto& p : report.policies)
        policies.push_back({{"policy", p.policy},
                            {"avg_qoe", p.average.total},
                            {"avg_bitrate_utility", p.average.utility},
                            {"avg_rebuffer_penalty", p.average.rebuffer_penalty},
                            {"avg_switch_penalty", p.average.switch_penalty},
                            {"max_seed_qoe", p.max_seed_qoe},
                            {"min_seed_qoe", p.min_seed_qoe},
                            {"avg_rank", p.average_rank},
                            {"points", p.points},
                            {"rank_percent", p.rank_percent}});
    return {{"policies", policies}, {"matrix", to_json(report.matrix)}};
}

} // namespace abrbench
