#pragma once

// abrbench command line: subcommands, config resolution, artifact writers.
//
// Exit codes: 0 success, 2 usage, 3 data (unreadable or invalid inputs,
// refused solves), 4 internal. Failures print one JSON line on stderr:
//   {"error": "usage" | "data" | "internal", "message": "..."}

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "abrbench/eval.hpp"
#include "abrbench/expert.hpp"
#include "abrbench/learner.hpp"
#include "abrbench/media.hpp"
#include "abrbench/policies.hpp"
#include "abrbench/simulator.hpp"
#include "abrbench/trace.hpp"

namespace abrbench::cli {

namespace fs = std::filesystem;
using nlohmann::json;

enum ExitCode : int { kOk = 0, kUsage = 2, kData = 3, kInternal = 4 };

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// JSON config files: {"<subcommand>": {"<long option name>": value, ...}}.
// An artifact's embedded {"config": {...}} object is accepted as well, so
// any artifact can be fed back with --config to regenerate it; its
// "resolved" block (manifest, trace ids) is ignored on the way in.
class JsonConfig : public CLI::Config {
public:
    std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        json j;
        try {
            j = json::parse(input);
        } catch (const json::parse_error& e) {
            throw CLI::ConfigError(std::string("config file is not valid JSON: ") + e.what());
        }
        if (j.is_object() && j.contains("config") && j["config"].is_object()) j = j["config"];
        if (!j.is_object()) throw CLI::ConfigError("config file must hold a JSON object");
        std::vector<CLI::ConfigItem> items;
        walk(j, {}, items);
        return items;
    }

private:
    static std::string scalar(const json& v) {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
        return v.dump();
    }

    static void walk(const json& obj, const std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& items) {
        for (const auto& [key, value] : obj.items()) {
            if (parents.empty() && key == "resolved") continue; // derived values, informational only
            if (value.is_null() || (value.is_array() && value.empty())) continue; // unset option
            if (value.is_object()) {
                auto next = parents;
                next.push_back(key);
                walk(value, next, items);
                continue;
            }
            CLI::ConfigItem item;
            item.parents = parents;
            item.name = key;
            if (value.is_array())
                for (const auto& v : value) item.inputs.push_back(scalar(v));
            else
                item.inputs.push_back(scalar(value));
            items.push_back(std::move(item));
        }
    }
};

// Options that change how a run executes but not what it produces.
inline const std::set<std::string> kExecutionOptions{"out", "workers", "config", "help"};

inline json typed(const std::string& s) {
    if (s == "true") return true;
    if (s == "false") return false;
    double d = 0.0;
    if (!s.empty() && detail::parse_double(s, d)) {
        const auto parsed = json::parse(s, nullptr, false);
        if (!parsed.is_discarded() && parsed.is_number()) return parsed;
    }
    return s;
}

/// Every option of `sub` with its effective value, keyed by long name.
inline json resolved_config(const CLI::App& sub) {
    json options = json::object();
    for (const CLI::Option* opt : sub.get_options()) {
        if (opt->get_lnames().empty()) continue;
        const std::string name = opt->get_lnames().front();
        if (kExecutionOptions.count(name)) continue;
        if (opt->get_expected_max() == 0) { // flag
            options[name] = opt->count() > 0 && opt->as<bool>();
            continue;
        }
        std::vector<std::string> values = opt->count() > 0 ? opt->results() : std::vector<std::string>{};
        if (opt->count() == 0 && !opt->get_default_str().empty()) {
            std::string d = opt->get_default_str();
            if (d.size() >= 2 && d.front() == '[' && d.back() == ']') {
                d = d.substr(1, d.size() - 2);
                std::stringstream ss(d);
                std::string part;
                while (std::getline(ss, part, ',')) values.push_back(std::string(detail::trim(part)));
            } else {
                values.push_back(d);
            }
        }
        const bool vector_option = opt->get_items_expected_max() > 1;
        if (vector_option) {
            json arr = json::array();
            for (const auto& v : values) arr.push_back(typed(v));
            options[name] = arr;
        } else if (!values.empty()) {
            options[name] = typed(values.back());
        } else {
            options[name] = nullptr;
        }
    }
    return {{sub.get_name(), options}};
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Writes through a temporary sibling and renames, so readers never see a partial file.
inline void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write '" + path.string() + "'");
        out << text;
        if (!out) throw IoError("write failed for '" + path.string() + "'");
    }
    fs::rename(tmp, path);
}

inline void emit(const std::string& out, const std::string& text) {
    if (out.empty() || out == "-") {
        std::cout << text;
        std::cout.flush();
    } else {
        write_file(out, text);
    }
}

// ---------------------------------------------------------------------------
// Shared inputs

struct MediaArgs {
    std::string manifest = "pensieve";
    int chunks = 0;

    void add(CLI::App& app) {
        app.add_option("--manifest", manifest, "Preset name (pensieve, a2br-5g) or manifest JSON path")
            ->capture_default_str();
        app.add_option("--chunks", chunks, "Use only the first N chunks (0 = whole video)")
            ->capture_default_str()
            ->check(CLI::NonNegativeNumber);
    }

    MediaConfig resolve() const {
        MediaConfig media = [&] {
            if (auto p = preset(manifest)) return *p;
            try {
                return load_manifest(read_file(manifest));
            } catch (const IoError&) {
                throw IoError("manifest '" + manifest + "' is neither a preset nor a readable file");
            }
        }();
        if (chunks > 0) media.manifest = media.manifest.truncated(std::min(chunks, media.manifest.chunk_count()));
        return media;
    }
};

struct TraceArgs {
    std::vector<std::string> traces;
    std::string traces_dir;
    bool hold_last = false;

    void add(CLI::App& app) {
        app.add_option("--trace", traces, "Trace CSV (repeatable)");
        app.add_option("--traces-dir", traces_dir, "Directory of trace CSVs (*.csv, sorted by name)");
        app.add_flag("--hold-last", hold_last, "Hold the last bandwidth instead of wrapping the trace");
    }

    std::vector<Trace> resolve() const {
        std::vector<fs::path> paths(traces.begin(), traces.end());
        if (!traces_dir.empty()) {
            if (!fs::is_directory(traces_dir)) throw IoError("traces dir '" + traces_dir + "' does not exist");
            std::vector<fs::path> found;
            for (const auto& entry : fs::directory_iterator(traces_dir))
                if (entry.is_regular_file() && entry.path().extension() == ".csv") found.push_back(entry.path());
            std::sort(found.begin(), found.end());
            paths.insert(paths.end(), found.begin(), found.end());
        }
        if (paths.empty()) throw UsageError("no traces given (use --trace or --traces-dir)");
        std::vector<Trace> out;
        std::set<std::string> ids;
        for (const auto& p : paths) {
            const std::string id = p.stem().string();
            if (!ids.insert(id).second) throw UsageError("duplicate trace id '" + id + "'");
            try {
                out.push_back(load_trace(read_file(p), id, hold_last ? LoopMode::hold_last : LoopMode::wrap));
            } catch (const ParseError& e) {
                throw ParseError(p.string() + ": " + e.what());
            }
        }
        return out;
    }
};

struct PolicyArgs {
    int mpc_horizon = 5;
    int history_k = kDefaultHistory;
    double reservoir = 5.0;
    double cushion = 10.0;
    bool no_robust_discount = false;
    std::string checkpoint;

    void add(CLI::App& app) {
        app.add_option("--mpc-horizon", mpc_horizon, "RobustMPC lookahead in chunks")->capture_default_str();
        app.add_option("--history-k", history_k, "Throughput history length")->capture_default_str();
        app.add_option("--reservoir", reservoir, "Buffer-based reservoir (s)")->capture_default_str();
        app.add_option("--cushion", cushion, "Buffer-based cushion (s)")->capture_default_str();
        app.add_flag("--no-robust-discount", no_robust_discount, "RobustMPC without error discounting");
        app.add_option("--checkpoint", checkpoint, "Actor checkpoint for the 'actor' policy");
    }

    PolicyConfig base() const {
        PolicyConfig cfg;
        cfg.mpc_horizon = mpc_horizon;
        cfg.history_k = history_k;
        cfg.reservoir_s = reservoir;
        cfg.cushion_s = cushion;
        cfg.robust_discount = !no_robust_discount;
        return cfg;
    }
};

/// A named policy bound to one session. Spec grammar: buffer_based,
/// robust_mpc, random, fixed:<level>, actor.
class PolicyFactory {
public:
    PolicyFactory(const PolicyArgs& args, const MediaConfig& media) : args_(args), media_(media) {}

    DecisionFn make(const std::string& spec, std::uint64_t seed) {
        PolicyConfig cfg = args_.base();
        cfg.seed = seed;
        if (spec == "actor") {
            const auto& actor = load_actor();
            return make_actor_policy(actor, media_.manifest, media_.params, args_.history_k);
        }
        if (spec.rfind("fixed:", 0) == 0) {
            cfg.kind = PolicyKind::fixed;
            Level level = 0;
            const auto text = spec.substr(6);
            double v = 0.0;
            if (!detail::parse_double(text, v) || v != std::floor(v)) throw UsageError("bad fixed level in '" + spec + "'");
            level = static_cast<Level>(v);
            cfg.fixed_level = level;
            return make_policy(cfg, media_.manifest, media_.params);
        }
        const auto kind = parse_policy_kind(spec);
        if (!kind || *kind == PolicyKind::fixed)
            throw UsageError("unknown policy '" + spec + "' (buffer_based, robust_mpc, random, fixed:<level>, actor)");
        cfg.kind = *kind;
        return make_policy(cfg, media_.manifest, media_.params);
    }

private:
    const ActorParams& load_actor() {
        if (!actor_) {
            if (args_.checkpoint.empty()) throw UsageError("policy 'actor' needs --checkpoint");
            actor_ = std::make_unique<ActorParams>(load_checkpoint(read_file(args_.checkpoint)));
            const auto expected = observation_size(args_.history_k, media_.manifest.level_count());
            if (actor_->arch.levels != media_.manifest.level_count() ||
                static_cast<std::size_t>(actor_->arch.observation_size) != expected)
                throw ParseError("checkpoint does not match the manifest ladder or --history-k");
        }
        return *actor_;
    }

    const PolicyArgs& args_;
    const MediaConfig& media_;
    std::unique_ptr<ActorParams> actor_;
};

// ---------------------------------------------------------------------------
// Commands

struct SimulateArgs {
    MediaArgs media;
    TraceArgs traces;
    PolicyArgs policy_args;
    std::string policy = "buffer_based";
    std::vector<std::uint64_t> seeds{1};
    double offset = 0.0;
    std::string out;
};

inline void run_simulate(const SimulateArgs& a, const json& config) {
    const auto media = a.media.resolve();
    const auto traces = a.traces.resolve();
    PolicyFactory factory(a.policy_args, media);
    std::string text;
    for (const auto& trace : traces)
        for (std::uint64_t seed : a.seeds) {
            auto log = run_session(factory.make(a.policy, seed), trace, media.manifest, media.params, a.offset);
            log.policy_id = a.policy;
            log.seed = seed;
            json cfg = config;
            cfg["resolved"]["media"] = to_json(media);
            text += to_jsonl(log, cfg);
        }
    emit(a.out, text);
}

struct SolveArgs {
    MediaArgs media;
    TraceArgs traces;
    PolicyArgs policy_args;
    int horizon = 8;
    std::string solver = "ao";
    double dp_grid = 0.5;
    std::string behavior = "expert";
    double offset = 0.0;
    std::string out;
};

inline void run_solve_expert(const SolveArgs& a, const json& config) {
    const auto media = a.media.resolve();
    const auto traces = a.traces.resolve();
    PolicyFactory factory(a.policy_args, media);
    PolicyConfig adverse = a.policy_args.base();
    adverse.kind = PolicyKind::robust_mpc;
    adverse.validate(media.params);
    std::string text;
    std::size_t states = 0;
    for (const auto& trace : traces) {
        DecisionFn behave;
        if (a.behavior != "expert") behave = factory.make(a.behavior, 0);
        SessionState state = initial_state(media.manifest, a.offset);
        while (!state.terminal()) {
            const auto problem =
                make_problem(state, a.horizon, trace, media.manifest, media.params, a.policy_args.history_k);
            ExpertSolution sol;
            if (a.solver == "ao") sol = solve_expert_ao(problem);
            else if (a.solver == "enum") sol = solve_expert_enum(problem);
            else if (a.solver == "dp") sol = solve_expert_dp(problem, a.dp_grid);
            else throw UsageError("unknown solver '" + a.solver + "' (ao, enum, dp)");
            const Level adv = decide_robust_mpc(state, media.manifest, media.params, adverse);
            json row = {{"trace_id", trace.id()},
                        {"chunk", state.next_chunk},
                        {"observation", observe(state, media.manifest, media.params, a.policy_args.history_k)},
                        {"expert", sol.levels.front()},
                        {"adverse", adv},
                        {"plan", sol.levels},
                        {"objective", sol.objective},
                        {"iterations", sol.iterations},
                        {"converged", sol.converged},
                        {"optimality", std::string(to_string(sol.optimality))}};
            text += row.dump() + "\n";
            ++states;
            const Level next = behave ? behave(state) : sol.levels.front();
            state = step(state, trace, media.manifest, media.params, next).second;
        }
    }
    json summary = {{"summary", true}, {"states", states}, {"config", config}};
    summary["config"]["resolved"]["media"] = to_json(media);
    text += summary.dump() + "\n";
    emit(a.out, text);
}

struct BenchArgs {
    std::vector<int> horizons{5, 6, 7, 8};
    int levels = 6;
    int instances = 20;
    std::uint64_t seed = 1;
    double dp_grid = 0.5;
    std::vector<std::string> solvers{"ao", "enum", "dp"};
    std::string out;
};

inline constexpr const char* kBenchHeader = "solver,N,levels,instances,mean_ms,mean_objective,objective_gap";

/// Random start states on synthetic volatile traces over the top `levels`
/// rungs of the Pensieve ladder.
struct BenchInstance {
    Trace trace;
    VideoManifest manifest;
    QoEParams params;
    SessionState start;
};

inline BenchInstance bench_instance(std::uint64_t seed, int levels, int horizon) {
    const auto base = *preset("pensieve");
    if (levels < 1 || levels > base.manifest.level_count()) throw UsageError("--levels must be in 1..6");
    const auto& ladder = base.manifest.bitrates();
    std::vector<double> rates(ladder.end() - levels, ladder.end());
    Rng rng(seed);
    const int chunks = horizon + 4;
    BenchInstance inst{synth_trace(rng.next_u64(), {.mean_mbps = rng.uniform(1.0, 3.0), .volatility = 0.5,
                                                    .duration_s = 200.0, .step_s = 1.0}),
                       VideoManifest::cbr(rates, 4.0, chunks), base.params, {}};
    inst.start = initial_state(inst.manifest, rng.uniform(0.0, 150.0));
    inst.start.next_chunk = 1 + static_cast<int>(rng.index(3));
    inst.start.buffer_s = rng.uniform(0.0, 30.0);
    inst.start.last_level = static_cast<Level>(rng.index(static_cast<std::size_t>(levels)));
    for (int j = 0; j < inst.start.next_chunk; ++j) {
        inst.start.throughputs_mbps.push_back(rng.uniform(0.5, 4.0));
        inst.start.download_times_s.push_back(rng.uniform(0.5, 6.0));
    }
    return inst;
}

inline void run_bench_expert(const BenchArgs& a, const json& config) {
    for (const auto& s : a.solvers)
        if (s != "ao" && s != "enum" && s != "dp") throw UsageError("unknown solver '" + s + "'");
    if (a.instances < 1) throw UsageError("--instances must be >= 1");
    std::string text = "# config=" + config.dump() + "\n" + kBenchHeader + "\n";
    for (int n : a.horizons) {
        if (n < 1) throw UsageError("--n values must be >= 1");
        struct Acc {
            double ms = 0.0, objective = 0.0, gap = 0.0;
            bool refused = false;
        };
        std::map<std::string, Acc> acc;
        bool have_enum = std::pow(static_cast<double>(a.levels), n) <= kDefaultEnumBudget;
        for (int i = 0; i < a.instances; ++i) {
            auto inst = bench_instance(a.seed * 1000003ULL + static_cast<std::uint64_t>(n) * 7919ULL +
                                           static_cast<std::uint64_t>(i),
                                       a.levels, n);
            const auto problem = make_problem(inst.start, n, inst.trace, inst.manifest, inst.params);
            std::optional<double> reference;
            if (have_enum) reference = solve_expert_enum(problem).objective;
            for (const auto& s : a.solvers) {
                if (s == "enum" && !have_enum) {
                    acc[s].refused = true;
                    continue;
                }
                const auto t0 = std::chrono::steady_clock::now();
                ExpertSolution sol = s == "ao" ? solve_expert_ao(problem)
                                   : s == "enum" ? solve_expert_enum(problem)
                                                 : solve_expert_dp(problem, a.dp_grid);
                const double ms =
                    std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
                acc[s].ms += ms;
                acc[s].objective += sol.objective;
                if (reference) acc[s].gap += (*reference - sol.objective) / std::max(1e-9, std::abs(*reference));
            }
        }
        for (const auto& s : a.solvers) {
            const auto& x = acc[s];
            if (x.refused) continue;
            text += s + ',' + std::to_string(n) + ',' + std::to_string(a.levels) + ',' + std::to_string(a.instances) + ',';
            detail::append_double(text, x.ms / a.instances);
            text += ',';
            detail::append_double(text, x.objective / a.instances);
            text += ',';
            if (have_enum) detail::append_double(text, x.gap / a.instances);
            text += '\n';
        }
    }
    emit(a.out, text);
}

struct TrainArgs {
    MediaArgs media;
    TraceArgs traces;
    TrainConfig cfg;
    bool no_random_start = false;
    std::string out;
};

inline void run_train(TrainArgs a, const json& config) {
    if (a.out.empty()) throw UsageError("train needs --out DIR");
    const auto media = a.media.resolve();
    const auto traces = a.traces.resolve();
    a.cfg.random_start = !a.no_random_start;
    const auto result = train(traces, media.manifest, media.params, a.cfg);
    json cfg = config;
    cfg["resolved"]["media"] = to_json(media);
    cfg["resolved"]["train"] = to_json(a.cfg);
    std::vector<std::string> ids;
    for (const auto& t : traces) ids.push_back(t.id());
    cfg["resolved"]["trace_ids"] = ids;
    write_file(fs::path(a.out) / "checkpoint.json", save_checkpoint(result.actor, cfg));
    json report = to_json(result.report);
    report["config"] = cfg;
    report["seed"] = a.cfg.seed;
    write_file(fs::path(a.out) / "report.json", report.dump(2) + "\n");
}

struct EvaluateArgs {
    MediaArgs media;
    TraceArgs traces;
    PolicyArgs policy_args;
    std::vector<std::string> policies{"buffer_based", "robust_mpc"};
    std::vector<std::uint64_t> seeds{1};
    double offset = 0.0;
    std::string out;
};

inline void run_evaluate(const EvaluateArgs& a, const json& config) {
    if (a.out.empty()) throw UsageError("evaluate needs --out DIR");
    if (a.policies.empty() || a.seeds.empty()) throw UsageError("evaluate needs policies and seeds");
    const auto media = a.media.resolve();
    const auto traces = a.traces.resolve();
    PolicyFactory factory(a.policy_args, media);
    std::vector<RunRecord> runs;
    for (const auto& policy : a.policies)
        for (const auto& trace : traces)
            for (std::uint64_t seed : a.seeds) {
                const auto log = run_session(factory.make(policy, seed), trace, media.manifest, media.params, a.offset);
                runs.push_back({policy, trace.id(), seed, session_metrics(log)});
            }
    const auto report = compare(runs);
    json cfg = config;
    cfg["resolved"]["media"] = to_json(media);
    const fs::path dir(a.out);
    write_file(dir / "report.csv", report_csv(report));
    write_file(dir / "plot.csv", plot_csv(report));
    json rj = to_json(report);
    rj["config"] = cfg;
    write_file(dir / "report.json", rj.dump(2) + "\n");
    json mj = to_json(report.matrix);
    mj["config"] = cfg;
    write_file(dir / "matrix.json", mj.dump(2) + "\n");
}

struct RankArgs {
    std::string input;
    std::string out;
};

inline void run_rank(const RankArgs& a, const json& config) {
    json j;
    try {
        j = json::parse(read_file(a.input));
    } catch (const json::parse_error& e) {
        throw ParseError(a.input + ": " + e.what());
    }
    if (j.contains("matrix")) j = j["matrix"];
    const auto matrix = matrix_from_json(j);
    const auto ranks = rank_points(matrix);
    json out = {{"config", config}, {"traces", matrix.traces().size()}, {"ranking", to_json(ranks)}};
    emit(a.out, out.dump(2) + "\n");
}

struct SynthArgs {
    int count = 10;
    std::uint64_t seed = 1;
    SynthModel model;
    std::string prefix = "synth";
    std::string out;
};

inline void run_synth(const SynthArgs& a, const json& config) {
    if (a.out.empty()) throw UsageError("synth needs --out DIR");
    if (a.count < 1) throw UsageError("--count must be >= 1");
    Rng rng(a.seed);
    for (int i = 0; i < a.count; ++i) {
        const std::uint64_t trace_seed = rng.next_u64();
        char name[64];
        std::snprintf(name, sizeof name, "%s-%03d", a.prefix.c_str(), i);
        const auto trace = synth_trace(trace_seed, a.model, name);
        std::string text = "# config=" + config.dump() + " trace_seed=" + std::to_string(trace_seed) + "\n";
        text += to_csv(trace);
        write_file(fs::path(a.out) / (std::string(name) + ".csv"), text);
    }
}

// ---------------------------------------------------------------------------

inline void print_error(const char* kind, const std::string& message) {
    std::cerr << json{{"error", kind}, {"message", message}}.dump() << std::endl;
}

inline int run(int argc, const char* const* argv) {
    CLI::App app{"abrbench: adaptive-bitrate simulation, offline expert, imitation learning, evaluation"};
    app.config_formatter(std::make_shared<JsonConfig>());
    app.set_config("--config", "", "JSON config file; flags given on the command line win");
    app.allow_config_extras(false);
    app.require_subcommand(1, 1);
    app.fallthrough(); // lets --config follow the subcommand name

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Play one policy over traces; writes JSON-lines session logs");
    sim.media.add(*simulate);
    sim.traces.add(*simulate);
    sim.policy_args.add(*simulate);
    simulate->add_option("--policy", sim.policy, "buffer_based, robust_mpc, random, fixed:<level>, actor")
        ->capture_default_str();
    simulate->add_option("--seed", sim.seeds, "Seeds (one session per trace and seed)")->capture_default_str();
    simulate->add_option("--offset", sim.offset, "Session start time within the trace (s)")->capture_default_str();
    simulate->add_option("--out", sim.out, "Output file (default stdout)");

    SolveArgs sol;
    auto* solve = app.add_subcommand("solve-expert", "Label every visited state with expert and adverse actions");
    sol.media.add(*solve);
    sol.traces.add(*solve);
    sol.policy_args.add(*solve);
    solve->add_option("--horizon", sol.horizon, "Expert horizon N")->capture_default_str();
    solve->add_option("--solver", sol.solver, "ao, enum, or dp")->capture_default_str();
    solve->add_option("--dp-grid", sol.dp_grid, "DP grid step (s)")->capture_default_str();
    solve->add_option("--behavior", sol.behavior, "Policy that drives the session (expert or a policy name)")
        ->capture_default_str();
    solve->add_option("--offset", sol.offset, "Session start time within the trace (s)")->capture_default_str();
    solve->add_option("--out", sol.out, "Output file (default stdout)");

    BenchArgs bench;
    auto* bench_cmd = app.add_subcommand("bench-expert", "Time AO, enumeration and DP on a random instance suite");
    bench_cmd->add_option("--n", bench.horizons, "Horizons to benchmark")->delimiter(',')->capture_default_str();
    bench_cmd->add_option("--levels", bench.levels, "Ladder size (top rungs of the Pensieve ladder)")
        ->capture_default_str();
    bench_cmd->add_option("--instances", bench.instances, "Instances per horizon")->capture_default_str();
    bench_cmd->add_option("--seed", bench.seed, "Suite seed")->capture_default_str();
    bench_cmd->add_option("--dp-grid", bench.dp_grid, "DP grid step (s)")->capture_default_str();
    bench_cmd->add_option("--solvers", bench.solvers, "Solvers to time")->delimiter(',')->capture_default_str();
    bench_cmd->add_option("--out", bench.out, "Output CSV (default stdout)");

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "Train the actor by imitation; writes checkpoint.json and report.json");
    tr.media.add(*train_cmd);
    tr.traces.add(*train_cmd);
    train_cmd->add_option("--epochs", tr.cfg.epochs)->capture_default_str();
    train_cmd->add_option("--beta", tr.cfg.weights.beta, "Compression weight")->capture_default_str();
    train_cmd->add_option("--eta", tr.cfg.weights.eta, "Adverse-expert weight")->capture_default_str();
    train_cmd->add_option("--lr", tr.cfg.learning_rate, "SGD learning rate")->capture_default_str();
    train_cmd->add_option("--minibatch", tr.cfg.minibatch)->capture_default_str();
    train_cmd->add_option("--horizon", tr.cfg.horizon, "Expert horizon N")->capture_default_str();
    train_cmd->add_option("--history-k", tr.cfg.history_k)->capture_default_str();
    train_cmd->add_option("--grad-clip", tr.cfg.grad_clip)->capture_default_str();
    train_cmd->add_option("--latent-dim", tr.cfg.latent_dim)->capture_default_str();
    train_cmd->add_option("--encoder-hidden", tr.cfg.encoder_hidden)->delimiter(',')->capture_default_str();
    train_cmd->add_option("--decoder-hidden", tr.cfg.decoder_hidden)->delimiter(',')->capture_default_str();
    train_cmd->add_option("--mpc-horizon", tr.cfg.adverse.mpc_horizon, "Adverse RobustMPC lookahead")
        ->capture_default_str();
    train_cmd->add_option("--seed", tr.cfg.seed)->capture_default_str();
    train_cmd->add_flag("--no-random-start", tr.no_random_start, "Start every session at t=0");
    train_cmd->add_option("--workers", tr.cfg.workers, "Threads (results do not depend on this)")
        ->capture_default_str();
    train_cmd->add_option("--out", tr.out, "Output directory")->required();

    EvaluateArgs ev;
    auto* evaluate = app.add_subcommand("evaluate", "Compare policies over traces and seeds");
    ev.media.add(*evaluate);
    ev.traces.add(*evaluate);
    ev.policy_args.add(*evaluate);
    evaluate->add_option("--policies", ev.policies, "Policies to compare (at most 6 for ranking)")
        ->delimiter(',')
        ->capture_default_str();
    evaluate->add_option("--seeds", ev.seeds, "Seeds")->delimiter(',')->capture_default_str();
    evaluate->add_option("--offset", ev.offset, "Session start time within each trace (s)")->capture_default_str();
    evaluate->add_option("--out", ev.out, "Output directory")->required();

    RankArgs rk;
    auto* rank = app.add_subcommand("rank", "Per-trace ranking points from an evaluate matrix");
    rank->add_option("--input", rk.input, "matrix.json or report.json from evaluate")->required();
    rank->add_option("--out", rk.out, "Output JSON (default stdout)");

    SynthArgs sy;
    auto* synth = app.add_subcommand("synth", "Generate synthetic trace CSVs");
    synth->add_option("--count", sy.count)->capture_default_str();
    synth->add_option("--seed", sy.seed)->capture_default_str();
    synth->add_option("--mean", sy.model.mean_mbps, "Mean bandwidth (Mbps)")->capture_default_str();
    synth->add_option("--volatility", sy.model.volatility, "Log-bandwidth innovation std-dev")->capture_default_str();
    synth->add_option("--duration", sy.model.duration_s, "Trace length (s)")->capture_default_str();
    synth->add_option("--step", sy.model.step_s, "Sample spacing (s)")->capture_default_str();
    synth->add_option("--prefix", sy.prefix, "File name prefix")->capture_default_str();
    synth->add_option("--out", sy.out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        print_error("usage", e.what());
        return kUsage;
    }

    try {
        CLI::App* sub = app.get_subcommands().front();
        const json config = resolved_config(*sub);
        if (sub == simulate) run_simulate(sim, config);
        else if (sub == solve) run_solve_expert(sol, config);
        else if (sub == bench_cmd) run_bench_expert(bench, config);
        else if (sub == train_cmd) run_train(tr, config);
        else if (sub == evaluate) run_evaluate(ev, config);
        else if (sub == rank) run_rank(rk, config);
        else if (sub == synth) run_synth(sy, config);
        return kOk;
    } catch (const UsageError& e) {
        print_error("usage", e.what());
        return kUsage;
    } catch (const ParseError& e) {
        print_error("data", e.what());
        return kData;
    } catch (const DomainError& e) {
        print_error("data", e.what());
        return kData;
    } catch (const RefusalError& e) {
        print_error("data", e.what());
        return kData;
    } catch (const IoError& e) {
        print_error("data", e.what());
        return kData;
    } catch (const fs::filesystem_error& e) {
        print_error("data", e.what());
        return kData;
    } catch (const std::exception& e) {
        print_error("internal", e.what());
        return kInternal;
    }
}

} // namespace abrbench::cli
