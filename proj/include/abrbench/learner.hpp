#pragma once

// Stochastic-latent actor trained by imitation with the adversarial
// information-bottleneck loss.
//
//   encoder (theta1): obs -> tanh MLP -> (mu, log_sigma)      z ~ N(mu, sigma^2)
//   decoder (theta2): z   -> tanh MLP -> |R| logits -> softmax
//
//   loss = mean_m [ -log p(a_expert | z_m) - eta * log p(a_adverse | z_m)
//                   + beta * KL(N(mu_m, sigma_m^2) || N(0, I)) ]
//
// with z_m = mu_m + sigma_m * noise_m. Gradients are computed by hand.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <limits>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "abrbench/errors.hpp"
#include "abrbench/expert.hpp"
#include "abrbench/media.hpp"
#include "abrbench/policies.hpp"
#include "abrbench/rng.hpp"
#include "abrbench/simulator.hpp"
#include "abrbench/trace.hpp"

namespace abrbench {

inline constexpr double kLogSigmaMin = -10.0;
inline constexpr double kLogSigmaMax = 3.0;

struct DenseLayer {
    int inputs = 0;
    int outputs = 0;
    std::vector<double> weight; ///< row-major [outputs][inputs]
    std::vector<double> bias;

    DenseLayer() = default;
    DenseLayer(int in, int out)
        : inputs(in), outputs(out), weight(static_cast<std::size_t>(in) * static_cast<std::size_t>(out), 0.0),
          bias(static_cast<std::size_t>(out), 0.0) {}

    void forward(std::span<const double> x, std::span<double> y) const {
        for (int o = 0; o < outputs; ++o) {
            const double* w = weight.data() + static_cast<std::size_t>(o) * static_cast<std::size_t>(inputs);
            double acc = bias[static_cast<std::size_t>(o)];
            for (int i = 0; i < inputs; ++i) acc += w[i] * x[static_cast<std::size_t>(i)];
            y[static_cast<std::size_t>(o)] = acc;
        }
    }

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct ActorArchitecture {
    int observation_size = 0;
    int levels = 0;
    std::vector<int> encoder_hidden{128, 128};
    int latent_dim = 64;
    std::vector<int> decoder_hidden{128};

    friend bool operator==(const ActorArchitecture&, const ActorArchitecture&) = default;
};

struct ActorParams {
    ActorArchitecture arch;
    std::vector<DenseLayer> encoder; ///< last layer emits [mu | log_sigma]
    std::vector<DenseLayer> decoder; ///< last layer emits logits
    std::uint64_t seed = 0;

    /// Weights uniform in +-1/sqrt(fan_in), biases zero.
    static ActorParams init(const ActorArchitecture& arch, std::uint64_t seed) {
        if (arch.latent_dim < 1) throw DomainError("latent_dim must be >= 1");
        if (arch.observation_size < 1 || arch.levels < 1) throw DomainError("actor needs inputs and outputs");
        ActorParams p;
        p.arch = arch;
        p.seed = seed;
        Rng rng(seed);
        auto build = [&rng](int in, const std::vector<int>& hidden, int out) {
            std::vector<DenseLayer> layers;
            int width = in;
            auto add = [&](int next) {
                DenseLayer layer(width, next);
                const double bound = 1.0 / std::sqrt(static_cast<double>(width));
                for (double& w : layer.weight) w = rng.uniform(-bound, bound);
                layers.push_back(std::move(layer));
                width = next;
            };
            for (int h : hidden) add(h);
            add(out);
            return layers;
        };
        p.encoder = build(arch.observation_size, arch.encoder_hidden, 2 * arch.latent_dim);
        p.decoder = build(arch.latent_dim, arch.decoder_hidden, arch.levels);
        return p;
    }

    /// Same shapes, all zeros (gradient accumulator).
    ActorParams zeros_like() const {
        ActorParams z = *this;
        z.for_each_value([](double& v) { v = 0.0; });
        return z;
    }

    template <class Fn>
    void for_each_value(Fn&& fn) {
        for (auto* stack : {&encoder, &decoder})
            for (auto& layer : *stack) {
                for (double& w : layer.weight) fn(w);
                for (double& b : layer.bias) fn(b);
            }
    }

    template <class Fn>
    void for_each_value(Fn&& fn) const {
        for (const auto* stack : {&encoder, &decoder})
            for (const auto& layer : *stack) {
                for (double w : layer.weight) fn(w);
                for (double b : layer.bias) fn(b);
            }
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for_each_value([&n](double) { ++n; });
        return n;
    }

    /// Flattened in serialization order: encoder then decoder, each layer weights then biases.
    std::vector<double> flatten() const {
        std::vector<double> out;
        out.reserve(parameter_count());
        for_each_value([&out](double v) { out.push_back(v); });
        return out;
    }

    void assign(std::span<const double> values) {
        if (values.size() != parameter_count()) throw UsageError("parameter vector has the wrong length");
        std::size_t k = 0;
        for_each_value([&](double& v) { v = values[k++]; });
    }

    /// this += scale * other
    void add_scaled(const ActorParams& other, double scale) {
        for (std::size_t s = 0; s < 2; ++s) {
            auto& mine = s == 0 ? encoder : decoder;
            const auto& theirs = s == 0 ? other.encoder : other.decoder;
            for (std::size_t l = 0; l < mine.size(); ++l) {
                for (std::size_t i = 0; i < mine[l].weight.size(); ++i) mine[l].weight[i] += scale * theirs[l].weight[i];
                for (std::size_t i = 0; i < mine[l].bias.size(); ++i) mine[l].bias[i] += scale * theirs[l].bias[i];
            }
        }
    }

    double norm() const {
        double sq = 0.0;
        for_each_value([&sq](double v) { sq += v * v; });
        return std::sqrt(sq);
    }

    friend bool operator==(const ActorParams&, const ActorParams&) = default;
};

struct LatentGaussian {
    std::vector<double> mu;
    std::vector<double> log_sigma; ///< clamped to [kLogSigmaMin, kLogSigmaMax]
};

namespace detail {

// Activations of one forward pass, kept for backpropagation.
struct ForwardTrace {
    std::vector<std::vector<double>> enc_act;  // enc_act[0] = obs, enc_act[l+1] = output of layer l
    std::vector<double> raw_log_sigma;
    LatentGaussian latent;
    std::vector<double> noise;
    std::vector<std::vector<double>> dec_act;  // dec_act[0] = z
    std::vector<double> probs;
};

inline void run_stack(const std::vector<DenseLayer>& layers, std::vector<std::vector<double>>& act) {
    act.resize(layers.size() + 1);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        act[l + 1].assign(static_cast<std::size_t>(layers[l].outputs), 0.0);
        layers[l].forward(act[l], act[l + 1]);
        if (l + 1 < layers.size())
            for (double& v : act[l + 1]) v = std::tanh(v);
    }
}

inline std::vector<double> softmax(std::span<const double> logits) {
    const double peak = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - peak);
        total += p[i];
    }
    for (double& v : p) v /= total;
    return p;
}

inline std::vector<double> log_softmax(std::span<const double> logits) {
    const double peak = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (double v : logits) total += std::exp(v - peak);
    const double log_z = peak + std::log(total);
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - log_z;
    return out;
}

} // namespace detail

inline LatentGaussian encode(const ActorParams& params, std::span<const double> obs) {
    if (static_cast<int>(obs.size()) != params.arch.observation_size)
        throw UsageError("encode: observation has length " + std::to_string(obs.size()) + ", expected " +
                         std::to_string(params.arch.observation_size));
    std::vector<std::vector<double>> act(1, std::vector<double>(obs.begin(), obs.end()));
    detail::run_stack(params.encoder, act);
    const auto d = static_cast<std::size_t>(params.arch.latent_dim);
    LatentGaussian out;
    out.mu.assign(act.back().begin(), act.back().begin() + static_cast<std::ptrdiff_t>(d));
    out.log_sigma.resize(d);
    for (std::size_t i = 0; i < d; ++i) out.log_sigma[i] = std::clamp(act.back()[d + i], kLogSigmaMin, kLogSigmaMax);
    return out;
}

inline std::vector<double> reparameterize(std::span<const double> mu, std::span<const double> log_sigma,
                                          std::span<const double> noise) {
    if (mu.size() != log_sigma.size() || mu.size() != noise.size())
        throw UsageError("reparameterize: dimension mismatch");
    std::vector<double> z(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) z[i] = mu[i] + std::exp(log_sigma[i]) * noise[i];
    return z;
}

inline std::vector<double> decode_logits(const ActorParams& params, std::span<const double> z) {
    if (static_cast<int>(z.size()) != params.arch.latent_dim) throw UsageError("decode: wrong latent length");
    std::vector<std::vector<double>> act(1, std::vector<double>(z.begin(), z.end()));
    detail::run_stack(params.decoder, act);
    return act.back();
}

/// Action probabilities p(a | z).
inline std::vector<double> decode(const ActorParams& params, std::span<const double> z) {
    return detail::softmax(decode_logits(params, z));
}

/// KL(N(mu, sigma^2) || N(0, I)).
inline double gaussian_kl(const LatentGaussian& g) {
    double kl = 0.0;
    for (std::size_t i = 0; i < g.mu.size(); ++i) {
        const double var = std::exp(2.0 * g.log_sigma[i]);
        kl += g.mu[i] * g.mu[i] + var - 1.0 - 2.0 * g.log_sigma[i];
    }
    return 0.5 * kl;
}

struct LabeledState {
    std::vector<double> observation;
    Level expert = 0;  ///< first action of the offline expert's plan
    Level adverse = 0; ///< RobustMPC's choice at the same state
};

struct AibWeights {
    double beta = 1e-4;
    double eta = 0.2;
};

/// Batch-mean loss terms. ce_adverse and kl are unweighted.
struct AibLoss {
    double total = 0.0;
    double ce_expert = 0.0;
    double ce_adverse = 0.0;
    double kl = 0.0;
};

namespace detail {

inline ForwardTrace forward(const ActorParams& params, std::span<const double> obs, std::span<const double> noise) {
    if (static_cast<int>(obs.size()) != params.arch.observation_size)
        throw UsageError("actor: observation has wrong length");
    if (static_cast<int>(noise.size()) != params.arch.latent_dim) throw UsageError("actor: noise has wrong length");
    ForwardTrace f;
    f.enc_act.assign(1, std::vector<double>(obs.begin(), obs.end()));
    run_stack(params.encoder, f.enc_act);
    const auto d = static_cast<std::size_t>(params.arch.latent_dim);
    const auto& head = f.enc_act.back();
    f.latent.mu.assign(head.begin(), head.begin() + static_cast<std::ptrdiff_t>(d));
    f.raw_log_sigma.assign(head.begin() + static_cast<std::ptrdiff_t>(d), head.end());
    f.latent.log_sigma.resize(d);
    for (std::size_t i = 0; i < d; ++i) f.latent.log_sigma[i] = std::clamp(f.raw_log_sigma[i], kLogSigmaMin, kLogSigmaMax);
    f.noise.assign(noise.begin(), noise.end());
    f.dec_act.assign(1, reparameterize(f.latent.mu, f.latent.log_sigma, noise));
    run_stack(params.decoder, f.dec_act);
    f.probs = softmax(f.dec_act.back());
    return f;
}

inline void check_labels(const ActorParams& params, const LabeledState& s) {
    if (s.expert < 0 || s.expert >= params.arch.levels || s.adverse < 0 || s.adverse >= params.arch.levels)
        throw UsageError("label outside the action range");
}

// Backpropagates `delta` (gradient w.r.t. the stack output) through `layers`
// and accumulates into `grads`; returns the gradient w.r.t. the stack input.
inline std::vector<double> backprop_stack(const std::vector<DenseLayer>& layers,
                                          const std::vector<std::vector<double>>& act, std::vector<double> delta,
                                          std::vector<DenseLayer>& grads) {
    for (std::size_t l = layers.size(); l-- > 0;) {
        const auto& layer = layers[l];
        auto& g = grads[l];
        const auto& input = act[l];
        std::vector<double> back(static_cast<std::size_t>(layer.inputs), 0.0);
        for (int o = 0; o < layer.outputs; ++o) {
            const double d = delta[static_cast<std::size_t>(o)];
            if (d == 0.0) continue;
            const std::size_t row = static_cast<std::size_t>(o) * static_cast<std::size_t>(layer.inputs);
            g.bias[static_cast<std::size_t>(o)] += d;
            for (int i = 0; i < layer.inputs; ++i) {
                g.weight[row + static_cast<std::size_t>(i)] += d * input[static_cast<std::size_t>(i)];
                back[static_cast<std::size_t>(i)] += d * layer.weight[row + static_cast<std::size_t>(i)];
            }
        }
        if (l > 0)
            for (std::size_t i = 0; i < back.size(); ++i) back[i] *= 1.0 - input[i] * input[i]; // tanh'
        delta = std::move(back);
    }
    return delta;
}

// Loss and gradient contribution of samples [begin, end), each already
// divided by the full batch size.
inline AibLoss accumulate(const ActorParams& params, std::span<const LabeledState> batch,
                          std::span<const std::vector<double>> noise, const AibWeights& w, std::size_t begin,
                          std::size_t end, ActorParams* grad) {
    const double inv_m = 1.0 / static_cast<double>(batch.size());
    const auto d = static_cast<std::size_t>(params.arch.latent_dim);
    AibLoss loss;
    for (std::size_t m = begin; m < end; ++m) {
        const auto& s = batch[m];
        check_labels(params, s);
        const auto f = forward(params, s.observation, noise[m]);
        const auto logp = log_softmax(f.dec_act.back());
        const auto a_exp = static_cast<std::size_t>(s.expert);
        const auto a_adv = static_cast<std::size_t>(s.adverse);
        loss.ce_expert += -logp[a_exp] * inv_m;
        loss.ce_adverse += -logp[a_adv] * inv_m;
        loss.kl += gaussian_kl(f.latent) * inv_m;
        if (!grad) continue;

        std::vector<double> d_logits(f.probs.size());
        for (std::size_t a = 0; a < f.probs.size(); ++a) d_logits[a] = (1.0 + w.eta) * f.probs[a];
        d_logits[a_exp] -= 1.0;
        d_logits[a_adv] -= w.eta;
        for (double& v : d_logits) v *= inv_m;

        const auto dz = backprop_stack(params.decoder, f.dec_act, std::move(d_logits), grad->decoder);
        std::vector<double> d_head(2 * d, 0.0);
        for (std::size_t i = 0; i < d; ++i) {
            const double sigma = std::exp(f.latent.log_sigma[i]);
            d_head[i] = dz[i] + w.beta * inv_m * f.latent.mu[i];
            const bool clamped = f.raw_log_sigma[i] < kLogSigmaMin || f.raw_log_sigma[i] > kLogSigmaMax;
            d_head[d + i] = clamped ? 0.0 : dz[i] * sigma * f.noise[i] + w.beta * inv_m * (sigma * sigma - 1.0);
        }
        backprop_stack(params.encoder, f.enc_act, std::move(d_head), grad->encoder);
    }
    return loss;
}

inline constexpr std::size_t kGradientShard = 8;

// Shards have a fixed size independent of the worker count and are summed
// in index order, so results do not depend on `workers`.
inline AibLoss evaluate_batch(const ActorParams& params, std::span<const LabeledState> batch,
                              std::span<const std::vector<double>> noise, const AibWeights& w, ActorParams* grad,
                              int workers) {
    if (batch.empty()) throw UsageError("AIB loss of an empty batch");
    if (noise.size() != batch.size()) throw UsageError("need one noise vector per sample");
    const std::size_t shards = (batch.size() + kGradientShard - 1) / kGradientShard;
    std::vector<AibLoss> losses(shards);
    std::vector<ActorParams> grads;
    if (grad) grads.assign(shards, params.zeros_like());
    auto run_shard = [&](std::size_t s) {
        const std::size_t begin = s * kGradientShard;
        const std::size_t end = std::min(batch.size(), begin + kGradientShard);
        losses[s] = accumulate(params, batch, noise, w, begin, end, grad ? &grads[s] : nullptr);
    };
    const auto pool = static_cast<std::size_t>(std::max(1, workers));
    if (pool == 1 || shards == 1) {
        for (std::size_t s = 0; s < shards; ++s) run_shard(s);
    } else {
        std::vector<std::thread> threads;
        for (std::size_t t = 0; t < std::min(pool, shards); ++t)
            threads.emplace_back([&, t] {
                for (std::size_t s = t; s < shards; s += pool) run_shard(s);
            });
        for (auto& th : threads) th.join();
    }
    AibLoss total;
    for (std::size_t s = 0; s < shards; ++s) {
        total.ce_expert += losses[s].ce_expert;
        total.ce_adverse += losses[s].ce_adverse;
        total.kl += losses[s].kl;
        if (grad) grad->add_scaled(grads[s], 1.0);
    }
    total.total = total.ce_expert + w.eta * total.ce_adverse + w.beta * total.kl;
    return total;
}

} // namespace detail

/// Monte-Carlo AIB loss with one latent draw per sample (`noise[m]`).
inline AibLoss aib_loss(const ActorParams& params, std::span<const LabeledState> batch,
                        std::span<const std::vector<double>> noise, const AibWeights& w) {
    return detail::evaluate_batch(params, batch, noise, w, nullptr, 1);
}

struct AibGradient {
    AibLoss loss;
    ActorParams grad;
};

inline AibGradient grad_aib(const ActorParams& params, std::span<const LabeledState> batch,
                            std::span<const std::vector<double>> noise, const AibWeights& w, int workers = 1) {
    AibGradient out{{}, params.zeros_like()};
    out.loss = detail::evaluate_batch(params, batch, noise, w, &out.grad, workers);
    return out;
}

/// Greedy uses z = mu and picks the most probable level (ties to the lower
/// level). Sampling draws z and then the action from `rng`.
inline Level act_greedy(const ActorParams& params, std::span<const double> obs) {
    const auto latent = encode(params, obs);
    const auto probs = decode(params, latent.mu);
    Level best = 0;
    for (std::size_t a = 1; a < probs.size(); ++a)
        if (probs[a] > probs[static_cast<std::size_t>(best)]) best = static_cast<Level>(a);
    return best;
}

inline Level act_sample(const ActorParams& params, std::span<const double> obs, Rng& rng) {
    const auto latent = encode(params, obs);
    std::vector<double> noise(latent.mu.size());
    for (double& e : noise) e = rng.normal();
    const auto probs = decode(params, reparameterize(latent.mu, latent.log_sigma, noise));
    const double u = rng.uniform();
    double cumulative = 0.0;
    for (std::size_t a = 0; a < probs.size(); ++a) {
        cumulative += probs[a];
        if (u < cumulative) return static_cast<Level>(a);
    }
    return static_cast<Level>(probs.size() - 1);
}

/// Session policy that plays the actor greedily.
inline DecisionFn make_actor_policy(const ActorParams& params, const VideoManifest& manifest, const QoEParams& qoe,
                                    int history_k = kDefaultHistory) {
    return [&params, &manifest, &qoe, history_k](const SessionState& s) {
        return act_greedy(params, observe(s, manifest, qoe, history_k));
    };
}

struct TrainConfig {
    AibWeights weights;
    double learning_rate = 0.05;
    int minibatch = 32;
    int epochs = 300;
    int horizon = 8;     ///< N for expert labels
    int history_k = kDefaultHistory;
    double gamma = 1.0;  ///< carried for completeness; labels come from undiscounted QoE
    double grad_clip = 5.0;
    std::uint64_t seed = 1;
    int workers = 1;
    bool random_start = true; ///< seeded random start offset within each trace
    int latent_dim = 64;
    std::vector<int> encoder_hidden{128, 128};
    std::vector<int> decoder_hidden{128};
    PolicyConfig adverse{.kind = PolicyKind::robust_mpc};

    void validate() const {
        if (!(weights.beta >= 0.0) || !(weights.eta >= 0.0)) throw DomainError("beta and eta must be >= 0");
        if (minibatch < 1) throw DomainError("minibatch must be >= 1");
        if (epochs < 0) throw DomainError("epochs must be >= 0");
        if (horizon < 1) throw DomainError("horizon must be >= 1");
        if (!(learning_rate > 0.0)) throw DomainError("learning rate must be positive");
        if (workers < 1) throw DomainError("workers must be >= 1");
    }
};

inline ActorArchitecture architecture_for(const TrainConfig& cfg, const VideoManifest& manifest) {
    return {static_cast<int>(observation_size(cfg.history_k, manifest.level_count())), manifest.level_count(),
            cfg.encoder_hidden, cfg.latent_dim, cfg.decoder_hidden};
}

struct EpochRecord {
    std::string trace_id;
    int states = 0;
    double loss_ema = 0.0;
    double agreement = 0.0; ///< share of the epoch's states where the greedy action matched the expert
    double session_qoe = 0.0;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
};

struct TrainResult {
    ActorParams actor;
    TrainReport report;
};

/// Labels one state: expert = first level of the horizon-N AO plan,
/// adverse = RobustMPC.
inline LabeledState label_state(const SessionState& state, const Trace& trace, const VideoManifest& manifest,
                                const QoEParams& params, const TrainConfig& cfg, bool parallel = false) {
    LabeledState out;
    out.observation = observe(state, manifest, params, cfg.history_k);
    auto adverse = [&] { return decide_robust_mpc(state, manifest, params, cfg.adverse); };
    if (parallel) {
        auto future = std::async(std::launch::async, adverse);
        out.expert = solve_expert_ao(make_problem(state, cfg.horizon, trace, manifest, params, cfg.history_k)).levels.front();
        out.adverse = future.get();
    } else {
        out.expert = solve_expert_ao(make_problem(state, cfg.horizon, trace, manifest, params, cfg.history_k)).levels.front();
        out.adverse = adverse();
    }
    return out;
}

/// Imitation training loop: for each epoch pick a trace, play the actor
/// (sampling), label every visited state, and take one SGD step on a
/// minibatch drawn from this session's labeled states after each chunk.
inline TrainResult train(std::span<const Trace> traces, const VideoManifest& manifest, const QoEParams& params,
                         const TrainConfig& cfg) {
    cfg.validate();
    params.validate();
    if (traces.empty()) throw DomainError("train: no training traces");
    TrainResult result{ActorParams::init(architecture_for(cfg, manifest), cfg.seed), {}};
    ActorParams& actor = result.actor;
    Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    double ema = 0.0;
    bool ema_started = false;
    std::vector<LabeledState> labeled;
    std::vector<LabeledState> batch;
    std::vector<std::vector<double>> noise;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const Trace& trace = traces[rng.index(traces.size())];
        const double offset = cfg.random_start ? rng.uniform(0.0, trace.period()) : 0.0;
        SessionState state = initial_state(manifest, offset);
        labeled.clear();
        EpochRecord record;
        record.trace_id = trace.id();
        int agreed = 0;
        while (!state.terminal()) {
            LabeledState ls;
            try {
                ls = label_state(state, trace, manifest, params, cfg, cfg.workers > 1);
            } catch (const std::exception& e) {
                throw std::runtime_error("labeling trace '" + trace.id() + "' chunk " +
                                         std::to_string(state.next_chunk) + ": " + e.what());
            }
            const Level behavior = act_sample(actor, ls.observation, rng);
            if (act_greedy(actor, ls.observation) == ls.expert) ++agreed;
            labeled.push_back(std::move(ls));

            batch.clear();
            noise.clear();
            for (int m = 0; m < cfg.minibatch; ++m) {
                batch.push_back(labeled[rng.index(labeled.size())]);
                std::vector<double> eps(static_cast<std::size_t>(actor.arch.latent_dim));
                for (double& e : eps) e = rng.normal();
                noise.push_back(std::move(eps));
            }
            auto g = grad_aib(actor, batch, noise, cfg.weights, cfg.workers);
            const double norm = g.grad.norm();
            const double scale = norm > cfg.grad_clip ? cfg.grad_clip / norm : 1.0;
            actor.add_scaled(g.grad, -cfg.learning_rate * scale);
            ema = ema_started ? 0.9 * ema + 0.1 * g.loss.total : g.loss.total;
            ema_started = true;

            auto [outcome, next] = step(state, trace, manifest, params, behavior);
            record.session_qoe += outcome.reward;
            state = std::move(next);
            ++record.states;
        }
        record.loss_ema = ema;
        record.agreement = record.states > 0 ? static_cast<double>(agreed) / record.states : 0.0;
        result.report.epochs.push_back(std::move(record));
    }
    return result;
}

inline nlohmann::json to_json(const TrainReport& report) {
    nlohmann::json epochs = nlohmann::json::array();
    std::vector<double> loss, agreement;
    for (const auto& e : report.epochs) {
        epochs.push_back({{"trace_id", e.trace_id},
                          {"states", e.states},
                          {"loss_ema", e.loss_ema},
                          {"agreement", e.agreement},
                          {"session_qoe", e.session_qoe}});
        loss.push_back(e.loss_ema);
        agreement.push_back(e.agreement);
    }
    return {{"loss_curve", loss}, {"agreement_curve", agreement}, {"epochs", epochs}};
}

inline nlohmann::json to_json(const TrainConfig& cfg) {
    return {{"beta", cfg.weights.beta},
            {"eta", cfg.weights.eta},
            {"learning_rate", cfg.learning_rate},
            {"minibatch", cfg.minibatch},
            {"epochs", cfg.epochs},
            {"horizon", cfg.horizon},
            {"history_k", cfg.history_k},
            {"gamma", cfg.gamma},
            {"grad_clip", cfg.grad_clip},
            {"seed", cfg.seed},
            {"random_start", cfg.random_start},
            {"latent_dim", cfg.latent_dim},
            {"encoder_hidden", cfg.encoder_hidden},
            {"decoder_hidden", cfg.decoder_hidden},
            {"mpc_horizon", cfg.adverse.mpc_horizon}};
}

// Checkpoint format (JSON): {"format": "abrbench-actor", "version": 1, "seed",
// "architecture": {...}, "config": {...}, "encoder": [layer...], "decoder":
// [layer...]} where layer = {"inputs", "outputs", "weight" (row-major
// [outputs][inputs]), "bias"}. Doubles are written in shortest round-trip form.
inline constexpr int kCheckpointVersion = 1;

inline std::string save_checkpoint(const ActorParams& actor, const nlohmann::json& config = nullptr) {
    auto layers = [](const std::vector<DenseLayer>& stack) {
        nlohmann::json out = nlohmann::json::array();
        for (const auto& l : stack)
            out.push_back({{"inputs", l.inputs}, {"outputs", l.outputs}, {"weight", l.weight}, {"bias", l.bias}});
        return out;
    };
    nlohmann::json j = {
        {"format", "abrbench-actor"},
        {"version", kCheckpointVersion},
        {"seed", actor.seed},
        {"architecture",
         {{"observation_size", actor.arch.observation_size},
          {"levels", actor.arch.levels},
          {"encoder_hidden", actor.arch.encoder_hidden},
          {"latent_dim", actor.arch.latent_dim},
          {"decoder_hidden", actor.arch.decoder_hidden}}},
        {"config", config},
        {"encoder", layers(actor.encoder)},
        {"decoder", layers(actor.decoder)},
    };
    return j.dump() + "\n";
}

inline ActorParams load_checkpoint(std::string_view text) {
    try {
        const auto j = nlohmann::json::parse(text);
        if (j.at("format") != "abrbench-actor") throw ParseError("not an actor checkpoint");
        if (j.at("version").get<int>() != kCheckpointVersion) throw ParseError("unsupported checkpoint version");
        const auto& a = j.at("architecture");
        ActorArchitecture arch{a.at("observation_size").get<int>(), a.at("levels").get<int>(),
                               a.at("encoder_hidden").get<std::vector<int>>(), a.at("latent_dim").get<int>(),
                               a.at("decoder_hidden").get<std::vector<int>>()};
        ActorParams p = ActorParams::init(arch, j.at("seed").get<std::uint64_t>());
        auto fill = [](std::vector<DenseLayer>& stack, const nlohmann::json& src) {
            if (src.size() != stack.size()) throw ParseError("checkpoint layer count mismatch");
            for (std::size_t l = 0; l < stack.size(); ++l) {
                auto w = src[l].at("weight").get<std::vector<double>>();
                auto b = src[l].at("bias").get<std::vector<double>>();
                if (src[l].at("inputs").get<int>() != stack[l].inputs ||
                    src[l].at("outputs").get<int>() != stack[l].outputs || w.size() != stack[l].weight.size() ||
                    b.size() != stack[l].bias.size())
                    throw ParseError("checkpoint layer shape mismatch");
                for (double v : w)
                    if (!std::isfinite(v)) throw ParseError("checkpoint has non-finite weights");
                stack[l].weight = std::move(w);
                stack[l].bias = std::move(b);
            }
        };
        fill(p.encoder, j.at("encoder"));
        fill(p.decoder, j.at("decoder"));
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint: ") + e.what());
    }
}

} // namespace abrbench
