#pragma once

// Bitrate ladder, per-chunk sizes, and the QoE weights.
//
// Level indices run in ascending bitrate order: level 0 is the lowest
// bitrate, level `level_count() - 1` the highest. Every tie-break in the
// library ("prefer the lower level") therefore prefers the lower bitrate.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "abrbench/errors.hpp"
#include "abrbench/rng.hpp"

namespace abrbench {

using Level = int;

class VideoManifest {
public:
    /// `bitrates_mbps` may be given in either order; `chunk_sizes_mb[i]`
    /// lists sizes in the same order as `bitrates_mbps`.
    VideoManifest(std::vector<double> bitrates_mbps, double chunk_duration_s,
                  std::vector<std::vector<double>> chunk_sizes_mb)
        : chunk_duration_(chunk_duration_s) {
        if (bitrates_mbps.empty()) throw DomainError("manifest: empty bitrate ladder");
        if (!(chunk_duration_s > 0.0)) throw DomainError("manifest: chunk duration must be positive");
        if (chunk_sizes_mb.empty()) throw DomainError("manifest: chunk count must be >= 1");
        std::vector<std::size_t> order(bitrates_mbps.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return bitrates_mbps[a] < bitrates_mbps[b]; });
        for (std::size_t j = 0; j < order.size(); ++j) {
            const double r = bitrates_mbps[order[j]];
            if (!(r > 0.0) || !std::isfinite(r)) throw DomainError("manifest: bitrates must be positive");
            if (j > 0 && !(r > bitrates_[j - 1])) throw DomainError("manifest: duplicate bitrate level");
            bitrates_.push_back(r);
        }
        sizes_.reserve(chunk_sizes_mb.size() * order.size());
        for (std::size_t i = 0; i < chunk_sizes_mb.size(); ++i) {
            const auto& row = chunk_sizes_mb[i];
            if (row.size() != order.size())
                throw DomainError("manifest: chunk " + std::to_string(i) + " has wrong number of sizes");
            for (std::size_t j = 0; j < order.size(); ++j) {
                const double s = row[order[j]];
                if (!(s > 0.0) || !std::isfinite(s))
                    throw DomainError("manifest: chunk " + std::to_string(i) + " has non-positive size");
                if (j > 0 && !(s > sizes_.back()))
                    throw DomainError("manifest: chunk " + std::to_string(i) +
                                      " sizes do not increase with bitrate");
                sizes_.push_back(s);
            }
        }
        chunk_count_ = static_cast<int>(chunk_sizes_mb.size());
    }

    /// Constant-bitrate sizes s_i(r) = r * L.
    static VideoManifest cbr(std::vector<double> bitrates_mbps, double chunk_duration_s, int chunk_count) {
        if (chunk_count < 1) throw DomainError("manifest: chunk count must be >= 1");
        std::vector<double> row;
        row.reserve(bitrates_mbps.size());
        for (double r : bitrates_mbps) row.push_back(r * chunk_duration_s);
        VideoManifest m(std::move(bitrates_mbps), chunk_duration_s,
                        std::vector<std::vector<double>>(static_cast<std::size_t>(chunk_count), row));
        m.cbr_ = true;
        return m;
    }

    /// CBR sizes perturbed by a seeded uniform factor in [1 - spread, 1 + spread];
    /// each chunk's sizes are re-sorted so they still increase with bitrate.
    static VideoManifest vbr(std::vector<double> bitrates_mbps, double chunk_duration_s, int chunk_count,
                             std::uint64_t seed, double spread = 0.2) {
        if (chunk_count < 1) throw DomainError("manifest: chunk count must be >= 1");
        if (!(spread >= 0.0 && spread < 1.0)) throw DomainError("manifest: VBR spread must be in [0, 1)");
        std::sort(bitrates_mbps.begin(), bitrates_mbps.end());
        Rng rng(seed);
        std::vector<std::vector<double>> sizes(static_cast<std::size_t>(chunk_count));
        for (auto& row : sizes) {
            for (double r : bitrates_mbps) row.push_back(r * chunk_duration_s * rng.uniform(1.0 - spread, 1.0 + spread));
            std::sort(row.begin(), row.end());
        }
        return VideoManifest(std::move(bitrates_mbps), chunk_duration_s, std::move(sizes));
    }

    int level_count() const noexcept { return static_cast<int>(bitrates_.size()); }
    int chunk_count() const noexcept { return chunk_count_; }
    double chunk_duration() const noexcept { return chunk_duration_; }
    Level top_level() const noexcept { return level_count() - 1; }
    bool is_cbr() const noexcept { return cbr_; }

    /// Ascending ladder.
    const std::vector<double>& bitrates() const noexcept { return bitrates_; }

    double bitrate(Level level) const {
        check_level(level);
        return bitrates_[static_cast<std::size_t>(level)];
    }

    double max_bitrate() const noexcept { return bitrates_.back(); }

    /// Size in megabits of chunk `chunk` (0-based) at `level`.
    double size(int chunk, Level level) const {
        if (chunk < 0 || chunk >= chunk_count_)
            throw DomainError("chunk index " + std::to_string(chunk) + " out of range");
        check_level(level);
        return sizes_[static_cast<std::size_t>(chunk) * bitrates_.size() + static_cast<std::size_t>(level)];
    }

    std::optional<Level> level_of(double bitrate_mbps) const {
        for (std::size_t j = 0; j < bitrates_.size(); ++j)
            if (bitrates_[j] == bitrate_mbps) return static_cast<Level>(j);
        return std::nullopt;
    }

    /// First `count` chunks of this video.
    VideoManifest truncated(int count) const {
        if (count < 1 || count > chunk_count_) throw DomainError("manifest: bad truncation length");
        VideoManifest m = *this;
        m.chunk_count_ = count;
        m.sizes_.resize(static_cast<std::size_t>(count) * bitrates_.size());
        return m;
    }

    friend bool operator==(const VideoManifest&, const VideoManifest&) = default;

private:
    void check_level(Level level) const {
        if (level < 0 || level >= level_count())
            throw DomainError("level " + std::to_string(level) + " out of range");
    }

    std::vector<double> bitrates_;
    double chunk_duration_;
    int chunk_count_ = 0;
    std::vector<double> sizes_; // row-major [chunk][level]
    bool cbr_ = false;
};

enum class QualityKind { linear };

struct QoEParams {
    double alpha1 = 4.3;        ///< rebuffer weight, quality units per second
    double alpha2 = 1.0;        ///< switch weight
    double buffer_cap_s = 60.0; ///< B
    double rtt_s = 0.08;
    QualityKind quality = QualityKind::linear;
    /// Whether the stall while the first chunk downloads (buffer starts
    /// empty) is charged as rebuffering. When false it is startup delay.
    bool startup_stall_is_rebuffer = true;

    void validate() const {
        if (!(alpha1 >= 0.0)) throw DomainError("qoe: alpha1 must be >= 0");
        if (!(alpha2 >= 0.0)) throw DomainError("qoe: alpha2 must be >= 0");
        if (!(buffer_cap_s > 0.0)) throw DomainError("qoe: buffer cap must be positive");
        if (!(rtt_s >= 0.0)) throw DomainError("qoe: rtt must be >= 0");
    }

    friend bool operator==(const QoEParams&, const QoEParams&) = default;
};

/// q(r) for a bitrate already known to be on the ladder.
inline double quality_value(const QoEParams& params, double bitrate_mbps) {
    switch (params.quality) {
    case QualityKind::linear:
        return bitrate_mbps;
    }
    return bitrate_mbps;
}

/// q(r); rejects bitrates that are not levels of `manifest`.
inline double quality(const VideoManifest& manifest, const QoEParams& params, double bitrate_mbps) {
    if (!manifest.level_of(bitrate_mbps)) throw DomainError("bitrate is not a manifest level");
    return quality_value(params, bitrate_mbps);
}

inline double level_quality(const VideoManifest& manifest, const QoEParams& params, Level level) {
    return quality_value(params, manifest.bitrate(level));
}

/// s_i(r) with a 0-based chunk index and a bitrate value.
inline double chunk_size(const VideoManifest& manifest, int chunk, double bitrate_mbps) {
    const auto level = manifest.level_of(bitrate_mbps);
    if (!level) throw DomainError("bitrate is not a manifest level");
    return manifest.size(chunk, *level);
}

struct MediaConfig {
    VideoManifest manifest;
    QoEParams params;
};

inline nlohmann::json to_json(const MediaConfig& media) {
    const auto& m = media.manifest;
    nlohmann::json j;
    std::vector<double> desc(m.bitrates().rbegin(), m.bitrates().rend());
    j["bitrates_mbps"] = desc;
    j["chunk_duration_s"] = m.chunk_duration();
    j["chunk_count"] = m.chunk_count();
    if (m.is_cbr()) {
        j["chunk_sizes_mb"] = nullptr;
    } else {
        nlohmann::json rows = nlohmann::json::array();
        for (int i = 0; i < m.chunk_count(); ++i) {
            nlohmann::json row = nlohmann::json::array();
            for (Level l = m.top_level(); l >= 0; --l) row.push_back(m.size(i, l));
            rows.push_back(std::move(row));
        }
        j["chunk_sizes_mb"] = std::move(rows);
    }
    j["alpha1"] = media.params.alpha1;
    j["alpha2"] = media.params.alpha2;
    j["buffer_cap_s"] = media.params.buffer_cap_s;
    j["rtt_s"] = media.params.rtt_s;
    if (!media.params.startup_stall_is_rebuffer) j["startup_rebuffer"] = false;
    return j;
}

inline MediaConfig media_from_json(const nlohmann::json& j) {
    try {
        const auto bitrates = j.at("bitrates_mbps").get<std::vector<double>>();
        const double duration = j.at("chunk_duration_s").get<double>();
        const int count = j.at("chunk_count").get<int>();
        QoEParams params;
        params.alpha1 = j.at("alpha1").get<double>();
        params.alpha2 = j.at("alpha2").get<double>();
        params.buffer_cap_s = j.value("buffer_cap_s", 60.0);
        params.rtt_s = j.value("rtt_s", 0.0);
        params.startup_stall_is_rebuffer = j.value("startup_rebuffer", true);
        params.validate();
        const auto sizes_it = j.find("chunk_sizes_mb");
        if (sizes_it == j.end() || sizes_it->is_null())
            return {VideoManifest::cbr(bitrates, duration, count), params};
        auto sizes = sizes_it->get<std::vector<std::vector<double>>>();
        if (static_cast<int>(sizes.size()) != count)
            throw ParseError("chunk_sizes_mb has " + std::to_string(sizes.size()) + " rows, expected " +
                             std::to_string(count));
        return {VideoManifest(bitrates, duration, std::move(sizes)), params};
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("manifest: ") + e.what());
    } catch (const DomainError& e) {
        throw ParseError(e.what());
    }
}

/// Reads the manifest JSON wire format.
inline MediaConfig load_manifest(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("manifest: ") + e.what());
    }
    return media_from_json(j);
}

inline std::string serialize_manifest(const MediaConfig& media) { return to_json(media).dump(2) + "\n"; }

/// Built-in videos: "pensieve" (3G/4G ladder) and "a2br-5g".
inline std::optional<MediaConfig> preset(std::string_view name) {
    if (name == "pensieve") {
        QoEParams p{.alpha1 = 4.3, .alpha2 = 1.0, .buffer_cap_s = 60.0, .rtt_s = 0.08};
        return MediaConfig{VideoManifest::cbr({4.3, 2.85, 1.85, 1.2, 0.75, 0.3}, 4.0, 48), p};
    }
    if (name == "a2br-5g") {
        QoEParams p{.alpha1 = 160.0, .alpha2 = 1.0, .buffer_cap_s = 60.0, .rtt_s = 0.104};
        return MediaConfig{VideoManifest::cbr({160, 110, 80, 60, 40, 20}, 4.0, 39), p};
    }
    return std::nullopt;
}

} // namespace abrbench
