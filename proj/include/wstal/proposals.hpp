#pragma once

#include <cstdint>
#include <optional>
#include <vector>

namespace wstal {

/// Candidate interval in feature-frame indices, [start, end).
struct ProposalBox {
    std::int64_t start = 0;
    std::int64_t end = 0;

    std::int64_t length() const { return end - start; }
    bool operator==(const ProposalBox &) const = default;
};

struct ProposalConfig {
    std::int64_t feature_len = 1000; ///< T_global, frames on the feature axis.
    std::int64_t count = 3000;       ///< N proposals per sequence.
    double fps = 50.0;
    double window_sec = 100.0;       ///< W, the input length in seconds.
    double min_sec = 1.0;
    double max_sec = 30.0;
    double sec_resolution = 1.0;
    double fixed_keep_ratio = 0.7;
    std::uint64_t seed = 2022;
    /// Raw samples spanned by the feature axis; round(W * fps) when unset.
    std::optional<std::int64_t> raw_frames;

    void validate() const;
};

struct ProposalSet {
    std::vector<ProposalBox> boxes;
    std::int64_t feature_len = 0;
    std::uint64_t seed = 0;
    /// The first `num_structured` boxes come from the per-scale pools, the rest from
    /// uniform random sampling. Equals boxes.size() for the fallback set.
    std::int64_t num_structured = 0;
    bool fallback = false;

    std::size_t size() const { return boxes.size(); }
};

/// Scale set {min_sec, min_sec + res, ...} up to max_sec inclusive.
std::vector<double> proposal_scales(const ProposalConfig &cfg);

/// Feature frames per raw frame, T_global / raw_frames.
double feature_ratio(const ProposalConfig &cfg);

/// Multi-scale temporal sampling. A fixed share of the N boxes is drawn per scale
/// without replacement from every frame-aligned start that fits; the rest get a
/// uniform duration in [min_sec, max_sec] and a uniform start inside the window.
/// When no scale fits on the feature axis, returns N copies of the whole axis.
ProposalSet generate_proposals(const ProposalConfig &cfg);

} // namespace wstal
