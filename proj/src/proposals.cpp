#include "wstal/proposals.hpp"

#include "wstal/core.hpp"
#include "wstal/random.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace wstal {

namespace {

// Floyd's algorithm: k distinct values from [0, n), in generation order.
std::vector<std::int64_t> sample_without_replacement(Rng &rng, std::int64_t n, std::int64_t k) {
    std::vector<std::int64_t> out;
    out.reserve(static_cast<std::size_t>(k));
    std::unordered_set<std::int64_t> seen;
    for (std::int64_t j = n - k; j < n; ++j) {
        const auto t = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(j + 1)));
        if (seen.insert(t).second) {
            out.push_back(t);
        } else {
            seen.insert(j);
            out.push_back(j);
        }
    }
    return out;
}

std::int64_t scale_frames(double sec, const ProposalConfig &cfg, double ratio) {
    return static_cast<std::int64_t>(std::llround(sec * cfg.fps * ratio));
}

} // namespace

void ProposalConfig::validate() const {
    if (feature_len < 1) {
        throw Error("proposals: feature_len must be >= 1");
    }
    if (count < 1) {
        throw Error("proposals: count must be >= 1");
    }
    if (!(fps > 0.0) || !(window_sec > 0.0)) {
        throw Error("proposals: fps and window_sec must be positive");
    }
    if (!(min_sec > 0.0) || min_sec > max_sec || max_sec > window_sec) {
        throw Error("proposals: require 0 < min_sec <= max_sec <= window_sec");
    }
    if (!(sec_resolution > 0.0)) {
        throw Error("proposals: sec_resolution must be positive");
    }
    if (!(fixed_keep_ratio >= 0.0 && fixed_keep_ratio <= 1.0)) {
        throw Error("proposals: fixed_keep_ratio must lie in [0, 1]");
    }
    if (raw_frames && *raw_frames < 1) {
        throw Error("proposals: raw_frames must be >= 1");
    }
}

std::vector<double> proposal_scales(const ProposalConfig &cfg) {
    std::vector<double> scales;
    const double tol = 1e-9 * std::max(1.0, cfg.max_sec);
    for (std::int64_t i = 0;; ++i) {
        const double s = cfg.min_sec + static_cast<double>(i) * cfg.sec_resolution;
        if (s > cfg.max_sec + tol) {
            break;
        }
        scales.push_back(s);
    }
    return scales;
}

double feature_ratio(const ProposalConfig &cfg) {
    const std::int64_t raw = cfg.raw_frames.value_or(std::llround(cfg.window_sec * cfg.fps));
    return static_cast<double>(cfg.feature_len) / static_cast<double>(std::max<std::int64_t>(raw, 1));
}

ProposalSet generate_proposals(const ProposalConfig &cfg) {
    cfg.validate();
    const double ratio = feature_ratio(cfg);
    const auto scales = proposal_scales(cfg);
    const std::int64_t total = cfg.feature_len;

    struct Pool {
        std::int64_t len;
        std::int64_t starts; // feasible starts 0..starts-1
    };
    std::vector<Pool> pools;
    for (double s : scales) {
        const auto len = std::max<std::int64_t>(1, scale_frames(s, cfg, ratio));
        if (len <= total) {
            pools.push_back({len, total - len + 1});
        }
    }

    ProposalSet out;
    out.feature_len = total;
    out.seed = cfg.seed;
    if (pools.empty()) {
        out.boxes.assign(static_cast<std::size_t>(cfg.count), ProposalBox{0, total});
        out.num_structured = cfg.count;
        out.fallback = true;
        return out;
    }

    Rng rng(cfg.seed);
    out.boxes.reserve(static_cast<std::size_t>(cfg.count));

    const auto n_fixed = static_cast<std::int64_t>(
        std::llround(static_cast<double>(cfg.count) * cfg.fixed_keep_ratio));
    const auto n_scales = static_cast<std::int64_t>(pools.size());
    const std::int64_t base_quota = n_fixed / n_scales;
    const std::int64_t remainder = n_fixed % n_scales;
    for (std::int64_t i = 0; i < n_scales; ++i) {
        const Pool &pool = pools[static_cast<std::size_t>(i)];
        // Remainder goes to the longest scales, which sit at the end of the pool list.
        const std::int64_t quota = base_quota + (i >= n_scales - remainder ? 1 : 0);
        const std::int64_t take = std::min(quota, pool.starts);
        for (auto start : sample_without_replacement(rng, pool.starts, take)) {
            out.boxes.push_back({start, start + pool.len});
        }
    }
    out.num_structured = static_cast<std::int64_t>(out.boxes.size());

    const double frames_per_sec = cfg.fps * ratio;
    const auto min_len = std::max<std::int64_t>(1, scale_frames(cfg.min_sec, cfg, ratio));
    while (static_cast<std::int64_t>(out.boxes.size()) < cfg.count) {
        const double dur = rng.uniform(cfg.min_sec, cfg.max_sec);
        const double start_sec = rng.uniform(0.0, cfg.window_sec - dur);
        auto len = std::max(min_len, static_cast<std::int64_t>(std::llround(dur * frames_per_sec)));
        len = std::min(len, total);
        auto start = static_cast<std::int64_t>(std::llround(start_sec * frames_per_sec));
        start = std::clamp<std::int64_t>(start, 0, total - len);
        out.boxes.push_back({start, start + len});
    }
    return out;
}

} // namespace wstal
