#include "wstal/core.hpp"

#include <algorithm>
#include <cmath>

namespace wstal {

namespace {

// Smallest frame index t >= 0 with t / fps >= time. Evaluated against the literal
// t / fps so boundaries agree with the containment rule bit for bit.
std::int64_t first_frame_not_before(double time, double fps) {
    if (time <= 0.0) {
        return 0;
    }
    auto t = static_cast<std::int64_t>(std::ceil(time * fps));
    while (t > 0 && static_cast<double>(t - 1) / fps >= time) {
        --t;
    }
    while (static_cast<double>(t) / fps < time) {
        ++t;
    }
    return t;
}

} // namespace

std::int64_t frame_count(double duration, double fps) {
    return static_cast<std::int64_t>(std::llround(duration * fps));
}

std::int64_t SequenceRecord::num_frames() const { return frame_count(duration, fps); }

bool BagLabel::any() const {
    return std::any_of(y.begin(), y.end(), [](int v) { return v != 0; });
}

FrameLabelSequence rasterize(std::span<const Segment> segments, double fps, double duration) {
    if (!(fps > 0.0)) {
        throw Error("rasterize: fps must be positive");
    }
    if (!(duration >= 0.0)) {
        throw Error("rasterize: duration must be non-negative");
    }
    const auto frames = frame_count(duration, fps);
    FrameLabelSequence out;
    out.fps = fps;
    out.labels.assign(static_cast<std::size_t>(frames), 0);

    // Index of the segment currently owning each frame, -1 for none.
    std::vector<std::int64_t> owner(static_cast<std::size_t>(frames), -1);

    for (std::size_t i = 0; i < segments.size(); ++i) {
        const Segment &seg = segments[i];
        if (seg.start < 0.0 || !(seg.end > seg.start)) {
            throw Error("rasterize: segment must satisfy 0 <= start < end");
        }
        const auto lo = std::min(first_frame_not_before(seg.start, fps), frames);
        const auto hi = std::min(first_frame_not_before(seg.end, fps), frames);
        for (auto t = lo; t < hi; ++t) {
            auto &cur = owner[static_cast<std::size_t>(t)];
            if (cur < 0) {
                cur = static_cast<std::int64_t>(i);
                continue;
            }
            const Segment &held = segments[static_cast<std::size_t>(cur)];
            if (held.class_id == seg.class_id) {
                if (seg.score && held.score && *seg.score > *held.score) {
                    cur = static_cast<std::int64_t>(i);
                }
                continue;
            }
            if (!seg.score || !held.score) {
                throw Error("rasterize: ambiguous ground truth (overlapping segments of classes " +
                            std::to_string(held.class_id) + " and " + std::to_string(seg.class_id) +
                            ")");
            }
            if (*seg.score > *held.score ||
                (*seg.score == *held.score && seg.class_id < held.class_id)) {
                cur = static_cast<std::int64_t>(i);
            }
        }
    }
    for (std::size_t t = 0; t < owner.size(); ++t) {
        if (owner[t] >= 0) {
            out.labels[t] = segments[static_cast<std::size_t>(owner[t])].class_id;
        }
    }
    return out;
}

double intersection(const Interval &a, const Interval &b) {
    return std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
}

double tiou(const Interval &a, const Interval &b) {
    const double inter = intersection(a, b);
    if (inter <= 0.0) {
        return 0.0;
    }
    const double uni = (a.end - a.start) + (b.end - b.start) - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

BagLabel bag_label(std::span<const Segment> segments, int num_classes) {
    BagLabel bag;
    bag.y.assign(static_cast<std::size_t>(std::max(num_classes, 0)), 0);
    for (const auto &seg : segments) {
        if (seg.class_id < 1 || seg.class_id > num_classes) {
            throw Error("bag_label: class id " + std::to_string(seg.class_id) + " outside 1.." +
                        std::to_string(num_classes));
        }
        bag.y[static_cast<std::size_t>(seg.class_id - 1)] = 1;
    }
    return bag;
}

BagLabel bag_label(const SequenceRecord &record) { return bag_label(record.gt, record.num_classes); }

double percentile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) {
        throw Error("percentile of an empty list");
    }
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

DurationProfile profile_durations(std::vector<double> durations) {
    if (durations.empty()) {
        throw Error("profile_durations: empty segment list");
    }
    std::sort(durations.begin(), durations.end());
    DurationProfile p;
    p.min = durations.front();
    p.p5 = percentile_sorted(durations, 0.05);
    p.median = percentile_sorted(durations, 0.5);
    p.p95 = percentile_sorted(durations, 0.95);
    p.max = durations.back();
    return p;
}

DurationProfile profile_durations(std::span<const Segment> segments) {
    std::vector<double> d;
    d.reserve(segments.size());
    for (const auto &s : segments) {
        d.push_back(s.duration());
    }
    return profile_durations(std::move(d));
}

void validate(const SequenceRecord &record) {
    if (!(record.fps > 0.0)) {
        throw Error("sequence " + record.sequence_id + ": fps must be positive");
    }
    if (!(record.duration > 0.0)) {
        throw Error("sequence " + record.sequence_id + ": duration must be positive");
    }
    if (record.channels < 1 || record.num_classes < 1) {
        throw Error("sequence " + record.sequence_id + ": channels and num_classes must be >= 1");
    }
    for (const auto &seg : record.gt) {
        if (seg.class_id < 1 || seg.class_id > record.num_classes) {
            throw Error("sequence " + record.sequence_id + ": class id out of range");
        }
        if (seg.start < 0.0 || !(seg.end > seg.start) || seg.end > record.duration) {
            throw Error("sequence " + record.sequence_id + ": segment outside [0, duration]");
        }
    }
    for (std::size_t i = 0; i < record.gt.size(); ++i) {
        for (std::size_t j = i + 1; j < record.gt.size(); ++j) {
            const auto &a = record.gt[i];
            const auto &b = record.gt[j];
            if (a.class_id != b.class_id && intersection(a.interval(), b.interval()) > 0.0) {
                throw Error("sequence " + record.sequence_id + ": ambiguous ground truth");
            }
        }
    }
}

} // namespace wstal
