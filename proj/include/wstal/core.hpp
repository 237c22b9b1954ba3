#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace wstal {

/// Thrown for malformed inputs and violated preconditions across the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Half-open time interval [start, end). Units depend on context
/// (seconds for segments, feature frames for proposals).
struct Interval {
    double start = 0.0;
    double end = 0.0;

    double length() const { return end - start; }
    bool operator==(const Interval &) const = default;
};

/// One labeled temporal interval in seconds. Ground truth carries no score.
struct Segment {
    int class_id = 1;
    double start = 0.0;
    double end = 0.0;
    std::optional<double> score;

    Interval interval() const { return {start, end}; }
    double duration() const { return end - start; }
    bool operator==(const Segment &) const = default;
};

struct SequenceRecord {
    std::string sequence_id;
    std::string subject_id;
    double fps = 1.0;
    double duration = 0.0;
    int channels = 1;
    int num_classes = 1;
    std::vector<Segment> gt;

    /// Number of samples, round(duration * fps).
    std::int64_t num_frames() const;
};

/// Per-sample class labels; 0 is the null class.
struct FrameLabelSequence {
    std::vector<int> labels;
    double fps = 1.0;

    std::size_t size() const { return labels.size(); }
};

/// Multi-hot sequence-level label, y[c-1] for class c.
struct BagLabel {
    std::vector<int> y;

    bool has(int class_id) const { return y.at(static_cast<std::size_t>(class_id - 1)) != 0; }
    bool any() const;
};

struct DurationProfile {
    double min = 0.0;
    double p5 = 0.0;
    double median = 0.0;
    double p95 = 0.0;
    double max = 0.0;
};

/// round(duration * fps) as a frame count.
std::int64_t frame_count(double duration, double fps);

/// Converts segments to a per-frame label sequence. Frame t stands for time t/fps and
/// belongs to [start, end) iff start <= t/fps < end. Where scored segments of different
/// classes overlap, the higher score wins (ties go to the lower class id). Overlapping
/// unscored segments of different classes are rejected as ambiguous ground truth.
/// Segment ends past the last frame are clipped.
FrameLabelSequence rasterize(std::span<const Segment> segments, double fps, double duration);

/// Temporal intersection over union; 0 for disjoint or touching intervals.
double tiou(const Interval &a, const Interval &b);

/// Overlap length, 0 when disjoint.
double intersection(const Interval &a, const Interval &b);

BagLabel bag_label(const SequenceRecord &record);
BagLabel bag_label(std::span<const Segment> segments, int num_classes);

/// Percentile with linear interpolation between closest ranks, q in [0, 1].
/// `sorted` must be ascending and non-empty.
double percentile_sorted(std::span<const double> sorted, double q);

DurationProfile profile_durations(std::span<const Segment> segments);
DurationProfile profile_durations(std::vector<double> durations);

/// Checks the record's invariants and throws Error describing the first violation.
void validate(const SequenceRecord &record);

} // namespace wstal
