#pragma once

#include "wstal/core.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace wstal {

inline const std::vector<double> kDefaultTiouThresholds{0.3, 0.4, 0.5, 0.6, 0.7};

struct ClassPrf {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct FramePrf {
    std::map<int, ClassPrf> per_class; ///< classes present in gt or pred, null excluded
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Accumulates per-class frame counts; combine across sequences before finalize().
struct FrameConfusion {
    std::map<int, ClassPrf> counts;

    void add(const FrameLabelSequence &gt, const FrameLabelSequence &pred);
    FramePrf finalize() const;
};

/// Frame-level precision/recall/F1 with 0 for zero denominators. Macro scores average
/// over classes that appear in gt or pred.
FramePrf frame_prf(const FrameLabelSequence &gt, const FrameLabelSequence &pred);

/// Misalignment error frames for one class.
struct WardFrames {
    std::int64_t underfill = 0;
    std::int64_t overfill = 0;
    std::int64_t deletion = 0;
    std::int64_t insertion = 0;
    std::int64_t fragmentation = 0;
    std::int64_t merge = 0;

    WardFrames &operator+=(const WardFrames &o);
};

/// Percentages.
struct MisalignmentRatios {
    double ur = 0.0;
    double or_ = 0.0;
    double dr = 0.0;
    double ir = 0.0;
    double fr = 0.0;
    double mr = 0.0;
};

enum class WardDenominator {
    SequenceDuration, ///< error frames / all frames
    ClassGtDuration,  ///< error frames / gt frames of the class
};

/// Classifies every frame where gt and prediction disagree on class c.
///  - gt-side (gt = c, pred != c): each maximal gt run is Deletion if untouched by the
///    prediction, otherwise frames before its first / after its last covered frame are
///    Underfill and uncovered frames in between are Fragmentation.
///  - pred-side (pred = c, gt != c): each maximal prediction run is Insertion if it touches
///    no gt frame, otherwise frames between its first and last overlapped gt frame are
///    Merge and the spill outside them is Overfill.
WardFrames ward_frames(const FrameLabelSequence &gt, const FrameLabelSequence &pred, int class_id);

/// Per-class error frames plus the frame totals needed to normalize them.
struct WardAccumulator {
    std::map<int, WardFrames> per_class;
    std::map<int, std::int64_t> gt_frames;
    std::int64_t total_frames = 0;

    void add(const FrameLabelSequence &gt, const FrameLabelSequence &pred);
    MisalignmentRatios finalize(WardDenominator denom = WardDenominator::SequenceDuration) const;
};

/// Six misalignment ratios averaged over classes present in gt or pred, x100.
MisalignmentRatios ward_errors(std::span<const Segment> gt, std::span<const Segment> pred,
                               double fps, double duration,
                               WardDenominator denom = WardDenominator::SequenceDuration);

/// Ground truth and predictions of one sequence.
struct SequenceSegments {
    std::string sequence_id;
    std::vector<Segment> gt;
    std::vector<Segment> pred;
};

/// AP at one tIoU threshold, pooling predictions over sequences (matches stay within a
/// sequence). Returns nullopt when class c has neither gt nor predictions, 0 when it has
/// predictions but no gt.
std::optional<double> ap_at_tiou(std::span<const SequenceSegments> data, int class_id, double tau);
std::optional<double> ap_at_tiou(std::span<const Segment> pred, std::span<const Segment> gt,
                                 int class_id, double tau);

struct MapResult {
    std::map<int, std::map<double, double>> ap; ///< class -> tau -> AP
    std::map<double, double> map_at;            ///< tau -> mean AP over evaluable classes
    double map = 0.0;
};

MapResult mean_ap(std::span<const SequenceSegments> data,
                  std::span<const double> thresholds = kDefaultTiouThresholds);
double mean_ap(std::span<const Segment> pred, std::span<const Segment> gt,
               std::span<const double> thresholds = kDefaultTiouThresholds);

/// Everything the evaluation protocol reports for a set of sequences.
struct EvalReport {
    FramePrf prf;
    MisalignmentRatios ward;
    MapResult map;
};

struct EvalSequence {
    SequenceSegments segments;
    double fps = 1.0;
    double duration = 0.0;
};

EvalReport evaluate(std::span<const EvalSequence> sequences,
                    std::span<const double> thresholds = kDefaultTiouThresholds,
                    WardDenominator denom = WardDenominator::SequenceDuration);

/// Header + one row in the column order P, R, F1, UR, OR, DR, IR, FR, MR, mAP
/// (all as percentages).
std::string format_report_table(const EvalReport &report, const std::string &label = "all");

} // namespace wstal
