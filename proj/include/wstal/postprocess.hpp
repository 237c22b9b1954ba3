#pragma once

#include "wstal/core.hpp"

#include <span>
#include <vector>

namespace wstal {

struct NmsConfig {
    double iou_thresh = 0.5;
    bool class_wise = true;

    void validate() const;
};

/// Greedy temporal NMS. Keeps the highest-scoring remaining segment and drops every
/// remaining segment (of the same class when class_wise) with tIoU >= iou_thresh to it.
/// Ties are broken by earlier start, then lower class id. Output is sorted by start.
std::vector<Segment> temporal_nms(std::span<const Segment> segments, const NmsConfig &cfg = {});

/// Visualization merge rule.
///  1. Where segments of different classes overlap, the lower-confidence one keeps only
///     the part not covered by higher-confidence segments of other classes.
///  2. Touching or overlapping same-class pieces are unioned, scored by the max member.
/// Output is sorted by start.
std::vector<Segment> resolve_and_merge(std::span<const Segment> segments);

/// Orders segments by start, then end, then class id.
void sort_by_start(std::vector<Segment> &segments);

} // namespace wstal
