#include "wstal/postprocess.hpp"

#include <algorithm>
#include <map>
#include <numeric>

namespace wstal {

namespace {

double score_of(const Segment &s) {
    if (!s.score) {
        throw Error("post-processing requires scored segments");
    }
    return *s.score;
}

// Priority order: higher score, earlier start, lower class, shorter end.
bool higher_priority(const Segment &a, const Segment &b) {
    const double sa = score_of(a);
    const double sb = score_of(b);
    if (sa != sb) {
        return sa > sb;
    }
    if (a.start != b.start) {
        return a.start < b.start;
    }
    if (a.class_id != b.class_id) {
        return a.class_id < b.class_id;
    }
    return a.end < b.end;
}

// Removes the union of `cut` (sorted, disjoint) from `iv`.
std::vector<Interval> subtract(const Interval &iv, const std::vector<Interval> &cut) {
    std::vector<Interval> out;
    double cursor = iv.start;
    for (const auto &c : cut) {
        if (c.end <= cursor) {
            continue;
        }
        if (c.start >= iv.end) {
            break;
        }
        if (c.start > cursor) {
            out.push_back({cursor, c.start});
        }
        cursor = std::max(cursor, c.end);
        if (cursor >= iv.end) {
            break;
        }
    }
    if (cursor < iv.end) {
        out.push_back({cursor, iv.end});
    }
    return out;
}

void insert_disjoint(std::vector<Interval> &cover, const Interval &iv) {
    auto it = std::lower_bound(cover.begin(), cover.end(), iv,
                               [](const Interval &a, const Interval &b) { return a.start < b.start; });
    cover.insert(it, iv);
}

} // namespace

void NmsConfig::validate() const {
    if (!(iou_thresh > 0.0 && iou_thresh <= 1.0)) {
        throw Error("nms: iou_thresh must lie in (0, 1]");
    }
}

void sort_by_start(std::vector<Segment> &segments) {
    std::stable_sort(segments.begin(), segments.end(), [](const Segment &a, const Segment &b) {
        if (a.start != b.start) {
            return a.start < b.start;
        }
        if (a.end != b.end) {
            return a.end < b.end;
        }
        return a.class_id < b.class_id;
    });
}

std::vector<Segment> temporal_nms(std::span<const Segment> segments, const NmsConfig &cfg) {
    cfg.validate();
    std::vector<Segment> pending(segments.begin(), segments.end());
    for (const auto &s : pending) {
        score_of(s);
    }
    std::sort(pending.begin(), pending.end(), higher_priority);

    std::vector<Segment> kept;
    std::vector<char> removed(pending.size(), 0);
    for (std::size_t i = 0; i < pending.size(); ++i) {
        if (removed[i]) {
            continue;
        }
        const Segment &best = pending[i];
        kept.push_back(best);
        for (std::size_t j = i + 1; j < pending.size(); ++j) {
            if (removed[j]) {
                continue;
            }
            if (cfg.class_wise && pending[j].class_id != best.class_id) {
                continue;
            }
            if (tiou(best.interval(), pending[j].interval()) >= cfg.iou_thresh) {
                removed[j] = 1;
            }
        }
    }
    sort_by_start(kept);
    return kept;
}

std::vector<Segment> resolve_and_merge(std::span<const Segment> segments) {
    std::vector<Segment> order(segments.begin(), segments.end());
    std::sort(order.begin(), order.end(), higher_priority);

    // Accepted coverage per class, each list sorted and disjoint.
    std::map<int, std::vector<Interval>> cover;
    std::vector<Segment> pieces;
    for (const auto &seg : order) {
        std::vector<Interval> blocked;
        for (const auto &[cls, ivs] : cover) {
            if (cls != seg.class_id) {
                blocked.insert(blocked.end(), ivs.begin(), ivs.end());
            }
        }
        std::sort(blocked.begin(), blocked.end(),
                  [](const Interval &a, const Interval &b) { return a.start < b.start; });
        auto &own = cover[seg.class_id];
        for (const auto &rest : subtract(seg.interval(), blocked)) {
            if (!(rest.end > rest.start)) {
                continue;
            }
            pieces.push_back({seg.class_id, rest.start, rest.end, seg.score});
            insert_disjoint(own, rest);
        }
        // Keep own coverage disjoint by merging overlaps.
        std::vector<Interval> merged;
        for (const auto &iv : own) {
            if (!merged.empty() && iv.start <= merged.back().end) {
                merged.back().end = std::max(merged.back().end, iv.end);
            } else {
                merged.push_back(iv);
            }
        }
        own = std::move(merged);
    }

    std::map<int, std::vector<Segment>> by_class;
    for (auto &p : pieces) {
        by_class[p.class_id].push_back(p);
    }
    std::vector<Segment> out;
    for (auto &[cls, list] : by_class) {
        sort_by_start(list);
        std::vector<Segment> merged;
        for (const auto &s : list) {
            if (!merged.empty() && s.start <= merged.back().end) {
                auto &m = merged.back();
                m.end = std::max(m.end, s.end);
                m.score = std::max(*m.score, *s.score);
            } else {
                merged.push_back(s);
            }
        }
        out.insert(out.end(), merged.begin(), merged.end());
    }
    sort_by_start(out);
    return out;
}

} // namespace wstal
