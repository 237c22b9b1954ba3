#include "wstal/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

namespace wstal {

namespace {

double safe_div(double num, double den) { return den > 0.0 ? num / den : 0.0; }

void finalize_class(ClassPrf &c) {
    c.precision = safe_div(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
    c.recall = safe_div(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
    c.f1 = safe_div(2.0 * c.precision * c.recall, c.precision + c.recall);
}

// Maximal runs [start, end) where flag is set.
std::vector<std::pair<std::size_t, std::size_t>> runs_of(const std::vector<char> &flag) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    std::size_t t = 0;
    while (t < flag.size()) {
        if (!flag[t]) {
            ++t;
            continue;
        }
        const auto start = t;
        while (t < flag.size() && flag[t]) {
            ++t;
        }
        out.emplace_back(start, t);
    }
    return out;
}

// Splits the run [a, b) of `self` against `other`: returns frames before the first and
// after the last frame of `other` inside the run, and uncovered frames strictly between.
// `hit` is false when `other` is absent from the run.
struct RunSplit {
    bool hit = false;
    std::int64_t edges = 0;
    std::int64_t interior = 0;
};

RunSplit split_run(const std::vector<char> &other, std::size_t a, std::size_t b) {
    RunSplit s;
    std::size_t first = b;
    std::size_t last = a;
    for (auto t = a; t < b; ++t) {
        if (other[t]) {
            if (first == b) {
                first = t;
            }
            last = t;
        }
    }
    if (first == b) {
        return s;
    }
    s.hit = true;
    s.edges = static_cast<std::int64_t>((first - a) + (b - 1 - last));
    for (auto t = first; t <= last; ++t) {
        if (!other[t]) {
            ++s.interior;
        }
    }
    return s;
}

void check_lengths(const FrameLabelSequence &gt, const FrameLabelSequence &pred) {
    if (gt.size() != pred.size()) {
        throw Error("label sequences differ in length (" + std::to_string(gt.size()) + " vs " +
                    std::to_string(pred.size()) + ")");
    }
}

std::set<int> classes_in(std::span<const int> labels) {
    std::set<int> out;
    for (int l : labels) {
        if (l != 0) {
            out.insert(l);
        }
    }
    return out;
}

} // namespace

void FrameConfusion::add(const FrameLabelSequence &gt, const FrameLabelSequence &pred) {
    check_lengths(gt, pred);
    for (std::size_t t = 0; t < gt.size(); ++t) {
        const int g = gt.labels[t];
        const int p = pred.labels[t];
        if (g == p) {
            if (g != 0) {
                ++counts[g].tp;
            }
            continue;
        }
        if (g != 0) {
            ++counts[g].fn;
        }
        if (p != 0) {
            ++counts[p].fp;
        }
    }
}

FramePrf FrameConfusion::finalize() const {
    FramePrf out;
    out.per_class = counts;
    for (auto &[cls, c] : out.per_class) {
        finalize_class(c);
        out.precision += c.precision;
        out.recall += c.recall;
        out.f1 += c.f1;
    }
    const auto n = static_cast<double>(out.per_class.size());
    out.precision = safe_div(out.precision, n);
    out.recall = safe_div(out.recall, n);
    out.f1 = safe_div(out.f1, n);
    return out;
}

FramePrf frame_prf(const FrameLabelSequence &gt, const FrameLabelSequence &pred) {
    FrameConfusion conf;
    conf.add(gt, pred);
    return conf.finalize();
}

WardFrames &WardFrames::operator+=(const WardFrames &o) {
    underfill += o.underfill;
    overfill += o.overfill;
    deletion += o.deletion;
    insertion += o.insertion;
    fragmentation += o.fragmentation;
    merge += o.merge;
    return *this;
}

WardFrames ward_frames(const FrameLabelSequence &gt, const FrameLabelSequence &pred, int class_id) {
    check_lengths(gt, pred);
    std::vector<char> g(gt.size());
    std::vector<char> p(gt.size());
    for (std::size_t t = 0; t < gt.size(); ++t) {
        g[t] = gt.labels[t] == class_id;
        p[t] = pred.labels[t] == class_id;
    }
    WardFrames out;
    for (auto [a, b] : runs_of(g)) {
        const auto s = split_run(p, a, b);
        if (!s.hit) {
            out.deletion += static_cast<std::int64_t>(b - a);
        } else {
            out.underfill += s.edges;
            out.fragmentation += s.interior;
        }
    }
    for (auto [a, b] : runs_of(p)) {
        const auto s = split_run(g, a, b);
        if (!s.hit) {
            out.insertion += static_cast<std::int64_t>(b - a);
        } else {
            out.overfill += s.edges;
            out.merge += s.interior;
        }
    }
    return out;
}

void WardAccumulator::add(const FrameLabelSequence &gt, const FrameLabelSequence &pred) {
    check_lengths(gt, pred);
    auto classes = classes_in(gt.labels);
    classes.merge(classes_in(pred.labels));
    for (int c : classes) {
        per_class[c] += ward_frames(gt, pred, c);
    }
    for (int l : gt.labels) {
        if (l != 0) {
            ++gt_frames[l];
        }
    }
    total_frames += static_cast<std::int64_t>(gt.size());
}

MisalignmentRatios WardAccumulator::finalize(WardDenominator denom) const {
    MisalignmentRatios out;
    if (per_class.empty()) {
        return out;
    }
    for (const auto &[cls, f] : per_class) {
        double den = static_cast<double>(total_frames);
        if (denom == WardDenominator::ClassGtDuration) {
            const auto it = gt_frames.find(cls);
            if (it != gt_frames.end() && it->second > 0) {
                den = static_cast<double>(it->second);
            }
        }
        out.ur += safe_div(static_cast<double>(f.underfill), den);
        out.or_ += safe_div(static_cast<double>(f.overfill), den);
        out.dr += safe_div(static_cast<double>(f.deletion), den);
        out.ir += safe_div(static_cast<double>(f.insertion), den);
        out.fr += safe_div(static_cast<double>(f.fragmentation), den);
        out.mr += safe_div(static_cast<double>(f.merge), den);
    }
    const double scale = 100.0 / static_cast<double>(per_class.size());
    out.ur *= scale;
    out.or_ *= scale;
    out.dr *= scale;
    out.ir *= scale;
    out.fr *= scale;
    out.mr *= scale;
    return out;
}

MisalignmentRatios ward_errors(std::span<const Segment> gt, std::span<const Segment> pred,
                               double fps, double duration, WardDenominator denom) {
    WardAccumulator acc;
    acc.add(rasterize(gt, fps, duration), rasterize(pred, fps, duration));
    return acc.finalize(denom);
}

std::optional<double> ap_at_tiou(std::span<const SequenceSegments> data, int class_id, double tau) {
    struct Pred {
        std::size_t seq;
        Segment seg;
    };
    std::vector<Pred> preds;
    std::vector<std::vector<Segment>> gts(data.size());
    std::size_t num_gt = 0;
    for (std::size_t s = 0; s < data.size(); ++s) {
        for (const auto &g : data[s].gt) {
            if (g.class_id == class_id) {
                gts[s].push_back(g);
                ++num_gt;
            }
        }
        for (const auto &p : data[s].pred) {
            if (p.class_id != class_id) {
                continue;
            }
            if (!p.score) {
                throw Error("ap_at_tiou: predictions must carry scores");
            }
            preds.push_back({s, p});
        }
    }
    if (num_gt == 0) {
        return preds.empty() ? std::nullopt : std::optional<double>(0.0);
    }
    std::stable_sort(preds.begin(), preds.end(), [](const Pred &a, const Pred &b) {
        if (*a.seg.score != *b.seg.score) {
            return *a.seg.score > *b.seg.score;
        }
        if (a.seg.start != b.seg.start) {
            return a.seg.start < b.seg.start;
        }
        if (a.seq != b.seq) {
            return a.seq < b.seq;
        }
        return a.seg.end < b.seg.end;
    });

    std::vector<std::vector<char>> used(data.size());
    for (std::size_t s = 0; s < data.size(); ++s) {
        used[s].assign(gts[s].size(), 0);
    }
    std::vector<double> precision;
    std::vector<double> recall;
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    for (const auto &p : preds) {
        double best = -1.0;
        std::size_t best_idx = 0;
        const auto &cands = gts[p.seq];
        for (std::size_t j = 0; j < cands.size(); ++j) {
            if (used[p.seq][j]) {
                continue;
            }
            const double iou = tiou(p.seg.interval(), cands[j].interval());
            if (iou >= tau && iou > best) {
                best = iou;
                best_idx = j;
            }
        }
        if (best >= 0.0) {
            used[p.seq][best_idx] = 1;
            ++tp;
        } else {
            ++fp;
        }
        precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
        recall.push_back(static_cast<double>(tp) / static_cast<double>(num_gt));
    }
    // All-point interpolation over the monotone precision envelope.
    for (std::size_t i = precision.size(); i-- > 1;) {
        precision[i - 1] = std::max(precision[i - 1], precision[i]);
    }
    double ap = 0.0;
    double prev_recall = 0.0;
    for (std::size_t i = 0; i < precision.size(); ++i) {
        ap += (recall[i] - prev_recall) * precision[i];
        prev_recall = recall[i];
    }
    return ap;
}

std::optional<double> ap_at_tiou(std::span<const Segment> pred, std::span<const Segment> gt,
                                 int class_id, double tau) {
    const SequenceSegments one{"", {gt.begin(), gt.end()}, {pred.begin(), pred.end()}};
    return ap_at_tiou(std::span<const SequenceSegments>(&one, 1), class_id, tau);
}

MapResult mean_ap(std::span<const SequenceSegments> data, std::span<const double> thresholds) {
    if (thresholds.empty()) {
        throw Error("mean_ap: no tIoU thresholds given");
    }
    std::set<int> classes;
    for (const auto &s : data) {
        for (const auto &g : s.gt) {
            classes.insert(g.class_id);
        }
        for (const auto &p : s.pred) {
            classes.insert(p.class_id);
        }
    }
    MapResult out;
    for (double tau : thresholds) {
        double sum = 0.0;
        int n = 0;
        for (int c : classes) {
            if (const auto ap = ap_at_tiou(data, c, tau)) {
                out.ap[c][tau] = *ap;
                sum += *ap;
                ++n;
            }
        }
        if (n == 0) {
            throw Error("mean_ap: no evaluable classes");
        }
        out.map_at[tau] = sum / n;
        out.map += out.map_at[tau];
    }
    out.map /= static_cast<double>(thresholds.size());
    return out;
}

double mean_ap(std::span<const Segment> pred, std::span<const Segment> gt,
               std::span<const double> thresholds) {
    const SequenceSegments one{"", {gt.begin(), gt.end()}, {pred.begin(), pred.end()}};
    return mean_ap(std::span<const SequenceSegments>(&one, 1), thresholds).map;
}

EvalReport evaluate(std::span<const EvalSequence> sequences, std::span<const double> thresholds,
                    WardDenominator denom) {
    FrameConfusion conf;
    WardAccumulator ward;
    std::vector<SequenceSegments> segs;
    segs.reserve(sequences.size());
    for (const auto &s : sequences) {
        const auto gt = rasterize(s.segments.gt, s.fps, s.duration);
        const auto pred = rasterize(s.segments.pred, s.fps, s.duration);
        conf.add(gt, pred);
        ward.add(gt, pred);
        segs.push_back(s.segments);
    }
    EvalReport report;
    report.prf = conf.finalize();
    report.ward = ward.finalize(denom);
    report.map = mean_ap(segs, thresholds);
    return report;
}

std::string format_report_table(const EvalReport &r, const std::string &label) {
    std::ostringstream os;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-12s %7s %7s %7s %7s %7s %7s %7s %7s %7s %7s\n", "", "P", "R",
                  "F1", "UR", "OR", "DR", "IR", "FR", "MR", "mAP");
    os << buf;
    std::snprintf(buf, sizeof buf,
                  "%-12s %7.2f %7.2f %7.2f %7.2f %7.2f %7.2f %7.2f %7.2f %7.2f %7.2f\n",
                  label.c_str(), 100.0 * r.prf.precision, 100.0 * r.prf.recall, 100.0 * r.prf.f1,
                  r.ward.ur, r.ward.or_, r.ward.dr, r.ward.ir, r.ward.fr, r.ward.mr,
                  100.0 * r.map.map);
    os << buf;
    return os.str();
}

} // namespace wstal
