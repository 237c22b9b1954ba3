#include "wstal/milkern.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace wstal {

namespace {

Interval as_interval(const ProposalBox &b) {
    return {static_cast<double>(b.start), static_cast<double>(b.end)};
}

void check_rows(const ScoreMatrix &scores, std::span<const ProposalBox> proposals,
                const BagLabel &bag, const char *who) {
    if (static_cast<std::size_t>(scores.rows()) != proposals.size()) {
        throw Error(std::string(who) + ": score rows must match proposal count");
    }
    if (static_cast<std::size_t>(scores.cols()) != bag.y.size()) {
        throw Error(std::string(who) + ": score columns must match bag label length");
    }
}

} // namespace

Eigen::VectorXd attention_pool(const ScoreMatrix &p, const Eigen::VectorXd &alpha) {
    if (p.rows() != alpha.size()) {
        throw Error("attention_pool: weight count must match instance count");
    }
    if ((alpha.array() < 0.0).any()) {
        throw Error("attention_pool: negative attention weight");
    }
    const double total = alpha.sum();
    if (!(total > 0.0)) {
        throw Error("attention_pool: attention weights sum to zero");
    }
    return (p.transpose() * alpha) / total;
}

Eigen::VectorXd max_pool(const ScoreMatrix &p) {
    if (p.rows() == 0) {
        return Eigen::VectorXd::Zero(p.cols());
    }
    return p.colwise().maxCoeff().transpose();
}

Eigen::VectorXd linear_softmax_pool(const ScoreMatrix &p) {
    Eigen::VectorXd out(p.cols());
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
        const double s = p.col(c).sum();
        out(c) = s > 0.0 ? p.col(c).squaredNorm() / s : 0.0;
    }
    return out;
}

ScoreMatrix softmax_rows(const ScoreMatrix &logits) {
    ScoreMatrix out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double m = logits.row(r).maxCoeff();
        out.row(r) = (logits.row(r).array() - m).exp();
        out.row(r) /= out.row(r).sum();
    }
    return out;
}

ScoreMatrix softmax_cols(const ScoreMatrix &logits) {
    return softmax_rows(logits.transpose()).transpose();
}

WsddnOutput wsddn_score(const ScoreMatrix &cls_logits, const ScoreMatrix &det_logits) {
    if (cls_logits.rows() != det_logits.rows() || cls_logits.cols() != det_logits.cols()) {
        throw Error("wsddn_score: classification and detection logits differ in shape");
    }
    if (cls_logits.rows() == 0 || cls_logits.cols() == 0) {
        throw Error("wsddn_score: empty logits");
    }
    WsddnOutput out;
    out.cls = softmax_rows(cls_logits);
    out.det = softmax_cols(det_logits);
    out.scores = out.cls.cwiseProduct(out.det);
    out.bag_raw = out.scores.colwise().sum().transpose();
    out.bag = out.bag_raw.cwiseMax(kBagClampEps).cwiseMin(1.0 - kBagClampEps);
    return out;
}

PseudoLabels oicr_refine(const ScoreMatrix &prev_scores, std::span<const ProposalBox> proposals,
                         const BagLabel &bag, double iou_pos) {
    check_rows(prev_scores, proposals, bag, "oicr_refine");
    const auto n = proposals.size();
    PseudoLabels out;
    out.assignments.assign(n, 0);
    out.weights.assign(n, 1.0);
    if (n == 0) {
        return out;
    }

    // Best seed seen so far per proposal: score of the seed, class of the seed.
    std::vector<double> best_score(n, -1.0);
    for (int c = 1; c <= static_cast<int>(bag.y.size()); ++c) {
        if (!bag.has(c)) {
            continue;
        }
        Eigen::Index seed = 0;
        prev_scores.col(c - 1).maxCoeff(&seed);
        const double seed_score = prev_scores(seed, c - 1);
        const Interval seed_iv = as_interval(proposals[static_cast<std::size_t>(seed)]);
        for (std::size_t i = 0; i < n; ++i) {
            if (tiou(as_interval(proposals[i]), seed_iv) < iou_pos) {
                continue;
            }
            // Classes are visited in ascending order, so strict > keeps the lower id on ties.
            if (seed_score > best_score[i]) {
                best_score[i] = seed_score;
                out.assignments[i] = c;
                out.weights[i] = std::clamp(seed_score, 0.0, 1.0);
            }
        }
    }
    return out;
}

PclClusters pcl_cluster(const ScoreMatrix &prev_scores, std::span<const ProposalBox> proposals,
                        const BagLabel &bag, double iou_cluster) {
    check_rows(prev_scores, proposals, bag, "pcl_cluster");
    const auto n = proposals.size();
    PclClusters out;
    out.labels.assignments.assign(n, 0);
    out.labels.weights.assign(n, 1.0);
    if (n == 0) {
        return out;
    }

    // Eligible class per proposal: the positive class where it is above median and
    // scores highest.
    std::vector<int> owner(n, 0);
    std::vector<double> owner_score(n, 0.0);
    for (int c = 1; c <= static_cast<int>(bag.y.size()); ++c) {
        if (!bag.has(c)) {
            continue;
        }
        std::vector<double> col(prev_scores.col(c - 1).data(), prev_scores.col(c - 1).data() + n);
        std::sort(col.begin(), col.end());
        const double median = percentile_sorted(col, 0.5);
        for (std::size_t i = 0; i < n; ++i) {
            const double s = prev_scores(static_cast<Eigen::Index>(i), c - 1);
            if (s > median && (owner[i] == 0 || s > owner_score[i])) {
                owner[i] = c;
                owner_score[i] = s;
            }
        }
    }

    std::vector<char> visited(n, 0);
    for (int c = 1; c <= static_cast<int>(bag.y.size()); ++c) {
        for (std::size_t root = 0; root < n; ++root) {
            if (owner[root] != c || visited[root]) {
                continue;
            }
            std::vector<int> members;
            std::vector<std::size_t> stack{root};
            visited[root] = 1;
            while (!stack.empty()) {
                const auto i = stack.back();
                stack.pop_back();
                members.push_back(static_cast<int>(i));
                for (std::size_t j = 0; j < n; ++j) {
                    if (owner[j] == c && !visited[j] &&
                        tiou(as_interval(proposals[i]), as_interval(proposals[j])) >= iou_cluster) {
                        visited[j] = 1;
                        stack.push_back(j);
                    }
                }
            }
            std::sort(members.begin(), members.end());
            double mean = 0.0;
            for (int m : members) {
                mean += prev_scores(m, c - 1);
            }
            mean /= static_cast<double>(members.size());
            const double w = std::clamp(mean, 0.0, 1.0);
            for (int m : members) {
                out.labels.assignments[static_cast<std::size_t>(m)] = c;
                out.labels.weights[static_cast<std::size_t>(m)] = w;
            }
            out.clusters.push_back(std::move(members));
            out.cluster_class.push_back(c);
            out.cluster_weight.push_back(w);
        }
    }
    return out;
}

AffinityMatrix normalize_affinity(const AffinityMatrix &affinity) {
    if (affinity.rows() != affinity.cols()) {
        throw Error("normalize_affinity: affinity must be square");
    }
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(affinity.nonZeros() + affinity.rows()));
    for (Eigen::Index r = 0; r < affinity.outerSize(); ++r) {
        double sum = 0.0;
        for (AffinityMatrix::InnerIterator it(affinity, r); it; ++it) {
            if (it.value() < 0.0 || !std::isfinite(it.value())) {
                throw Error("normalize_affinity: entries must be finite and non-negative");
            }
            sum += it.value();
        }
        if (sum > 0.0) {
            for (AffinityMatrix::InnerIterator it(affinity, r); it; ++it) {
                if (it.value() != 0.0) {
                    trips.emplace_back(r, it.col(), it.value() / sum);
                }
            }
        } else {
            trips.emplace_back(r, r, 1.0);
        }
    }
    AffinityMatrix out(affinity.rows(), affinity.cols());
    out.setFromTriplets(trips.begin(), trips.end());
    return out;
}

AffinityMatrix temporal_affinity(std::span<const Interval> intervals) {
    const auto n = static_cast<Eigen::Index>(intervals.size());
    AffinityMatrix out(n, n);
    if (n == 0) {
        return out;
    }
    std::vector<std::size_t> order(intervals.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return intervals[a].start < intervals[b].start ||
               (intervals[a].start == intervals[b].start && a < b);
    });

    std::vector<double> centers(intervals.size());
    for (std::size_t i = 0; i < intervals.size(); ++i) {
        centers[i] = 0.5 * (intervals[i].start + intervals[i].end);
    }
    std::vector<double> sorted_centers = centers;
    std::sort(sorted_centers.begin(), sorted_centers.end());
    double sigma = 1.0;
    if (sorted_centers.size() > 1) {
        std::vector<double> gaps;
        for (std::size_t i = 1; i < sorted_centers.size(); ++i) {
            gaps.push_back(sorted_centers[i] - sorted_centers[i - 1]);
        }
        std::sort(gaps.begin(), gaps.end());
        const double g = percentile_sorted(gaps, 0.5);
        if (g > 0.0) {
            sigma = g;
        }
    }

    // Sweep in start order; every overlapping pair is found from its earlier-starting side.
    std::vector<Eigen::Triplet<double>> trips;
    for (std::size_t a = 0; a < order.size(); ++a) {
        const auto i = order[a];
        trips.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i), 1.0);
        for (std::size_t b = a + 1; b < order.size(); ++b) {
            const auto j = order[b];
            if (intervals[j].start >= intervals[i].end) {
                break;
            }
            if (tiou(intervals[i], intervals[j]) > 0.0) {
                const double w = std::exp(-std::abs(centers[i] - centers[j]) / sigma);
                trips.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j), w);
                trips.emplace_back(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i), w);
            }
        }
    }
    out.setFromTriplets(trips.begin(), trips.end());
    return out;
}

ScoreMatrix rskp_propagate(const ScoreMatrix &s0, const AffinityMatrix &affinity, double alpha,
                           int steps) {
    if (!(alpha >= 0.0) || !(alpha < 1.0)) {
        throw Error("rskp_propagate: alpha must lie in [0, 1)");
    }
    if (steps < 0) {
        throw Error("rskp_propagate: step count must be non-negative");
    }
    if (affinity.rows() != s0.rows() || affinity.cols() != s0.rows()) {
        throw Error("rskp_propagate: affinity must be P x P with P = score rows");
    }
    const AffinityMatrix norm = normalize_affinity(affinity);
    ScoreMatrix s = s0;
    const ScoreMatrix anchor = (1.0 - alpha) * s0;
    for (int t = 0; t < steps; ++t) {
        s = anchor + alpha * (norm * s);
    }
    return s;
}

ScoreMatrix rskp_propagate(const ScoreMatrix &s0, const Eigen::MatrixXd &affinity, double alpha,
                           int steps) {
    return rskp_propagate(s0, AffinityMatrix(affinity.sparseView()), alpha, steps);
}

double cosine_similarity(const Eigen::VectorXd &a, const Eigen::VectorXd &b) {
    if (a.size() != b.size()) {
        throw Error("cosine_similarity: dimension mismatch");
    }
    const double na = a.norm();
    const double nb = b.norm();
    if (!(na > 0.0) || !(nb > 0.0)) {
        throw Error("cosine_similarity: zero-norm vector");
    }
    return a.dot(b) / (na * nb);
}

ColaResult cola_loss(const Eigen::VectorXd &anchor, const Eigen::VectorXd &positive,
                     std::span<const Eigen::VectorXd> negatives, double tau) {
    if (!(tau > 0.0)) {
        throw Error("cola_loss: temperature must be positive");
    }
    if (negatives.empty()) {
        throw Error("cola_loss: at least one negative is required");
    }
    const auto k = negatives.size() + 1;
    std::vector<const Eigen::VectorXd *> others;
    others.reserve(k);
    others.push_back(&positive);
    for (const auto &n : negatives) {
        others.push_back(&n);
    }

    std::vector<double> logits(k);
    for (std::size_t i = 0; i < k; ++i) {
        logits[i] = cosine_similarity(anchor, *others[i]) / tau;
    }
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) {
        z += std::exp(l - m);
    }
    const double log_z = m + std::log(z);

    ColaResult out;
    out.loss = log_z - logits[0];
    out.grad_anchor = Eigen::VectorXd::Zero(anchor.size());
    out.grad_positive = Eigen::VectorXd::Zero(anchor.size());
    out.grad_negatives.assign(negatives.size(), Eigen::VectorXd::Zero(anchor.size()));

    const double na = anchor.norm();
    for (std::size_t i = 0; i < k; ++i) {
        const Eigen::VectorXd &b = *others[i];
        const double nb = b.norm();
        const double sim = logits[i] * tau;
        // dL/dsim_i = (softmax_i - [i == positive]) / tau
        const double g = (std::exp(logits[i] - log_z) - (i == 0 ? 1.0 : 0.0)) / tau;
        out.grad_anchor += g * (b / (na * nb) - sim * anchor / (na * na));
        const Eigen::VectorXd gb = g * (anchor / (na * nb) - sim * b / (nb * nb));
        if (i == 0) {
            out.grad_positive = gb;
        } else {
            out.grad_negatives[i - 1] = gb;
        }
    }
    return out;
}

BceResult bce_bag_loss(const Eigen::VectorXd &pred, const BagLabel &y) {
    if (static_cast<std::size_t>(pred.size()) != y.y.size()) {
        throw Error("bce_bag_loss: prediction and label lengths differ");
    }
    if (pred.size() == 0) {
        throw Error("bce_bag_loss: empty prediction");
    }
    const auto c = static_cast<double>(pred.size());
    BceResult out;
    out.grad.resize(pred.size());
    for (Eigen::Index i = 0; i < pred.size(); ++i) {
        const double p = pred(i);
        if (!(p > 0.0 && p < 1.0)) {
            throw Error("bce_bag_loss: predictions must lie strictly inside (0, 1)");
        }
        const double t = y.y[static_cast<std::size_t>(i)] != 0 ? 1.0 : 0.0;
        out.loss -= t * std::log(p) + (1.0 - t) * std::log1p(-p);
        out.grad(i) = (p - t) / (p * (1.0 - p)) / c;
    }
    out.loss /= c;
    return out;
}

} // namespace wstal
