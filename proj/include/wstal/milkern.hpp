#pragma once

#include "wstal/core.hpp"
#include "wstal/proposals.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <span>
#include <vector>

namespace wstal {

/// Instances (frames or proposals) x classes.
using ScoreMatrix = Eigen::MatrixXd;
using AffinityMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// ---------------------------------------------------------------------------
// MIL pooling

/// Attention-weighted mean of instance scores, sum_t a_t p_t / sum_t a_t.
/// Throws when the weights are negative or sum to zero.
Eigen::VectorXd attention_pool(const ScoreMatrix &p, const Eigen::VectorXd &alpha);

/// Column maxima.
Eigen::VectorXd max_pool(const ScoreMatrix &p);

/// Linear-softmax pooling, sum_t p_tc^2 / sum_t p_tc; an all-zero column pools to 0.
Eigen::VectorXd linear_softmax_pool(const ScoreMatrix &p);

// ---------------------------------------------------------------------------
// Proposal scoring and pseudo-label refinement

/// Row-wise softmax (over classes), max-subtracted.
ScoreMatrix softmax_rows(const ScoreMatrix &logits);

/// Column-wise softmax (over instances), max-subtracted.
ScoreMatrix softmax_cols(const ScoreMatrix &logits);

struct WsddnOutput {
    ScoreMatrix cls;      ///< softmax over classes per proposal
    ScoreMatrix det;      ///< softmax over proposals per class
    ScoreMatrix scores;   ///< cls (.) det
    Eigen::VectorXd bag;  ///< column sums of scores, clamped to [eps, 1 - eps]
    Eigen::VectorXd bag_raw;
};

inline constexpr double kBagClampEps = 1e-6;

WsddnOutput wsddn_score(const ScoreMatrix &cls_logits, const ScoreMatrix &det_logits);

struct PseudoLabels {
    std::vector<int> assignments; ///< class id per proposal, 0 = background
    std::vector<double> weights;  ///< confidence per proposal, in [0, 1]
};

inline constexpr double kOicrIouPos = 0.5;
inline constexpr double kPclIouCluster = 0.4;

/// One OICR refinement step. For each positive class the top-scoring proposal seeds
/// its class; proposals with tIoU >= iou_pos to a seed inherit the seed's class with
/// the seed's score as weight. Competing seeds resolve to the higher seed score, then
/// the lower class id. Everything else is background with weight 1.
PseudoLabels oicr_refine(const ScoreMatrix &prev_scores, std::span<const ProposalBox> proposals,
                         const BagLabel &bag, double iou_pos = kOicrIouPos);

struct PclClusters {
    std::vector<std::vector<int>> clusters; ///< proposal indices, ascending within a cluster
    std::vector<int> cluster_class;
    std::vector<double> cluster_weight;
    PseudoLabels labels;
};

/// PCL-style proposal clustering. For each positive class, proposals scoring strictly
/// above that class's median form a graph with an edge where tIoU >= iou_cluster; its
/// connected components become clusters weighted by mean member score. A proposal
/// eligible for several classes joins the class where it scores highest.
PclClusters pcl_cluster(const ScoreMatrix &prev_scores, std::span<const ProposalBox> proposals,
                        const BagLabel &bag, double iou_cluster = kPclIouCluster);

// ---------------------------------------------------------------------------
// Score propagation

/// Row-normalizes a non-negative affinity; zero rows become identity rows.
AffinityMatrix normalize_affinity(const AffinityMatrix &affinity);

/// Temporal-proximity affinity over intervals:
/// A_ij = exp(-|c_i - c_j| / sigma) where the intervals overlap, 0 otherwise,
/// with sigma the median gap between consecutive sorted centers (1 if that is 0).
AffinityMatrix temporal_affinity(std::span<const Interval> intervals);

/// Runs S <- (1 - alpha) S0 + alpha * An * S for `steps` iterations, with An the
/// row-normalized affinity. Requires 0 <= alpha < 1.
ScoreMatrix rskp_propagate(const ScoreMatrix &s0, const AffinityMatrix &affinity, double alpha,
                           int steps);
ScoreMatrix rskp_propagate(const ScoreMatrix &s0, const Eigen::MatrixXd &affinity, double alpha,
                           int steps);

// ---------------------------------------------------------------------------
// Losses

struct ColaResult {
    double loss = 0.0;
    Eigen::VectorXd grad_anchor;
    Eigen::VectorXd grad_positive;
    std::vector<Eigen::VectorXd> grad_negatives;
};

double cosine_similarity(const Eigen::VectorXd &a, const Eigen::VectorXd &b);

/// InfoNCE over cosine similarities with temperature tau, with analytic gradients.
ColaResult cola_loss(const Eigen::VectorXd &anchor, const Eigen::VectorXd &positive,
                     std::span<const Eigen::VectorXd> negatives, double tau);

struct BceResult {
    double loss = 0.0;
    Eigen::VectorXd grad;
};

/// Mean binary cross-entropy over classes; pred must lie strictly inside (0, 1).
BceResult bce_bag_loss(const Eigen::VectorXd &pred, const BagLabel &y);

} // namespace wstal
