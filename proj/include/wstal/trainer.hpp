#pragma once

#include "wstal/core.hpp"
#include "wstal/postprocess.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace wstal {

struct Clip {
    std::int64_t start = 0;
    std::int64_t end = 0;
    bool operator==(const Clip &) const = default;
};

struct ClipIndex {
    std::vector<Clip> clips;
    std::int64_t length = 0;
    std::int64_t stride = 0;
};

/// Fixed-length clips of `clip_len` frames at stride round(clip_len / 2); a trailing
/// partial clip is dropped.
ClipIndex make_clips(std::int64_t stream_frames, std::int64_t clip_len);

/// Per-frame handcrafted features from an S x T signal: for each channel, the mean,
/// population standard deviation and mean absolute first difference over a centered
/// window of `win` frames (clamped at the edges). Returns T x 3S, channel-major
/// (mean of every channel, then std, then derivative).
Eigen::MatrixXd extract_features(const Eigen::MatrixXd &signal, int win);

enum class Pooling { Attention, Max, LinearSoftmax };

std::string to_string(Pooling p);
Pooling pooling_from_string(const std::string &s);

/// Linear instance classifier with a linear attention head.
struct ToyModel {
    Eigen::MatrixXd w_cls; ///< D x C
    Eigen::VectorXd b_cls; ///< C
    Eigen::VectorXd w_att; ///< D
    double b_att = 0.0;

    Eigen::Index feature_dim() const { return w_cls.rows(); }
    Eigen::Index num_classes() const { return w_cls.cols(); }
    bool operator==(const ToyModel &o) const;
};

struct TrainConfig {
    double learning_rate = 1e-4;
    double weight_decay = 1e-5;
    int epochs = 80;
    double lr_decay = 0.9;
    int lr_decay_every = 10;
    std::uint64_t seed = 2022;
    Pooling pooling = Pooling::Attention;
    /// Keeps attention at zero weights, i.e. uniform alpha = 0.5 on every frame.
    bool freeze_attention = false;
    double init_scale = 0.01;

    void validate() const;
};

/// One weakly labeled training bag.
struct TrainSample {
    Eigen::MatrixXd features; ///< T x D
    BagLabel bag;
};

ToyModel init_model(Eigen::Index feature_dim, Eigen::Index num_classes, const TrainConfig &cfg);

/// Frame class activation sequence, sigmoid(F W + b), T x C.
Eigen::MatrixXd class_activation(const ToyModel &model, const Eigen::MatrixXd &features);

/// Attention weights sigmoid(F w + b), length T.
Eigen::VectorXd attention_weights(const ToyModel &model, const Eigen::MatrixXd &features);

/// Bag prediction under the configured pooling, before clamping.
Eigen::VectorXd bag_prediction(const ToyModel &model, const Eigen::MatrixXd &features,
                               Pooling pooling);

struct Objective {
    double loss = 0.0;
    ToyModel grad;
};

/// Mean bag BCE over samples plus weight_decay * ||params||^2, with its gradient.
Objective mil_objective(const ToyModel &model, std::span<const TrainSample> samples,
                        const TrainConfig &cfg);

struct TrainResult {
    ToyModel model;
    std::vector<double> loss_history; ///< objective before each epoch's step, then final
};

/// Full-batch gradient descent on mil_objective with step decay.
TrainResult train_mil(std::span<const TrainSample> samples, const TrainConfig &cfg);

/// Cuts a stream into clips and labels each clip with the classes present in it.
std::vector<TrainSample> make_clip_samples(const Eigen::MatrixXd &features,
                                           std::span<const Segment> gt, double fps,
                                           int num_classes, std::int64_t clip_len);

enum class InferMode { Full, Window };

std::string to_string(InferMode m);
InferMode infer_mode_from_string(const std::string &s);

enum class Refinement { None, Rskp };

struct InferConfig {
    InferMode mode = InferMode::Full;
    std::int64_t window_len = 0; ///< frames, window mode only
    double fps = 1.0;
    double thresh = 0.5;
    int smooth = 1; ///< centered moving-average width over the CAS, 1 = off
    Refinement refinement = Refinement::None;
    double rskp_alpha = 0.5;
    int rskp_steps = 20;
    int rskp_radius = 2; ///< frame context half-width used to build the affinity
    NmsConfig nms;

    void validate() const;
};

/// Maximal runs with cas(t, c) >= thresh become segments scored by their mean CAS,
/// with times (offset + frame) / fps.
std::vector<Segment> cas_to_segments(const Eigen::MatrixXd &cas, double thresh, double fps,
                                     std::int64_t offset = 0);

/// Centered moving average over rows with clamped edges.
Eigen::MatrixXd smooth_rows(const Eigen::MatrixXd &values, int width);

/// Frame CAS refined by score propagation over a temporal-proximity affinity.
Eigen::MatrixXd refine_cas(const Eigen::MatrixXd &cas, const InferConfig &cfg);

/// Window start frames for window inference: stride window_len / 2, last window flush
/// with the stream end. A stream no longer than the window gives one window.
std::vector<std::int64_t> window_starts(std::int64_t frames, std::int64_t window_len);

std::vector<Segment> infer(const ToyModel &model, const Eigen::MatrixXd &features,
                           const InferConfig &cfg);

} // namespace wstal
