#include "wstal/trainer.hpp"

#include "wstal/milkern.hpp"
#include "wstal/random.hpp"

#include <algorithm>
#include <cmath>

namespace wstal {

namespace {

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd &x) {
    return x.unaryExpr([](double v) {
        if (v >= 0.0) {
            return 1.0 / (1.0 + std::exp(-v));
        }
        const double e = std::exp(v);
        return e / (1.0 + e);
    });
}

ToyModel zeros_like(const ToyModel &m) {
    ToyModel z;
    z.w_cls = Eigen::MatrixXd::Zero(m.w_cls.rows(), m.w_cls.cols());
    z.b_cls = Eigen::VectorXd::Zero(m.b_cls.size());
    z.w_att = Eigen::VectorXd::Zero(m.w_att.size());
    z.b_att = 0.0;
    return z;
}

} // namespace

ClipIndex make_clips(std::int64_t stream_frames, std::int64_t clip_len) {
    if (clip_len < 2) {
        throw Error("make_clips: clip length must be >= 2 frames");
    }
    if (stream_frames < clip_len) {
        throw Error("make_clips: stream shorter than one clip");
    }
    ClipIndex idx;
    idx.length = clip_len;
    idx.stride = std::llround(0.5 * static_cast<double>(clip_len));
    for (std::int64_t s = 0; s + clip_len <= stream_frames; s += idx.stride) {
        idx.clips.push_back({s, s + clip_len});
    }
    return idx;
}

Eigen::MatrixXd extract_features(const Eigen::MatrixXd &signal, int win) {
    if (win < 1 || win % 2 == 0) {
        throw Error("extract_features: window must be odd and >= 1");
    }
    const Eigen::Index channels = signal.rows();
    const Eigen::Index frames = signal.cols();
    const Eigen::Index half = win / 2;
    Eigen::MatrixXd out(frames, 3 * channels);
    for (Eigen::Index t = 0; t < frames; ++t) {
        const Eigen::Index lo = std::max<Eigen::Index>(0, t - half);
        const Eigen::Index hi = std::min<Eigen::Index>(frames, t + half + 1);
        const auto n = static_cast<double>(hi - lo);
        for (Eigen::Index s = 0; s < channels; ++s) {
            const auto w = signal.row(s).segment(lo, hi - lo);
            const double mean = w.sum() / n;
            const double var = (w.array() - mean).square().sum() / n;
            double deriv = 0.0;
            if (hi - lo > 1) {
                for (Eigen::Index k = lo + 1; k < hi; ++k) {
                    deriv += std::abs(signal(s, k) - signal(s, k - 1));
                }
                deriv /= static_cast<double>(hi - lo - 1);
            }
            out(t, s) = mean;
            out(t, channels + s) = std::sqrt(var);
            out(t, 2 * channels + s) = deriv;
        }
    }
    return out;
}

std::string to_string(Pooling p) {
    switch (p) {
    case Pooling::Attention:
        return "attention";
    case Pooling::Max:
        return "max";
    case Pooling::LinearSoftmax:
        return "linsoft";
    }
    return "attention";
}

Pooling pooling_from_string(const std::string &s) {
    if (s == "attention") {
        return Pooling::Attention;
    }
    if (s == "max") {
        return Pooling::Max;
    }
    if (s == "linsoft") {
        return Pooling::LinearSoftmax;
    }
    throw Error("unknown pooling '" + s + "' (expected attention, max or linsoft)");
}

bool ToyModel::operator==(const ToyModel &o) const {
    return w_cls == o.w_cls && b_cls == o.b_cls && w_att == o.w_att && b_att == o.b_att;
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) {
        throw Error("train: learning_rate must be positive");
    }
    if (epochs < 0) {
        throw Error("train: epochs must be non-negative");
    }
    if (!(weight_decay >= 0.0)) {
        throw Error("train: weight_decay must be non-negative");
    }
    if (!(lr_decay > 0.0) || lr_decay_every < 1) {
        throw Error("train: lr_decay must be positive and lr_decay_every >= 1");
    }
}

ToyModel init_model(Eigen::Index feature_dim, Eigen::Index num_classes, const TrainConfig &cfg) {
    Rng rng(derive_seed(cfg.seed, {0x6d6f64656cULL}));
    ToyModel m;
    m.w_cls.resize(feature_dim, num_classes);
    for (Eigen::Index c = 0; c < num_classes; ++c) {
        for (Eigen::Index d = 0; d < feature_dim; ++d) {
            m.w_cls(d, c) = cfg.init_scale * rng.normal();
        }
    }
    m.b_cls = Eigen::VectorXd::Zero(num_classes);
    m.w_att = Eigen::VectorXd::Zero(feature_dim);
    if (!cfg.freeze_attention) {
        for (Eigen::Index d = 0; d < feature_dim; ++d) {
            m.w_att(d) = cfg.init_scale * rng.normal();
        }
    }
    m.b_att = 0.0;
    return m;
}

Eigen::MatrixXd class_activation(const ToyModel &model, const Eigen::MatrixXd &features) {
    if (features.cols() != model.feature_dim()) {
        throw Error("feature dimension does not match the model");
    }
    Eigen::MatrixXd z = features * model.w_cls;
    z.rowwise() += model.b_cls.transpose();
    return sigmoid(z);
}

Eigen::VectorXd attention_weights(const ToyModel &model, const Eigen::MatrixXd &features) {
    Eigen::VectorXd u = features * model.w_att;
    u.array() += model.b_att;
    return sigmoid(u);
}

Eigen::VectorXd bag_prediction(const ToyModel &model, const Eigen::MatrixXd &features,
                               Pooling pooling) {
    const Eigen::MatrixXd p = class_activation(model, features);
    switch (pooling) {
    case Pooling::Attention:
        return attention_pool(p, attention_weights(model, features));
    case Pooling::Max:
        return max_pool(p);
    case Pooling::LinearSoftmax:
        return linear_softmax_pool(p);
    }
    return max_pool(p);
}

Objective mil_objective(const ToyModel &model, std::span<const TrainSample> samples,
                        const TrainConfig &cfg) {
    if (samples.empty()) {
        throw Error("train: empty training set");
    }
    Objective obj;
    obj.grad = zeros_like(model);
    const double inv_n = 1.0 / static_cast<double>(samples.size());
    const Eigen::Index classes = model.num_classes();

    for (const auto &sample : samples) {
        const Eigen::MatrixXd &f = sample.features;
        if (f.rows() == 0) {
            throw Error("train: empty training bag");
        }
        const Eigen::MatrixXd p = class_activation(model, f);
        Eigen::VectorXd bag;
        Eigen::VectorXd alpha;
        double alpha_sum = 0.0;
        switch (cfg.pooling) {
        case Pooling::Attention:
            alpha = attention_weights(model, f);
            alpha_sum = alpha.sum();
            bag = (p.transpose() * alpha) / alpha_sum;
            break;
        case Pooling::Max:
            bag = max_pool(p);
            break;
        case Pooling::LinearSoftmax:
            bag = linear_softmax_pool(p);
            break;
        }
        const Eigen::VectorXd clamped = bag.cwiseMax(kBagClampEps).cwiseMin(1.0 - kBagClampEps);
        const BceResult bce = bce_bag_loss(clamped, sample.bag);
        obj.loss += inv_n * bce.loss;

        Eigen::VectorXd g_bag = inv_n * bce.grad;
        for (Eigen::Index c = 0; c < classes; ++c) {
            if (bag(c) != clamped(c)) {
                g_bag(c) = 0.0;
            }
        }

        // dL/dp, then through the sigmoid.
        Eigen::MatrixXd g_p = Eigen::MatrixXd::Zero(p.rows(), p.cols());
        switch (cfg.pooling) {
        case Pooling::Attention:
            g_p = (alpha / alpha_sum) * g_bag.transpose();
            break;
        case Pooling::Max:
            for (Eigen::Index c = 0; c < classes; ++c) {
                Eigen::Index arg = 0;
                p.col(c).maxCoeff(&arg);
                g_p(arg, c) = g_bag(c);
            }
            break;
        case Pooling::LinearSoftmax:
            for (Eigen::Index c = 0; c < classes; ++c) {
                const double s = p.col(c).sum();
                if (s > 0.0) {
                    g_p.col(c) = g_bag(c) * (2.0 * p.col(c).array() - bag(c)).matrix() / s;
                }
            }
            break;
        }
        const Eigen::MatrixXd g_z = g_p.cwiseProduct(p.cwiseProduct((1.0 - p.array()).matrix()));
        obj.grad.w_cls += f.transpose() * g_z;
        obj.grad.b_cls += g_z.colwise().sum().transpose();

        if (cfg.pooling == Pooling::Attention && !cfg.freeze_attention) {
            // d bag_c / d alpha_t = (p_tc - bag_c) / sum(alpha)
            Eigen::MatrixXd centered = p;
            centered.rowwise() -= bag.transpose();
            const Eigen::VectorXd g_alpha = centered * g_bag / alpha_sum;
            const Eigen::VectorXd g_u =
                g_alpha.cwiseProduct(alpha.cwiseProduct((1.0 - alpha.array()).matrix()));
            obj.grad.w_att += f.transpose() * g_u;
            obj.grad.b_att += g_u.sum();
        }
    }

    const double wd = cfg.weight_decay;
    obj.loss += wd * (model.w_cls.squaredNorm() + model.b_cls.squaredNorm());
    obj.grad.w_cls += 2.0 * wd * model.w_cls;
    obj.grad.b_cls += 2.0 * wd * model.b_cls;
    if (!cfg.freeze_attention) {
        obj.loss += wd * (model.w_att.squaredNorm() + model.b_att * model.b_att);
        obj.grad.w_att += 2.0 * wd * model.w_att;
        obj.grad.b_att += 2.0 * wd * model.b_att;
    }
    if (cfg.freeze_attention || cfg.pooling != Pooling::Attention) {
        obj.grad.w_att.setZero();
        obj.grad.b_att = 0.0;
    }
    return obj;
}

TrainResult train_mil(std::span<const TrainSample> samples, const TrainConfig &cfg) {
    cfg.validate();
    if (samples.empty()) {
        throw Error("train: empty training set");
    }
    const Eigen::Index dim = samples.front().features.cols();
    const auto classes = static_cast<Eigen::Index>(samples.front().bag.y.size());
    for (const auto &s : samples) {
        if (s.features.cols() != dim || static_cast<Eigen::Index>(s.bag.y.size()) != classes) {
            throw Error("train: inconsistent feature dimension or class count across samples");
        }
    }
    TrainResult result;
    result.model = init_model(dim, classes, cfg);
    ToyModel &m = result.model;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.learning_rate * std::pow(cfg.lr_decay, epoch / cfg.lr_decay_every);
        const Objective obj = mil_objective(m, samples, cfg);
        result.loss_history.push_back(obj.loss);
        m.w_cls -= lr * obj.grad.w_cls;
        m.b_cls -= lr * obj.grad.b_cls;
        m.w_att -= lr * obj.grad.w_att;
        m.b_att -= lr * obj.grad.b_att;
    }
    result.loss_history.push_back(mil_objective(m, samples, cfg).loss);
    return result;
}

std::vector<TrainSample> make_clip_samples(const Eigen::MatrixXd &features,
                                           std::span<const Segment> gt, double fps,
                                           int num_classes, std::int64_t clip_len) {
    const auto frames = static_cast<std::int64_t>(features.rows());
    const double duration = static_cast<double>(frames) / fps;
    const auto labels = rasterize(gt, fps, duration);
    std::vector<TrainSample> out;
    const std::int64_t len = std::min(clip_len, frames);
    if (len < 2) {
        return out;
    }
    for (const auto &clip : make_clips(frames, len).clips) {
        TrainSample s;
        s.features = features.middleRows(clip.start, clip.end - clip.start);
        s.bag.y.assign(static_cast<std::size_t>(num_classes), 0);
        for (auto t = clip.start; t < clip.end && t < static_cast<std::int64_t>(labels.size()); ++t) {
            const int l = labels.labels[static_cast<std::size_t>(t)];
            if (l > 0 && l <= num_classes) {
                s.bag.y[static_cast<std::size_t>(l - 1)] = 1;
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::string to_string(InferMode m) { return m == InferMode::Full ? "full" : "window"; }

InferMode infer_mode_from_string(const std::string &s) {
    if (s == "full" || s == "full_input") {
        return InferMode::Full;
    }
    if (s == "window" || s == "window_input") {
        return InferMode::Window;
    }
    throw Error("unknown inference mode '" + s + "' (expected full or window)");
}

void InferConfig::validate() const {
    if (!(fps > 0.0)) {
        throw Error("infer: fps must be positive");
    }
    if (mode == InferMode::Window && window_len < 2) {
        throw Error("infer: window mode needs window_len >= 2 frames");
    }
    if (smooth < 1) {
        throw Error("infer: smoothing width must be >= 1");
    }
    if (rskp_radius < 0 || rskp_steps < 0) {
        throw Error("infer: propagation radius and steps must be non-negative");
    }
    nms.validate();
}

std::vector<Segment> cas_to_segments(const Eigen::MatrixXd &cas, double thresh, double fps,
                                     std::int64_t offset) {
    std::vector<Segment> out;
    const Eigen::Index frames = cas.rows();
    for (Eigen::Index c = 0; c < cas.cols(); ++c) {
        Eigen::Index t = 0;
        while (t < frames) {
            if (cas(t, c) < thresh) {
                ++t;
                continue;
            }
            const Eigen::Index start = t;
            double sum = 0.0;
            while (t < frames && cas(t, c) >= thresh) {
                sum += cas(t, c);
                ++t;
            }
            Segment seg;
            seg.class_id = static_cast<int>(c) + 1;
            seg.start = static_cast<double>(offset + start) / fps;
            seg.end = static_cast<double>(offset + t) / fps;
            seg.score = sum / static_cast<double>(t - start);
            out.push_back(seg);
        }
    }
    return out;
}

Eigen::MatrixXd smooth_rows(const Eigen::MatrixXd &values, int width) {
    if (width <= 1 || values.rows() == 0) {
        return values;
    }
    const Eigen::Index half = width / 2;
    const Eigen::Index n = values.rows();
    Eigen::MatrixXd out(values.rows(), values.cols());
    for (Eigen::Index t = 0; t < n; ++t) {
        const Eigen::Index lo = std::max<Eigen::Index>(0, t - half);
        const Eigen::Index hi = std::min<Eigen::Index>(n, t + half + 1);
        out.row(t) = values.middleRows(lo, hi - lo).colwise().mean();
    }
    return out;
}

Eigen::MatrixXd refine_cas(const Eigen::MatrixXd &cas, const InferConfig &cfg) {
    std::vector<Interval> context(static_cast<std::size_t>(cas.rows()));
    const auto r = static_cast<double>(cfg.rskp_radius);
    for (Eigen::Index t = 0; t < cas.rows(); ++t) {
        const auto ft = static_cast<double>(t);
        context[static_cast<std::size_t>(t)] = {ft - r, ft + r + 1.0};
    }
    return rskp_propagate(cas, temporal_affinity(context), cfg.rskp_alpha, cfg.rskp_steps);
}

std::vector<std::int64_t> window_starts(std::int64_t frames, std::int64_t window_len) {
    if (frames <= window_len) {
        return {0};
    }
    const std::int64_t stride = std::max<std::int64_t>(1, window_len / 2);
    std::vector<std::int64_t> starts;
    for (std::int64_t s = 0; s + window_len < frames; s += stride) {
        starts.push_back(s);
    }
    starts.push_back(frames - window_len);
    return starts;
}

std::vector<Segment> infer(const ToyModel &model, const Eigen::MatrixXd &features,
                           const InferConfig &cfg) {
    cfg.validate();
    const auto frames = static_cast<std::int64_t>(features.rows());
    auto segments_of = [&](std::int64_t start, std::int64_t len) {
        Eigen::MatrixXd cas = class_activation(model, features.middleRows(start, len));
        cas = smooth_rows(cas, cfg.smooth);
        if (cfg.refinement == Refinement::Rskp) {
            cas = refine_cas(cas, cfg);
        }
        return cas_to_segments(cas, cfg.thresh, cfg.fps, start);
    };

    std::vector<Segment> candidates;
    if (cfg.mode == InferMode::Full || frames <= cfg.window_len) {
        candidates = segments_of(0, frames);
    } else {
        for (auto start : window_starts(frames, cfg.window_len)) {
            auto part = segments_of(start, cfg.window_len);
            candidates.insert(candidates.end(), part.begin(), part.end());
        }
    }
    return temporal_nms(candidates, cfg.nms);
}

} // namespace wstal
