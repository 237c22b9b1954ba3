#include "oracles.hpp"
#include "wstal/synth.hpp"
#include "wstal/trainer.hpp"

#include <doctest.h>

#include <cmath>

using namespace wstal;

namespace {

// Flat view over every trainable parameter of a model.
double &param(ToyModel &m, Eigen::Index i) {
    const Eigen::Index nw = m.w_cls.size();
    const Eigen::Index nb = m.b_cls.size();
    const Eigen::Index na = m.w_att.size();
    if (i < nw) return m.w_cls.data()[i];
    if (i < nw + nb) return m.b_cls(i - nw);
    if (i < nw + nb + na) return m.w_att(i - nw - nb);
    return m.b_att;
}

Eigen::Index param_count(const ToyModel &m) {
    return m.w_cls.size() + m.b_cls.size() + m.w_att.size() + 1;
}

Eigen::VectorXd flat(const ToyModel &m) {
    ToyModel copy = m;
    Eigen::VectorXd v(param_count(m));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = param(copy, i);
    return v;
}

std::vector<TrainSample> random_samples(Rng &rng, int n, int dim, int classes) {
    std::vector<TrainSample> out;
    for (int i = 0; i < n; ++i) {
        TrainSample s;
        const int t = 5 + static_cast<int>(rng.below(20));
        s.features = Eigen::MatrixXd::NullaryExpr(t, dim, [&] { return rng.uniform(-2, 2); });
        s.bag.y.resize(static_cast<std::size_t>(classes));
        for (auto &v : s.bag.y) v = static_cast<int>(rng.below(2));
        out.push_back(std::move(s));
    }
    return out;
}

// One-feature model whose CAS is 0.9 where x = 1 and 0.1 where x = 0.
ToyModel indicator_model() {
    ToyModel m;
    const double l9 = std::log(9.0);
    m.w_cls = Eigen::MatrixXd::Constant(1, 1, 2.0 * l9);
    m.b_cls = Eigen::VectorXd::Constant(1, -l9);
    m.w_att = Eigen::VectorXd::Zero(1);
    return m;
}

} // namespace

// ---------------------------------------------------------------------------
// Clips and features

TEST_CASE("make_clips examples") {
    const auto a = make_clips(100, 40);
    CHECK(a.stride == 20);
    CHECK(a.clips == std::vector<Clip>{{0, 40}, {20, 60}, {40, 80}, {60, 100}});
    CHECK(make_clips(40, 40).clips.size() == 1);
    const auto b = make_clips(99, 40);
    CHECK(b.clips == std::vector<Clip>{{0, 40}, {20, 60}, {40, 80}});
    CHECK_THROWS_AS(make_clips(30, 40), Error);
}

TEST_CASE("make_clips coverage") {
    for (std::int64_t w : {4, 10, 40}) {
        for (std::int64_t t = w; t < 5 * w; t += 3) {
            const auto idx = make_clips(t, w);
            std::vector<int> cover(static_cast<std::size_t>(t), 0);
            for (const auto &c : idx.clips)
                for (auto f = c.start; f < c.end; ++f) ++cover[static_cast<std::size_t>(f)];
            const auto last = idx.clips.back().end;
            CHECK(t - last < w / 2 + 1);
            for (auto f = idx.stride; f < last - idx.stride; ++f) {
                CHECK(cover[static_cast<std::size_t>(f)] == 2);
            }
        }
    }
}

TEST_CASE("extract_features on constant, identity-window and ramp signals") {
    const Eigen::MatrixXd flatsig = Eigen::MatrixXd::Constant(2, 10, 3.5);
    const auto f = extract_features(flatsig, 5);
    CHECK(f.rows() == 10);
    CHECK(f.cols() == 6);
    CHECK((f.leftCols(2).array() == 3.5).all());
    CHECK(f.rightCols(4).cwiseAbs().maxCoeff() == 0.0);

    Rng rng(41);
    const Eigen::MatrixXd noise = Eigen::MatrixXd::NullaryExpr(3, 12, [&] { return rng.normal(); });
    const auto g = extract_features(noise, 1);
    CHECK(g.leftCols(3) == noise.transpose());
    CHECK(g.middleCols(3, 3).cwiseAbs().maxCoeff() == 0.0);

    Eigen::MatrixXd ramp(1, 20);
    for (int t = 0; t < 20; ++t) ramp(0, t) = t;
    const auto r = extract_features(ramp, 3);
    for (int t = 1; t < 19; ++t) {
        CHECK(r(t, 0) == doctest::Approx(t).epsilon(1e-14));
        CHECK(r(t, 1) == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-14));
        CHECK(r(t, 2) == doctest::Approx(1.0).epsilon(1e-14));
    }
    CHECK_THROWS_AS(extract_features(ramp, 2), Error);
}

// ---------------------------------------------------------------------------
// Training

TEST_CASE("pooling names") {
    for (auto p : {Pooling::Attention, Pooling::Max, Pooling::LinearSoftmax}) {
        CHECK(pooling_from_string(to_string(p)) == p);
    }
    CHECK_THROWS_AS(pooling_from_string("mean"), Error);
}

TEST_CASE("zero epochs returns the seeded initialization") {
    Rng rng(42);
    const auto samples = random_samples(rng, 3, 4, 2);
    TrainConfig cfg;
    cfg.epochs = 0;
    const auto r = train_mil(samples, cfg);
    CHECK(r.model == init_model(4, 2, cfg));
    CHECK(r.loss_history.size() == 1);
    CHECK_THROWS_AS(train_mil(std::vector<TrainSample>{}, cfg), Error);
}

TEST_CASE("objective gradient matches central differences at init") {
    Rng rng(43);
    const auto samples = random_samples(rng, 4, 3, 2);
    for (auto pooling : {Pooling::Attention, Pooling::Max, Pooling::LinearSoftmax}) {
        TrainConfig cfg;
        cfg.pooling = pooling;
        cfg.init_scale = 0.5;
        cfg.weight_decay = 1e-3;
        ToyModel m = init_model(3, 2, cfg);
        m.b_att = 0.3;
        const auto obj = mil_objective(m, samples, cfg);
        const auto analytic = flat(obj.grad);
        Eigen::VectorXd numeric(analytic.size());
        const double h = 1e-6;
        for (Eigen::Index i = 0; i < numeric.size(); ++i) {
            const double old = param(m, i);
            param(m, i) = old + h;
            const double up = mil_objective(m, samples, cfg).loss;
            param(m, i) = old - h;
            const double dn = mil_objective(m, samples, cfg).loss;
            param(m, i) = old;
            numeric(i) = (up - dn) / (2 * h);
        }
        if (pooling != Pooling::Attention) {
            // The attention head does not enter the bag; only its weight decay does.
            numeric.tail(4).setZero();
        }
        CHECK(oracle::rel_err(analytic, numeric) < 1e-4);
    }
}

TEST_CASE("training on a negative bag drives the prediction down") {
    SynthConfig sc;
    sc.duration = 60;
    const auto stream = gen_stream(sc);
    std::vector<TrainSample> samples{{stream.features, BagLabel{{0, 0, 0}}}};
    TrainConfig cfg;
    cfg.learning_rate = 5.0;
    cfg.epochs = 200;
    const auto r = train_mil(samples, cfg);
    const auto bag = bag_prediction(r.model, stream.features, cfg.pooling);
    CHECK(bag.maxCoeff() <= 0.1);
}

TEST_CASE("frozen attention, single class: loss decreases monotonically at lr 1e-3") {
    SynthConfig sc;
    sc.num_classes = 1;
    sc.feature_dim = 3;
    sc.duration = 120;
    const auto stream = gen_stream(sc);
    const auto samples = make_clip_samples(stream.features, stream.record.gt, sc.fps, 1, 100);
    TrainConfig cfg;
    cfg.learning_rate = 1e-3;
    cfg.epochs = 60;
    cfg.freeze_attention = true;
    const auto r = train_mil(samples, cfg);
    for (std::size_t i = 1; i < r.loss_history.size(); ++i) {
        CHECK(r.loss_history[i] <= r.loss_history[i - 1]);
    }
    CHECK(r.loss_history.back() < r.loss_history.front());
    CHECK(r.model.w_att.isZero());
}

TEST_CASE("training is deterministic") {
    Rng rng(44);
    const auto samples = random_samples(rng, 5, 4, 3);
    TrainConfig cfg;
    cfg.learning_rate = 1.0;
    cfg.epochs = 20;
    const auto a = train_mil(samples, cfg);
    const auto b = train_mil(samples, cfg);
    CHECK(a.model == b.model);
    CHECK(a.loss_history == b.loss_history);
}

TEST_CASE("clip samples carry the classes present in each clip") {
    const Eigen::MatrixXd f = Eigen::MatrixXd::Zero(40, 2);
    const std::vector<Segment> gt{{1, 0.5, 1.0, std::nullopt}, {2, 3.0, 3.5, std::nullopt}};
    const auto s = make_clip_samples(f, gt, 10.0, 2, 20);
    REQUIRE(s.size() == 3);
    CHECK(s[0].bag.y == std::vector<int>{1, 0});
    // Frames [10, 30): the second segment starts exactly at frame 30.
    CHECK(s[1].bag.y == std::vector<int>{0, 0});
    CHECK(s[2].bag.y == std::vector<int>{0, 1});
}

// ---------------------------------------------------------------------------
// Inference

TEST_CASE("cas_to_segments") {
    const Eigen::MatrixXd on = Eigen::MatrixXd::Constant(50, 1, 0.9);
    const auto a = cas_to_segments(on, 0.5, 10.0);
    REQUIRE(a.size() == 1);
    CHECK(a[0].start == 0.0);
    CHECK(a[0].end == 5.0);
    CHECK(*a[0].score == doctest::Approx(0.9));
    CHECK(cas_to_segments(Eigen::MatrixXd::Constant(50, 2, 0.2), 0.5, 10.0).empty());
}

TEST_CASE("window_starts") {
    CHECK(window_starts(100, 40) == std::vector<std::int64_t>{0, 20, 40, 60});
    CHECK(window_starts(110, 40) == std::vector<std::int64_t>{0, 20, 40, 60, 70});
    CHECK(window_starts(30, 40) == std::vector<std::int64_t>{0});
}

TEST_CASE("infer: full and window modes agree on two runs") {
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(60, 1);
    x.middleRows(10, 10).setOnes();
    x.middleRows(30, 10).setOnes();
    const auto m = indicator_model();
    InferConfig full;
    full.fps = 10.0;
    const auto a = infer(m, x, full);
    REQUIRE(a.size() == 2);
    CHECK(a[0].start == 1.0);
    CHECK(a[0].end == 2.0);
    CHECK(a[1].start == 3.0);
    CHECK(a[1].end == 4.0);

    InferConfig win = full;
    win.mode = InferMode::Window;
    win.window_len = 40;
    CHECK(infer(m, x, win) == a);

    // A window longer than the stream behaves as full mode.
    win.window_len = 100;
    CHECK(infer(m, x, win) == a);
}

TEST_CASE("infer output runs never overlap within a class") {
    SynthConfig sc;
    sc.duration = 100;
    const auto stream = gen_stream(sc);
    const auto model = init_model(sc.feature_dim, sc.num_classes, TrainConfig{});
    InferConfig cfg;
    cfg.fps = sc.fps;
    cfg.thresh = 0.5;
    const auto segs = infer(model, stream.features, cfg);
    for (std::size_t i = 0; i < segs.size(); ++i)
        for (std::size_t j = i + 1; j < segs.size(); ++j)
            if (segs[i].class_id == segs[j].class_id)
                CHECK(intersection(segs[i].interval(), segs[j].interval()) == 0.0);
}

TEST_CASE("smoothing and refinement") {
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(5, 1);
    v(2, 0) = 3.0;
    CHECK(smooth_rows(v, 1) == v);
    const auto s = smooth_rows(v, 3);
    CHECK(s(1, 0) == 1.0);
    CHECK(s(2, 0) == 1.0);
    CHECK(s(0, 0) == 0.0);

    InferConfig cfg;
    const Eigen::MatrixXd flatcas = Eigen::MatrixXd::Constant(30, 2, 0.7);
    CHECK((refine_cas(flatcas, cfg).array() - 0.7).abs().maxCoeff() < 1e-12);

    cfg.smooth = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("inference mode names") {
    CHECK(infer_mode_from_string("full") == InferMode::Full);
    CHECK(infer_mode_from_string("window_input") == InferMode::Window);
    CHECK_THROWS_AS(infer_mode_from_string("batch"), Error);
}
