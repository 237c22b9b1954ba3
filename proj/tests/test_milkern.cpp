#include "oracles.hpp"
#include "wstal/milkern.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace wstal;

namespace {

BagLabel bag_of(std::vector<int> y) { return BagLabel{std::move(y)}; }

Eigen::MatrixXd closed_form(const Eigen::MatrixXd &a, const Eigen::MatrixXd &s0, double alpha) {
    const auto n = a.rows();
    const Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n) - alpha * a;
    return (1.0 - alpha) * m.partialPivLu().solve(s0);
}

} // namespace

// ---------------------------------------------------------------------------
// Pooling

TEST_CASE("attention pooling examples") {
    Eigen::MatrixXd p(2, 1);
    p << 0.2, 0.8;
    CHECK(attention_pool(p, Eigen::Vector2d(1, 1))(0) == doctest::Approx(0.5).epsilon(1e-15));

    Eigen::MatrixXd q(3, 2);
    q << 0.1, 0.2, 0.3, 0.4, 0.5, 0.6;
    const auto sel = attention_pool(q, Eigen::Vector3d(0, 1, 0));
    CHECK(sel(0) == 0.3);
    CHECK(sel(1) == 0.4);

    Eigen::MatrixXd r(2, 2);
    r << 1, 0, 0, 1;
    const auto w = attention_pool(r, Eigen::Vector2d(3, 1));
    CHECK(w(0) == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(w(1) == doctest::Approx(0.25).epsilon(1e-15));

    CHECK_THROWS_AS(attention_pool(r, Eigen::Vector2d(0, 0)), Error);
    CHECK_THROWS_AS(attention_pool(r, Eigen::Vector2d(-1, 2)), Error);
    CHECK_THROWS_AS(attention_pool(r, Eigen::Vector3d(1, 1, 1)), Error);
}

TEST_CASE("attention pooling is invariant to positive rescaling of alpha") {
    Rng rng(1);
    for (int i = 0; i < 50; ++i) {
        Eigen::MatrixXd p = Eigen::MatrixXd::NullaryExpr(6, 3, [&] { return rng.uniform01(); });
        Eigen::VectorXd a = oracle::random_vector(rng, 6, 0.01, 1.0);
        const double k = rng.uniform(0.1, 100.0);
        CHECK((attention_pool(p, k * a) - attention_pool(p, a)).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("max and linear-softmax pooling") {
    Eigen::MatrixXd p(2, 1);
    p << 0.2, 0.8;
    CHECK(max_pool(p)(0) == 0.8);
    CHECK(linear_softmax_pool(p)(0) == doctest::Approx(0.68).epsilon(1e-15));

    Eigen::MatrixXd c = Eigen::MatrixXd::Constant(5, 1, 0.37);
    CHECK(max_pool(c)(0) == 0.37);
    CHECK(linear_softmax_pool(c)(0) == doctest::Approx(0.37).epsilon(1e-15));

    Eigen::MatrixXd z = Eigen::MatrixXd::Zero(4, 2);
    CHECK(max_pool(z).isZero());
    CHECK(linear_softmax_pool(z).isZero());
}

// ---------------------------------------------------------------------------
// WSDDN

TEST_CASE("wsddn single proposal") {
    Eigen::MatrixXd cls(1, 3), det(1, 3);
    cls << 0.5, -1.0, 2.0;
    det << 3.0, 1.0, -2.0;
    const auto o = wsddn_score(cls, det);
    CHECK(o.det.isOnes());
    CHECK((o.bag_raw - o.cls.row(0).transpose()).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(o.bag_raw.sum() == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("wsddn symmetric logits") {
    const Eigen::MatrixXd z = Eigen::MatrixXd::Zero(4, 2);
    const auto o = wsddn_score(z, z);
    CHECK((o.scores.array() - 0.125).abs().maxCoeff() < 1e-15);
    CHECK((o.bag.array() - 0.5).abs().maxCoeff() < 1e-15);
}

TEST_CASE("wsddn column softmax sums to one and bounds the bag") {
    Rng rng(2);
    for (int i = 0; i < 50; ++i) {
        const int l = 1 + static_cast<int>(rng.below(10));
        Eigen::MatrixXd cls = Eigen::MatrixXd::NullaryExpr(l, 3, [&] { return rng.uniform(-5, 5); });
        Eigen::MatrixXd det = Eigen::MatrixXd::NullaryExpr(l, 3, [&] { return rng.uniform(-5, 5); });
        const auto o = wsddn_score(cls, det);
        for (int c = 0; c < 3; ++c) {
            CHECK(o.det.col(c).sum() == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(o.bag_raw(c) <= o.cls.col(c).maxCoeff() + 1e-15);
            CHECK(o.bag(c) >= kBagClampEps);
            CHECK(o.bag(c) <= 1.0 - kBagClampEps);
        }
    }
    CHECK_THROWS_AS(wsddn_score(Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(3, 2)), Error);
}

// ---------------------------------------------------------------------------
// OICR / PCL

TEST_CASE("oicr examples") {
    const std::vector<ProposalBox> one{{0, 10}};
    Eigen::MatrixXd s1(1, 2);
    s1 << 0.3, 0.7;
    const auto a = oicr_refine(s1, one, bag_of({0, 1}));
    CHECK(a.assignments == std::vector<int>{2});
    CHECK(a.weights[0] == 0.7);

    const std::vector<ProposalBox> two{{0, 10}, {20, 30}};
    Eigen::MatrixXd s2(2, 1);
    s2 << 0.4, 0.9;
    const auto b = oicr_refine(s2, two, bag_of({1}));
    CHECK(b.assignments == std::vector<int>{0, 1});
    CHECK(b.weights[0] == 1.0);

    const auto c = oicr_refine(s2, two, bag_of({0}));
    CHECK(c.assignments == std::vector<int>{0, 0});
    CHECK(c.weights == std::vector<double>{1.0, 1.0});
}

TEST_CASE("oicr labels only positive classes") {
    Rng rng(4);
    for (int i = 0; i < 100; ++i) {
        const int n = 1 + static_cast<int>(rng.below(12));
        std::vector<ProposalBox> props;
        for (int k = 0; k < n; ++k) {
            const auto s = static_cast<std::int64_t>(rng.below(50));
            props.push_back({s, s + 1 + static_cast<std::int64_t>(rng.below(20))});
        }
        Eigen::MatrixXd sc = Eigen::MatrixXd::NullaryExpr(n, 4, [&] { return rng.uniform01(); });
        BagLabel y{{0, 0, 0, 0}};
        for (auto &v : y.y) v = static_cast<int>(rng.below(2));
        const auto out = oicr_refine(sc, props, y);
        for (int k = 0; k < n; ++k) {
            const int a = out.assignments[static_cast<std::size_t>(k)];
            if (a != 0) CHECK(y.has(a));
            CHECK(out.weights[static_cast<std::size_t>(k)] >= 0.0);
            CHECK(out.weights[static_cast<std::size_t>(k)] <= 1.0);
        }
    }
}

TEST_CASE("pcl clustering") {
    // Three mutually overlapping high scorers plus low scorers far away.
    const std::vector<ProposalBox> props{{0, 10}, {1, 11}, {2, 12}, {50, 60}, {70, 80}, {90, 95}};
    Eigen::MatrixXd s(6, 1);
    s << 0.9, 0.8, 0.85, 0.1, 0.2, 0.15;
    const auto out = pcl_cluster(s, props, bag_of({1}));
    REQUIRE(out.clusters.size() == 1);
    CHECK(out.clusters[0] == std::vector<int>{0, 1, 2});
    CHECK(out.cluster_class[0] == 1);
    CHECK(out.cluster_weight[0] == doctest::Approx((0.9 + 0.8 + 0.85) / 3.0));

    // Constant scores: nothing is strictly above the median.
    const Eigen::MatrixXd flat = Eigen::MatrixXd::Constant(6, 1, 0.5);
    const auto none = pcl_cluster(flat, props, bag_of({1}));
    CHECK(none.clusters.empty());
    CHECK(none.labels.assignments == std::vector<int>(6, 0));

    // Two disjoint high scorers.
    const std::vector<ProposalBox> dis{{0, 10}, {20, 30}, {40, 45}, {60, 65}};
    Eigen::MatrixXd d(4, 1);
    d << 0.9, 0.8, 0.1, 0.2;
    const auto two = pcl_cluster(d, dis, bag_of({1}));
    REQUIRE(two.clusters.size() == 2);
    CHECK(two.clusters[0].size() == 1);
    CHECK(two.clusters[1].size() == 1);
}

TEST_CASE("pcl gives each proposal to at most one cluster") {
    Rng rng(8);
    for (int i = 0; i < 50; ++i) {
        const int n = 2 + static_cast<int>(rng.below(15));
        std::vector<ProposalBox> props;
        for (int k = 0; k < n; ++k) {
            const auto s = static_cast<std::int64_t>(rng.below(40));
            props.push_back({s, s + 1 + static_cast<std::int64_t>(rng.below(15))});
        }
        Eigen::MatrixXd sc = Eigen::MatrixXd::NullaryExpr(n, 3, [&] { return rng.uniform01(); });
        const auto out = pcl_cluster(sc, props, bag_of({1, 0, 1}));
        std::vector<int> seen(static_cast<std::size_t>(n), 0);
        for (std::size_t c = 0; c < out.clusters.size(); ++c) {
            CHECK(out.cluster_class[c] != 2);
            for (int m : out.clusters[c]) ++seen[static_cast<std::size_t>(m)];
        }
        for (int v : seen) CHECK(v <= 1);
    }
}

// ---------------------------------------------------------------------------
// Propagation

TEST_CASE("rskp trivial cases") {
    Rng rng(5);
    const Eigen::MatrixXd s0 = Eigen::MatrixXd::NullaryExpr(6, 2, [&] { return rng.uniform01(); });
    const Eigen::MatrixXd a = oracle::random_row_stochastic(rng, 6);
    CHECK(rskp_propagate(s0, a, 0.0, 7) == s0);
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(6, 6);
    CHECK((rskp_propagate(s0, id, 0.5, 30) - s0).cwiseAbs().maxCoeff() < 1e-15);
    CHECK_THROWS_AS(rskp_propagate(s0, a, 1.0, 3), Error);
    CHECK_THROWS_AS(rskp_propagate(s0, a, -0.1, 3), Error);
    CHECK_THROWS_AS(rskp_propagate(s0, Eigen::MatrixXd::Identity(5, 5), 0.5, 3), Error);
}

TEST_CASE("rskp matches the closed-form fixed point") {
    Rng rng(6);
    for (int i = 0; i < 20; ++i) {
        const int p = 2 + static_cast<int>(rng.below(19));
        const Eigen::MatrixXd a = oracle::random_row_stochastic(rng, p);
        const Eigen::MatrixXd s0 = Eigen::MatrixXd::NullaryExpr(p, 3, [&] { return rng.uniform01(); });
        const auto got = rskp_propagate(s0, a, 0.5, 100);
        CHECK((got - closed_form(a, s0, 0.5)).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("rskp never grows the max norm and contracts toward the fixed point") {
    Rng rng(12);
    for (int i = 0; i < 20; ++i) {
        const int p = 3 + static_cast<int>(rng.below(10));
        const Eigen::MatrixXd a = oracle::random_row_stochastic(rng, p);
        const Eigen::MatrixXd s0 = Eigen::MatrixXd::NullaryExpr(p, 2, [&] { return rng.uniform(-1, 1); });
        const auto fixed = closed_form(a, s0, 0.5);
        double prev_err = (s0 - fixed).cwiseAbs().maxCoeff();
        for (int t = 1; t <= 10; ++t) {
            const auto s = rskp_propagate(s0, a, 0.5, t);
            CHECK(s.cwiseAbs().maxCoeff() <= s0.cwiseAbs().maxCoeff() + 1e-12);
            const double err = (s - fixed).cwiseAbs().maxCoeff();
            CHECK(err <= 0.5 * prev_err + 1e-12);
            prev_err = err;
        }
    }
}

TEST_CASE("normalize_affinity") {
    Eigen::MatrixXd a(3, 3);
    a << 1, 3, 0, 0, 0, 0, 2, 2, 4;
    const Eigen::MatrixXd n = Eigen::MatrixXd(normalize_affinity(a.sparseView()));
    CHECK(n(0, 0) == 0.25);
    CHECK(n(0, 1) == 0.75);
    CHECK(n(1, 1) == 1.0);
    CHECK(n.row(1).sum() == 1.0);
    CHECK(n(2, 2) == 0.5);
    Eigen::MatrixXd neg = Eigen::MatrixXd::Identity(2, 2);
    neg(0, 1) = -1;
    CHECK_THROWS_AS(normalize_affinity(neg.sparseView()), Error);
}

TEST_CASE("temporal_affinity") {
    const std::vector<Interval> iv{{0, 4}, {2, 6}, {10, 12}};
    const Eigen::MatrixXd a = Eigen::MatrixXd(temporal_affinity(iv));
    // Centers 2, 4, 11; gaps 2 and 7, median 4.5.
    CHECK(a(0, 0) == 1.0);
    CHECK(a(0, 1) == doctest::Approx(std::exp(-2.0 / 4.5)).epsilon(1e-15));
    CHECK(a(1, 0) == a(0, 1));
    CHECK(a(0, 2) == 0.0);
    CHECK(a(1, 2) == 0.0);
    // Touching intervals do not overlap.
    const std::vector<Interval> touch{{0, 1}, {1, 2}};
    CHECK(Eigen::MatrixXd(temporal_affinity(touch))(0, 1) == 0.0);
}

// ---------------------------------------------------------------------------
// Losses

TEST_CASE("cola loss values") {
    const Eigen::Vector3d anchor(1, 0, 0);
    const std::vector<Eigen::VectorXd> orth{Eigen::Vector3d(0, 1, 0)};
    const auto r = cola_loss(anchor, anchor, orth, 1.0);
    CHECK(r.loss == doctest::Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-14));
    CHECK(r.loss == doctest::Approx(0.3133).epsilon(1e-4));

    // Equal similarities: the positive and every negative equal the anchor direction.
    for (int n : {1, 3, 8}) {
        std::vector<Eigen::VectorXd> neg(static_cast<std::size_t>(n), Eigen::Vector3d(2, 1, 1));
        const auto e = cola_loss(Eigen::Vector3d(1, 0.5, 0.5), Eigen::Vector3d(4, 2, 2), neg, 0.1);
        CHECK(std::abs(e.loss - std::log(1.0 + n)) < 1e-12);
    }
}

TEST_CASE("cola loss is scale invariant and validates input") {
    Rng rng(13);
    const auto a = oracle::random_vector(rng, 5);
    const auto p = oracle::random_vector(rng, 5);
    const std::vector<Eigen::VectorXd> n{oracle::random_vector(rng, 5), oracle::random_vector(rng, 5)};
    const std::vector<Eigen::VectorXd> n2{3.0 * n[0], 0.2 * n[1]};
    CHECK(cola_loss(7.0 * a, 0.5 * p, n2, 0.3).loss ==
          doctest::Approx(cola_loss(a, p, n, 0.3).loss).epsilon(1e-12));
    CHECK_THROWS_AS(cola_loss(Eigen::VectorXd::Zero(5), p, n, 0.3), Error);
    CHECK_THROWS_AS(cola_loss(a, p, n, 0.0), Error);
}

TEST_CASE("cola gradients match central differences") {
    Rng rng(14);
    const double h = 1e-5;
    for (int trial = 0; trial < 20; ++trial) {
        const int d = 2 + static_cast<int>(rng.below(6));
        const int k = 1 + static_cast<int>(rng.below(4));
        const double tau = rng.uniform(0.1, 1.0);
        Eigen::VectorXd a = oracle::random_vector(rng, d);
        Eigen::VectorXd p = oracle::random_vector(rng, d);
        std::vector<Eigen::VectorXd> n;
        for (int i = 0; i < k; ++i) n.push_back(oracle::random_vector(rng, d));
        const auto r = cola_loss(a, p, n, tau);

        auto fd = [&](Eigen::VectorXd &v) {
            Eigen::VectorXd g(v.size());
            for (Eigen::Index i = 0; i < v.size(); ++i) {
                const double old = v(i);
                v(i) = old + h;
                const double up = cola_loss(a, p, n, tau).loss;
                v(i) = old - h;
                const double dn = cola_loss(a, p, n, tau).loss;
                v(i) = old;
                g(i) = (up - dn) / (2 * h);
            }
            return g;
        };
        // Compared over all inputs at once: a negative with negligible softmax weight has a
        // gradient below the finite-difference noise floor on its own.
        std::vector<Eigen::VectorXd> analytic{r.grad_anchor, r.grad_positive};
        std::vector<Eigen::VectorXd> numeric{fd(a), fd(p)};
        for (int i = 0; i < k; ++i) {
            analytic.push_back(r.grad_negatives[static_cast<std::size_t>(i)]);
            numeric.push_back(fd(n[static_cast<std::size_t>(i)]));
        }
        CHECK(oracle::rel_err(oracle::stack(analytic), oracle::stack(numeric)) < 1e-4);
    }
}

TEST_CASE("bce values") {
    const auto half = bce_bag_loss(Eigen::Vector3d(0.5, 0.5, 0.5), bag_of({1, 0, 1}));
    CHECK(half.loss == doctest::Approx(std::numbers::ln2).epsilon(1e-15));
    const double hi = 1.0 - kBagClampEps;
    const auto good = bce_bag_loss(Eigen::Vector2d(hi, kBagClampEps), bag_of({1, 0}));
    CHECK(good.loss < 2e-6);
    CHECK_THROWS_AS(bce_bag_loss(Eigen::Vector2d(1.0, 0.5), bag_of({1, 0})), Error);
    CHECK_THROWS_AS(bce_bag_loss(Eigen::Vector2d(0.0, 0.5), bag_of({1, 0})), Error);
    CHECK_THROWS_AS(bce_bag_loss(Eigen::Vector2d(0.3, 0.5), bag_of({1})), Error);
}

TEST_CASE("bce gradient matches central differences") {
    Rng rng(15);
    const double h = 1e-6;
    for (int trial = 0; trial < 50; ++trial) {
        const int c = 1 + static_cast<int>(rng.below(8));
        Eigen::VectorXd p = oracle::random_vector(rng, c, 0.05, 0.95);
        BagLabel y{std::vector<int>(static_cast<std::size_t>(c))};
        for (auto &v : y.y) v = static_cast<int>(rng.below(2));
        const auto r = bce_bag_loss(p, y);
        Eigen::VectorXd g(c);
        for (int i = 0; i < c; ++i) {
            const double old = p(i);
            p(i) = old + h;
            const double up = bce_bag_loss(p, y).loss;
            p(i) = old - h;
            const double dn = bce_bag_loss(p, y).loss;
            p(i) = old;
            g(i) = (up - dn) / (2 * h);
        }
        CHECK(oracle::rel_err(r.grad, g) < 1e-6);
    }
}
