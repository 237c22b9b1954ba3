#include "wstal/core.hpp"
#include "wstal/proposals.hpp"

#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

using namespace wstal;

namespace {

void check_in_bounds(const ProposalSet &s) {
    for (const auto &b : s.boxes) {
        REQUIRE(b.start >= 0);
        REQUIRE(b.start < b.end);
        REQUIRE(b.end <= s.feature_len);
    }
}

} // namespace

TEST_CASE("shipped defaults") {
    const ProposalConfig cfg;
    CHECK(cfg.feature_len == 1000);
    CHECK(cfg.count == 3000);
    CHECK(cfg.fixed_keep_ratio == 0.7);
    CHECK(cfg.seed == 2022);
    const auto s = generate_proposals(cfg);
    CHECK(s.size() == 3000);
    CHECK_FALSE(s.fallback);
    CHECK(std::llabs(s.num_structured - 2100) <= 1);
    check_in_bounds(s);
}

TEST_CASE("short feature axis: 3000 boxes, 70/30 split") {
    ProposalConfig cfg;
    cfg.feature_len = 100;
    const auto s = generate_proposals(cfg);
    CHECK(s.size() == 3000);
    CHECK(s.num_structured == 2100);
    check_in_bounds(s);
    // r_f = 100 / 5000, so a scale of k seconds is k frames long.
    CHECK(feature_ratio(cfg) == doctest::Approx(0.02));
    const auto lo = std::llround(cfg.min_sec * cfg.fps * feature_ratio(cfg));
    const auto hi = std::llround(cfg.max_sec * cfg.fps * feature_ratio(cfg));
    for (const auto &b : s.boxes) {
        CHECK(b.length() >= lo);
        CHECK(b.length() <= hi);
    }
}

TEST_CASE("fallback when no scale fits") {
    ProposalConfig cfg;
    cfg.feature_len = 10;
    cfg.raw_frames = 10; // r_f = 1, shortest scale is 50 frames
    cfg.count = 5;
    const auto s = generate_proposals(cfg);
    CHECK(s.fallback);
    REQUIRE(s.size() == 5);
    for (const auto &b : s.boxes) {
        CHECK(b == ProposalBox{0, 10});
    }
}

TEST_CASE("deterministic per seed") {
    ProposalConfig cfg;
    cfg.feature_len = 200;
    cfg.fixed_keep_ratio = 1.0;
    cfg.min_sec = cfg.max_sec = 5.0;
    cfg.count = 50;
    const auto a = generate_proposals(cfg);
    const auto b = generate_proposals(cfg);
    CHECK(a.boxes == b.boxes);
    cfg.seed = 2024;
    CHECK(generate_proposals(cfg).boxes != a.boxes);
}

TEST_CASE("fixed ratio 1 with sufficient pool: distinct frame-aligned scale boxes") {
    ProposalConfig cfg;
    cfg.feature_len = 200;
    cfg.fixed_keep_ratio = 1.0;
    cfg.min_sec = cfg.max_sec = 5.0;
    cfg.count = 50;
    const auto s = generate_proposals(cfg);
    CHECK(s.num_structured == 50);
    const auto len = std::llround(5.0 * cfg.fps * feature_ratio(cfg));
    std::set<std::int64_t> starts;
    for (const auto &b : s.boxes) {
        CHECK(b.length() == len);
        starts.insert(b.start);
    }
    CHECK(starts.size() == 50); // sampled without replacement
    check_in_bounds(s);
}

TEST_CASE("fixed ratio 0: all boxes from the random branch") {
    ProposalConfig cfg;
    cfg.feature_len = 300;
    cfg.fixed_keep_ratio = 0.0;
    cfg.count = 400;
    const auto s = generate_proposals(cfg);
    CHECK(s.num_structured == 0);
    CHECK(s.size() == 400);
    check_in_bounds(s);
}

TEST_CASE("quota remainder goes to the longest scales") {
    ProposalConfig cfg;
    cfg.feature_len = 500; // r_f = 0.1, so k seconds -> 5k frames
    cfg.min_sec = 1;
    cfg.max_sec = 3;
    cfg.count = 10;
    cfg.fixed_keep_ratio = 1.0;
    const auto s = generate_proposals(cfg);
    std::map<std::int64_t, int> per_len;
    for (const auto &b : s.boxes) ++per_len[b.length()];
    CHECK(per_len[5] == 3);
    CHECK(per_len[10] == 3);
    CHECK(per_len[15] == 4);
}

TEST_CASE("pool shortfall is filled by the random branch") {
    ProposalConfig cfg;
    cfg.feature_len = 20;
    cfg.raw_frames = 100; // r_f = 0.2; 1 s -> 10 frames, 11 feasible starts
    cfg.min_sec = cfg.max_sec = 1.0;
    cfg.count = 30;
    cfg.fixed_keep_ratio = 1.0;
    const auto s = generate_proposals(cfg);
    CHECK(s.num_structured == 11);
    CHECK(s.size() == 30);
    check_in_bounds(s);
}

TEST_CASE("scales and ratio") {
    ProposalConfig cfg;
    const auto sc = proposal_scales(cfg);
    REQUIRE(sc.size() == 30);
    CHECK(sc.front() == 1.0);
    CHECK(sc.back() == 30.0);
    CHECK(feature_ratio(cfg) == doctest::Approx(1000.0 / 5000.0));
    cfg.min_sec = 0.5;
    cfg.max_sec = 1.5;
    cfg.sec_resolution = 0.25;
    CHECK(proposal_scales(cfg).size() == 5);
}

TEST_CASE("invalid configs are rejected") {
    ProposalConfig cfg;
    cfg.count = 0;
    CHECK_THROWS_AS(generate_proposals(cfg), Error);
    cfg = {};
    cfg.fixed_keep_ratio = 1.5;
    CHECK_THROWS_AS(generate_proposals(cfg), Error);
    cfg = {};
    cfg.min_sec = 40;
    CHECK_THROWS_AS(generate_proposals(cfg), Error);
    cfg = {};
    cfg.sec_resolution = 0;
    CHECK_THROWS_AS(generate_proposals(cfg), Error);
}
