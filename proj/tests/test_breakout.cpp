#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bugprobe/env/breakout.hpp"
#include "bugprobe/rng.hpp"

using namespace bugprobe;

TEST_CASE("reset: correct program builds 10x8 bricks, wrong_row_count scales") {
    BreakoutEnv env;
    env.reset(BreakoutProgramSpec{}, 1);
    CHECK(env.alive_bricks() == 80);

    BreakoutProgramSpec seven;
    seven.wrong_row_count = true;
    seven.row_count = 7;
    env.reset(seven, 1);
    CHECK(env.alive_bricks() == 56);

    BreakoutProgramSpec bad;
    bad.row_count = 7;  // flag not set
    CHECK_THROWS_AS(env.reset(bad, 1), ConfigError);
}

TEST_CASE("reset: deterministic and ball launched below the bricks") {
    BreakoutEnv a, b;
    auto oa = a.reset(BreakoutProgramSpec{}, 9);
    auto ob = b.reset(BreakoutProgramSpec{}, 9);
    CHECK(oa == ob);
    CHECK(a.ball().y < kBrickTop - kDefaultBrickRows * kBrickRowHeight);
    CHECK(a.ball().vy < 0.0);
}

TEST_CASE("reward is identically zero and episodes respect the limits") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        BreakoutProgramSpec spec;
        spec.paddle_skewer = rng.bernoulli(0.3);
        spec.no_delete_brick = rng.bernoulli(0.3);
        spec.no_bounce_off_brick = rng.bernoulli(0.3);
        spec.reversed_paddle = rng.bernoulli(0.3);
        spec.bounce_off_floor = rng.bernoulli(0.3);
        BreakoutEnv env;
        env.reset(spec, derive_seed(5, "ep", static_cast<std::uint64_t>(trial)));
        int steps = 0;
        int last_bricks = env.alive_bricks();
        while (!env.done()) {
            auto res = env.step(static_cast<Action>(rng.uniform_index(3)));
            ++steps;
            CHECK(res.reward == 0.0);
            // brick count is non-increasing unless deletion is disabled
            const int bricks = env.alive_bricks();
            if (!spec.no_delete_brick) CHECK(bricks <= last_bricks);
            else CHECK(bricks == last_bricks);
            last_bricks = bricks;
        }
        CHECK(steps <= kBreakoutEpisodeLimit);
        CHECK_THROWS_AS(env.step(Action::Stay), UsageError);
    }
}

TEST_CASE("correct program: brick contact deletes the brick and reverses the ball") {
    auto report = probe_breakout_program(BreakoutProgramSpec{}, 21);
    CHECK_FALSE(report.brick_not_deleted);
    CHECK_FALSE(report.brick_no_bounce);
    CHECK_FALSE(report.wrong_rows);
    CHECK_FALSE(report.reversed_paddle);
    CHECK_FALSE(report.floor_bounce);
    CHECK(report.max_consecutive_reversals <= 1);
}

TEST_CASE("single-flag conformance: each probe detects exactly its flag") {
    for (int flag = 0; flag < kBreakoutLabelDim; ++flag) {
        BreakoutProgramSpec spec;
        switch (flag) {
            case 0: spec.paddle_skewer = true; break;
            case 1: spec.no_delete_brick = true; break;
            case 2: spec.no_bounce_off_brick = true; break;
            case 3: spec.wrong_row_count = true; spec.row_count = 7; break;
            case 4: spec.reversed_paddle = true; break;
            case 5: spec.bounce_off_floor = true; break;
        }
        auto report = probe_breakout_program(spec, 33);
        auto bits = report.to_bits();
        INFO("flag index ", flag);
        for (int i = 0; i < kBreakoutLabelDim; ++i) {
            INFO("bit ", i, " = ", bits[static_cast<std::size_t>(i)]);
            CHECK(bits[static_cast<std::size_t>(i)] == (i == flag ? 1 : 0));
        }
    }
}

TEST_CASE("skewer signature: >=3 consecutive reversals with the flag, <=1 without") {
    BreakoutProgramSpec skewer;
    skewer.paddle_skewer = true;
    auto with = probe_breakout_program(skewer, 44);
    CHECK(with.max_consecutive_reversals >= 3);
    auto without = probe_breakout_program(BreakoutProgramSpec{}, 44);
    CHECK(without.max_consecutive_reversals <= 1);
}

TEST_CASE("floor: episode ends on floor hit unless bounce_off_floor") {
    BreakoutEnv env;
    env.reset(BreakoutProgramSpec{}, 2);
    while (!env.done()) env.step(Action::Stay);  // let it drop eventually
    CHECK(env.step_index() <= kBreakoutEpisodeLimit);

    BreakoutProgramSpec bouncy;
    bouncy.bounce_off_floor = true;
    env.reset(bouncy, 2);
    bool floor_bounced = false;
    while (!env.done()) {
        auto res = env.step(Action::Stay);
        for (const auto& rec : res.events)
            if (rec.kind == BreakoutEventRecord::Kind::FloorHit && rec.floor_bounced)
                floor_bounced = true;
    }
    CHECK(floor_bounced);
    CHECK(env.step_index() == kBreakoutEpisodeLimit);  // nothing else ends it
}

TEST_CASE("observation layout: paddle, ball tuple, zero-padded alive flags") {
    BreakoutProgramSpec seven;
    seven.wrong_row_count = true;
    seven.row_count = 7;
    BreakoutEnv env;
    auto obs = env.reset(seven, 3);
    CHECK(obs.size() == kBreakoutObsDim);
    CHECK(obs(0) == 0.5);
    CHECK(obs(2) == kBreakoutLaunchY);
    double flags = 0;
    for (int i = 5; i < kBreakoutObsDim; ++i) flags += obs(i);
    CHECK(flags == 56.0);
    // rows beyond row_count stay zero
    for (int i = 5 + 7 * kBrickCols; i < kBreakoutObsDim; ++i) CHECK(obs(i) == 0.0);
}
