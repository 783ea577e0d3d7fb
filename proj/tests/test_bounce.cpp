#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "bugprobe/env/bounce.hpp"
#include "bugprobe/env/probes.hpp"
#include "bugprobe/rng.hpp"

using namespace bugprobe;

namespace {

Eigen::VectorXd run_reset(BounceEnv& env, const ProgramSpec& spec, std::uint64_t seed = 1) {
    return env.reset(spec, seed);
}

int live_balls(const Eigen::VectorXd& obs) {
    int n = 0;
    for (int slot = 0; slot < kMaxBalls; ++slot)
        if (obs(1 + slot * 5) != 0.0) ++n;
    return n;
}

}  // namespace

TEST_CASE("grid: exactly 28 valid cells, invalid pairs rejected") {
    CHECK(all_valid_cells().size() == 28);
    CHECK_FALSE(cell_valid(EventType::PaddleMoves, ConsequenceKind::Bounce));
    CHECK_FALSE(cell_valid(EventType::ProgramStarts, ConsequenceKind::Bounce));
    ProgramSpec spec;
    CHECK_THROWS_AS(spec.toggle(EventType::PaddleMoves, ConsequenceKind::Bounce), ConfigError);
}

TEST_CASE("reset: correct program launches one centered ball") {
    BounceEnv env;
    auto obs = run_reset(env, ProgramSpec{});
    CHECK(obs(0) == 0.5);
    CHECK(live_balls(obs) == 1);
    CHECK(obs(1) == 1.0);   // present flag
    CHECK(obs(2) == 0.5);   // launch x
    CHECK(obs(3) == 0.85);  // launch y
    CHECK(obs(5) < 0.0);    // heading downward
    const double speed = std::hypot(obs(4), obs(5));
    CHECK(speed == doctest::Approx(0.04).epsilon(1e-12));
    CHECK(env.player_score() == 0);
    CHECK(env.opponent_score() == 0);
}

TEST_CASE("reset: toggled start launch leaves every ball slot zero") {
    ProgramSpec spec;
    spec.toggle(EventType::ProgramStarts, ConsequenceKind::LaunchBall);
    BounceEnv env;
    auto obs = run_reset(env, spec);
    CHECK(live_balls(obs) == 0);
    for (int i = 1; i < kBounceObsDim; ++i) CHECK(obs(i) == 0.0);
}

TEST_CASE("reset: determinism for same program and seed") {
    ProgramSpec spec;
    spec.ball_speed = SpeedSetting::Fast;
    BounceEnv a, b;
    auto oa = a.reset(spec, 42);
    auto ob = b.reset(spec, 42);
    CHECK(oa == ob);
    // and across a full random episode
    Rng rng(3);
    std::vector<Action> actions;
    for (int t = 0; t < kBounceEpisodeLimit; ++t)
        actions.push_back(static_cast<Action>(rng.uniform_index(3)));
    for (Action act : actions) {
        if (a.done()) break;
        auto ra = a.step(act);
        auto rb = b.step(act);
        CHECK(ra.observation == rb.observation);
        CHECK(ra.reward == rb.reward);
        CHECK(ra.done == rb.done);
    }
}

TEST_CASE("step: free motion moves the ball by its velocity") {
    BounceEnv env;
    run_reset(env, ProgramSpec{}, 7);
    auto before = env.encode_observation();
    const double x = before(2), y = before(3), vx = before(4), vy = before(5);
    auto res = env.step(Action::Stay);
    CHECK(res.observation(2) == doctest::Approx(x + vx).epsilon(1e-12));
    CHECK(res.observation(3) == doctest::Approx(y + vy).epsilon(1e-12));
    CHECK(res.reward == 0.0);
}

TEST_CASE("step: paddle moves clamp to the unit interval") {
    BounceEnv env;
    run_reset(env, ProgramSpec{}, 7);
    for (int i = 0; i < 30 && !env.done(); ++i) env.step(Action::Left);
    CHECK(env.paddle_x() == 0.0);
}

TEST_CASE("step: stepping a done episode is a usage error") {
    BounceEnv env;
    run_reset(env, ProgramSpec{}, 7);
    while (!env.done()) env.step(Action::Stay);
    CHECK_THROWS_AS(env.step(Action::Stay), UsageError);
    CHECK(env.step_index() <= kBounceEpisodeLimit);
}

TEST_CASE("invariants: reward identity, speed conservation, containment over random play") {
    Rng rng(99);
    const auto cells = all_valid_cells();
    for (int trial = 0; trial < 40; ++trial) {
        ProgramSpec spec;
        for (const auto& cell : cells)
            if (rng.bernoulli(0.15)) spec.deviations.insert(cell);
        spec.ball_speed = static_cast<SpeedSetting>(rng.uniform_index(kNumSpeeds));
        spec.paddle_speed = static_cast<SpeedSetting>(rng.uniform_index(kNumSpeeds));
        const double speed = ball_speed_value(spec.ball_speed);

        BounceEnv env;
        env.reset(spec, derive_seed(99, "trial", static_cast<std::uint64_t>(trial)));
        // start-event score toggles can leave nonzero scores at reset
        int last_player = env.player_score(), last_opp = env.opponent_score(), steps = 0;
        while (!env.done()) {
            auto res = env.step(static_cast<Action>(rng.uniform_index(3)));
            ++steps;
            // reward identity
            CHECK(res.reward == static_cast<double>(env.player_score() - last_player) -
                                    static_cast<double>(env.opponent_score() - last_opp));
            last_player = env.player_score();
            last_opp = env.opponent_score();
            // containment and speed conservation for live balls
            for (const auto& ball : env.balls()) {
                CHECK(ball.x >= 0.0);
                CHECK(ball.x <= 1.0);
                CHECK(ball.y >= 0.0);
                CHECK(ball.y <= 1.0);
                CHECK(std::hypot(ball.vx, ball.vy) == doctest::Approx(speed).epsilon(1e-12));
            }
        }
        CHECK(steps <= kBounceEpisodeLimit);
        CHECK((steps == kBounceEpisodeLimit || env.player_score() > kScoreLimit ||
               env.opponent_score() > kScoreLimit));
    }
}

TEST_CASE("goal entry: score, relaunch, and reward on the correct program") {
    // drive the ball into the goal with the scripted probe and inspect the audit
    auto outcome = run_event_probe(ProgramSpec{}, EventType::BallHitsGoal, 5);
    REQUIRE(outcome.target_fired);
    bool saw = false;
    for (const auto& rec : outcome.records) {
        if (rec.event != EventType::BallHitsGoal) continue;
        saw = true;
        CHECK_FALSE(rec.bounced);
        CHECK(rec.player_delta == 1);
        CHECK(rec.opponent_delta == 0);
        CHECK(rec.launched == 1);
    }
    CHECK(saw);
}

TEST_CASE("goal bounce toggle: ball reflects, no score, no launch") {
    ProgramSpec spec;
    spec.toggle(EventType::BallHitsGoal, ConsequenceKind::Bounce);
    auto outcome = run_event_probe(spec, EventType::BallHitsGoal, 5);
    REQUIRE(outcome.target_fired);
    for (const auto& rec : outcome.records) {
        if (rec.event != EventType::BallHitsGoal) continue;
        CHECK(rec.bounced);
        CHECK(rec.player_delta == 0);
        CHECK(rec.opponent_delta == 0);
        CHECK(rec.launched == 0);
    }
}

TEST_CASE("observation encoding: slots ordered by creation, absent slots zero") {
    // wall-launch toggle creates additional balls on wall hits
    ProgramSpec spec;
    spec.toggle(EventType::BallHitsWall, ConsequenceKind::LaunchBall);
    BounceEnv env;
    env.reset(spec, 11);
    int max_live = 1;
    while (!env.done()) {
        auto res = env.step(Action::Stay);
        max_live = std::max(max_live, live_balls(res.observation));
        const int live = live_balls(res.observation);
        // presence flags are a prefix: slots beyond the live count are zero
        for (int slot = 0; slot < kMaxBalls; ++slot) {
            const bool present = res.observation(1 + slot * 5) != 0.0;
            CHECK(present == (slot < live));
            if (!present)
                for (int i = 1; i < 5; ++i) CHECK(res.observation(1 + slot * 5 + i) == 0.0);
        }
        CHECK(live <= kMaxBalls);
    }
    CHECK(max_live > 1);
}

TEST_CASE("conformance: every single-toggle program shows exactly its own deviation") {
    const auto cells = all_valid_cells();
    REQUIRE(cells.size() == 28);

    // the correct program shows nothing
    CHECK(probe_program(ProgramSpec{}, 1234).empty());

    for (const auto& cell : cells) {
        ProgramSpec spec;
        spec.deviations.insert(cell);
        auto detected = probe_program(spec, 1234);
        INFO("cell ", event_name(cell.first), " x ", consequence_name(cell.second));
        REQUIRE(detected.size() == 1);
        CHECK(*detected.begin() == cell);
    }
}

TEST_CASE("probe reachability: no balls ever when start launch is off") {
    ProgramSpec spec;
    spec.toggle(EventType::ProgramStarts, ConsequenceKind::LaunchBall);
    auto reach = probe_reachability(spec, 77);
    CHECK(reach[static_cast<int>(EventType::ProgramStarts)]);
    CHECK(reach[static_cast<int>(EventType::PaddleMoves)]);
    CHECK_FALSE(reach[static_cast<int>(EventType::BallHitsPaddle)]);
    CHECK_FALSE(reach[static_cast<int>(EventType::BallHitsWall)]);
    CHECK_FALSE(reach[static_cast<int>(EventType::BallHitsGoal)]);
    CHECK_FALSE(reach[static_cast<int>(EventType::BallHitsFloor)]);

    // but a paddle-move launch toggle restores them
    spec.toggle(EventType::PaddleMoves, ConsequenceKind::LaunchBall);
    auto reach2 = probe_reachability(spec, 78);
    CHECK(reach2[static_cast<int>(EventType::BallHitsFloor)]);
    CHECK(reach2[static_cast<int>(EventType::BallHitsPaddle)]);
}

TEST_CASE("program hash: stable content addressing") {
    ProgramSpec a, b;
    a.toggle(EventType::BallHitsGoal, ConsequenceKind::Bounce);
    b.toggle(EventType::BallHitsGoal, ConsequenceKind::Bounce);
    CHECK(program_hash(a) == program_hash(b));
    b.ball_speed = SpeedSetting::Fast;
    CHECK(program_hash(a) != program_hash(b));
}
