#include "bugprobe/env/bounce.hpp"

#include <algorithm>
#include <cmath>

namespace bugprobe {

namespace {

constexpr double kPi = 3.14159265358979323846;

constexpr const char* kEventNames[kNumEvents] = {
    "ball_hits_paddle", "ball_hits_wall", "ball_hits_goal",
    "ball_hits_floor",  "paddle_moves",   "program_starts",
};
constexpr const char* kConsequenceNames[kNumConsequences] = {
    "bounce", "player_score", "opponent_score", "launch_ball", "move_paddle",
};
constexpr const char* kSpeedNames[kNumSpeeds] = {
    "very_slow", "slow", "normal", "fast", "very_fast",
};
constexpr double kBallSpeeds[kNumSpeeds] = {0.02, 0.03, 0.04, 0.06, 0.08};
constexpr double kPaddleSpeeds[kNumSpeeds] = {0.02, 0.035, 0.05, 0.07, 0.09};

}  // namespace

std::vector<Cell> all_valid_cells() {
    std::vector<Cell> cells;
    for (int e = 0; e < kNumEvents; ++e)
        for (int c = 0; c < kNumConsequences; ++c)
            if (cell_valid(static_cast<EventType>(e), static_cast<ConsequenceKind>(c)))
                cells.push_back({static_cast<EventType>(e), static_cast<ConsequenceKind>(c)});
    return cells;
}

bool template_applies(EventType e, ConsequenceKind c) {
    switch (e) {
        case EventType::BallHitsPaddle:
            return c == ConsequenceKind::Bounce;
        case EventType::BallHitsWall:
            return c == ConsequenceKind::Bounce;
        case EventType::BallHitsGoal:
            return c == ConsequenceKind::PlayerScore || c == ConsequenceKind::LaunchBall;
        case EventType::BallHitsFloor:
            return c == ConsequenceKind::OpponentScore || c == ConsequenceKind::LaunchBall;
        case EventType::PaddleMoves:
            return c == ConsequenceKind::MovePaddle;
        case EventType::ProgramStarts:
            return c == ConsequenceKind::LaunchBall;
    }
    return false;
}

const char* event_name(EventType e) { return kEventNames[static_cast<int>(e)]; }
const char* consequence_name(ConsequenceKind c) { return kConsequenceNames[static_cast<int>(c)]; }
const char* speed_name(SpeedSetting s) { return kSpeedNames[static_cast<int>(s)]; }

std::optional<EventType> event_from_name(const std::string& s) {
    for (int i = 0; i < kNumEvents; ++i)
        if (s == kEventNames[i]) return static_cast<EventType>(i);
    return std::nullopt;
}
std::optional<ConsequenceKind> consequence_from_name(const std::string& s) {
    for (int i = 0; i < kNumConsequences; ++i)
        if (s == kConsequenceNames[i]) return static_cast<ConsequenceKind>(i);
    return std::nullopt;
}
std::optional<SpeedSetting> speed_from_name(const std::string& s) {
    for (int i = 0; i < kNumSpeeds; ++i)
        if (s == kSpeedNames[i]) return static_cast<SpeedSetting>(i);
    return std::nullopt;
}

double ball_speed_value(SpeedSetting s) { return kBallSpeeds[static_cast<int>(s)]; }
double paddle_speed_value(SpeedSetting s) { return kPaddleSpeeds[static_cast<int>(s)]; }

std::uint64_t program_hash(const ProgramSpec& spec) {
    std::uint64_t h = 0x5eedf00dULL;
    for (const auto& [e, c] : spec.deviations)
        h = hash_combine(h, static_cast<std::uint64_t>(static_cast<int>(e) * 8 + static_cast<int>(c)));
    h = hash_combine(h, static_cast<std::uint64_t>(spec.ball_speed));
    h = hash_combine(h, static_cast<std::uint64_t>(spec.paddle_speed));
    return h;
}

// ---- simulation ----------------------------------------------------------------

Eigen::VectorXd BounceEnv::reset(const ProgramSpec& program, std::uint64_t seed) {
    for (const auto& cell : program.deviations)
        if (!cell_valid(cell)) throw ConfigError("program contains an invalid deviation cell");
    program_ = program;
    rng_ = Rng(seed);
    paddle_x_ = 0.5;
    balls_.clear();
    player_score_ = 0;
    opponent_score_ = 0;
    step_index_ = 0;
    done_ = false;
    started_ = true;
    reset_events_.clear();
    fire_event(EventType::ProgramStarts, reset_events_, nullptr, 0);
    return encode_observation();
}

Eigen::VectorXd BounceEnv::encode_observation() const {
    Eigen::VectorXd obs = Eigen::VectorXd::Zero(kBounceObsDim);
    obs(0) = paddle_x_;
    int slot = 0;
    for (const auto& ball : balls_) {
        if (!ball.alive) continue;
        if (slot >= kMaxBalls) break;
        obs(1 + slot * 5 + 0) = 1.0;
        obs(1 + slot * 5 + 1) = ball.x;
        obs(1 + slot * 5 + 2) = ball.y;
        obs(1 + slot * 5 + 3) = ball.vx;
        obs(1 + slot * 5 + 4) = ball.vy;
        ++slot;
    }
    return obs;
}

void BounceEnv::launch_ball() {
    int live = 0;
    for (const auto& b : balls_)
        if (b.alive) ++live;
    if (live >= kMaxBalls) return;  // cap: extra launches silently dropped
    const double angle = rng_.uniform(200.0, 340.0) * kPi / 180.0;
    const double speed = ball_speed_value(program_.ball_speed);
    Ball b;
    b.x = kLaunchX;
    b.y = kLaunchY;
    b.vx = speed * std::cos(angle);
    b.vy = speed * std::sin(angle);
    balls_.push_back(b);
}

void BounceEnv::move_paddle(double delta, EventRecord& rec) {
    const double before = paddle_x_;
    paddle_x_ = std::clamp(paddle_x_ + delta, 0.0, 1.0);
    rec.paddle_delta = paddle_x_ - before;
}

void BounceEnv::fire_event(EventType e, std::vector<EventRecord>& out, Ball* ball,
                           int commanded_dir) {
    EventRecord rec;
    rec.event = e;
    rec.commanded_dir = commanded_dir;

    const bool bounce = cell_valid(e, ConsequenceKind::Bounce) &&
                        program_.applies(e, ConsequenceKind::Bounce);
    const bool terminal_event = e == EventType::BallHitsGoal || e == EventType::BallHitsFloor;
    // A bounce on goal/floor keeps the ball in play and suppresses that
    // event's removal, scores, and launch for the step.
    const bool suppressed = bounce && terminal_event;

    if (ball != nullptr) {
        if (bounce) {
            rec.bounced = true;
            switch (e) {
                case EventType::BallHitsPaddle:
                    ball->y = 2 * kPaddleY - ball->y;
                    ball->vy = -ball->vy;
                    break;
                case EventType::BallHitsWall:
                    // handled by the caller (side vs top reflection); the
                    // caller pre-reflects, so nothing to do here
                    break;
                case EventType::BallHitsGoal:
                    ball->y = 2.0 - ball->y;
                    ball->vy = -ball->vy;
                    break;
                case EventType::BallHitsFloor:
                    ball->y = -ball->y;
                    ball->vy = -ball->vy;
                    break;
                default:
                    break;
            }
        } else {
            // No bounce: goal and floor consume the ball; a wall crossing
            // without a bounce lets the ball leave the field; a paddle
            // contact without a bounce is a pass-through.
            if (terminal_event || e == EventType::BallHitsWall) ball->alive = false;
        }
    }

    for (const auto& b : balls_)
        if (b.alive) rec.live_balls += 1;
    if (!suppressed) {
        if (program_.applies(e, ConsequenceKind::PlayerScore)) {
            player_score_ += 1;
            rec.player_delta = 1;
        }
        if (program_.applies(e, ConsequenceKind::OpponentScore)) {
            opponent_score_ += 1;
            rec.opponent_delta = 1;
        }
        if (program_.applies(e, ConsequenceKind::LaunchBall)) {
            const std::size_t before = balls_.size();
            launch_ball();
            rec.launched = static_cast<int>(balls_.size() - before);
        }
    }

    if (e == EventType::PaddleMoves) {
        // the paddle always responds to the command; the toggle reverses it
        const int dir = program_.toggled(EventType::PaddleMoves, ConsequenceKind::MovePaddle)
                            ? -commanded_dir
                            : commanded_dir;
        move_paddle(dir * paddle_speed_value(program_.paddle_speed), rec);
    } else if (cell_valid(e, ConsequenceKind::MovePaddle) &&
               program_.applies(e, ConsequenceKind::MovePaddle)) {
        // toggled MovePaddle on a ball/start event: one step toward x=0
        move_paddle(-paddle_speed_value(program_.paddle_speed), rec);
    }

    out.push_back(rec);
}

StepResult BounceEnv::step(Action action) {
    if (!started_) throw UsageError("step() before reset()");
    if (done_) throw UsageError("step() on a finished episode");

    StepResult result;
    result.transition.s = encode_observation();
    result.transition.a = static_cast<int>(action);
    const int player_before = player_score_;
    const int opponent_before = opponent_score_;
    auto& events = result.transition.events;

    // 1. paddle event
    if (action != Action::Stay) {
        const int dir = action == Action::Left ? -1 : +1;
        fire_event(EventType::PaddleMoves, events, nullptr, dir);
    }

    // 2. balls advance and resolve in creation order; balls launched during
    //    this step do not move until the next one
    const std::size_t initial_count = balls_.size();
    for (std::size_t i = 0; i < initial_count; ++i) {
        Ball& ball = balls_[i];
        if (!ball.alive) continue;
        const double x_old = ball.x;
        const double y_old = ball.y;
        const double vy_old = ball.vy;
        ball.x += ball.vx;
        ball.y += ball.vy;

        // paddle: downward crossing of the paddle line within its extent
        if (vy_old < 0 && y_old >= kPaddleY && ball.y < kPaddleY) {
            const double x_cross = x_old + ball.vx * (kPaddleY - y_old) / vy_old;
            if (std::abs(x_cross - paddle_x_) <= kPaddleHalfWidth)
                fire_event(EventType::BallHitsPaddle, events, &ball, 0);
        }
        if (!ball.alive) continue;

        // side walls
        if (ball.x < 0.0) {
            const bool bounce = program_.applies(EventType::BallHitsWall, ConsequenceKind::Bounce);
            if (bounce) {
                ball.x = -ball.x;
                ball.vx = -ball.vx;
            }
            fire_event(EventType::BallHitsWall, events, &ball, 0);
        } else if (ball.x > 1.0) {
            const bool bounce = program_.applies(EventType::BallHitsWall, ConsequenceKind::Bounce);
            if (bounce) {
                ball.x = 2.0 - ball.x;
                ball.vx = -ball.vx;
            }
            fire_event(EventType::BallHitsWall, events, &ball, 0);
        }
        if (!ball.alive) continue;

        // top edge: goal segment or wall
        if (ball.y > 1.0) {
            if (ball.x >= kGoalLo && ball.x <= kGoalHi) {
                fire_event(EventType::BallHitsGoal, events, &ball, 0);
            } else {
                const bool bounce =
                    program_.applies(EventType::BallHitsWall, ConsequenceKind::Bounce);
                if (bounce) {
                    ball.y = 2.0 - ball.y;
                    ball.vy = -ball.vy;
                }
                fire_event(EventType::BallHitsWall, events, &ball, 0);
            }
        }
        if (!ball.alive) continue;

        // floor
        if (ball.y < 0.0) fire_event(EventType::BallHitsFloor, events, &ball, 0);
    }

    // compact dead balls, preserving creation order
    balls_.erase(std::remove_if(balls_.begin(), balls_.end(),
                                [](const Ball& b) { return !b.alive; }),
                 balls_.end());

    step_index_ += 1;
    result.reward = static_cast<double>(player_score_ - player_before) -
                    static_cast<double>(opponent_score_ - opponent_before);
    done_ = step_index_ >= kBounceEpisodeLimit || player_score_ > kScoreLimit ||
            opponent_score_ > kScoreLimit;
    result.done = done_;
    result.observation = encode_observation();
    result.transition.r = result.reward;
    result.transition.s_next = result.observation;
    return result;
}

}  // namespace bugprobe
