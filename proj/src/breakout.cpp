#include "bugprobe/env/breakout.hpp"

#include <algorithm>
#include <cmath>

namespace bugprobe {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

std::uint64_t breakout_program_hash(const BreakoutProgramSpec& spec) {
    std::uint64_t h = 0xb4ea50a7ULL;
    const auto bits = spec.label_bits();
    for (int b : bits) h = hash_combine(h, static_cast<std::uint64_t>(b));
    h = hash_combine(h, static_cast<std::uint64_t>(spec.row_count));
    h = hash_combine(h, static_cast<std::uint64_t>(spec.ball_speed));
    h = hash_combine(h, static_cast<std::uint64_t>(spec.paddle_speed));
    return h;
}

Eigen::VectorXd BreakoutEnv::reset(const BreakoutProgramSpec& program, std::uint64_t seed) {
    program.validate();
    program_ = program;
    rng_ = Rng(seed);
    paddle_x_ = 0.5;
    bricks_.assign(static_cast<std::size_t>(program.row_count),
                   std::vector<bool>(kBrickCols, true));
    step_index_ = 0;
    done_ = false;
    started_ = true;

    const double angle = rng_.uniform(200.0, 340.0) * kPi / 180.0;
    const double speed = ball_speed_value(program_.ball_speed);
    ball_ = Ball{};
    ball_.x = kLaunchX;
    ball_.y = kBreakoutLaunchY;
    ball_.vx = speed * std::cos(angle);
    ball_.vy = speed * std::sin(angle);
    return encode_observation();
}

Eigen::VectorXd BreakoutEnv::encode_observation() const {
    Eigen::VectorXd obs = Eigen::VectorXd::Zero(kBreakoutObsDim);
    obs(0) = paddle_x_;
    obs(1) = ball_.x;
    obs(2) = ball_.y;
    obs(3) = ball_.vx;
    obs(4) = ball_.vy;
    for (std::size_t r = 0; r < bricks_.size(); ++r)
        for (int c = 0; c < kBrickCols; ++c)
            obs(5 + static_cast<int>(r) * kBrickCols + c) = bricks_[r][c] ? 1.0 : 0.0;
    return obs;
}

int BreakoutEnv::alive_bricks() const {
    int n = 0;
    for (const auto& row : bricks_)
        for (bool b : row)
            if (b) ++n;
    return n;
}

BreakoutStepResult BreakoutEnv::step(Action action) {
    if (!started_) throw UsageError("step() before reset()");
    if (done_) throw UsageError("step() on a finished episode");

    BreakoutStepResult result;
    result.s = encode_observation();
    result.a = static_cast<int>(action);
    auto& events = result.events;

    // paddle movement
    if (action != Action::Stay) {
        const int dir = action == Action::Left ? -1 : +1;
        const int effective = program_.reversed_paddle ? -dir : dir;
        BreakoutEventRecord rec;
        rec.kind = BreakoutEventRecord::Kind::PaddleMove;
        rec.commanded_dir = dir;
        const double before = paddle_x_;
        paddle_x_ = std::clamp(paddle_x_ + effective * paddle_speed_value(program_.paddle_speed),
                               0.0, 1.0);
        rec.paddle_delta = paddle_x_ - before;
        events.push_back(rec);
    }

    // ball advances
    const double x_old = ball_.x;
    const double y_old = ball_.y;
    const double vy_old = ball_.vy;
    ball_.x += ball_.vx;
    ball_.y += ball_.vy;
    bool ball_lost = false;

    // paddle contact
    const bool crossed = vy_old < 0 && y_old >= kPaddleY && ball_.y < kPaddleY &&
                         std::abs(x_old + ball_.vx * (kPaddleY - y_old) / vy_old - paddle_x_) <=
                             kPaddleHalfWidth;
    if (program_.paddle_skewer) {
        // buggy template: reverse the vertical direction on every contact;
        // the ball may stay in the contact band and flip repeatedly
        const bool in_band = std::abs(ball_.y - kPaddleY) <= kPaddleBandHalf &&
                             std::abs(ball_.x - paddle_x_) <= kPaddleHalfWidth;
        if (crossed || in_band) {
            ball_.vy = -ball_.vy;
            BreakoutEventRecord rec;
            rec.kind = BreakoutEventRecord::Kind::PaddleContact;
            rec.reversed_vy = true;
            events.push_back(rec);
        }
    } else if (crossed) {
        ball_.y = 2 * kPaddleY - ball_.y;
        ball_.vy = -ball_.vy;
        BreakoutEventRecord rec;
        rec.kind = BreakoutEventRecord::Kind::PaddleContact;
        rec.reversed_vy = true;
        events.push_back(rec);
    }

    // side walls and top (the whole top edge is wall)
    if (ball_.x < 0.0) {
        ball_.x = -ball_.x;
        ball_.vx = -ball_.vx;
        events.push_back({BreakoutEventRecord::Kind::WallHit, 0, 0, false, false, false, false, -1, -1});
    } else if (ball_.x > 1.0) {
        ball_.x = 2.0 - ball_.x;
        ball_.vx = -ball_.vx;
        events.push_back({BreakoutEventRecord::Kind::WallHit, 0, 0, false, false, false, false, -1, -1});
    }
    if (ball_.y > 1.0) {
        ball_.y = 2.0 - ball_.y;
        ball_.vy = -ball_.vy;
        events.push_back({BreakoutEventRecord::Kind::WallHit, 0, 0, false, false, false, false, -1, -1});
    }

    // brick cell containing the ball, if any
    if (ball_.y < kBrickTop) {
        const double depth = kBrickTop - ball_.y;
        const int row = static_cast<int>(std::floor(depth / kBrickRowHeight));
        if (row >= 0 && row < program_.row_count) {
            const int col = std::clamp(static_cast<int>(std::floor(ball_.x * kBrickCols)), 0,
                                       kBrickCols - 1);
            if (bricks_[static_cast<std::size_t>(row)][col]) {
                BreakoutEventRecord rec;
                rec.kind = BreakoutEventRecord::Kind::BrickHit;
                rec.row = row;
                rec.col = col;
                if (!program_.no_delete_brick) {
                    bricks_[static_cast<std::size_t>(row)][col] = false;
                    rec.brick_deleted = true;
                }
                if (!program_.no_bounce_off_brick) {
                    rec.brick_bounced = true;
                    const double top_edge = kBrickTop - row * kBrickRowHeight;
                    const double bottom = top_edge - kBrickRowHeight;
                    const double left = static_cast<double>(col) / kBrickCols;
                    const double right = static_cast<double>(col + 1) / kBrickCols;
                    if (y_old <= bottom) {
                        ball_.y = 2 * bottom - ball_.y;
                        ball_.vy = -ball_.vy;
                    } else if (y_old >= top_edge) {
                        ball_.y = 2 * top_edge - ball_.y;
                        ball_.vy = -ball_.vy;
                    } else if (x_old <= left) {
                        ball_.x = 2 * left - ball_.x;
                        ball_.vx = -ball_.vx;
                    } else if (x_old >= right) {
                        ball_.x = 2 * right - ball_.x;
                        ball_.vx = -ball_.vx;
                    } else {
                        ball_.vy = -ball_.vy;  // started inside the cell
                    }
                }
                events.push_back(rec);
            }
        }
    }

    // floor
    if (ball_.y < 0.0) {
        BreakoutEventRecord rec;
        rec.kind = BreakoutEventRecord::Kind::FloorHit;
        if (program_.bounce_off_floor) {
            ball_.y = -ball_.y;
            ball_.vy = -ball_.vy;
            rec.floor_bounced = true;
        } else {
            ball_lost = true;
        }
        events.push_back(rec);
    }

    step_index_ += 1;
    done_ = step_index_ >= kBreakoutEpisodeLimit || alive_bricks() == 0 || ball_lost;
    result.done = done_;
    result.reward = 0.0;
    result.observation = encode_observation();
    return result;
}

// ---- probes ----------------------------------------------------------------

namespace {

struct BreakoutChase {
    int dir_sign = 0;

    Action act(const BreakoutEnv& env, double target) {
        if (dir_sign == 0) return Action::Right;
        target = std::clamp(target, 0.08, 0.92);
        const double dead = paddle_speed_value(env.program().paddle_speed) * 0.5;
        if (env.paddle_x() < target - dead) return dir_sign > 0 ? Action::Right : Action::Left;
        if (env.paddle_x() > target + dead) return dir_sign > 0 ? Action::Left : Action::Right;
        return Action::Stay;
    }

    void observe(Action taken, const std::vector<BreakoutEventRecord>& events) {
        if (dir_sign != 0 || taken == Action::Stay) return;
        for (const auto& rec : events) {
            if (rec.kind != BreakoutEventRecord::Kind::PaddleMove || rec.paddle_delta == 0.0)
                continue;
            const int commanded = taken == Action::Left ? -1 : +1;
            dir_sign = (rec.paddle_delta > 0 ? +1 : -1) * commanded;
            return;
        }
    }
};

double breakout_project_x(const Ball& b, double target_y) {
    if (b.vy == 0.0) return b.x;
    const double raw = b.x + b.vx * (target_y - b.y) / b.vy;
    double m = std::fmod(raw, 2.0);
    if (m < 0) m += 2.0;
    return m <= 1.0 ? m : 2.0 - m;
}

}  // namespace

BreakoutProbeReport probe_breakout_program(const BreakoutProgramSpec& program, std::uint64_t seed) {
    BreakoutProbeReport report;
    BreakoutEnv env;

    // row count: visible at reset
    env.reset(program, derive_seed(seed, "bk-rows"));
    report.wrong_rows = env.alive_bricks() != kDefaultBrickRows * kBrickCols;

    // paddle direction: one calibrated move from the center
    env.reset(program, derive_seed(seed, "bk-dir"));
    {
        auto res = env.step(Action::Right);
        for (const auto& rec : res.events)
            if (rec.kind == BreakoutEventRecord::Kind::PaddleMove && rec.paddle_delta != 0.0)
                report.reversed_paddle = rec.paddle_delta < 0;
    }

    // floor behavior: flee the ball and let it drop
    for (int ep = 0; ep < 4; ++ep) {
        env.reset(program, derive_seed(seed, "bk-floor", static_cast<std::uint64_t>(ep)));
        BreakoutChase ctl;
        bool saw_floor = false;
        while (!env.done() && env.step_index() < 150) {
            const double flee = env.ball().x > 0.5 ? 0.08 : 0.92;
            const Action a = ctl.act(env, flee);
            auto res = env.step(a);
            ctl.observe(a, res.events);
            for (const auto& rec : res.events)
                if (rec.kind == BreakoutEventRecord::Kind::FloorHit) {
                    saw_floor = true;
                    report.floor_bounce = report.floor_bounce || rec.floor_bounced;
                }
            if (saw_floor) break;
        }
        if (saw_floor) break;
    }

    // brick behavior: keep the ball alive until it reaches the brick band
    for (int ep = 0; ep < 6; ++ep) {
        env.reset(program, derive_seed(seed, "bk-brick", static_cast<std::uint64_t>(ep)));
        BreakoutChase ctl;
        bool saw_brick = false;
        while (!env.done()) {
            double target = env.ball().x;
            if (env.ball().vy < 0 && env.ball().y > kPaddleY)
                target = breakout_project_x(env.ball(), kPaddleY);
            const Action a = ctl.act(env, target);
            auto res = env.step(a);
            ctl.observe(a, res.events);
            for (const auto& rec : res.events)
                if (rec.kind == BreakoutEventRecord::Kind::BrickHit) {
                    saw_brick = true;
                    report.brick_not_deleted = report.brick_not_deleted || !rec.brick_deleted;
                    report.brick_no_bounce = report.brick_no_bounce || !rec.brick_bounced;
                }
            if (saw_brick) break;
        }
        if (saw_brick) break;
    }

    // skewer: let the ball fall beside the paddle, then slide into it once it
    // is deep in the contact band, and count consecutive reversal contacts
    for (int ep = 0; ep < 8 && report.max_consecutive_reversals < 3; ++ep) {
        env.reset(program, derive_seed(seed, "bk-skewer", static_cast<std::uint64_t>(ep)));
        BreakoutChase ctl;
        int consecutive = 0;
        while (!env.done()) {
            const Ball& ball = env.ball();
            double target;
            const double land = ball.vy < 0 ? breakout_project_x(ball, kPaddleY) : ball.x;
            if (ball.vy < 0 && ball.y > kPaddleY + kPaddleBandHalf) {
                // hold station beside the predicted landing point
                const double side = land < 0.5 ? 1.0 : -1.0;
                const double gap = 0.16;
                const double steps_to_band =
                    (ball.y - kPaddleY) / std::max(1e-9, -ball.vy);
                const double steps_to_close =
                    (gap - kPaddleHalfWidth + 0.02) /
                    paddle_speed_value(env.program().paddle_speed);
                target = steps_to_band <= steps_to_close + 1.0 ? land : land + side * gap;
            } else {
                target = ball.x;  // slide under / stay with the ball
            }
            const Action a = ctl.act(env, target);
            auto res = env.step(a);
            ctl.observe(a, res.events);
            bool reversal = false;
            for (const auto& rec : res.events)
                if (rec.kind == BreakoutEventRecord::Kind::PaddleContact && rec.reversed_vy)
                    reversal = true;
            consecutive = reversal ? consecutive + 1 : 0;
            report.max_consecutive_reversals =
                std::max(report.max_consecutive_reversals, consecutive);
            if (report.max_consecutive_reversals >= 3) break;
        }
    }
    report.skewer = report.max_consecutive_reversals >= 3;
    return report;
}

}  // namespace bugprobe
