#include "bugprobe/env/probes.hpp"

#include <algorithm>
#include <cmath>

namespace bugprobe {

namespace {

// Keep chase targets off the clamp boundaries so paddle jerks stay visible.
constexpr double kTargetLo = 0.08;
constexpr double kTargetHi = 0.92;

// Picks the most urgent ball to track: the lowest falling one, else the
// lowest ball overall.
const Ball* pick_ball(const std::vector<Ball>& balls) {
    const Ball* falling = nullptr;
    const Ball* any = nullptr;
    for (const auto& b : balls) {
        if (!b.alive) continue;
        if (!any || b.y < any->y) any = &b;
        if (b.vy < 0 && (!falling || b.y < falling->y)) falling = &b;
    }
    return falling ? falling : any;
}

// Direction-calibrating proportional controller. `toward` selects chasing or
// fleeing the tracked ball.
struct ChaseController {
    int dir_sign = 0;  // +1: Right moves right, -1: reversed, 0: unknown
    bool toward = true;

    Action act(const BounceEnv& env) {
        if (dir_sign == 0) return Action::Right;  // calibration move
        const Ball* ball = pick_ball(env.balls());
        double target = 0.5;
        if (ball) {
            double aim = ball->x;
            if (ball->vy < 0 && ball->y > kPaddleY)
                aim = project_x(ball->x, ball->y, ball->vx, ball->vy, kPaddleY);
            target = toward ? aim : (aim > 0.5 ? kTargetLo : kTargetHi);
        }
        target = std::clamp(target, kTargetLo, kTargetHi);
        const double dead = paddle_speed_value(env.program().paddle_speed) * 0.5;
        if (env.paddle_x() < target - dead) return dir_sign > 0 ? Action::Right : Action::Left;
        if (env.paddle_x() > target + dead) return dir_sign > 0 ? Action::Left : Action::Right;
        return Action::Stay;
    }

    void observe(Action taken, const std::vector<EventRecord>& events) {
        if (dir_sign != 0 || taken == Action::Stay) return;
        for (const auto& rec : events) {
            if (rec.event != EventType::PaddleMoves || rec.paddle_delta == 0.0) continue;
            const int commanded = taken == Action::Left ? -1 : +1;
            dir_sign = (rec.paddle_delta > 0 ? +1 : -1) * commanded;
            return;
        }
    }
};

}  // namespace

double project_x(double x, double y, double vx, double vy, double target_y) {
    if (vy == 0.0) return x;
    const double raw = x + vx * (target_y - y) / vy;
    // fold side-wall reflections: triangular wave of period 2
    double m = std::fmod(raw, 2.0);
    if (m < 0) m += 2.0;
    return m <= 1.0 ? m : 2.0 - m;
}

ProbeOutcome run_event_probe(const ProgramSpec& program, EventType target, std::uint64_t seed,
                             int max_episodes) {
    ProbeOutcome out;

    if (target == EventType::ProgramStarts) {
        BounceEnv env;
        env.reset(program, derive_seed(seed, "probe-ep", 0));
        out.records = env.reset_events();
        out.target_fired = true;  // fires at every reset by definition
        out.episodes_used = 1;
        return out;
    }

    if (target == EventType::PaddleMoves) {
        BounceEnv env;
        env.reset(program, derive_seed(seed, "probe-ep", 0));
        for (const auto& r : env.reset_events()) out.records.push_back(r);
        const Action script[6] = {Action::Right, Action::Right, Action::Right,
                                  Action::Left,  Action::Left,  Action::Left};
        for (Action a : script) {
            if (env.done()) break;
            auto res = env.step(a);
            for (const auto& r : res.transition.events) {
                out.records.push_back(r);
                if (r.event == target) out.target_fired = true;
            }
        }
        out.episodes_used = 1;
        return out;
    }

    // Ball events: chase to keep the ball alive (paddle/wall/goal) or flee to
    // drop it (floor), across several seeded episodes.
    for (int ep = 0; ep < max_episodes && !out.target_fired; ++ep) {
        BounceEnv env;
        env.reset(program, derive_seed(seed, "probe-ep", static_cast<std::uint64_t>(ep)));
        for (const auto& r : env.reset_events()) out.records.push_back(r);
        out.episodes_used = ep + 1;
        ChaseController ctl;
        ctl.toward = target != EventType::BallHitsFloor;
        while (!env.done()) {
            const Action a = ctl.act(env);
            auto res = env.step(a);
            ctl.observe(a, res.transition.events);
            for (const auto& r : res.transition.events) {
                out.records.push_back(r);
                if (r.event == target) out.target_fired = true;
            }
            if (out.target_fired) break;
        }
    }
    return out;
}

std::array<bool, kNumEvents> probe_reachability(const ProgramSpec& program, std::uint64_t seed,
                                                int max_episodes) {
    return probe_program_report(program, seed, max_episodes).reachable;
}

std::set<Cell> detect_deviations(const std::vector<EventRecord>& records) {
    std::set<Cell> found;
    for (const auto& rec : records) {
        const EventType e = rec.event;
        const bool suppressed = rec.bounced &&
                                (e == EventType::BallHitsGoal || e == EventType::BallHitsFloor);
        for (int ci = 0; ci < kNumConsequences; ++ci) {
            const auto c = static_cast<ConsequenceKind>(ci);
            if (!cell_valid(e, c)) continue;
            if (suppressed && (c == ConsequenceKind::PlayerScore ||
                               c == ConsequenceKind::OpponentScore ||
                               c == ConsequenceKind::LaunchBall))
                continue;

            bool observed = false;
            switch (c) {
                case ConsequenceKind::Bounce:
                    observed = rec.bounced;
                    break;
                case ConsequenceKind::PlayerScore:
                    observed = rec.player_delta > 0;
                    break;
                case ConsequenceKind::OpponentScore:
                    observed = rec.opponent_delta > 0;
                    break;
                case ConsequenceKind::LaunchBall:
                    // a full field makes "no launch" indeterminate
                    if (rec.launched == 0 && rec.live_balls >= kMaxBalls) continue;
                    observed = rec.launched > 0;
                    break;
                case ConsequenceKind::MovePaddle:
                    if (e == EventType::PaddleMoves) {
                        // deviation = movement opposite to the command;
                        // clamped (zero) moves are indeterminate
                        if (rec.paddle_delta != 0.0 && rec.commanded_dir != 0 &&
                            (rec.paddle_delta > 0) != (rec.commanded_dir > 0))
                            found.insert({e, c});
                        continue;
                    }
                    observed = rec.paddle_delta != 0.0;
                    break;
            }
            if (observed != template_applies(e, c)) found.insert({e, c});
        }
    }
    return found;
}

ProgramProbeReport probe_program_report(const ProgramSpec& program, std::uint64_t seed,
                                        int max_episodes) {
    ProgramProbeReport report;
    for (int e = 0; e < kNumEvents; ++e) {
        const auto target = static_cast<EventType>(e);
        auto outcome = run_event_probe(program, target,
                                       derive_seed(seed, "event", static_cast<std::uint64_t>(e)),
                                       max_episodes);
        report.reachable[static_cast<std::size_t>(e)] = outcome.target_fired;
        for (const auto& cell : detect_deviations(outcome.records))
            if (cell.first == target) report.deviations.insert(cell);
    }
    return report;
}

std::uint64_t probe_oracle_seed(const ProgramSpec& program) {
    return derive_seed(program_hash(program), "probe-oracle");
}

std::set<Cell> probe_program(const ProgramSpec& program, std::uint64_t seed, int max_episodes) {
    return probe_program_report(program, seed, max_episodes).deviations;
}

}  // namespace bugprobe
