#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "bugprobe/errors.hpp"
#include "bugprobe/rng.hpp"

namespace bugprobe {

// ---- event / consequence grammar --------------------------------------------

enum class EventType {
    BallHitsPaddle,
    BallHitsWall,
    BallHitsGoal,
    BallHitsFloor,
    PaddleMoves,
    ProgramStarts,
};
inline constexpr int kNumEvents = 6;

enum class ConsequenceKind {
    Bounce,
    PlayerScore,
    OpponentScore,
    LaunchBall,
    MovePaddle,
};
inline constexpr int kNumConsequences = 5;

using Cell = std::pair<EventType, ConsequenceKind>;

// (PaddleMoves, Bounce) and (ProgramStarts, Bounce) do not exist.
inline bool cell_valid(EventType e, ConsequenceKind c) {
    if (c == ConsequenceKind::Bounce)
        return e != EventType::PaddleMoves && e != EventType::ProgramStarts;
    return true;
}
inline bool cell_valid(const Cell& cell) { return cell_valid(cell.first, cell.second); }

// All 28 valid cells, event-major in enum order. This ordering defines the
// label indexing of the full-grid rubric.
std::vector<Cell> all_valid_cells();

// Correct-program template: true iff the consequence fires for the event in a
// correct implementation.
bool template_applies(EventType e, ConsequenceKind c);

const char* event_name(EventType e);
const char* consequence_name(ConsequenceKind c);
std::optional<EventType> event_from_name(const std::string& s);
std::optional<ConsequenceKind> consequence_from_name(const std::string& s);

// ---- program specification ---------------------------------------------------

enum class SpeedSetting { VerySlow, Slow, Normal, Fast, VeryFast };
inline constexpr int kNumSpeeds = 5;

const char* speed_name(SpeedSetting s);
std::optional<SpeedSetting> speed_from_name(const std::string& s);

double ball_speed_value(SpeedSetting s);    // {0.02, 0.03, 0.04, 0.06, 0.08}
double paddle_speed_value(SpeedSetting s);  // {0.02, 0.035, 0.05, 0.07, 0.09}

// A student program: which cells deviate from the correct template, plus the
// two speed settings. Fully determines the MDP.
struct ProgramSpec {
    std::set<Cell> deviations;
    SpeedSetting ball_speed = SpeedSetting::Normal;
    SpeedSetting paddle_speed = SpeedSetting::Normal;

    bool toggled(EventType e, ConsequenceKind c) const {
        return deviations.count({e, c}) != 0;
    }
    void toggle(EventType e, ConsequenceKind c) {
        if (!cell_valid(e, c)) throw ConfigError("invalid (event, consequence) cell");
        deviations.insert({e, c});
    }
    // Effective consequence after applying the deviation toggle.
    bool applies(EventType e, ConsequenceKind c) const {
        return template_applies(e, c) != toggled(e, c);
    }
    bool operator==(const ProgramSpec&) const = default;
    auto operator<=>(const ProgramSpec&) const = default;
};

// Stable content hash, used to derive per-program grading seeds.
std::uint64_t program_hash(const ProgramSpec& spec);

// ---- simulation types ----------------------------------------------------------

enum class Action { Left = 0, Right = 1, Stay = 2 };
inline constexpr int kNumActions = 3;

struct Ball {
    double x = 0, y = 0, vx = 0, vy = 0;
    bool alive = true;
};

// Observable facts recorded when an event fires; the audit trail for probes
// and conformance tests. `paddle_delta` is the signed paddle movement caused
// by this event (0 when the paddle did not move).
struct EventRecord {
    EventType event;
    bool bounced = false;
    int player_delta = 0;
    int opponent_delta = 0;
    int launched = 0;
    int live_balls = 0;     // live count when the launch decision was made
    double paddle_delta = 0.0;
    int commanded_dir = 0;  // PaddleMoves only: -1 left, +1 right
};

struct Transition {
    Eigen::VectorXd s;
    int a = 0;
    double r = 0.0;
    Eigen::VectorXd s_next;
    std::vector<EventRecord> events;
};

struct StepResult {
    Eigen::VectorXd observation;
    double reward = 0.0;
    bool done = false;
    Transition transition;
};

inline constexpr int kMaxBalls = 6;
inline constexpr int kBounceObsDim = 1 + kMaxBalls * 5;
inline constexpr int kBounceEpisodeLimit = 100;
inline constexpr int kScoreLimit = 30;  // done when a score exceeds this

// Field geometry: unit square, floor y=0, goal x in [0.3, 0.7] on the top
// edge, paddle line y=0.05 with half-width 0.1.
inline constexpr double kGoalLo = 0.3;
inline constexpr double kGoalHi = 0.7;
inline constexpr double kPaddleY = 0.05;
inline constexpr double kPaddleHalfWidth = 0.1;
inline constexpr double kLaunchX = 0.5;
inline constexpr double kLaunchY = 0.85;

// Deterministic, seedable simulator of one student program.
class BounceEnv {
public:
    // Fires the ProgramStarts event; the returned records are also kept as
    // the episode's reset audit.
    Eigen::VectorXd reset(const ProgramSpec& program, std::uint64_t seed);

    StepResult step(Action action);

    Eigen::VectorXd encode_observation() const;

    bool done() const { return done_; }
    int step_index() const { return step_index_; }
    int player_score() const { return player_score_; }
    int opponent_score() const { return opponent_score_; }
    double paddle_x() const { return paddle_x_; }
    const std::vector<Ball>& balls() const { return balls_; }
    const std::vector<EventRecord>& reset_events() const { return reset_events_; }
    const ProgramSpec& program() const { return program_; }

private:
    void fire_event(EventType e, std::vector<EventRecord>& out, Ball* ball, int commanded_dir);
    void launch_ball();
    void move_paddle(double delta, EventRecord& rec);

    ProgramSpec program_;
    Rng rng_{0};
    double paddle_x_ = 0.5;
    std::vector<Ball> balls_;
    int player_score_ = 0;
    int opponent_score_ = 0;
    int step_index_ = 0;
    bool done_ = false;
    bool started_ = false;
    std::vector<EventRecord> reset_events_;
};

}  // namespace bugprobe
