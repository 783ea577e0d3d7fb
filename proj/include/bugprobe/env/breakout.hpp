#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "bugprobe/env/bounce.hpp"  // speeds, Action, paddle geometry
#include "bugprobe/errors.hpp"
#include "bugprobe/rng.hpp"

namespace bugprobe {

inline constexpr int kBrickCols = 8;
inline constexpr int kMaxBrickRows = 14;
inline constexpr int kDefaultBrickRows = 10;
inline constexpr double kBrickTop = 0.95;
inline constexpr double kBrickRowHeight = 0.035;  // 10 rows span [0.6, 0.95]
inline constexpr double kBreakoutLaunchY = 0.42;  // below the deepest brick row
inline constexpr int kBreakoutEpisodeLimit = 300;
inline constexpr double kPaddleBandHalf = 0.03;   // skewer contact band
inline constexpr int kBreakoutObsDim = 1 + 4 + kMaxBrickRows * kBrickCols;

// The six graded error flags plus speeds. row_count differs from 10 exactly
// when wrong_row_count is set.
struct BreakoutProgramSpec {
    bool paddle_skewer = false;
    bool no_delete_brick = false;
    bool no_bounce_off_brick = false;
    bool wrong_row_count = false;
    bool reversed_paddle = false;
    bool bounce_off_floor = false;
    int row_count = kDefaultBrickRows;
    SpeedSetting ball_speed = SpeedSetting::Normal;
    SpeedSetting paddle_speed = SpeedSetting::Normal;

    void validate() const {
        if (wrong_row_count == (row_count == kDefaultBrickRows))
            throw ConfigError("breakout: row_count must differ from 10 iff wrong_row_count");
        if (row_count < 1 || row_count > kMaxBrickRows)
            throw ConfigError("breakout: row_count out of range");
    }

    std::vector<int> label_bits() const {
        return {paddle_skewer ? 1 : 0,     no_delete_brick ? 1 : 0,
                no_bounce_off_brick ? 1 : 0, wrong_row_count ? 1 : 0,
                reversed_paddle ? 1 : 0,   bounce_off_floor ? 1 : 0};
    }

    bool operator==(const BreakoutProgramSpec&) const = default;
};
inline constexpr int kBreakoutLabelDim = 6;

std::uint64_t breakout_program_hash(const BreakoutProgramSpec& spec);

struct BreakoutEventRecord {
    enum class Kind { PaddleMove, PaddleContact, BrickHit, WallHit, FloorHit };
    Kind kind;
    int commanded_dir = 0;
    double paddle_delta = 0.0;
    bool reversed_vy = false;   // paddle contact
    bool brick_deleted = false;
    bool brick_bounced = false;
    bool floor_bounced = false;
    int row = -1, col = -1;
};

struct BreakoutStepResult {
    Eigen::VectorXd observation;
    double reward = 0.0;  // identically zero for every program
    bool done = false;
    Eigen::VectorXd s;
    int a = 0;
    std::vector<BreakoutEventRecord> events;
};

class BreakoutEnv {
public:
    Eigen::VectorXd reset(const BreakoutProgramSpec& program, std::uint64_t seed);
    BreakoutStepResult step(Action action);
    Eigen::VectorXd encode_observation() const;

    bool done() const { return done_; }
    int step_index() const { return step_index_; }
    int alive_bricks() const;
    double paddle_x() const { return paddle_x_; }
    const Ball& ball() const { return ball_; }
    const BreakoutProgramSpec& program() const { return program_; }

private:
    BreakoutProgramSpec program_;
    Rng rng_{0};
    double paddle_x_ = 0.5;
    Ball ball_;
    std::vector<std::vector<bool>> bricks_;  // [row][col], row 0 at the top
    int step_index_ = 0;
    bool done_ = false;
    bool started_ = false;
};

// Scripted probes for the six flags; detection mirrors the bounce probes.
struct BreakoutProbeReport {
    bool skewer = false;           // >= 3 consecutive paddle-contact reversals
    int max_consecutive_reversals = 0;
    bool brick_not_deleted = false;
    bool brick_no_bounce = false;
    bool wrong_rows = false;
    bool reversed_paddle = false;
    bool floor_bounce = false;

    std::vector<int> to_bits() const {
        return {skewer ? 1 : 0,        brick_not_deleted ? 1 : 0, brick_no_bounce ? 1 : 0,
                wrong_rows ? 1 : 0,    reversed_paddle ? 1 : 0,   floor_bounce ? 1 : 0};
    }
};

BreakoutProbeReport probe_breakout_program(const BreakoutProgramSpec& program, std::uint64_t seed);

}  // namespace bugprobe
