#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "bugprobe/env/bounce.hpp"
#include "bugprobe/env/breakout.hpp"
#include "bugprobe/parallel.hpp"
#include "bugprobe/rng.hpp"

namespace bugprobe {

// Ordered list of graded cells; the order defines label indexing.
struct Rubric {
    std::string name;         // "bounce8" | "bounce28" | "breakout6"
    std::vector<Cell> cells;  // empty for breakout
    bool breakout = false;

    int size() const {
        return breakout ? kBreakoutLabelDim : static_cast<int>(cells.size());
    }
    int index_of(const Cell& cell) const;  // -1 if absent
};

// The 8 representative errors, in grading order:
//   1 goal bounces, 2 goal increments opponent, 3 goal launches no ball,
//   4 floor does not increment opponent, 5 wall increments opponent,
//   6 paddle moves the wrong way, 7 paddle hit increments player,
//   8 no ball launched at start.
Rubric rubric_bounce8();
// All 28 valid cells, event-major.
Rubric rubric_bounce28();
Rubric rubric_breakout();
Rubric rubric_by_name(const std::string& name);  // "8" | "28" | "breakout" accepted too

struct LabeledProgram {
    std::variant<ProgramSpec, BreakoutProgramSpec> program;
    std::vector<int> label;
    std::uint64_t seed = 0;

    bool is_breakout() const { return std::holds_alternative<BreakoutProgramSpec>(program); }
    const ProgramSpec& bounce() const { return std::get<ProgramSpec>(program); }
    const BreakoutProgramSpec& breakout() const { return std::get<BreakoutProgramSpec>(program); }
    bool operator==(const LabeledProgram&) const = default;
};

enum class SpeedPolicy {
    FixedNormal,     // both speeds pinned to normal
    HoldoutNormal,   // each axis uniform over the 4 non-normal settings
};
const char* speed_policy_name(SpeedPolicy p);
SpeedPolicy speed_policy_from_name(const std::string& s);

struct CorpusConfig {
    Rubric rubric = rubric_bounce8();
    double toggle_p = 0.12;
    int count = 1;
    SpeedPolicy speed_policy = SpeedPolicy::FixedNormal;
    std::uint64_t master_seed = 0;
};

// Unobservability masking. Rule-based closure for the 8-error rubric (a
// missing start launch hides every ball event; a goal bounce hides the goal's
// score/launch cells). The full grid instead asks the scripted probes which
// events are reachable on this concrete program and additionally suppresses
// the score/launch cells behind a toggled goal/floor bounce.
std::vector<int> mask_unobservable(const std::vector<int>& raw, const Rubric& rubric,
                                   const ProgramSpec& program);

LabeledProgram sample_program(const CorpusConfig& config, Rng& rng);

std::vector<LabeledProgram> generate_corpus(const CorpusConfig& config,
                                            const ExecPolicy& exec = ExecPolicy::serial());

// JSON-lines serialization; read errors name the offending line.
void write_dataset(const std::vector<LabeledProgram>& programs, const std::string& path);
std::vector<LabeledProgram> read_dataset(const std::string& path);

nlohmann::json program_to_json(const LabeledProgram& p);
LabeledProgram program_from_json(const nlohmann::json& j);

// Seeded shuffle then prefix split; train size = floor(n * fraction).
std::size_t train_count(std::size_t n, double fraction);
struct CorpusSplit {
    std::vector<LabeledProgram> train;
    std::vector<LabeledProgram> test;
};
CorpusSplit split_corpus(const std::vector<LabeledProgram>& corpus, double train_fraction,
                         std::uint64_t seed);

}  // namespace bugprobe
