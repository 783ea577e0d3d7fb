#pragma once

#include <array>
#include <set>
#include <vector>

#include "bugprobe/env/bounce.hpp"

namespace bugprobe {

// Scripted probe policies, one per event type. Each probe plays the program
// (over up to `max_episodes` seeded episodes) trying to make its target event
// fire, and collects the audit records of everything that happened. The
// deviation detector below turns those records into the set of cells whose
// consequences observably deviate from the correct template.

struct ProbeOutcome {
    std::vector<EventRecord> records;
    bool target_fired = false;
    int episodes_used = 0;
};

ProbeOutcome run_event_probe(const ProgramSpec& program, EventType target, std::uint64_t seed,
                             int max_episodes = 8);

// Reachability of every event under the scripted probes.
std::array<bool, kNumEvents> probe_reachability(const ProgramSpec& program, std::uint64_t seed,
                                                int max_episodes = 8);

// Deviations that the audit trail proves. Score/launch consequences of a
// goal/floor event that bounced are indeterminate (suppressed) and never
// reported; a paddle-move record with zero displacement is likewise skipped,
// as is a launch judgment made while the ball population sat at the cap.
std::set<Cell> detect_deviations(const std::vector<EventRecord>& records);

// One probe run per event. A cell (E, c) counts as detected only from the
// E-probe's own records, so reachability and detection always agree.
struct ProgramProbeReport {
    std::array<bool, kNumEvents> reachable{};
    std::set<Cell> deviations;
};
ProgramProbeReport probe_program_report(const ProgramSpec& program, std::uint64_t seed,
                                        int max_episodes = 8);

// The content-derived seed that defines the canonical probe oracle for a
// program; masking and label-consistency checks both use it.
std::uint64_t probe_oracle_seed(const ProgramSpec& program);

// Convenience: deviations from the canonical per-event probe report.
std::set<Cell> probe_program(const ProgramSpec& program, std::uint64_t seed,
                             int max_episodes = 8);

// Projected x of a ball when it reaches `target_y`, folding side-wall
// reflections into [0, 1]. Used by the chase controllers.
double project_x(double x, double y, double vx, double vy, double target_y);

}  // namespace bugprobe
