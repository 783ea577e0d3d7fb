#pragma once

#include <memory>
#include <vector>

#include "bugprobe/corpus.hpp"
#include "bugprobe/env/bounce.hpp"
#include "bugprobe/env/breakout.hpp"

namespace bugprobe {

// Episodic meta-RL wrapper: each reset samples a program from a split and
// treats it as a fresh task. Labels of test-split episodes stay sealed until
// a prediction has been submitted.
class MetaEpisode {
public:
    MetaEpisode(const LabeledProgram* program, bool label_open)
        : program_(program), label_open_(label_open) {}

    const LabeledProgram& program() const { return *program_; }

    const std::vector<int>& label() const {
        if (!label_open_)
            throw UsageError("label requested for a test-split episode before prediction");
        return program_->label;
    }

    void submit_prediction() { label_open_ = true; }

private:
    const LabeledProgram* program_;
    bool label_open_;
};

enum class Split { Train, Test };

class MetaEnv {
public:
    MetaEnv(std::vector<LabeledProgram> train, std::vector<LabeledProgram> test)
        : train_(std::move(train)), test_(std::move(test)) {}

    const std::vector<LabeledProgram>& split(Split s) const {
        return s == Split::Train ? train_ : test_;
    }

    // Uniform task sampling; training labels are immediately available.
    MetaEpisode sample(Split s, Rng& rng) const {
        const auto& pool = split(s);
        if (pool.empty()) throw ConfigError("meta reset on an empty split");
        const auto& program = pool[rng.uniform_index(pool.size())];
        return MetaEpisode(&program, s == Split::Train);
    }

private:
    std::vector<LabeledProgram> train_;
    std::vector<LabeledProgram> test_;
};

// Resets the right simulator for a sampled program and encodes s_0.
inline Eigen::VectorXd reset_program_env(const LabeledProgram& p, BounceEnv& bounce,
                                         BreakoutEnv& breakout, std::uint64_t seed) {
    if (p.is_breakout()) return breakout.reset(p.breakout(), seed);
    return bounce.reset(p.bounce(), seed);
}

}  // namespace bugprobe
