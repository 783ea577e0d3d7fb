#pragma once

#include <Eigen/Core>
#include <vector>

namespace bugprobe {

// One episode as consumed by the networks: observations s_0..s_T plus the
// actions and environment rewards between them. `exp_rewards` carries the
// per-step exploration rewards once they have been computed; they are frozen
// at insertion time and never recomputed from the buffer.
struct Trajectory {
    std::vector<Eigen::VectorXd> observations;  // length T+1
    std::vector<int> actions;                   // length T
    std::vector<double> env_rewards;            // length T
    std::vector<double> exp_rewards;            // length T (filled post-hoc)
    std::vector<int> label_bits;                // the source program's label, if known

    int steps() const { return static_cast<int>(actions.size()); }

    bool consistent() const {
        return observations.size() == actions.size() + 1 &&
               env_rewards.size() == actions.size() &&
               (exp_rewards.empty() || exp_rewards.size() == actions.size());
    }
};

}  // namespace bugprobe
