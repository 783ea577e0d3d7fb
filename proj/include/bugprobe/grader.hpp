#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "bugprobe/corpus.hpp"
#include "bugprobe/trainer.hpp"

namespace bugprobe {

struct PredictedLabel {
    std::vector<int> bits;           // argmax per dimension, ties to 0
    std::vector<double> confidence;  // g(y_k = 1 | tau_k)
};

struct DimensionMetrics {
    long long tp = 0, fp = 0, tn = 0, fn = 0;
    double accuracy = 0, precision = 0, recall = 0, f1 = 0;
};

// metrics with the declared 0/0 convention: an empty denominator scores 1.0
// when the dimension has zero positives in both labels and predictions,
// otherwise 0.0
DimensionMetrics metrics_from_counts(long long tp, long long fp, long long tn, long long fn);

struct MetricsReport {
    std::vector<DimensionMetrics> dims;
    DimensionMetrics macro;  // unweighted means; counts are totals
    double seconds_per_program = 0;
    nlohmann::json config_echo = nlohmann::json::object();

    bool same_numbers(const MetricsReport& other) const;
};

MetricsReport compute_metrics(const std::vector<std::vector<int>>& labels,
                              const std::vector<std::vector<int>>& predictions);

// metrics.json + metrics.csv (+ optional copy of a learning-curve CSV)
void emit_report(const MetricsReport& report, const std::string& out_dir,
                 const std::string& curves_csv_path = "");
MetricsReport parse_report(const std::string& json_path);

struct AggregateReport {
    double accuracy_mean = 0, accuracy_std = 0;
    double precision_mean = 0, precision_std = 0;
    double recall_mean = 0, recall_std = 0;
    double f1_mean = 0, f1_std = 0;
    int runs = 0;
};
// mean +/- sample standard deviation over per-seed macro rows
AggregateReport aggregate_reports(const std::vector<MetricsReport>& reports);

std::uint64_t labeled_program_hash(const LabeledProgram& p);

// ---- speed-generalization suites ------------------------------------------

enum class SpeedSuite { BothHeldOut, BallHeldOut, PaddleHeldOut, NoneHeldOut };
const char* speed_suite_name(SpeedSuite s);

// Copy of the corpus with speeds re-drawn per suite rule ("held out" pins the
// normal speed; otherwise a random training speed). Probe-masked rubrics are
// re-masked on the re-speeded programs.
std::vector<LabeledProgram> respeed_corpus(const std::vector<LabeledProgram>& corpus,
                                           const Rubric& rubric, SpeedSuite suite,
                                           std::uint64_t seed);

// ---- grading ---------------------------------------------------------------

template <typename S>
struct GraderModel {
    QNetConfig qcfg;
    ClassifierConfig ccfg;
    std::vector<nn::ParameterSet<S>> policies;      // one per dimension, or one shared
    std::vector<FeedbackClassifier<S>> classifiers;  // one per dimension
    Rubric rubric;
    std::string env = "bounce";
    std::uint64_t master_seed = 0;

    const nn::ParameterSet<S>& policy_for(int k) const {
        return policies.size() == 1 ? policies[0] : policies[static_cast<std::size_t>(k)];
    }

    void validate() const {
        if (static_cast<int>(classifiers.size()) != rubric.size())
            throw ConfigError("grader: classifier count does not match rubric " + rubric.name);
        if (policies.size() != 1 && static_cast<int>(policies.size()) != rubric.size())
            throw ConfigError("grader: policy count must be 1 or K");
    }
};

// The deployed feedback function: K evaluation episodes (eps = 0), one per
// rubric dimension, each classified by its own network. Episode seeds derive
// from the program content hash and the model's master seed.
template <typename S>
inline PredictedLabel grade(const GraderModel<S>& model, const LabeledProgram& program) {
    if (program.is_breakout() != (model.env == "breakout"))
        throw ConfigError("grade: program environment does not match the checkpoints");
    PredictedLabel out;
    const std::uint64_t base = hash_combine(labeled_program_hash(program), model.master_seed);
    for (int k = 0; k < model.rubric.size(); ++k) {
        const std::uint64_t seed = derive_seed(base, "grade", static_cast<std::uint64_t>(k));
        Rng rng(seed);
        Trajectory traj = rollout_policy(model.qcfg, model.policy_for(k), program, seed,
                                         [] { return 0.0; }, rng);
        const auto prob = model.classifiers[static_cast<std::size_t>(k)].classify_full(traj);
        out.bits.push_back(prob[1] > prob[0] ? 1 : 0);
        out.confidence.push_back(prob[1]);
    }
    return out;
}

// Grades every program (data-parallel) and reduces confusion counts in index
// order; the metrics are therefore independent of the execution policy.
template <typename S>
inline MetricsReport evaluate(const GraderModel<S>& model,
                              const std::vector<LabeledProgram>& programs,
                              const ExecPolicy& exec) {
    if (programs.empty()) throw ConfigError("evaluate: empty split");
    model.validate();
    std::vector<std::vector<int>> predictions(programs.size());
    const auto t0 = std::chrono::steady_clock::now();
    parallel_for(exec, programs.size(), [&](std::size_t i) {
        predictions[i] = grade(model, programs[i]).bits;
    });
    const auto t1 = std::chrono::steady_clock::now();
    std::vector<std::vector<int>> labels(programs.size());
    for (std::size_t i = 0; i < programs.size(); ++i) labels[i] = programs[i].label;
    MetricsReport report = compute_metrics(labels, predictions);
    report.seconds_per_program =
        std::chrono::duration<double>(t1 - t0).count() / static_cast<double>(programs.size());
    return report;
}

// Reconstructs a grader from a training run directory (manifest.json plus
// checkpoint files). Precision is read from the manifest by the caller.
template <typename S>
inline GraderModel<S> load_grader_model(const std::string& run_dir, std::uint64_t master_seed) {
    const std::string manifest_path = run_dir + "/manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open manifest: " + manifest_path);
    nlohmann::json manifest = nlohmann::json::parse(in, nullptr, false);
    if (manifest.is_discarded()) throw IoError("corrupt manifest: " + manifest_path);
    if (manifest.value("precision", "") != nn::precision_name<S>())
        throw ConfigError("manifest precision mismatch: expected " +
                          std::string(nn::precision_name<S>()));

    GraderModel<S> model;
    model.rubric = rubric_by_name(manifest.at("rubric").get<std::string>());
    model.env = manifest.at("env").get<std::string>();
    model.master_seed = master_seed;
    model.qcfg.emb.obs_dim = manifest.at("obs_dim").get<int>();
    model.ccfg.emb.obs_dim = model.qcfg.emb.obs_dim;
    for (const auto& f : manifest.at("policies"))
        model.policies.push_back(nn::load_checkpoint<S>(run_dir + "/" + f.get<std::string>()));
    model.classifiers.resize(0);
    for (const auto& f : manifest.at("classifiers"))
        model.classifiers.push_back(nn::load_checkpoint<S>(run_dir + "/" + f.get<std::string>()));
    model.validate();
    return model;
}

}  // namespace bugprobe
