#include "bugprobe/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "bugprobe/env/probes.hpp"

namespace bugprobe {

using nlohmann::json;

int Rubric::index_of(const Cell& cell) const {
    for (std::size_t i = 0; i < cells.size(); ++i)
        if (cells[i] == cell) return static_cast<int>(i);
    return -1;
}

Rubric rubric_bounce8() {
    Rubric r;
    r.name = "bounce8";
    r.cells = {
        {EventType::BallHitsGoal, ConsequenceKind::Bounce},
        {EventType::BallHitsGoal, ConsequenceKind::OpponentScore},
        {EventType::BallHitsGoal, ConsequenceKind::LaunchBall},
        {EventType::BallHitsFloor, ConsequenceKind::OpponentScore},
        {EventType::BallHitsWall, ConsequenceKind::OpponentScore},
        {EventType::PaddleMoves, ConsequenceKind::MovePaddle},
        {EventType::BallHitsPaddle, ConsequenceKind::PlayerScore},
        {EventType::ProgramStarts, ConsequenceKind::LaunchBall},
    };
    return r;
}

Rubric rubric_bounce28() {
    Rubric r;
    r.name = "bounce28";
    r.cells = all_valid_cells();
    return r;
}

Rubric rubric_breakout() {
    Rubric r;
    r.name = "breakout6";
    r.breakout = true;
    return r;
}

Rubric rubric_by_name(const std::string& name) {
    if (name == "bounce8" || name == "8") return rubric_bounce8();
    if (name == "bounce28" || name == "28") return rubric_bounce28();
    if (name == "breakout6" || name == "breakout") return rubric_breakout();
    throw ConfigError("unknown rubric: " + name);
}

const char* speed_policy_name(SpeedPolicy p) {
    return p == SpeedPolicy::FixedNormal ? "fixed" : "holdout-normal";
}

SpeedPolicy speed_policy_from_name(const std::string& s) {
    if (s == "fixed") return SpeedPolicy::FixedNormal;
    if (s == "holdout-normal") return SpeedPolicy::HoldoutNormal;
    throw ConfigError("unknown speed policy: " + s);
}

namespace {

SpeedSetting sample_nonnormal_speed(Rng& rng) {
    // uniform over the 4 training speeds; normal is held out
    static constexpr SpeedSetting kChoices[4] = {SpeedSetting::VerySlow, SpeedSetting::Slow,
                                                 SpeedSetting::Fast, SpeedSetting::VeryFast};
    return kChoices[rng.uniform_index(4)];
}

}  // namespace

std::vector<int> mask_unobservable(const std::vector<int>& raw, const Rubric& rubric,
                                   const ProgramSpec& program) {
    if (rubric.breakout) return raw;  // breakout labels are the raw flags
    if (raw.size() != rubric.cells.size())
        throw ConfigError("label width does not match rubric size");
    std::vector<int> label = raw;

    if (rubric.name == "bounce8") {
        const bool no_start_launch =
            program.toggled(EventType::ProgramStarts, ConsequenceKind::LaunchBall);
        const bool goal_bounce = program.toggled(EventType::BallHitsGoal, ConsequenceKind::Bounce);
        for (std::size_t i = 0; i < rubric.cells.size(); ++i) {
            const auto& [e, c] = rubric.cells[i];
            const bool ball_event = e != EventType::PaddleMoves && e != EventType::ProgramStarts;
            if (no_start_launch && ball_event) label[i] = 0;
            if (goal_bounce && e == EventType::BallHitsGoal && c != ConsequenceKind::Bounce)
                label[i] = 0;
        }
        return label;
    }

    // Full grid: a toggled cell stays labeled only if the canonical probe
    // oracle demonstrates it on this concrete program. This covers event
    // unreachability, the goal/floor bounce suppression, and launch
    // judgments blanked by the ball cap.
    const auto report = probe_program_report(program, probe_oracle_seed(program));
    for (std::size_t i = 0; i < rubric.cells.size(); ++i)
        if (label[i] && report.deviations.count(rubric.cells[i]) == 0) label[i] = 0;
    return label;
}

LabeledProgram sample_program(const CorpusConfig& config, Rng& rng) {
    LabeledProgram out;
    out.seed = rng.next_u64();
    Rng gen(out.seed);

    if (config.rubric.breakout) {
        BreakoutProgramSpec spec;
        spec.paddle_skewer = gen.bernoulli(config.toggle_p);
        spec.no_delete_brick = gen.bernoulli(config.toggle_p);
        spec.no_bounce_off_brick = gen.bernoulli(config.toggle_p);
        spec.wrong_row_count = gen.bernoulli(config.toggle_p);
        spec.reversed_paddle = gen.bernoulli(config.toggle_p);
        spec.bounce_off_floor = gen.bernoulli(config.toggle_p);
        if (spec.wrong_row_count) {
            // any count in [5, 14] except 10
            int rows = 5 + static_cast<int>(gen.uniform_index(9));
            if (rows >= kDefaultBrickRows) ++rows;
            spec.row_count = rows;
        }
        if (config.speed_policy == SpeedPolicy::HoldoutNormal) {
            spec.ball_speed = sample_nonnormal_speed(gen);
            spec.paddle_speed = sample_nonnormal_speed(gen);
        }
        out.program = spec;
        out.label = spec.label_bits();
        return out;
    }

    ProgramSpec spec;
    std::vector<int> raw(config.rubric.cells.size(), 0);
    for (std::size_t i = 0; i < config.rubric.cells.size(); ++i) {
        if (gen.bernoulli(config.toggle_p)) {
            raw[i] = 1;
            spec.deviations.insert(config.rubric.cells[i]);
        }
    }
    if (config.speed_policy == SpeedPolicy::HoldoutNormal) {
        spec.ball_speed = sample_nonnormal_speed(gen);
        spec.paddle_speed = sample_nonnormal_speed(gen);
    }
    out.program = spec;
    out.label = mask_unobservable(raw, config.rubric, spec);
    return out;
}

std::vector<LabeledProgram> generate_corpus(const CorpusConfig& config, const ExecPolicy& exec) {
    if (config.count < 1) throw ConfigError("corpus size must be >= 1");
    if (config.toggle_p < 0.0 || config.toggle_p > 1.0)
        throw ConfigError("toggle probability must be in [0, 1]");
    std::vector<LabeledProgram> programs(static_cast<std::size_t>(config.count));
    // one derived seed per program, so generation is shardable
    parallel_for(exec, programs.size(), [&](std::size_t i) {
        Rng rng(derive_seed(config.master_seed, "corpus", i));
        programs[i] = sample_program(config, rng);
    });
    return programs;
}

// ---- serialization -------------------------------------------------------------

json program_to_json(const LabeledProgram& p) {
    json j;
    if (p.is_breakout()) {
        const auto& spec = p.breakout();
        j["env"] = "breakout";
        json flags = json::array();
        const char* names[kBreakoutLabelDim] = {"paddle_skewer",   "no_delete_brick",
                                                "no_bounce_off_brick", "wrong_row_count",
                                                "reversed_paddle", "bounce_off_floor"};
        const auto bits = spec.label_bits();
        for (int i = 0; i < kBreakoutLabelDim; ++i)
            if (bits[static_cast<std::size_t>(i)]) flags.push_back(names[i]);
        j["program"] = {{"flags", flags},
                        {"row_count", spec.row_count},
                        {"ball_speed", speed_name(spec.ball_speed)},
                        {"paddle_speed", speed_name(spec.paddle_speed)}};
    } else {
        const auto& spec = p.bounce();
        j["env"] = "bounce";
        json devs = json::array();
        for (const auto& [e, c] : spec.deviations)
            devs.push_back(json::array({event_name(e), consequence_name(c)}));
        j["program"] = {{"deviations", devs},
                        {"ball_speed", speed_name(spec.ball_speed)},
                        {"paddle_speed", speed_name(spec.paddle_speed)}};
    }
    j["label"] = p.label;
    j["seed"] = p.seed;
    return j;
}

LabeledProgram program_from_json(const json& j) {
    LabeledProgram p;
    const std::string env = j.value("env", "bounce");
    const json& prog = j.at("program");
    if (env == "breakout") {
        BreakoutProgramSpec spec;
        for (const auto& f : prog.at("flags")) {
            const std::string name = f.get<std::string>();
            if (name == "paddle_skewer") spec.paddle_skewer = true;
            else if (name == "no_delete_brick") spec.no_delete_brick = true;
            else if (name == "no_bounce_off_brick") spec.no_bounce_off_brick = true;
            else if (name == "wrong_row_count") spec.wrong_row_count = true;
            else if (name == "reversed_paddle") spec.reversed_paddle = true;
            else if (name == "bounce_off_floor") spec.bounce_off_floor = true;
            else throw InputError("unknown breakout flag: " + name);
        }
        spec.row_count = prog.value("row_count", kDefaultBrickRows);
        auto bs = speed_from_name(prog.at("ball_speed").get<std::string>());
        auto ps = speed_from_name(prog.at("paddle_speed").get<std::string>());
        if (!bs || !ps) throw InputError("unknown speed setting");
        spec.ball_speed = *bs;
        spec.paddle_speed = *ps;
        spec.validate();
        p.program = spec;
    } else if (env == "bounce") {
        ProgramSpec spec;
        for (const auto& d : prog.at("deviations")) {
            auto e = event_from_name(d.at(0).get<std::string>());
            auto c = consequence_from_name(d.at(1).get<std::string>());
            if (!e || !c || !cell_valid(*e, *c)) throw InputError("invalid deviation cell");
            spec.deviations.insert({*e, *c});
        }
        auto bs = speed_from_name(prog.at("ball_speed").get<std::string>());
        auto ps = speed_from_name(prog.at("paddle_speed").get<std::string>());
        if (!bs || !ps) throw InputError("unknown speed setting");
        spec.ball_speed = *bs;
        spec.paddle_speed = *ps;
        p.program = spec;
    } else {
        throw InputError("unknown env: " + env);
    }
    p.label = j.at("label").get<std::vector<int>>();
    p.seed = j.at("seed").get<std::uint64_t>();
    return p;
}

void write_dataset(const std::vector<LabeledProgram>& programs, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open dataset for writing: " + path);
    for (const auto& p : programs) out << program_to_json(p).dump() << '\n';
    if (!out) throw IoError("failed writing dataset: " + path);
}

std::vector<LabeledProgram> read_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset: " + path);
    std::vector<LabeledProgram> programs;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw InputError("dataset parse error at line " + std::to_string(line_no) + " of " + path);
        try {
            programs.push_back(program_from_json(j));
        } catch (const json::exception& e) {
            throw InputError("dataset parse error at line " + std::to_string(line_no) + " of " +
                             path + ": " + e.what());
        }
    }
    return programs;
}

// ---- splitting -----------------------------------------------------------------

std::size_t train_count(std::size_t n, double fraction) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(n) * fraction));
}

CorpusSplit split_corpus(const std::vector<LabeledProgram>& corpus, double train_fraction,
                         std::uint64_t seed) {
    if (train_fraction <= 0.0 || train_fraction >= 1.0)
        throw ConfigError("train fraction must be in (0, 1)");
    const std::size_t n_train = train_count(corpus.size(), train_fraction);
    if (n_train == 0 || n_train == corpus.size())
        throw ConfigError("split produces an empty train or test set");

    std::vector<std::size_t> order(corpus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(seed, "split"));
    // Fisher-Yates with the project rng for cross-platform reproducibility
    for (std::size_t i = order.size(); i > 1; --i) {
        const std::size_t j = rng.uniform_index(i);
        std::swap(order[i - 1], order[j]);
    }

    CorpusSplit split;
    split.train.reserve(n_train);
    split.test.reserve(corpus.size() - n_train);
    for (std::size_t i = 0; i < order.size(); ++i)
        (i < n_train ? split.train : split.test).push_back(corpus[order[i]]);
    return split;
}

}  // namespace bugprobe
