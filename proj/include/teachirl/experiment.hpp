#pragma once

#include "teachirl/analysis.hpp"
#include "teachirl/car_env.hpp"
#include "teachirl/teachers.hpp"

#include <optional>
#include <string>

namespace teachirl {

/// Either a generated car environment or an MDP file (see io.hpp for the schema).
struct EnvironmentConfig {
    std::optional<car::CarMdpConfig> car;
    std::optional<std::string> mdp_path;
    /// When false the car generator uses car->seed for every run; otherwise each run draws its own lanes.
    bool per_seed = true;
};

struct LearnerConfig {
    RewardVariant variant = RewardVariant::linear;
    LearningSchedule schedule = LearningSchedule::constant(0.2);
    double z = 100.0;
    /// Tasks whose start states provide the warm-up demonstrations for lambda_1; empty = start at zero.
    std::vector<int> warmup_tasks;
    /// 0 = the demonstration budget of the lambda* settings. The fit uses the lambda* optimizer settings.
    std::size_t warmup_demos = 0;
    /// Standard deviation of the random initial quadratic block (zero is a saddle of that block).
    double quadratic_init_scale = 0.01;
};

struct LambdaStarSettings {
    enum class Source { compute, given, none };
    Source source = Source::compute;
    Vector given;
    LambdaStarConfig cfg{};
};

struct TeacherConfig {
    std::string kind = "omni"; // omni | bbox | agnostic
    std::size_t B = 5;
    std::size_t k = 5;
    std::size_t K = 10;
    /// Demonstration and probe horizon; 0 = the budget horizon of the lambda* settings.
    std::size_t horizon = 0;
    LambdaStarSettings lambda_star{};
};

struct ExperimentConfig {
    EnvironmentConfig environment;
    LearnerConfig learner;
    TeacherConfig teacher;
    std::size_t T = 200;
    std::vector<std::uint64_t> seeds{1};
    std::string output_dir;

    void validate() const;
};

/// Everything a run needs about the environment.
struct Problem {
    TabularMdp mdp;
    std::shared_ptr<const FeatureMap> features;
    std::vector<int> task_of_state;
    StochasticPolicy teacher_policy;
    std::optional<car::CarEnvironment> car;

    /// Uniform over the initial states whose task is in `tasks`.
    Vector tasks_initial_dist(std::span<const int> tasks) const;
};

Problem build_problem(const EnvironmentConfig& env, Rng& rng);

struct RunRecord {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::vector<int> task_ids;
    std::vector<MetricsRow> rows;
    /// Metrics of the learner after the final update (t = T + 1).
    std::optional<MetricsRow> final_row;
    Vector initial_lambda;
    Vector final_lambda;
    std::optional<Vector> lambda_star;
    double wall_seconds = 0.0;
    std::optional<std::string> failure;
    std::vector<std::string> notes;
};

/// Stable 64-bit hash of the configuration without seeds and output directory, as hex.
std::string config_hash(const ExperimentConfig& cfg);

/// Warm-up parameters lambda_1 (see LearnerConfig).
Vector warmup_parameters(const Problem& problem, const LearnerConfig& learner, const LambdaStarConfig& budget_cfg,
                         Rng& rng, std::vector<std::string>* notes = nullptr);

/// Extra per-step observer used by tests; called after the metrics row is recorded.
using RunObserver = std::function<void(const StepContext&, const Problem&)>;

/// One seed. Never throws for component failures; they end up in `failure`.
RunRecord run_seed(const ExperimentConfig& cfg, std::uint64_t seed, const RunObserver& observer = {});

/// All seeds; writes per-seed and aggregate CSVs when cfg.output_dir is set.
std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg);

} // namespace teachirl
