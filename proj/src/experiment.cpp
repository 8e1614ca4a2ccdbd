#include "teachirl/experiment.hpp"
#include "teachirl/io.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>

namespace teachirl {

void ExperimentConfig::validate() const {
    if (seeds.empty()) throw std::invalid_argument("ExperimentConfig: seeds must be non-empty");
    if (T < 1) throw std::invalid_argument("ExperimentConfig: T must be >= 1");
    if (environment.car.has_value() == environment.mdp_path.has_value())
        throw std::invalid_argument("ExperimentConfig: give exactly one of a car environment or an MDP file");
    if (environment.car) environment.car->validate();
    if (teacher.kind != "omni" && teacher.kind != "bbox" && teacher.kind != "agnostic")
        throw std::invalid_argument("ExperimentConfig: unknown teacher kind '" + teacher.kind + "'");
    if (teacher.B < 1 || teacher.k < 1 || teacher.K < 1)
        throw std::invalid_argument("ExperimentConfig: B, k and K must be >= 1");
    if (!(learner.z > 0.0)) throw std::invalid_argument("ExperimentConfig: z must be positive");
    const auto src = teacher.lambda_star.source;
    if (teacher.kind == "omni" && src == LambdaStarSettings::Source::none)
        throw std::invalid_argument("ExperimentConfig: the omni teacher needs a lambda* source");
    if (src == LambdaStarSettings::Source::compute && learner.variant != RewardVariant::linear)
        throw std::invalid_argument("ExperimentConfig: computed lambda* requires a linear learner");
    teacher.lambda_star.cfg.validate();
}

Vector Problem::tasks_initial_dist(std::span<const int> tasks) const {
    Vector p = Vector::Zero(static_cast<Eigen::Index>(mdp.n_states()));
    std::size_t count = 0;
    for (std::size_t s : mdp.initial_states()) {
        if (task_of_state.empty()) throw std::invalid_argument("tasks_initial_dist: MDP has no task metadata");
        if (std::find(tasks.begin(), tasks.end(), task_of_state[s]) == tasks.end()) continue;
        p(static_cast<Eigen::Index>(s)) = 1.0;
        ++count;
    }
    if (count == 0) throw std::invalid_argument("tasks_initial_dist: no initial state belongs to the given tasks");
    return p / static_cast<double>(count);
}

Problem build_problem(const EnvironmentConfig& env, Rng& rng) {
    if (env.car) {
        auto generated = env.per_seed ? car::generate_environment(*env.car, rng) : car::generate_environment(*env.car);
        auto policy = car::teacher_policy(generated.mdp);
        return Problem{generated.mdp, generated.features, generated.task_of_state, std::move(policy),
                       std::move(generated)};
    }
    auto doc = io::read_mdp_file(*env.mdp_path);
    if (!doc.features) throw std::invalid_argument("MDP file has no features");
    if (!doc.mdp.env_reward()) throw std::invalid_argument("MDP file has no env_reward");
    auto policy = optimal_policy(doc.mdp, *doc.mdp.env_reward());
    return Problem{std::move(doc.mdp), std::move(doc.features), std::move(doc.task_of_state), std::move(policy),
                   std::nullopt};
}

std::string config_hash(const ExperimentConfig& cfg) {
    auto j = io::config_to_json(cfg);
    j.erase("seeds");
    j.erase("output_dir");
    const std::string text = j.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL; // FNV-1a
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

static RewardModel initial_model(const Problem& problem, const LearnerConfig& learner, Rng& rng) {
    RewardModel model = RewardModel::zeros(learner.variant, problem.features);
    if (learner.variant == RewardVariant::quadratic) {
        Vector p = model.params();
        const auto d = static_cast<Eigen::Index>(problem.features->dim());
        for (Eigen::Index i = 0; i < d; ++i) p(d + i) = learner.quadratic_init_scale * rng.normal();
        model = model.with_params(std::move(p));
    }
    return model;
}

Vector warmup_parameters(const Problem& problem, const LearnerConfig& learner, const LambdaStarConfig& budget_cfg,
                         Rng& rng, std::vector<std::string>* notes) {
    RewardModel model = initial_model(problem, learner, rng);
    if (learner.warmup_tasks.empty()) return model.params();

    LambdaStarConfig bc = budget_cfg;
    bc.feature_dim = problem.features->dim();
    bc.gamma = problem.mdp.discount();
    const DemoBudget budget = sample_demo_budget(bc);
    const std::size_t count = learner.warmup_demos ? learner.warmup_demos : budget.demo_count;

    const Vector p = problem.tasks_initial_dist(learner.warmup_tasks);
    const std::vector<double> weights(p.data(), p.data() + p.size());
    std::vector<Demonstration> demos;
    demos.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t s0 = rng.categorical(weights);
        demos.push_back(rollout(problem.mdp, problem.teacher_policy, s0, budget.horizon, rng));
    }
    FitOptions opts;
    opts.tol = budget_cfg.opt_tol;
    opts.max_iters = budget_cfg.opt_max_iters;
    opts.step_size = budget_cfg.opt_step_size;
    opts.ball = ParameterBall(learner.z);
    const FitResult fit = fit_demonstrations(problem.mdp, demos, model, opts);
    if (!fit.converged && notes)
        notes->push_back("warm-up fit stopped at gradient norm " + std::to_string(fit.gradient_norm));
    return fit.lambda;
}

static Vector resolve_lambda_star(const ExperimentConfig& cfg, const Problem& problem, Rng& rng,
                                  std::vector<std::string>& notes) {
    const auto& ls = cfg.teacher.lambda_star;
    if (ls.source == LambdaStarSettings::Source::given) return ls.given;
    LambdaStarConfig lc = ls.cfg;
    lc.feature_dim = problem.features->dim();
    lc.gamma = problem.mdp.discount();
    const RewardModel tmpl = RewardModel::zeros(RewardVariant::linear, problem.features);
    try {
        return compute_lambda_star(problem.mdp, problem.teacher_policy, tmpl, lc, rng, ParameterBall(cfg.learner.z))
            .lambda;
    } catch (const LambdaStarConvergenceError& e) {
        notes.push_back("lambda* fit stopped at gradient norm " + std::to_string(e.partial().fit.gradient_norm) +
                        "; using the last iterate");
        return e.partial().lambda;
    }
}

RunRecord run_seed(const ExperimentConfig& cfg, std::uint64_t seed, const RunObserver& observer) {
    const auto t0 = std::chrono::steady_clock::now();
    RunRecord rec;
    rec.config_hash = config_hash(cfg);
    rec.seed = seed;

    try {
        cfg.validate();
        Rng master(seed);
        Rng env_rng = master.fork();
        Rng warm_rng = master.fork();
        Rng star_rng = master.fork();
        Rng teach_rng = master.fork();

        const Problem problem = build_problem(cfg.environment, env_rng);
        const Table& env_reward = *problem.mdp.env_reward();

        LambdaStarConfig budget_cfg = cfg.teacher.lambda_star.cfg;
        budget_cfg.feature_dim = problem.features->dim();
        budget_cfg.gamma = problem.mdp.discount();
        const std::size_t horizon = cfg.teacher.horizon ? cfg.teacher.horizon : sample_demo_budget(budget_cfg).horizon;

        rec.initial_lambda = warmup_parameters(problem, cfg.learner, budget_cfg, warm_rng, &rec.notes);
        if (cfg.teacher.lambda_star.source != LambdaStarSettings::Source::none)
            rec.lambda_star = resolve_lambda_star(cfg, problem, star_rng, rec.notes);

        TeacherKind teacher = AgnosticTeacher{};
        if (cfg.teacher.kind == "omni") teacher = OmniTeacher{*rec.lambda_star};
        else if (cfg.teacher.kind == "bbox") teacher = BboxTeacher{cfg.teacher.B, cfg.teacher.k};

        const RewardModel model = RewardModel::zeros(cfg.learner.variant, problem.features).with_params(rec.initial_lambda);
        LearnerState learner = make_learner(problem.mdp, model, cfg.learner.schedule, ParameterBall(cfg.learner.z));

        const MetricsEvaluator metrics(problem.mdp, problem.teacher_policy, env_reward, problem.task_of_state,
                                       rec.lambda_star);
        rec.task_ids = metrics.task_ids();

        PoolConfig pool_cfg;
        pool_cfg.candidates = cfg.teacher.K;
        pool_cfg.horizon = horizon;

        auto sink = [&](const StepContext& ctx) {
            rec.rows.push_back(metrics.row(ctx.learner, SelectionInfo{ctx.t, ctx.selection.start,
                                                                      ctx.selection.objective, ctx.probed}));
            if (observer) observer(ctx, problem);
        };
        try {
            auto result = teaching_loop(problem.mdp, problem.teacher_policy, teacher, learner, cfg.T, pool_cfg,
                                        teach_rng, sink);
            rec.final_lambda = result.learner.params();
            MetricsRow last = metrics.row(result.learner, SelectionInfo{cfg.T + 1, 0, 0.0, false});
            last.sel_task = -1;
            rec.final_row = std::move(last);
        } catch (const TeachingLoopError& e) {
            rec.failure = e.what();
        }
    } catch (const std::exception& e) {
        rec.failure = e.what();
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    std::vector<RunRecord> records;
    records.reserve(cfg.seeds.size());
    for (std::uint64_t seed : cfg.seeds) records.push_back(run_seed(cfg, seed));
    if (!cfg.output_dir.empty()) io::write_run_outputs(cfg.output_dir, records);
    return records;
}

} // namespace teachirl
