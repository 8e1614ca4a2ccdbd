#include "teachirl/learner.hpp"

#include <cmath>
#include <limits>

namespace teachirl {

LearningSchedule::LearningSchedule(Kind k, double v) : kind(k), value(v) {
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("LearningSchedule: rate must be positive");
}

double LearningSchedule::rate(std::size_t t) const {
    if (t == 0) throw std::invalid_argument("LearningSchedule::rate: steps start at 1");
    return kind == Kind::constant ? value : value / std::sqrt(static_cast<double>(t));
}

LearnerState make_learner(const TabularMdp& mdp, const RewardModel& model, LearningSchedule schedule,
                          ParameterBall ball, double solver_tol) {
    RewardModel projected = model.with_params(project_to_ball(model.params(), ball));
    auto sol = soft_value_iteration(mdp, projected.reward_table(), solver_tol);
    return LearnerState{std::move(projected), std::move(sol.policy), 1, schedule, ball, solver_tol};
}

Vector learner_gradient(const LearnerState& state, const Demonstration& demo, const TabularMdp& mdp) {
    const Vector mu_pi = feature_expectation_policy(mdp, state.policy, demo.start_state(), state.model,
                                                    state.solver_tol);
    return mu_pi - feature_expectation_demo(demo, state.model, mdp.discount());
}

LearnerState apply_gradient(const LearnerState& state, const Vector& gradient, const TabularMdp& mdp) {
    if (gradient.size() != state.params().size())
        throw std::invalid_argument("apply_gradient: gradient length does not match the parameters");
    const Vector next = project_to_ball(state.params() - state.learning_rate() * gradient, state.ball);
    RewardModel model = state.model.with_params(next);
    auto sol = soft_value_iteration(mdp, model.reward_table(), state.solver_tol);
    return LearnerState{std::move(model), std::move(sol.policy), state.step + 1, state.schedule, state.ball,
                        state.solver_tol};
}

LearnerState learner_step(const LearnerState& state, const Demonstration& demo, const TabularMdp& mdp) {
    return apply_gradient(state, learner_gradient(state, demo, mdp), mdp);
}

// *******************************************************
// Likelihood and its gradient
// *******************************************************

Eigen::MatrixXd soft_value_jacobian(const TabularMdp& mdp, const StochasticPolicy& policy,
                                    const RewardModel& model, double tol) {
    const std::size_t ns = mdp.n_states();
    const std::size_t na = mdp.n_actions();
    const auto p = static_cast<Eigen::Index>(model.param_dim());
    const double gamma = mdp.discount();

    // expected reward gradient under the policy, per state
    Eigen::MatrixXd base = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ns), p);
    for (std::size_t s = 0; s < ns; ++s)
        for (std::size_t a = 0; a < na; ++a)
            if (policy(s, a) > 0.0) base.row(static_cast<Eigen::Index>(s)) += policy(s, a) * model.gradient(s, a).transpose();

    Eigen::MatrixXd jac = base;
    Eigen::MatrixXd next(jac.rows(), jac.cols());
    const std::size_t cap = gamma > 0.0
        ? 10 * static_cast<std::size_t>(std::max(1.0, std::ceil(std::log(tol) / std::log(gamma))))
        : 1;
    double residual = std::numeric_limits<double>::infinity();
    std::size_t it = 0;
    while (gamma > 0.0 && it < cap) {
        next = base;
        for (std::size_t s = 0; s < ns; ++s)
            for (std::size_t a = 0; a < na; ++a) {
                const double w = gamma * policy(s, a);
                if (w == 0.0) continue;
                for (const auto& t : mdp.successors(s, a))
                    next.row(static_cast<Eigen::Index>(s)) += (w * t.prob) * jac.row(static_cast<Eigen::Index>(t.next));
            }
        residual = (next - jac).cwiseAbs().maxCoeff();
        jac.swap(next);
        ++it;
        if (residual < tol) break;
    }
    if (gamma > 0.0 && !(residual < tol))
        throw ConvergenceError("soft_value_jacobian did not converge", residual, it);
    return jac;
}

NllResult nll_loss_and_gradient(const RewardModel& model, const TabularMdp& mdp, const Demonstration& demo,
                                const Vector& lambda, double tol) {
    const RewardModel at = model.with_params(lambda);
    const auto sol = soft_value_iteration(mdp, at.reward_table(), tol);
    const double gamma = mdp.discount();
    const auto occ = demo_occupancy(demo, mdp.n_states(), mdp.n_actions(), gamma);

    double loss = 0.0;
    for (std::size_t s = 0; s < mdp.n_states(); ++s)
        for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
            const double w = occ.rho(s, a);
            if (w == 0.0) continue;
            const double p = sol.policy(s, a);
            if (!(p > 0.0))
                throw std::runtime_error("nll_loss_and_gradient: zero probability for a demonstrated action");
            loss -= w * std::log(p);
        }

    const Eigen::MatrixXd jac = soft_value_jacobian(mdp, sol.policy, at, tol);
    Vector grad = Vector::Zero(lambda.size());
    for (std::size_t s = 0; s < mdp.n_states(); ++s)
        for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
            const double w = occ.rho(s, a);
            if (w == 0.0) continue;
            Vector term = jac.row(static_cast<Eigen::Index>(s)).transpose() - at.gradient(s, a);
            for (const auto& t : mdp.successors(s, a))
                term -= (gamma * t.prob) * jac.row(static_cast<Eigen::Index>(t.next)).transpose();
            grad += w * term;
        }

    const Vector mu_pi = feature_expectation(occupancy_from_state(mdp, sol.policy, demo.start_state(), tol), at);
    Vector feature_grad = mu_pi - feature_expectation(occ, at);
    return NllResult{loss, std::move(grad), std::move(feature_grad)};
}

// *******************************************************
// Target parameter
// *******************************************************

void LambdaStarConfig::validate() const {
    if (!(eps_tilde > 0.0)) throw std::invalid_argument("LambdaStarConfig: eps_tilde must be positive");
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("LambdaStarConfig: delta must lie in (0, 1)");
    if (feature_dim == 0) throw std::invalid_argument("LambdaStarConfig: feature_dim must be positive");
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("LambdaStarConfig: gamma must lie in (0, 1)");
    if (!(opt_tol > 0.0) || opt_max_iters == 0 || !(opt_step_size > 0.0))
        throw std::invalid_argument("LambdaStarConfig: optimizer settings must be positive");
}

DemoBudget sample_demo_budget(const LambdaStarConfig& cfg) {
    cfg.validate();
    const double d = static_cast<double>(cfg.feature_dim);
    const double ratio = cfg.eps_tilde / (2.0 * std::sqrt(d));
    if (!(ratio < 1.0)) throw std::invalid_argument("sample_demo_budget: eps_tilde must be below 2 sqrt(d)");
    const double m = std::ceil(2.0 * d / (cfg.eps_tilde * cfg.eps_tilde) * std::log(2.0 * d / cfg.delta));
    const double h = std::ceil(std::log(ratio) / std::log(cfg.gamma));
    return DemoBudget{static_cast<std::size_t>(std::max(1.0, m)), static_cast<std::size_t>(std::max(1.0, h))};
}

namespace {

struct DualEval {
    double objective;
    Vector gradient;
};

} // namespace

FitResult fit_demonstrations(const TabularMdp& mdp, std::span<const Demonstration> demos, const RewardModel& init,
                             const FitOptions& options) {
    if (demos.empty()) throw std::invalid_argument("fit_demonstrations: no demonstrations");
    const double gamma = mdp.discount();
    const std::size_t ns = mdp.n_states();

    Vector starts = Vector::Zero(static_cast<Eigen::Index>(ns));
    for (const auto& d : demos) starts[static_cast<Eigen::Index>(d.start_state())] += 1.0;
    starts /= static_cast<double>(demos.size());
    const auto demo_occ = demo_occupancy(demos, ns, mdp.n_actions(), gamma);

    double last_nll = 0.0;
    auto evaluate = [&](const Vector& lambda) {
        const RewardModel model = init.with_params(lambda);
        const Table reward = model.reward_table();
        const auto sol = soft_value_iteration(mdp, reward, options.solver_tol);
        const double objective = (1.0 - gamma) * starts.dot(sol.values) - demo_occ.rho.cwiseProduct(reward).sum();
        const auto occ = occupancy_measure(mdp, sol.policy, starts, options.solver_tol);
        last_nll = 0.0;
        for (std::size_t s = 0; s < ns; ++s)
            for (std::size_t a = 0; a < mdp.n_actions(); ++a)
                if (demo_occ.rho(s, a) > 0.0) last_nll -= demo_occ.rho(s, a) * std::log(sol.policy(s, a));
        return DualEval{objective, feature_expectation(occ, model) - feature_expectation(demo_occ, model)};
    };

    Vector lambda = project_to_ball(init.params(), options.ball);
    DualEval current = evaluate(lambda);
    double current_nll = last_nll;
    double step = options.step_size;
    FitResult result{lambda, 0.0, 0.0, current_nll, 0, {current.objective}, false};

    auto mapping_norm = [&](const Vector& lam, const Vector& g, double h) {
        return (lam - project_to_ball(lam - h * g, options.ball)).norm() / h;
    };

    std::size_t it = 0;
    while (it < options.max_iters) {
        if (mapping_norm(lambda, current.gradient, step) < options.tol) {
            result.converged = true;
            break;
        }
        const Vector trial = project_to_ball(lambda - step * current.gradient, options.ball);
        DualEval next = evaluate(trial);
        ++it;
        // sufficient decrease of the projected-gradient quadratic model
        const Vector move = trial - lambda;
        const double model_bound = current.objective + current.gradient.dot(move) + move.squaredNorm() / (2.0 * step);
        if (next.objective <= model_bound + 1e-13 * std::max(1.0, std::abs(current.objective))) {
            lambda = trial;
            current = std::move(next);
            current_nll = last_nll;
            result.objective_trace.push_back(current.objective);
            // grow after an accepted step so flat regions are crossed quickly
            step = std::min(step * 1.5, options.step_size * 1e6);
        } else {
            step *= 0.5;
            if (step < 1e-14) break;
        }
    }
    if (!result.converged && mapping_norm(lambda, current.gradient, step) < options.tol) result.converged = true;

    result.lambda = lambda;
    result.feature_residual = current.gradient.norm();
    result.gradient_norm = mapping_norm(lambda, current.gradient, step);
    result.mean_nll = current_nll;
    result.iterations = it;
    return result;
}

LambdaStarResult compute_lambda_star(const TabularMdp& mdp, const StochasticPolicy& teacher_policy,
                                     const RewardModel& model_template, const LambdaStarConfig& cfg, Rng& rng,
                                     ParameterBall ball) {
    if (model_template.variant() != RewardVariant::linear)
        throw std::invalid_argument("compute_lambda_star: requires a linear reward model");
    cfg.validate();
    if (model_template.features().dim() != cfg.feature_dim)
        throw std::invalid_argument("compute_lambda_star: feature_dim does not match the model");
    if (std::abs(cfg.gamma - mdp.discount()) > 1e-15)
        throw std::invalid_argument("compute_lambda_star: gamma does not match the MDP");

    const DemoBudget budget = sample_demo_budget(cfg);
    std::vector<double> p0(mdp.initial_dist().data(), mdp.initial_dist().data() + mdp.n_states());
    std::vector<Demonstration> demos;
    demos.reserve(budget.demo_count);
    for (std::size_t i = 0; i < budget.demo_count; ++i) {
        const std::size_t s0 = rng.categorical(p0);
        demos.push_back(rollout(mdp, teacher_policy, s0, budget.horizon, rng));
    }

    FitOptions opts;
    opts.tol = cfg.opt_tol;
    opts.max_iters = cfg.opt_max_iters;
    opts.step_size = cfg.opt_step_size;
    opts.ball = ball;
    FitResult fit = fit_demonstrations(mdp, demos, model_template, opts);
    LambdaStarResult out{fit.lambda, std::move(fit), budget, std::move(demos)};
    if (!out.fit.converged) throw LambdaStarConvergenceError(std::move(out));
    return out;
}

double evaluate_learnability(const TabularMdp& mdp, const RewardModel& model, const Vector& lambda,
                             const Table& env_reward, const StochasticPolicy& teacher_policy, double tol) {
    const auto sol = soft_value_iteration(mdp, model.with_params(lambda).reward_table(), tol);
    const double nu_learner = expected_reward(occupancy_measure(mdp, sol.policy, tol), env_reward);
    const double nu_teacher = expected_reward(occupancy_measure(mdp, teacher_policy, tol), env_reward);
    return std::abs(nu_learner - nu_teacher);
}

} // namespace teachirl
