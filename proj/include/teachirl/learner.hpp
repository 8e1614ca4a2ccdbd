#pragma once

#include "teachirl/mdp.hpp"
#include "teachirl/reward_model.hpp"

#include <vector>

namespace teachirl {

/// Step size eta_t: constant, or c / sqrt(t).
struct LearningSchedule {
    enum class Kind { constant, inverse_sqrt };

    static LearningSchedule constant(double eta) { return LearningSchedule(Kind::constant, eta); }
    static LearningSchedule inverse_sqrt(double c) { return LearningSchedule(Kind::inverse_sqrt, c); }

    /// t starts at 1.
    double rate(std::size_t t) const;

    Kind kind;
    double value;

private:
    LearningSchedule(Kind k, double v);
};

/**
Sequential MCE-IRL learner state: parameters, the soft Bellman policy of those
parameters, and the step counter t (starting at 1).

Passed by value between steps; `policy` is always the soft value iteration
output for `model.params()`.
*/
struct LearnerState {
    RewardModel model;
    StochasticPolicy policy;
    std::size_t step;
    LearningSchedule schedule;
    ParameterBall ball;
    double solver_tol;

    const Vector& params() const noexcept { return model.params(); }
    double learning_rate() const { return schedule.rate(step); }
};

/// Initial learner (t = 1) with the soft Bellman policy of `model`'s parameters.
/// Parameters outside the ball are projected first.
LearnerState make_learner(const TabularMdp& mdp, const RewardModel& model, LearningSchedule schedule,
                          ParameterBall ball = ParameterBall{}, double solver_tol = 1e-10);

/// g_t = mu^{pi_t, s0} - mu^{xi}, with s0 the demonstration's start state.
Vector learner_gradient(const LearnerState& state, const Demonstration& demo, const TabularMdp& mdp);

/// lambda_{t+1} = Proj[lambda_t - eta_t g]; recomputes the policy and advances t.
LearnerState apply_gradient(const LearnerState& state, const Vector& gradient, const TabularMdp& mdp);

/// One step of sequential MCE-IRL on a single demonstration.
LearnerState learner_step(const LearnerState& state, const Demonstration& demo, const TabularMdp& mdp);

struct NllResult {
    /// -sum_{s,a} rho^xi(s,a) log pi_lambda(a|s), i.e. (1-gamma) sum_tau gamma^tau (-log pi).
    double loss;
    /// Exact derivative of `loss` with respect to lambda.
    Vector gradient;
    /// mu^{pi_lambda, s0} - mu^{xi}; equals `gradient` when the demonstration's
    /// transitions are deterministic and its truncated tail carries no features.
    Vector feature_gradient;
};

/**
Discounted negative log-likelihood of one demonstration under the soft Bellman
policy of `lambda`, and its gradient.

The exact gradient is
    sum_{s,a} rho^xi(s,a) [dV(s) - dR(s,a) - gamma sum_s' T(s'|s,a) dV(s')]
with dV the parameter derivative of the soft value, obtained by policy
evaluation of dR under pi_lambda.
*/
NllResult nll_loss_and_gradient(const RewardModel& model, const TabularMdp& mdp, const Demonstration& demo,
                                const Vector& lambda, double tol = 1e-10);

/// d V_lambda(s) / d lambda for every state (rows), given the policy of lambda.
Eigen::MatrixXd soft_value_jacobian(const TabularMdp& mdp, const StochasticPolicy& policy,
                                    const RewardModel& model, double tol = 1e-10);

/// Settings for the demonstration-budget and target-parameter computation.
struct LambdaStarConfig {
    double eps_tilde = 0.5;
    double delta = 0.1;
    std::size_t feature_dim = 8;
    double gamma = 0.9;
    double opt_tol = 1e-6;
    std::size_t opt_max_iters = 5000;
    double opt_step_size = 1.0;

    void validate() const;
};

struct DemoBudget {
    std::size_t demo_count;
    std::size_t horizon;
};

/// demo_count = ceil(2d/eps^2 log(2d/delta)), horizon = ceil(log_gamma(eps / (2 sqrt d))).
DemoBudget sample_demo_budget(const LambdaStarConfig& cfg);

struct FitOptions {
    double tol = 1e-6;
    std::size_t max_iters = 5000;
    double step_size = 1.0;
    ParameterBall ball{};
    double solver_tol = 1e-10;
};

struct FitResult {
    Vector lambda;
    /// || mean_i mu^{pi, s0_i} - mu^{Xi} ||_2 at the returned parameters.
    double feature_residual;
    /// Norm of the projected-gradient step at the returned parameters.
    double gradient_norm;
    /// Mean per-demonstration negative log-likelihood (as in nll_loss_and_gradient).
    double mean_nll;
    std::size_t iterations;
    std::vector<double> objective_trace;
    bool converged;
};

/**
Batch maximum-likelihood fit of the learner parameters to a set of
demonstrations.

Minimizes the causal dual
    D(lambda) = (1 - gamma) sum_s p(s) V_lambda(s) - sum_{s,a} rho^Xi(s,a) R_lambda(s,a)
(p = empirical start-state distribution of the demonstrations) by projected
gradient descent with backtracking. Its gradient is the averaged feature
gradient of nll_loss_and_gradient, so a stationary point matches feature
expectations exactly. Starts from `init`'s parameters. Never throws on
non-convergence; check `converged`.
*/
FitResult fit_demonstrations(const TabularMdp& mdp, std::span<const Demonstration> demos, const RewardModel& init,
                             const FitOptions& options);

struct LambdaStarResult {
    Vector lambda;
    FitResult fit;
    DemoBudget budget;
    std::vector<Demonstration> demos;
};

/// Fit failed to reach the gradient tolerance; carries the last iterate.
class LambdaStarConvergenceError : public ConvergenceError {
public:
    LambdaStarConvergenceError(LambdaStarResult partial)
        : ConvergenceError("compute_lambda_star did not converge", partial.fit.gradient_norm, partial.fit.iterations),
          partial_(std::move(partial)) {}
    const LambdaStarResult& partial() const noexcept { return partial_; }

private:
    LambdaStarResult partial_;
};

/**
Target parameter for a linear learner: samples the budgeted number of
teacher demonstrations (starts drawn from the MDP's initial distribution) and
fits them with fit_demonstrations. Throws std::invalid_argument for a
non-linear template and LambdaStarConvergenceError when the fit stalls.
*/
LambdaStarResult compute_lambda_star(const TabularMdp& mdp, const StochasticPolicy& teacher_policy,
                                     const RewardModel& model_template, const LambdaStarConfig& cfg, Rng& rng,
                                     ParameterBall ball = ParameterBall{});

/// |nu^{pi_lambda} - nu^{teacher}| under the environment reward.
double evaluate_learnability(const TabularMdp& mdp, const RewardModel& model, const Vector& lambda,
                             const Table& env_reward, const StochasticPolicy& teacher_policy,
                             double tol = 1e-10);

} // namespace teachirl
