#pragma once

#include "teachirl/rng.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

/// Tabular MDP machinery: soft/hard value iteration, occupancy measures, rollouts.
namespace teachirl {

/// Per-(state, action) table; rows are states, columns are actions.
using Table = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// One non-zero entry of a transition row.
struct Transition {
    std::size_t next;
    double prob;
};

/// Iterative solver ran out of iterations before reaching its tolerance.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, double residual, std::size_t iterations)
        : std::runtime_error(what + " (residual " + std::to_string(residual) + " after " +
                             std::to_string(iterations) + " iterations)"),
          residual_(residual), iterations_(iterations) {}
    double residual() const noexcept { return residual_; }
    std::size_t iterations() const noexcept { return iterations_; }

private:
    double residual_;
    std::size_t iterations_;
};

/**
Finite MDP with a sparse transition kernel.

Transitions are stored per (s, a) as the list of successors with positive
probability. Every row must sum to one within 1e-12, the initial distribution
likewise, and 0 <= discount < 1. Violations throw std::invalid_argument.
Absorbing states are ordinary states with a self-loop.
*/
class TabularMdp {
public:
    TabularMdp(std::size_t n_states, std::size_t n_actions,
               std::vector<std::vector<Transition>> transitions, double discount,
               Vector initial_dist, std::optional<Table> env_reward = std::nullopt);

    /// Build from a dense kernel indexed [s][a][s'].
    static TabularMdp from_dense(const std::vector<std::vector<std::vector<double>>>& kernel,
                                 double discount, Vector initial_dist,
                                 std::optional<Table> env_reward = std::nullopt);

    std::size_t n_states() const noexcept { return n_states_; }
    std::size_t n_actions() const noexcept { return n_actions_; }
    double discount() const noexcept { return discount_; }
    const Vector& initial_dist() const noexcept { return initial_; }
    const std::optional<Table>& env_reward() const noexcept { return env_reward_; }

    std::span<const Transition> successors(std::size_t s, std::size_t a) const {
        return transitions_[s * n_actions_ + a];
    }

    /// Dense probability T(next | s, a).
    double probability(std::size_t s, std::size_t a, std::size_t next) const;

    /// Same dynamics with a different initial distribution or reward attached.
    TabularMdp with_initial(Vector initial_dist) const;
    TabularMdp with_env_reward(Table env_reward) const;
    TabularMdp with_discount(double discount) const;

    /// States with positive initial probability, ascending.
    std::vector<std::size_t> initial_states() const;

private:
    std::size_t n_states_;
    std::size_t n_actions_;
    std::vector<std::vector<Transition>> transitions_;
    double discount_;
    Vector initial_;
    std::optional<Table> env_reward_;
};

/// Per-state action distribution; rows sum to one within 1e-9.
class StochasticPolicy {
public:
    explicit StochasticPolicy(Table probs);

    static StochasticPolicy uniform(std::size_t n_states, std::size_t n_actions);
    static StochasticPolicy deterministic(const std::vector<std::size_t>& actions,
                                          std::size_t n_actions);

    const Table& probs() const noexcept { return probs_; }
    double operator()(std::size_t s, std::size_t a) const { return probs_(s, a); }
    std::size_t n_states() const noexcept { return static_cast<std::size_t>(probs_.rows()); }
    std::size_t n_actions() const noexcept { return static_cast<std::size_t>(probs_.cols()); }

    /// True when every row is one-hot.
    bool is_deterministic() const;

private:
    Table probs_;
};

struct Step {
    std::size_t state;
    std::size_t action;
    bool operator==(const Step&) const = default;
};

/// Finite state-action trajectory, truncated at horizon H.
class Demonstration {
public:
    Demonstration(std::vector<Step> steps, std::size_t horizon);

    const std::vector<Step>& steps() const noexcept { return steps_; }
    std::size_t start_state() const noexcept { return steps_.front().state; }
    std::size_t size() const noexcept { return steps_.size(); }
    std::size_t horizon() const noexcept { return horizon_; }

    bool operator==(const Demonstration&) const = default;

private:
    std::vector<Step> steps_;
    std::size_t horizon_;
};

/// Discounted, (1 - gamma)-normalized state-action visitation table.
struct OccupancyMeasure {
    Table rho;
    double discount;

    double total() const { return rho.sum(); }
    /// Marginal over actions.
    Vector state_marginal() const { return rho.rowwise().sum(); }
};

struct SoftSolution {
    StochasticPolicy policy;
    Vector values;
    Table q;
    std::size_t iterations;
    double residual;
};

/// Stable log(sum(exp(x))).
double log_sum_exp(const Eigen::Ref<const Eigen::RowVectorXd>& x);

/**
Soft value iteration.

Iterates Q = R + gamma T V, V = logsumexp_a Q from V = 0 until the sup-norm
change of V drops below tol, then returns pi(a|s) = exp(Q(s,a) - V(s)).
Throws ConvergenceError after max_iters, std::invalid_argument for a
non-finite reward or tol <= 0.
*/
SoftSolution soft_value_iteration(const TabularMdp& mdp, const Table& reward,
                                  double tol = 1e-10, std::size_t max_iters = 100000);

/// Greedy deterministic policy of hard-max value iteration; ties go to the
/// lowest action index.
StochasticPolicy optimal_policy(const TabularMdp& mdp, const Table& reward,
                                double tol = 1e-10, std::size_t max_iters = 100000);

/// Hard-max state values (same iteration as optimal_policy).
Vector optimal_values(const TabularMdp& mdp, const Table& reward, double tol = 1e-10,
                      std::size_t max_iters = 100000);

/**
Occupancy measure of a policy from the given initial distribution.

Solves d = (1 - gamma) P0 + gamma P_pi^T d by fixed-point iteration (cap
10 * ceil(log(tol) / log(gamma))) and returns rho(s,a) = d(s) pi(a|s).
*/
OccupancyMeasure occupancy_measure(const TabularMdp& mdp, const StochasticPolicy& policy,
                                   const Vector& initial_dist, double tol = 1e-10);

/// Occupancy with the point initial distribution delta_{start}.
OccupancyMeasure occupancy_from_state(const TabularMdp& mdp, const StochasticPolicy& policy,
                                      std::size_t start, double tol = 1e-10);

/// Occupancy from the MDP's own initial distribution.
OccupancyMeasure occupancy_measure(const TabularMdp& mdp, const StochasticPolicy& policy,
                                   double tol = 1e-10);

OccupancyMeasure demo_occupancy(const Demonstration& demo, std::size_t n_states,
                                std::size_t n_actions, double discount);

/// Arithmetic mean of the member occupancy tables.
OccupancyMeasure demo_occupancy(std::span<const Demonstration> demos, std::size_t n_states,
                                std::size_t n_actions, double discount);

/// nu = sum rho * R / (1 - gamma).
double expected_reward(const OccupancyMeasure& occ, const Table& reward);

/// Sum of absolute differences (twice the textbook total variation).
double tv_distance(const Table& p, const Table& q);
double tv_distance(const Vector& p, const Vector& q);
inline double tv_distance(const OccupancyMeasure& p, const OccupancyMeasure& q) {
    return tv_distance(p.rho, q.rho);
}

/// Sample a trajectory of `horizon` steps.
Demonstration rollout(const TabularMdp& mdp, const StochasticPolicy& policy, std::size_t start,
                      std::size_t horizon, Rng& rng);

/// Discounted return sum_tau gamma^tau R(s_tau, a_tau) along a trajectory.
double discounted_return(const Demonstration& demo, const Table& reward, double discount);

} // namespace teachirl
