#pragma once

#include "teachirl/learner.hpp"

#include <optional>

namespace teachirl {

/// R_max * sqrt(8 m / (1 - gamma)^5 * dist): bound on |nu_lambda - nu_lambda'|.
double smoothness_bound(double m, double gamma, double reward_max, double dist);

/// (1 - gamma)^5 eps^2 / (32 m R_max^2): parameter-distance target for a reward-gap target eps.
double epsilon_prime(double eps, double gamma, double m, double reward_max);

/// max |R(s, a)|.
double reward_max(const Table& reward);

/**
mu_xi = mu_pi - beta (lambda_t - lambda*) + delta, with beta the projection
coefficient of mu_pi - mu_xi onto lambda_t - lambda*, clamped to [0, 1/eta].
*/
struct RichnessDecomposition {
    double beta;
    Vector delta;
    double delta_norm;
    bool degenerate; // lambda_t == lambda*
    bool clamped;
};

RichnessDecomposition richness_decompose(const Vector& mu_pi, const Vector& mu_xi, const Vector& lambda_t,
                                         const Vector& lambda_star, double eta);

struct TvBoundCheck {
    double lhs;
    double rhs;
    bool holds;
};

/// D_TV(rho^pi, rho^pi') against (2 / (1 - gamma)) max_s D_TV(pi(.|s), pi'(.|s)).
TvBoundCheck policy_tv_bound_check(const TabularMdp& mdp, const StochasticPolicy& pi, const StochasticPolicy& pi2,
                                   double tol = 1e-10);

struct MetricsRow {
    std::size_t t = 0;
    std::optional<double> lambda_dist;
    double nu_gap_all = 0.0;
    std::vector<double> nu_gap_task; // aligned with MetricsEvaluator::task_ids()
    double tv_dist = 0.0;
    std::size_t sel_state = 0;
    int sel_task = -1;
    double objective = 0.0;
    bool probed = false;

    bool operator==(const MetricsRow&) const = default;
};

/// What the teacher picked at step t.
struct SelectionInfo {
    std::size_t t;
    std::size_t state;
    double objective;
    bool probed;
};

/**
Per-step metrics against a fixed teacher. Teacher occupancies (overall and
per task) are computed once; each row needs one occupancy solve per task plus
one overall.

Per-task gaps restrict P0 to the task's initial states and renormalize.
*/
class MetricsEvaluator {
public:
    /// `task_of_state` may be empty (no per-task columns, sel_task = -1).
    MetricsEvaluator(const TabularMdp& mdp, const StochasticPolicy& teacher_policy, Table env_reward,
                     std::vector<int> task_of_state = {}, std::optional<Vector> lambda_star = std::nullopt,
                     double tol = 1e-10);

    MetricsRow row(const LearnerState& learner, const SelectionInfo& sel) const;
    /// Same quantities for a bare policy (lambda_dist needs parameters, so it is left empty).
    MetricsRow row(const StochasticPolicy& policy, const SelectionInfo& sel) const;

    const std::vector<int>& task_ids() const noexcept { return task_ids_; }
    int task_of(std::size_t s) const;
    double teacher_nu() const noexcept { return teacher_nu_; }

private:
    const TabularMdp* mdp_;
    Table env_reward_;
    std::vector<int> task_of_state_;
    std::vector<int> task_ids_;
    std::vector<Vector> task_p0_;
    std::optional<Vector> lambda_star_;
    double tol_;
    OccupancyMeasure teacher_occ_;
    double teacher_nu_;
    std::vector<double> teacher_task_nu_;
};

/// One-off convenience wrapper around MetricsEvaluator.
MetricsRow metrics_row(const TabularMdp& mdp, const LearnerState& learner, const StochasticPolicy& teacher_policy,
                       const Table& env_reward, const std::optional<Vector>& lambda_star, const SelectionInfo& sel,
                       const std::vector<int>& task_of_state = {});

} // namespace teachirl
