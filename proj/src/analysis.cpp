#include "teachirl/analysis.hpp"

#include <algorithm>
#include <cmath>

namespace teachirl {

double smoothness_bound(double m, double gamma, double reward_max, double dist) {
    if (m < 0.0 || reward_max < 0.0 || dist < 0.0) throw std::invalid_argument("smoothness_bound: negative input");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("smoothness_bound: gamma must lie in [0, 1)");
    return reward_max * std::sqrt(8.0 * m / std::pow(1.0 - gamma, 5) * dist);
}

double epsilon_prime(double eps, double gamma, double m, double reward_max) {
    if (!(eps > 0.0) || !(m > 0.0) || !(reward_max > 0.0))
        throw std::invalid_argument("epsilon_prime: eps, m and R_max must be positive");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("epsilon_prime: gamma must lie in [0, 1)");
    return std::pow(1.0 - gamma, 5) * eps * eps / (32.0 * m * reward_max * reward_max);
}

double reward_max(const Table& reward) { return reward.size() == 0 ? 0.0 : reward.cwiseAbs().maxCoeff(); }

RichnessDecomposition richness_decompose(const Vector& mu_pi, const Vector& mu_xi, const Vector& lambda_t,
                                         const Vector& lambda_star, double eta) {
    if (mu_pi.size() != mu_xi.size() || mu_pi.size() != lambda_t.size() || lambda_t.size() != lambda_star.size())
        throw std::invalid_argument("richness_decompose: length mismatch");
    if (!(eta > 0.0)) throw std::invalid_argument("richness_decompose: eta must be positive");
    const Vector diff = lambda_t - lambda_star;
    const double dn2 = diff.squaredNorm();
    RichnessDecomposition out{0.0, Vector(), 0.0, false, false};
    if (dn2 == 0.0) {
        out.degenerate = true;
        out.delta = mu_xi - mu_pi;
    } else {
        const double raw = (mu_pi - mu_xi).dot(diff) / dn2;
        out.beta = std::clamp(raw, 0.0, 1.0 / eta);
        out.clamped = out.beta != raw;
        out.delta = mu_xi - mu_pi + out.beta * diff;
    }
    out.delta_norm = out.delta.norm();
    return out;
}

TvBoundCheck policy_tv_bound_check(const TabularMdp& mdp, const StochasticPolicy& pi, const StochasticPolicy& pi2,
                                   double tol) {
    const auto occ1 = occupancy_measure(mdp, pi, tol);
    const auto occ2 = occupancy_measure(mdp, pi2, tol);
    const double lhs = tv_distance(occ1, occ2);
    double worst = 0.0;
    for (std::size_t s = 0; s < mdp.n_states(); ++s) {
        const auto i = static_cast<Eigen::Index>(s);
        worst = std::max(worst, (pi.probs().row(i) - pi2.probs().row(i)).cwiseAbs().sum());
    }
    const double rhs = 2.0 / (1.0 - mdp.discount()) * worst;
    return TvBoundCheck{lhs, rhs, lhs <= rhs + 1e-9};
}

MetricsEvaluator::MetricsEvaluator(const TabularMdp& mdp, const StochasticPolicy& teacher_policy, Table env_reward,
                                   std::vector<int> task_of_state, std::optional<Vector> lambda_star, double tol)
    : mdp_(&mdp), env_reward_(std::move(env_reward)), task_of_state_(std::move(task_of_state)),
      lambda_star_(std::move(lambda_star)), tol_(tol), teacher_occ_(occupancy_measure(mdp, teacher_policy, tol)),
      teacher_nu_(expected_reward(teacher_occ_, env_reward_)) {
    if (static_cast<std::size_t>(env_reward_.rows()) != mdp.n_states() ||
        static_cast<std::size_t>(env_reward_.cols()) != mdp.n_actions())
        throw std::invalid_argument("MetricsEvaluator: reward shape does not match the MDP");
    if (!task_of_state_.empty() && task_of_state_.size() != mdp.n_states())
        throw std::invalid_argument("MetricsEvaluator: task_of_state length does not match the MDP");

    const Vector& p0 = mdp.initial_dist();
    for (std::size_t s : mdp.initial_states()) {
        if (task_of_state_.empty()) break;
        const int task = task_of_state_[s];
        auto it = std::find(task_ids_.begin(), task_ids_.end(), task);
        if (it == task_ids_.end()) {
            task_ids_.push_back(task);
            task_p0_.push_back(Vector::Zero(p0.size()));
            it = task_ids_.end() - 1;
        }
        task_p0_[static_cast<std::size_t>(it - task_ids_.begin())](static_cast<Eigen::Index>(s)) =
            p0(static_cast<Eigen::Index>(s));
    }
    for (auto& p : task_p0_) {
        p /= p.sum();
        teacher_task_nu_.push_back(expected_reward(occupancy_measure(mdp, teacher_policy, p, tol), env_reward_));
    }
}

int MetricsEvaluator::task_of(std::size_t s) const {
    if (task_of_state_.empty()) return -1;
    return task_of_state_.at(s);
}

MetricsRow MetricsEvaluator::row(const StochasticPolicy& policy, const SelectionInfo& sel) const {
    MetricsRow r;
    r.t = sel.t;
    r.sel_state = sel.state;
    r.sel_task = task_of(sel.state);
    r.objective = sel.objective;
    r.probed = sel.probed;
    const auto occ = occupancy_measure(*mdp_, policy, tol_);
    r.nu_gap_all = std::abs(teacher_nu_ - expected_reward(occ, env_reward_));
    r.tv_dist = tv_distance(teacher_occ_, occ);
    for (std::size_t i = 0; i < task_ids_.size(); ++i) {
        const double nu = expected_reward(occupancy_measure(*mdp_, policy, task_p0_[i], tol_), env_reward_);
        r.nu_gap_task.push_back(std::abs(teacher_task_nu_[i] - nu));
    }
    return r;
}

MetricsRow MetricsEvaluator::row(const LearnerState& learner, const SelectionInfo& sel) const {
    MetricsRow r = row(learner.policy, sel);
    if (lambda_star_) {
        if (lambda_star_->size() != learner.params().size())
            throw std::invalid_argument("MetricsEvaluator: lambda* length does not match the learner");
        r.lambda_dist = (learner.params() - *lambda_star_).norm();
    }
    return r;
}

MetricsRow metrics_row(const TabularMdp& mdp, const LearnerState& learner, const StochasticPolicy& teacher_policy,
                       const Table& env_reward, const std::optional<Vector>& lambda_star, const SelectionInfo& sel,
                       const std::vector<int>& task_of_state) {
    return MetricsEvaluator(mdp, teacher_policy, env_reward, task_of_state, lambda_star).row(learner, sel);
}

} // namespace teachirl
