#include "teachirl/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace teachirl {

namespace {

constexpr double kRowTol = 1e-12;
constexpr double kPolicyRowTol = 1e-9;
// Actions whose hard-max Q is within this of the best count as tied.
constexpr double kTieTol = 1e-8;

void check_distribution(const Vector& p, std::size_t n, const char* what) {
    if (static_cast<std::size_t>(p.size()) != n)
        throw std::invalid_argument(std::string(what) + ": wrong length");
    if ((p.array() < 0.0).any() || !p.allFinite())
        throw std::invalid_argument(std::string(what) + ": negative or non-finite entry");
    if (std::abs(p.sum() - 1.0) > kRowTol)
        throw std::invalid_argument(std::string(what) + ": does not sum to 1");
}

void check_reward(const TabularMdp& mdp, const Table& reward) {
    if (static_cast<std::size_t>(reward.rows()) != mdp.n_states() ||
        static_cast<std::size_t>(reward.cols()) != mdp.n_actions())
        throw std::invalid_argument("reward table shape does not match the MDP");
    if (!reward.allFinite()) throw std::invalid_argument("reward table has NaN/inf entries");
}

/// Q = R + gamma T V.
void backup(const TabularMdp& mdp, const Table& reward, const Vector& v, Table& q) {
    const double gamma = mdp.discount();
    for (std::size_t s = 0; s < mdp.n_states(); ++s) {
        for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
            double ev = 0.0;
            for (const auto& t : mdp.successors(s, a)) ev += t.prob * v[t.next];
            q(s, a) = reward(s, a) + gamma * ev;
        }
    }
}

std::size_t occupancy_iteration_cap(double gamma, double tol) {
    if (gamma <= 0.0) return 1;
    const double n = std::ceil(std::log(tol) / std::log(gamma));
    return 10 * static_cast<std::size_t>(std::max(1.0, n));
}

} // namespace

// *******************************************************
// TabularMdp
// *******************************************************

TabularMdp::TabularMdp(std::size_t n_states, std::size_t n_actions,
                       std::vector<std::vector<Transition>> transitions, double discount,
                       Vector initial_dist, std::optional<Table> env_reward)
    : n_states_(n_states), n_actions_(n_actions), transitions_(std::move(transitions)),
      discount_(discount), initial_(std::move(initial_dist)), env_reward_(std::move(env_reward)) {
    if (n_states_ == 0 || n_actions_ == 0)
        throw std::invalid_argument("TabularMdp: need at least one state and one action");
    if (!(discount_ >= 0.0 && discount_ < 1.0))
        throw std::invalid_argument("TabularMdp: discount must lie in [0, 1)");
    if (transitions_.size() != n_states_ * n_actions_)
        throw std::invalid_argument("TabularMdp: transition table has wrong size");
    for (std::size_t i = 0; i < transitions_.size(); ++i) {
        double sum = 0.0;
        for (const auto& t : transitions_[i]) {
            if (t.next >= n_states_) throw std::invalid_argument("TabularMdp: successor out of range");
            if (!(t.prob >= 0.0) || !std::isfinite(t.prob))
                throw std::invalid_argument("TabularMdp: negative transition probability");
            sum += t.prob;
        }
        if (std::abs(sum - 1.0) > kRowTol)
            throw std::invalid_argument("TabularMdp: transition row (" + std::to_string(i / n_actions_) +
                                        ", " + std::to_string(i % n_actions_) + ") does not sum to 1");
        // zero-probability entries carry no information
        std::erase_if(transitions_[i], [](const Transition& t) { return t.prob == 0.0; });
    }
    check_distribution(initial_, n_states_, "TabularMdp initial distribution");
    if (env_reward_) {
        if (static_cast<std::size_t>(env_reward_->rows()) != n_states_ ||
            static_cast<std::size_t>(env_reward_->cols()) != n_actions_)
            throw std::invalid_argument("TabularMdp: env_reward shape mismatch");
        if (!env_reward_->allFinite()) throw std::invalid_argument("TabularMdp: env_reward not finite");
    }
}

TabularMdp TabularMdp::from_dense(const std::vector<std::vector<std::vector<double>>>& kernel,
                                  double discount, Vector initial_dist,
                                  std::optional<Table> env_reward) {
    if (kernel.empty() || kernel.front().empty())
        throw std::invalid_argument("TabularMdp::from_dense: empty kernel");
    const std::size_t ns = kernel.size();
    const std::size_t na = kernel.front().size();
    std::vector<std::vector<Transition>> rows(ns * na);
    for (std::size_t s = 0; s < ns; ++s) {
        if (kernel[s].size() != na) throw std::invalid_argument("from_dense: ragged action dimension");
        for (std::size_t a = 0; a < na; ++a) {
            if (kernel[s][a].size() != ns) throw std::invalid_argument("from_dense: ragged state dimension");
            for (std::size_t n = 0; n < ns; ++n)
                if (kernel[s][a][n] != 0.0) rows[s * na + a].push_back({n, kernel[s][a][n]});
        }
    }
    return TabularMdp(ns, na, std::move(rows), discount, std::move(initial_dist), std::move(env_reward));
}

double TabularMdp::probability(std::size_t s, std::size_t a, std::size_t next) const {
    double p = 0.0;
    for (const auto& t : successors(s, a))
        if (t.next == next) p += t.prob;
    return p;
}

TabularMdp TabularMdp::with_initial(Vector initial_dist) const {
    TabularMdp copy = *this;
    check_distribution(initial_dist, n_states_, "with_initial");
    copy.initial_ = std::move(initial_dist);
    return copy;
}

TabularMdp TabularMdp::with_env_reward(Table env_reward) const {
    return TabularMdp(n_states_, n_actions_, transitions_, discount_, initial_, std::move(env_reward));
}

TabularMdp TabularMdp::with_discount(double discount) const {
    return TabularMdp(n_states_, n_actions_, transitions_, discount, initial_, env_reward_);
}

std::vector<std::size_t> TabularMdp::initial_states() const {
    std::vector<std::size_t> out;
    for (std::size_t s = 0; s < n_states_; ++s)
        if (initial_[s] > 0.0) out.push_back(s);
    return out;
}

// *******************************************************
// Policies and demonstrations
// *******************************************************

StochasticPolicy::StochasticPolicy(Table probs) : probs_(std::move(probs)) {
    if (probs_.rows() == 0 || probs_.cols() == 0) throw std::invalid_argument("StochasticPolicy: empty table");
    if (!probs_.allFinite() || (probs_.array() < 0.0).any() || (probs_.array() > 1.0).any())
        throw std::invalid_argument("StochasticPolicy: entries must lie in [0, 1]");
    for (Eigen::Index s = 0; s < probs_.rows(); ++s)
        if (std::abs(probs_.row(s).sum() - 1.0) > kPolicyRowTol)
            throw std::invalid_argument("StochasticPolicy: row " + std::to_string(s) + " does not sum to 1");
}

StochasticPolicy StochasticPolicy::uniform(std::size_t n_states, std::size_t n_actions) {
    return StochasticPolicy(Table::Constant(n_states, n_actions, 1.0 / static_cast<double>(n_actions)));
}

StochasticPolicy StochasticPolicy::deterministic(const std::vector<std::size_t>& actions,
                                                 std::size_t n_actions) {
    Table p = Table::Zero(actions.size(), n_actions);
    for (std::size_t s = 0; s < actions.size(); ++s) {
        if (actions[s] >= n_actions) throw std::invalid_argument("deterministic policy: action out of range");
        p(s, actions[s]) = 1.0;
    }
    return StochasticPolicy(std::move(p));
}

bool StochasticPolicy::is_deterministic() const {
    for (Eigen::Index s = 0; s < probs_.rows(); ++s)
        if (probs_.row(s).maxCoeff() != 1.0) return false;
    return true;
}

Demonstration::Demonstration(std::vector<Step> steps, std::size_t horizon)
    : steps_(std::move(steps)), horizon_(horizon) {
    if (steps_.empty()) throw std::invalid_argument("Demonstration: empty trajectory");
    if (horizon_ == 0 || steps_.size() > horizon_)
        throw std::invalid_argument("Demonstration: length exceeds truncation horizon");
}

// *******************************************************
// Solvers
// *******************************************************

double log_sum_exp(const Eigen::Ref<const Eigen::RowVectorXd>& x) {
    const double m = x.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((x.array() - m).exp().sum());
}

SoftSolution soft_value_iteration(const TabularMdp& mdp, const Table& reward, double tol,
                                  std::size_t max_iters) {
    if (!(tol > 0.0)) throw std::invalid_argument("soft_value_iteration: tol must be positive");
    check_reward(mdp, reward);
    const std::size_t ns = mdp.n_states();
    Vector v = Vector::Zero(ns);
    Vector next(ns);
    Table q(ns, mdp.n_actions());
    double residual = std::numeric_limits<double>::infinity();
    std::size_t it = 0;
    while (it < max_iters) {
        backup(mdp, reward, v, q);
        for (std::size_t s = 0; s < ns; ++s) next[s] = log_sum_exp(q.row(s));
        residual = (next - v).cwiseAbs().maxCoeff();
        v.swap(next);
        ++it;
        if (residual < tol) break;
    }
    if (!(residual < tol)) throw ConvergenceError("soft_value_iteration did not converge", residual, it);
    // v = logsumexp(q) row-wise, so exp(q - v) is normalized
    Table probs = (q.colwise() - v).array().exp().matrix();
    for (std::size_t s = 0; s < ns; ++s) probs.row(s) /= probs.row(s).sum();
    return SoftSolution{StochasticPolicy(std::move(probs)), std::move(v), std::move(q), it, residual};
}

namespace {

struct HardSolution {
    Vector v;
    Table q;
};

HardSolution hard_value_iteration(const TabularMdp& mdp, const Table& reward, double tol,
                                  std::size_t max_iters) {
    if (!(tol > 0.0)) throw std::invalid_argument("optimal_policy: tol must be positive");
    check_reward(mdp, reward);
    const std::size_t ns = mdp.n_states();
    Vector v = Vector::Zero(ns);
    Vector next(ns);
    Table q(ns, mdp.n_actions());
    double residual = std::numeric_limits<double>::infinity();
    std::size_t it = 0;
    while (it < max_iters) {
        backup(mdp, reward, v, q);
        next = q.rowwise().maxCoeff();
        residual = (next - v).cwiseAbs().maxCoeff();
        v.swap(next);
        ++it;
        if (residual < tol) break;
    }
    if (!(residual < tol)) throw ConvergenceError("value iteration did not converge", residual, it);
    backup(mdp, reward, v, q);
    return {std::move(v), std::move(q)};
}

} // namespace

StochasticPolicy optimal_policy(const TabularMdp& mdp, const Table& reward, double tol,
                                std::size_t max_iters) {
    const auto sol = hard_value_iteration(mdp, reward, tol, max_iters);
    std::vector<std::size_t> actions(mdp.n_states());
    for (std::size_t s = 0; s < mdp.n_states(); ++s) {
        const double best = sol.q.row(s).maxCoeff();
        const double slack = kTieTol * std::max(1.0, std::abs(best));
        std::size_t a = 0;
        while (sol.q(s, a) < best - slack) ++a;
        actions[s] = a;
    }
    return StochasticPolicy::deterministic(actions, mdp.n_actions());
}

Vector optimal_values(const TabularMdp& mdp, const Table& reward, double tol, std::size_t max_iters) {
    return hard_value_iteration(mdp, reward, tol, max_iters).v;
}

// *******************************************************
// Occupancy measures
// *******************************************************

OccupancyMeasure occupancy_measure(const TabularMdp& mdp, const StochasticPolicy& policy,
                                   const Vector& initial_dist, double tol) {
    const std::size_t ns = mdp.n_states();
    const std::size_t na = mdp.n_actions();
    if (policy.n_states() != ns || policy.n_actions() != na)
        throw std::invalid_argument("occupancy_measure: policy shape mismatch");
    check_distribution(initial_dist, ns, "occupancy_measure initial distribution");
    if (!(tol > 0.0)) throw std::invalid_argument("occupancy_measure: tol must be positive");

    const double gamma = mdp.discount();
    const Table& pi = policy.probs();
    Vector d = initial_dist;
    if (gamma > 0.0) {
        const std::size_t cap = occupancy_iteration_cap(gamma, tol);
        const Vector base = (1.0 - gamma) * initial_dist;
        Vector next(ns);
        double residual = std::numeric_limits<double>::infinity();
        std::size_t it = 0;
        while (it < cap) {
            next = base;
            for (std::size_t s = 0; s < ns; ++s) {
                if (d[s] == 0.0) continue;
                for (std::size_t a = 0; a < na; ++a) {
                    const double w = gamma * d[s] * pi(s, a);
                    if (w == 0.0) continue;
                    for (const auto& t : mdp.successors(s, a)) next[t.next] += w * t.prob;
                }
            }
            residual = (next - d).lpNorm<1>();
            d.swap(next);
            ++it;
            if (residual < tol) break;
        }
        if (!(residual < tol)) throw ConvergenceError("occupancy_measure did not converge", residual, it);
    }
    Table rho = pi.array().colwise() * d.array();
    return OccupancyMeasure{std::move(rho), gamma};
}

OccupancyMeasure occupancy_from_state(const TabularMdp& mdp, const StochasticPolicy& policy,
                                      std::size_t start, double tol) {
    if (start >= mdp.n_states()) throw std::invalid_argument("occupancy_from_state: start out of range");
    Vector p0 = Vector::Zero(mdp.n_states());
    p0[start] = 1.0;
    return occupancy_measure(mdp, policy, p0, tol);
}

OccupancyMeasure occupancy_measure(const TabularMdp& mdp, const StochasticPolicy& policy, double tol) {
    return occupancy_measure(mdp, policy, mdp.initial_dist(), tol);
}

OccupancyMeasure demo_occupancy(const Demonstration& demo, std::size_t n_states, std::size_t n_actions,
                                double discount) {
    Table rho = Table::Zero(n_states, n_actions);
    double weight = 1.0 - discount;
    for (const auto& step : demo.steps()) {
        if (step.state >= n_states || step.action >= n_actions)
            throw std::invalid_argument("demo_occupancy: step out of range");
        rho(step.state, step.action) += weight;
        weight *= discount;
    }
    return OccupancyMeasure{std::move(rho), discount};
}

OccupancyMeasure demo_occupancy(std::span<const Demonstration> demos, std::size_t n_states,
                                std::size_t n_actions, double discount) {
    if (demos.empty()) throw std::invalid_argument("demo_occupancy: empty demonstration set");
    Table rho = Table::Zero(n_states, n_actions);
    for (const auto& d : demos) rho += demo_occupancy(d, n_states, n_actions, discount).rho;
    rho /= static_cast<double>(demos.size());
    return OccupancyMeasure{std::move(rho), discount};
}

double expected_reward(const OccupancyMeasure& occ, const Table& reward) {
    if (occ.rho.rows() != reward.rows() || occ.rho.cols() != reward.cols())
        throw std::invalid_argument("expected_reward: shape mismatch");
    return occ.rho.cwiseProduct(reward).sum() / (1.0 - occ.discount);
}

double tv_distance(const Table& p, const Table& q) {
    if (p.rows() != q.rows() || p.cols() != q.cols()) throw std::invalid_argument("tv_distance: shape mismatch");
    return (p - q).cwiseAbs().sum();
}

double tv_distance(const Vector& p, const Vector& q) {
    if (p.size() != q.size()) throw std::invalid_argument("tv_distance: shape mismatch");
    return (p - q).cwiseAbs().sum();
}

// *******************************************************
// Sampling
// *******************************************************

Demonstration rollout(const TabularMdp& mdp, const StochasticPolicy& policy, std::size_t start,
                      std::size_t horizon, Rng& rng) {
    if (horizon == 0) throw std::invalid_argument("rollout: horizon must be positive");
    if (start >= mdp.n_states()) throw std::invalid_argument("rollout: start out of range");
    std::vector<Step> steps;
    steps.reserve(horizon);
    std::vector<double> weights;
    std::size_t s = start;
    for (std::size_t tau = 0; tau < horizon; ++tau) {
        weights.resize(mdp.n_actions());
        for (std::size_t a = 0; a < mdp.n_actions(); ++a) weights[a] = policy(s, a);
        const std::size_t a = rng.categorical(weights);
        steps.push_back({s, a});
        const auto succ = mdp.successors(s, a);
        weights.resize(succ.size());
        for (std::size_t i = 0; i < succ.size(); ++i) weights[i] = succ[i].prob;
        s = succ[rng.categorical(weights)].next;
    }
    return Demonstration(std::move(steps), horizon);
}

double discounted_return(const Demonstration& demo, const Table& reward, double discount) {
    double total = 0.0;
    double w = 1.0;
    for (const auto& step : demo.steps()) {
        total += w * reward(step.state, step.action);
        w *= discount;
    }
    return total;
}

} // namespace teachirl
