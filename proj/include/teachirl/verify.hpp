#pragma once

#include "teachirl/teachers.hpp"

#include <string>
#include <vector>

/// Property suites behind `teachirl verify`.
namespace teachirl::verify {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

struct Report {
    std::vector<CheckResult> checks;

    bool ok() const;
    std::vector<std::string> failures() const;
};

enum class Level { quick, full };

Level level_from_string(const std::string& name);

struct Options {
    Level level = Level::quick;
    std::uint64_t seed = 20240611;
    /// Added to every analytic gradient entry in the gradient check (negative control).
    double gradient_corruption = 0.0;
};

/// Dense random MDP: Dirichlet-like rows, uniform P0 over `n_initial` states (0 = all), R^E in [-1, 1].
TabularMdp random_mdp(std::size_t n_states, std::size_t n_actions, double gamma, Rng& rng,
                      std::size_t n_initial = 0);
/// Random stochastic policy with every probability >= floor / n_actions.
StochasticPolicy random_policy(std::size_t n_states, std::size_t n_actions, Rng& rng, double floor = 0.1);
/// Uniform [-1, 1] (or binary when `binary`) state-action features.
std::shared_ptr<const FeatureMap> random_features(std::size_t n_states, std::size_t n_actions, std::size_t dim,
                                                  Rng& rng, bool binary = false);
Vector random_vector(std::size_t n, Rng& rng, double scale = 1.0);

/// Analytic NLL gradient against central differences (step 1e-5), linear and quadratic models.
CheckResult check_nll_gradient(std::size_t n_mdps, Rng& rng, double corruption = 0.0);
/// Feature gradient equals the exact gradient on deterministic MDPs with untruncated demonstrations.
CheckResult check_feature_gradient_identity(std::size_t n_mdps, Rng& rng);
/// sum rho = 1 within 1e-8.
CheckResult check_occupancy_normalization(std::size_t pairs, Rng& rng);
/// Exact occupancy within 3 standard errors of a rollout estimate, cell by cell.
CheckResult check_occupancy_monte_carlo(std::size_t instances, std::size_t rollouts, Rng& rng);
/// |nu_lambda - nu_lambda'| <= smoothness_bound(sqrt d, ...) on a random 5-state MDP.
CheckResult check_smoothness_bound(std::size_t pairs, Rng& rng);
/// Occupancy TV against (2 / (1 - gamma)) max_s policy TV on random 5-state MDPs.
CheckResult check_policy_tv_bound(std::size_t trials, Rng& rng);
/// Synthetic delta = 0 stream: ||lambda_t - lambda*|| <= (1 - beta)^(t-1) ||lambda_1 - lambda*|| + 1e-9.
CheckResult check_zero_noise_contraction(std::size_t steps, Rng& rng);
/// Reconstruction mu_xi = mu_pi - beta (lambda_t - lambda*) + delta for unclamped draws.
CheckResult check_richness_reconstruction(std::size_t trials, Rng& rng);
/// omni_select / bbox_select against exhaustive evaluation over the pool at every step of a run.
CheckResult check_selection_bruteforce(std::size_t steps, Rng& rng);

/// Runs every suite; `full` uses the larger sample counts (including the 200-pair smoothness sweep).
Report run(const Options& options);

} // namespace teachirl::verify
