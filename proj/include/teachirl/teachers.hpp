#pragma once

#include "teachirl/learner.hpp"

#include <functional>
#include <optional>
#include <variant>

namespace teachirl {

/**
Teacher demonstrations available at one step: for each initial state (P0 > 0,
ascending) the distinct rollouts of the teacher policy from that state, in
first-sampled order.
*/
struct CandidatePool {
    std::vector<std::size_t> starts;
    std::vector<std::vector<Demonstration>> demos;

    std::size_t size() const;
    bool empty() const { return size() == 0; }
};

/// K rollouts of horizon H from every initial state, deduplicated by step sequence.
CandidatePool build_candidate_pool(const TabularMdp& mdp, const StochasticPolicy& teacher_policy, std::size_t K,
                                   std::size_t horizon, Rng& rng);

struct Selection {
    std::size_t start;
    Demonstration demo;
    double objective;
};

/// eta^2 ||mu^{pi,s} - mu^xi||^2 - 2 eta <lambda_t - lambda*, mu^{pi,s} - mu^xi>.
double omni_objective(double eta, const Vector& lambda_t, const Vector& lambda_star, const Vector& mu_policy,
                      const Vector& mu_demo);

/// Candidate minimizing omni_objective; ties go to the lowest state, then pool order.
Selection omni_select(const LearnerState& state, const CandidatePool& pool, const Vector& lambda_star,
                      const TabularMdp& mdp);

/// Estimated learner occupancy from each initial state, built from k test rollouts.
struct ProbeEstimate {
    std::vector<std::size_t> starts;
    std::vector<Table> rho;
    std::size_t samples = 0;
    std::size_t probe_step = 0;

    /// nullptr when `start` was not probed.
    const Table* find(std::size_t start) const;
};

ProbeEstimate probe_learner(const TabularMdp& mdp, const StochasticPolicy& learner_policy, std::size_t k,
                            std::size_t horizon, Rng& rng, std::size_t probe_step = 0);

/// | sum (rho_hat - rho^xi) R^E |.
double bbox_objective(const Table& rho_hat, const Table& rho_demo, const Table& env_reward);

/// Candidate maximizing bbox_objective; ties go to the lowest state, then pool order.
Selection bbox_select(const ProbeEstimate& estimate, const CandidatePool& pool, const Table& env_reward,
                      double discount);

/// s0 ~ P0, then a fresh teacher rollout from s0. Objective is reported as 0.
Selection agnostic_select(const TabularMdp& mdp, const StochasticPolicy& teacher_policy, std::size_t horizon,
                          Rng& rng);

struct OmniTeacher {
    Vector lambda_star;
};
struct BboxTeacher {
    std::size_t probe_interval = 5; // B
    std::size_t tests = 5;          // k
};
struct AgnosticTeacher {};

using TeacherKind = std::variant<OmniTeacher, BboxTeacher, AgnosticTeacher>;

const char* teacher_name(const TeacherKind& kind);

struct PoolConfig {
    std::size_t candidates = 10; // K
    std::size_t horizon = 30;    // H
    bool resample_every_step = true;
};

/// What the teacher saw and chose at step t; `learner` is the state before the update.
struct StepContext {
    std::size_t t;
    const LearnerState& learner;
    const Selection& selection;
    const CandidatePool* pool;
    const ProbeEstimate* estimate;
    bool probed;
};

using MetricsSink = std::function<void(const StepContext&)>;

struct StepLog {
    std::size_t t;
    std::size_t start;
    std::size_t demo_length;
    double objective;
    bool probed;
};

struct RunLog {
    std::vector<StepLog> steps;
};

struct TeachingResult {
    LearnerState learner;
    RunLog log;
};

/// A component failed inside the loop; carries the log up to the failing step.
class TeachingLoopError : public std::runtime_error {
public:
    TeachingLoopError(const std::string& what, std::size_t step, RunLog log)
        : std::runtime_error("teaching step " + std::to_string(step) + ": " + what), step_(step),
          log_(std::move(log)) {}
    std::size_t step() const noexcept { return step_; }
    const RunLog& log() const noexcept { return log_; }

private:
    std::size_t step_;
    RunLog log_;
};

/**
Interactive teaching for T steps.

Omni observes lambda_t and minimizes omni_objective. Bbox probes the learner
with k tests per initial state when (t - 1) % B == 0 and otherwise reuses the
last estimate. Agnostic ignores the learner. Each selected demonstration is
passed to learner_step; `sink` (optional) sees every step before the update.
*/
TeachingResult teaching_loop(const TabularMdp& mdp, const StochasticPolicy& teacher_policy,
                             const TeacherKind& teacher, LearnerState learner, std::size_t T,
                             const PoolConfig& pool_cfg, Rng& rng, const MetricsSink& sink = {});

} // namespace teachirl
