#include "teachirl/teachers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace teachirl {

std::size_t CandidatePool::size() const {
    std::size_t n = 0;
    for (const auto& d : demos) n += d.size();
    return n;
}

CandidatePool build_candidate_pool(const TabularMdp& mdp, const StochasticPolicy& teacher_policy, std::size_t K,
                                   std::size_t horizon, Rng& rng) {
    if (K == 0) throw std::invalid_argument("build_candidate_pool: K must be positive");
    CandidatePool pool;
    for (std::size_t s : mdp.initial_states()) {
        std::vector<Demonstration> unique;
        for (std::size_t i = 0; i < K; ++i) {
            auto demo = rollout(mdp, teacher_policy, s, horizon, rng);
            if (std::find(unique.begin(), unique.end(), demo) == unique.end()) unique.push_back(std::move(demo));
        }
        pool.starts.push_back(s);
        pool.demos.push_back(std::move(unique));
    }
    return pool;
}

double omni_objective(double eta, const Vector& lambda_t, const Vector& lambda_star, const Vector& mu_policy,
                      const Vector& mu_demo) {
    const Vector g = mu_policy - mu_demo;
    return eta * eta * g.squaredNorm() - 2.0 * eta * (lambda_t - lambda_star).dot(g);
}

Selection omni_select(const LearnerState& state, const CandidatePool& pool, const Vector& lambda_star,
                      const TabularMdp& mdp) {
    if (pool.empty()) throw std::invalid_argument("omni_select: empty candidate pool");
    if (lambda_star.size() != state.params().size())
        throw std::invalid_argument("omni_select: lambda* length does not match the learner");
    const double eta = state.learning_rate();
    const Demonstration* best = nullptr;
    std::size_t best_start = 0;
    double best_obj = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pool.starts.size(); ++i) {
        if (pool.demos[i].empty()) continue;
        const Vector mu_pi =
            feature_expectation_policy(mdp, state.policy, pool.starts[i], state.model, state.solver_tol);
        for (const auto& demo : pool.demos[i]) {
            const double obj = omni_objective(eta, state.params(), lambda_star, mu_pi,
                                              feature_expectation_demo(demo, state.model, mdp.discount()));
            if (best == nullptr || obj < best_obj) {
                best = &demo;
                best_obj = obj;
                best_start = pool.starts[i];
            }
        }
    }
    return Selection{best_start, *best, best_obj};
}

const Table* ProbeEstimate::find(std::size_t start) const {
    for (std::size_t i = 0; i < starts.size(); ++i)
        if (starts[i] == start) return &rho[i];
    return nullptr;
}

ProbeEstimate probe_learner(const TabularMdp& mdp, const StochasticPolicy& learner_policy, std::size_t k,
                            std::size_t horizon, Rng& rng, std::size_t probe_step) {
    if (k == 0) throw std::invalid_argument("probe_learner: k must be positive");
    ProbeEstimate est;
    est.samples = k;
    est.probe_step = probe_step;
    for (std::size_t s : mdp.initial_states()) {
        Table acc = Table::Zero(mdp.n_states(), mdp.n_actions());
        for (std::size_t i = 0; i < k; ++i) {
            const auto demo = rollout(mdp, learner_policy, s, horizon, rng);
            acc += demo_occupancy(demo, mdp.n_states(), mdp.n_actions(), mdp.discount()).rho;
        }
        est.starts.push_back(s);
        est.rho.push_back(acc / static_cast<double>(k));
    }
    return est;
}

double bbox_objective(const Table& rho_hat, const Table& rho_demo, const Table& env_reward) {
    return std::abs((rho_hat - rho_demo).cwiseProduct(env_reward).sum());
}

Selection bbox_select(const ProbeEstimate& estimate, const CandidatePool& pool, const Table& env_reward,
                      double discount) {
    if (pool.empty()) throw std::invalid_argument("bbox_select: empty candidate pool");
    const Demonstration* best = nullptr;
    std::size_t best_start = 0;
    double best_obj = -1.0;
    for (std::size_t i = 0; i < pool.starts.size(); ++i) {
        if (pool.demos[i].empty()) continue;
        const Table* rho_hat = estimate.find(pool.starts[i]);
        if (rho_hat == nullptr)
            throw std::invalid_argument("bbox_select: no probe estimate for state " + std::to_string(pool.starts[i]));
        for (const auto& demo : pool.demos[i]) {
            const auto occ = demo_occupancy(demo, static_cast<std::size_t>(env_reward.rows()),
                                            static_cast<std::size_t>(env_reward.cols()), discount);
            const double obj = bbox_objective(*rho_hat, occ.rho, env_reward);
            if (best == nullptr || obj > best_obj) {
                best = &demo;
                best_obj = obj;
                best_start = pool.starts[i];
            }
        }
    }
    return Selection{best_start, *best, best_obj};
}

Selection agnostic_select(const TabularMdp& mdp, const StochasticPolicy& teacher_policy, std::size_t horizon,
                          Rng& rng) {
    const Vector& p0 = mdp.initial_dist();
    const std::vector<double> weights(p0.data(), p0.data() + p0.size());
    const std::size_t s0 = rng.categorical(weights);
    return Selection{s0, rollout(mdp, teacher_policy, s0, horizon, rng), 0.0};
}

const char* teacher_name(const TeacherKind& kind) {
    return std::visit(
        [](const auto& t) -> const char* {
            using T = std::decay_t<decltype(t)>;
            if constexpr (std::is_same_v<T, OmniTeacher>) return "omni";
            else if constexpr (std::is_same_v<T, BboxTeacher>) return "bbox";
            else return "agnostic";
        },
        kind);
}

TeachingResult teaching_loop(const TabularMdp& mdp, const StochasticPolicy& teacher_policy,
                             const TeacherKind& teacher, LearnerState learner, std::size_t T,
                             const PoolConfig& pool_cfg, Rng& rng, const MetricsSink& sink) {
    if (T == 0) throw std::invalid_argument("teaching_loop: T must be positive");
    if (const auto* b = std::get_if<BboxTeacher>(&teacher); b && (b->probe_interval == 0 || b->tests == 0))
        throw std::invalid_argument("teaching_loop: Bbox needs B >= 1 and k >= 1");
    const bool needs_env_reward = std::holds_alternative<BboxTeacher>(teacher);
    if (needs_env_reward && !mdp.env_reward()) throw std::invalid_argument("teaching_loop: Bbox needs env_reward");

    RunLog log;
    std::optional<CandidatePool> pool;
    std::optional<ProbeEstimate> estimate;
    for (std::size_t t = 1; t <= T; ++t) {
        try {
            const bool uses_pool = !std::holds_alternative<AgnosticTeacher>(teacher);
            if (uses_pool && (!pool || pool_cfg.resample_every_step))
                pool = build_candidate_pool(mdp, teacher_policy, pool_cfg.candidates, pool_cfg.horizon, rng);

            bool probed = false;
            std::optional<Selection> sel;
            if (const auto* omni = std::get_if<OmniTeacher>(&teacher)) {
                sel = omni_select(learner, *pool, omni->lambda_star, mdp);
            } else if (const auto* bbox = std::get_if<BboxTeacher>(&teacher)) {
                if ((t - 1) % bbox->probe_interval == 0) {
                    estimate = probe_learner(mdp, learner.policy, bbox->tests, pool_cfg.horizon, rng, t);
                    probed = true;
                }
                sel = bbox_select(*estimate, *pool, *mdp.env_reward(), mdp.discount());
            } else {
                sel = agnostic_select(mdp, teacher_policy, pool_cfg.horizon, rng);
            }

            if (sink)
                sink(StepContext{t, learner, *sel, pool ? &*pool : nullptr, estimate ? &*estimate : nullptr, probed});
            log.steps.push_back(StepLog{t, sel->start, sel->demo.size(), sel->objective, probed});
            learner = learner_step(learner, sel->demo, mdp);
        } catch (const std::exception& e) {
            throw TeachingLoopError(e.what(), t, std::move(log));
        }
    }
    return TeachingResult{std::move(learner), std::move(log)};
}

} // namespace teachirl
