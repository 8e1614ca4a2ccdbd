#include "teachirl/verify.hpp"
#include "teachirl/analysis.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>

namespace teachirl::verify {

bool Report::ok() const {
    for (const auto& c : checks)
        if (!c.passed) return false;
    return true;
}

std::vector<std::string> Report::failures() const {
    std::vector<std::string> out;
    for (const auto& c : checks)
        if (!c.passed) out.push_back(c.name + ": " + c.detail);
    return out;
}

Level level_from_string(const std::string& name) {
    if (name == "quick") return Level::quick;
    if (name == "full") return Level::full;
    throw std::invalid_argument("unknown verify level: " + name);
}

static std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

static CheckResult timed(const std::string& name, const std::function<void(CheckResult&)>& body) {
    CheckResult r{name, true, {}, 0.0};
    const auto t0 = std::chrono::steady_clock::now();
    try {
        body(r);
    } catch (const std::exception& e) {
        r.passed = false;
        r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

// *******************************************************
// Random instances
// *******************************************************

TabularMdp random_mdp(std::size_t n_states, std::size_t n_actions, double gamma, Rng& rng, std::size_t n_initial) {
    std::vector<std::vector<std::vector<double>>> kernel(n_states, std::vector<std::vector<double>>(n_actions));
    for (auto& row : kernel)
        for (auto& dist : row) {
            dist.resize(n_states);
            double sum = 0.0;
            for (auto& p : dist) sum += (p = -std::log(1.0 - rng.uniform()));
            for (auto& p : dist) p /= sum;
        }
    if (n_initial == 0 || n_initial > n_states) n_initial = n_states;
    Vector p0 = Vector::Zero(static_cast<Eigen::Index>(n_states));
    p0.head(static_cast<Eigen::Index>(n_initial)).setConstant(1.0 / static_cast<double>(n_initial));
    Table r(static_cast<Eigen::Index>(n_states), static_cast<Eigen::Index>(n_actions));
    for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = 2.0 * rng.uniform() - 1.0;
    return TabularMdp::from_dense(kernel, gamma, std::move(p0), std::move(r));
}

StochasticPolicy random_policy(std::size_t n_states, std::size_t n_actions, Rng& rng, double floor) {
    Table p(static_cast<Eigen::Index>(n_states), static_cast<Eigen::Index>(n_actions));
    for (Eigen::Index s = 0; s < p.rows(); ++s) {
        for (Eigen::Index a = 0; a < p.cols(); ++a) p(s, a) = rng.uniform();
        p.row(s) /= p.row(s).sum();
        p.row(s) = (1.0 - floor) * p.row(s).array() + floor / static_cast<double>(n_actions);
    }
    return StochasticPolicy(std::move(p));
}

std::shared_ptr<const FeatureMap> random_features(std::size_t n_states, std::size_t n_actions, std::size_t dim,
                                                  Rng& rng, bool binary) {
    auto f = std::make_shared<FeatureMap>(n_states, n_actions, dim);
    for (std::size_t s = 0; s < n_states; ++s)
        for (std::size_t a = 0; a < n_actions; ++a) {
            Vector phi(static_cast<Eigen::Index>(dim));
            for (auto& x : phi) x = binary ? (rng.uniform() < 0.5 ? 1.0 : 0.0) : 2.0 * rng.uniform() - 1.0;
            f->set(s, a, phi);
        }
    return f;
}

Vector random_vector(std::size_t n, Rng& rng, double scale) {
    Vector v(static_cast<Eigen::Index>(n));
    for (auto& x : v) x = scale * rng.normal();
    return v;
}

// *******************************************************
// Gradient checks
// *******************************************************

CheckResult check_nll_gradient(std::size_t n_mdps, Rng& rng, double corruption) {
    return timed("nll_gradient_fd", [&](CheckResult& r) {
        const double h = 1e-5;
        const double solve_tol = 1e-13;
        double worst = 0.0;
        std::size_t cases = 0;
        for (std::size_t i = 0; i < n_mdps; ++i) {
            const std::size_t ns = 2 + rng.below(5), na = 2 + rng.below(2), d = 2 + rng.below(3);
            const double gamma = 0.5 + 0.4 * rng.uniform();
            const TabularMdp mdp = random_mdp(ns, na, gamma, rng);
            const auto features = random_features(ns, na, d, rng);
            const Demonstration demo = rollout(mdp, random_policy(ns, na, rng), rng.below(ns), 5 + rng.below(20), rng);
            for (RewardVariant v : {RewardVariant::linear, RewardVariant::quadratic}) {
                const RewardModel model = RewardModel::zeros(v, features);
                const Vector lambda = random_vector(model.param_dim(), rng, v == RewardVariant::linear ? 1.0 : 0.5);
                Vector g = nll_loss_and_gradient(model, mdp, demo, lambda, solve_tol).gradient;
                g.array() += corruption;
                Vector fd(g.size());
                for (Eigen::Index k = 0; k < g.size(); ++k) {
                    Vector lp = lambda, lm = lambda;
                    lp(k) += h;
                    lm(k) -= h;
                    fd(k) = (nll_loss_and_gradient(model, mdp, demo, lp, solve_tol).loss -
                             nll_loss_and_gradient(model, mdp, demo, lm, solve_tol).loss) /
                            (2.0 * h);
                }
                const double rel = (g - fd).norm() / std::max(fd.norm(), 1e-8);
                worst = std::max(worst, rel);
                ++cases;
            }
        }
        r.passed = worst <= 1e-4;
        r.detail = fmt("%.0f cases, worst relative error %.3g (limit 1e-4)", static_cast<double>(cases), worst);
    });
}

CheckResult check_feature_gradient_identity(std::size_t n_mdps, Rng& rng) {
    return timed("feature_gradient_identity", [&](CheckResult& r) {
        double worst = 0.0;
        for (std::size_t i = 0; i < n_mdps; ++i) {
            const std::size_t ns = 3 + rng.below(4), na = 2 + rng.below(2);
            std::vector<std::vector<std::vector<double>>> kernel(
                ns, std::vector<std::vector<double>>(na, std::vector<double>(ns, 0.0)));
            for (auto& row : kernel)
                for (auto& dist : row) dist[rng.below(ns)] = 1.0;
            Vector p0 = Vector::Constant(static_cast<Eigen::Index>(ns), 1.0 / static_cast<double>(ns));
            const double gamma = 0.5;
            const TabularMdp mdp = TabularMdp::from_dense(kernel, gamma, std::move(p0));
            const auto features = random_features(ns, na, 3, rng);
            const RewardModel model = RewardModel::zeros(RewardVariant::linear, features);
            // gamma^100 makes the truncated tail negligible
            const Demonstration demo = rollout(mdp, random_policy(ns, na, rng), rng.below(ns), 100, rng);
            const auto res = nll_loss_and_gradient(model, mdp, demo, random_vector(3, rng));
            worst = std::max(worst, (res.gradient - res.feature_gradient).norm());
        }
        r.passed = worst <= 1e-8;
        r.detail = fmt("worst ||grad - (mu_pi - mu_xi)|| = %.3g", worst);
    });
}

// *******************************************************
// Occupancy
// *******************************************************

CheckResult check_occupancy_normalization(std::size_t pairs, Rng& rng) {
    return timed("occupancy_normalization", [&](CheckResult& r) {
        double worst = 0.0;
        for (std::size_t i = 0; i < pairs; ++i) {
            const std::size_t ns = 2 + rng.below(9), na = 1 + rng.below(4);
            const TabularMdp mdp = random_mdp(ns, na, 0.99 * rng.uniform(), rng, 1 + rng.below(ns));
            const auto occ = occupancy_measure(mdp, random_policy(ns, na, rng, 0.0));
            worst = std::max(worst, std::abs(occ.total() - 1.0));
        }
        r.passed = worst <= 1e-8;
        r.detail = fmt("%.0f pairs, worst |sum rho - 1| = %.3g", static_cast<double>(pairs), worst);
    });
}

CheckResult check_occupancy_monte_carlo(std::size_t instances, std::size_t rollouts, Rng& rng) {
    return timed("occupancy_monte_carlo", [&](CheckResult& r) {
        double worst_z = 0.0;
        std::size_t cells = 0;
        for (std::size_t i = 0; i < instances; ++i) {
            const std::size_t ns = 2 + rng.below(4), na = 2 + rng.below(2);
            const double gamma = 0.5 + 0.3 * rng.uniform();
            const TabularMdp mdp = random_mdp(ns, na, gamma, rng, 1 + rng.below(ns));
            const StochasticPolicy pi = random_policy(ns, na, rng);
            const Table exact = occupancy_measure(mdp, pi, 1e-14).rho;
            // truncation leaves at most gamma^H < 1e-13 of the mass
            const auto H = static_cast<std::size_t>(std::ceil(std::log(1e-13) / std::log(gamma)));
            const std::vector<double> p0(mdp.initial_dist().data(), mdp.initial_dist().data() + ns);
            Table sum = Table::Zero(exact.rows(), exact.cols()), sum_sq = sum;
            for (std::size_t k = 0; k < rollouts; ++k) {
                const auto demo = rollout(mdp, pi, rng.categorical(p0), H, rng);
                const Table x = demo_occupancy(demo, ns, na, gamma).rho;
                sum += x;
                sum_sq += x.cwiseProduct(x);
            }
            const double n = static_cast<double>(rollouts);
            const Table mean = sum / n;
            for (Eigen::Index c = 0; c < exact.size(); ++c) {
                const double var = (sum_sq.data()[c] / n - mean.data()[c] * mean.data()[c]) * n / (n - 1.0);
                const double se = std::sqrt(std::max(var, 0.0) / n);
                const double diff = std::abs(mean.data()[c] - exact.data()[c]);
                const double z = se > 0.0 ? diff / se : (diff <= 1e-12 ? 0.0 : std::numeric_limits<double>::infinity());
                worst_z = std::max(worst_z, z);
                ++cells;
            }
        }
        r.passed = worst_z <= 3.0;
        r.detail = fmt("%.0f cells, worst deviation %.3g standard errors (limit 3)", static_cast<double>(cells), worst_z);
    });
}

// *******************************************************
// Bounds
// *******************************************************

CheckResult check_smoothness_bound(std::size_t pairs, Rng& rng) {
    return timed("smoothness_bound", [&](CheckResult& r) {
        const std::size_t ns = 5, na = 3, d = 8;
        const double gamma = 0.7;
        const TabularMdp mdp = random_mdp(ns, na, gamma, rng);
        const auto features = random_features(ns, na, d, rng, true);
        const RewardModel model = RewardModel::zeros(RewardVariant::linear, features);
        const Table& env = *mdp.env_reward();
        const double rmax = reward_max(env);
        const double m = std::sqrt(static_cast<double>(d));
        auto nu = [&](const Vector& lambda) {
            const auto sol = soft_value_iteration(mdp, model.with_params(lambda).reward_table());
            return expected_reward(occupancy_measure(mdp, sol.policy), env);
        };
        std::size_t held = 0;
        double tightest = 0.0;
        for (std::size_t i = 0; i < pairs; ++i) {
            const Vector lambda = random_vector(d, rng);
            Vector dir = random_vector(d, rng);
            dir /= dir.norm();
            const Vector lambda2 = lambda + rng.uniform() * dir;
            const double dist = (lambda - lambda2).norm();
            const double gap = std::abs(nu(lambda) - nu(lambda2));
            const double bound = smoothness_bound(m, gamma, rmax, dist);
            if (gap <= bound) ++held;
            if (bound > 0.0) tightest = std::max(tightest, gap / bound);
        }
        r.passed = held == pairs;
        r.detail = fmt("%.0f/%.0f pairs within the bound, max gap/bound %.3g", static_cast<double>(held),
                       static_cast<double>(pairs), tightest);
    });
}

CheckResult check_policy_tv_bound(std::size_t trials, Rng& rng) {
    return timed("policy_tv_bound", [&](CheckResult& r) {
        std::size_t held = 0;
        double tightest = 0.0;
        for (std::size_t i = 0; i < trials; ++i) {
            const std::size_t na = 2 + rng.below(3);
            const TabularMdp mdp = random_mdp(5, na, 0.95 * rng.uniform(), rng, 1 + rng.below(5));
            const auto pi = random_policy(5, na, rng, 0.0);
            const auto pi2 = random_policy(5, na, rng, 0.0);
            const auto c = policy_tv_bound_check(mdp, pi, pi2);
            if (c.holds) ++held;
            if (c.rhs > 0.0) tightest = std::max(tightest, c.lhs / c.rhs);
        }
        r.passed = held == trials;
        r.detail = fmt("%.0f/%.0f trials hold, max lhs/rhs %.3g", static_cast<double>(held),
                       static_cast<double>(trials), tightest);
    });
}

CheckResult check_zero_noise_contraction(std::size_t steps, Rng& rng) {
    return timed("zero_noise_contraction", [&](CheckResult& r) {
        const std::size_t ns = 6, na = 3, d = 4;
        const TabularMdp mdp = random_mdp(ns, na, 0.8, rng);
        const auto features = random_features(ns, na, d, rng);
        const double eta = 0.2;
        const Vector lambda_star = random_vector(d, rng);
        LearnerState learner = make_learner(mdp, RewardModel(RewardVariant::linear, features, random_vector(d, rng, 3.0)),
                                            LearningSchedule::constant(eta));
        // beta_t drawn from [beta_min / eta, 1 / eta], so min_t eta beta_t >= beta_min
        const double beta_min = 0.05;
        std::vector<double> dist{(learner.params() - lambda_star).norm()};
        double beta = 1.0;
        for (std::size_t t = 1; t < steps; ++t) {
            const double eta_t = learner.learning_rate();
            const double beta_t = (beta_min + (1.0 - beta_min) * rng.uniform()) / eta_t;
            beta = std::min(beta, eta_t * beta_t);
            const std::size_t s0 = rng.below(ns);
            const Vector mu_pi = feature_expectation_policy(mdp, learner.policy, s0, learner.model);
            const Vector mu_xi = mu_pi - beta_t * (learner.params() - lambda_star);
            learner = apply_gradient(learner, mu_pi - mu_xi, mdp);
            dist.push_back((learner.params() - lambda_star).norm());
        }
        double worst = -std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < dist.size(); ++t)
            worst = std::max(worst, dist[t] - (std::pow(1.0 - beta, static_cast<double>(t)) * dist[0] + 1e-9));
        r.passed = worst <= 0.0;
        r.detail = fmt("%.0f steps, beta %.3g, worst excess over bound %.3g", static_cast<double>(dist.size()), beta,
                       worst);
    });
}

CheckResult check_richness_reconstruction(std::size_t trials, Rng& rng) {
    return timed("richness_reconstruction", [&](CheckResult& r) {
        double worst = 0.0;
        std::size_t unclamped = 0;
        for (std::size_t i = 0; i < trials; ++i) {
            const std::size_t d = 2 + rng.below(7);
            const Vector mu_pi = random_vector(d, rng), mu_xi = random_vector(d, rng);
            const Vector lt = random_vector(d, rng), ls = random_vector(d, rng);
            const double eta = 0.05 + rng.uniform();
            const auto dec = richness_decompose(mu_pi, mu_xi, lt, ls, eta);
            if (dec.clamped || dec.degenerate) continue;
            ++unclamped;
            worst = std::max(worst, (mu_pi - dec.beta * (lt - ls) + dec.delta - mu_xi).norm());
        }
        r.passed = worst <= 1e-12 && unclamped > 0;
        r.detail = fmt("%.0f unclamped draws, worst residual %.3g", static_cast<double>(unclamped), worst);
    });
}

// *******************************************************
// Teacher selection
// *******************************************************

CheckResult check_selection_bruteforce(std::size_t steps, Rng& rng) {
    return timed("selection_bruteforce", [&](CheckResult& r) {
        const std::size_t ns = 8, na = 3, d = 4;
        const TabularMdp mdp = random_mdp(ns, na, 0.8, rng, 4);
        const auto features = random_features(ns, na, d, rng);
        const RewardModel model = RewardModel::zeros(RewardVariant::linear, features);
        const StochasticPolicy teacher = soft_value_iteration(mdp, 3.0 * *mdp.env_reward()).policy;
        const Vector lambda_star = random_vector(d, rng);
        const Table& env = *mdp.env_reward();
        const double gamma = mdp.discount();
        PoolConfig pool_cfg;
        pool_cfg.candidates = 6;
        pool_cfg.horizon = 12;

        std::size_t omni_bad = 0, bbox_bad = 0, evaluated = 0;
        auto omni_sink = [&](const StepContext& ctx) {
            const Vector& lt = ctx.learner.params();
            const double eta = ctx.learner.learning_rate();
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < ctx.pool->starts.size(); ++i) {
                // expected and demonstrated feature sums written out directly
                const Table rho = occupancy_from_state(mdp, ctx.learner.policy, ctx.pool->starts[i]).rho;
                Vector mu_pi = Vector::Zero(static_cast<Eigen::Index>(d));
                for (std::size_t s = 0; s < ns; ++s)
                    for (std::size_t a = 0; a < na; ++a) mu_pi += rho(s, a) * features->at(s, a);
                for (const auto& demo : ctx.pool->demos[i]) {
                    Vector g = mu_pi;
                    double w = 1.0 - gamma;
                    for (const auto& st : demo.steps()) {
                        g -= w * features->at(st.state, st.action);
                        w *= gamma;
                    }
                    const Vector next = lt - eta * g;
                    best = std::min(best, (next - lambda_star).squaredNorm() - (lt - lambda_star).squaredNorm());
                }
            }
            ++evaluated;
            if (std::abs(ctx.selection.objective - best) > 1e-9 * std::max(1.0, std::abs(best))) ++omni_bad;
        };
        auto bbox_sink = [&](const StepContext& ctx) {
            double best = -1.0;
            for (std::size_t i = 0; i < ctx.pool->starts.size(); ++i) {
                const Table* rho_hat = nullptr;
                for (std::size_t j = 0; j < ctx.estimate->starts.size(); ++j)
                    if (ctx.estimate->starts[j] == ctx.pool->starts[i]) rho_hat = &ctx.estimate->rho[j];
                if (!rho_hat) throw std::runtime_error("start without probe estimate");
                const double probe_value = rho_hat->cwiseProduct(env).sum();
                for (const auto& demo : ctx.pool->demos[i]) {
                    double demo_value = 0.0, w = 1.0 - gamma;
                    for (const auto& st : demo.steps()) {
                        demo_value += w * env(st.state, st.action);
                        w *= gamma;
                    }
                    best = std::max(best, std::abs(probe_value - demo_value));
                }
            }
            ++evaluated;
            if (std::abs(ctx.selection.objective - best) > 1e-9 * std::max(1.0, best)) ++bbox_bad;
        };

        const auto run = [&](const TeacherKind& kind, const MetricsSink& sink) {
            LearnerState learner = make_learner(mdp, model.with_params(random_vector(d, rng)),
                                                LearningSchedule::constant(0.2));
            teaching_loop(mdp, teacher, kind, learner, steps, pool_cfg, rng, sink);
        };
        run(OmniTeacher{lambda_star}, omni_sink);
        run(BboxTeacher{5, 5}, bbox_sink);
        r.passed = omni_bad == 0 && bbox_bad == 0 && evaluated == 2 * steps;
        r.detail = fmt("%.0f steps checked, omni mismatches %.0f, bbox mismatches %.0f", static_cast<double>(evaluated),
                       static_cast<double>(omni_bad), static_cast<double>(bbox_bad));
    });
}

// *******************************************************
// Suite
// *******************************************************

Report run(const Options& options) {
    const bool full = options.level == Level::full;
    Rng master(options.seed);
    Report report;
    auto next = [&] { return master.fork(); };
    {
        Rng rng = next();
        report.checks.push_back(check_nll_gradient(full ? 50 : 10, rng, options.gradient_corruption));
    }
    {
        Rng rng = next();
        report.checks.push_back(check_feature_gradient_identity(full ? 20 : 5, rng));
    }
    {
        Rng rng = next();
        report.checks.push_back(check_occupancy_normalization(full ? 100 : 30, rng));
    }
    {
        Rng rng = next();
        report.checks.push_back(check_occupancy_monte_carlo(full ? 10 : 2, full ? 100000 : 10000, rng));
    }
    {
        Rng rng = next();
        report.checks.push_back(check_smoothness_bound(full ? 200 : 40, rng));
    }
    {
        Rng rng = next();
        report.checks.push_back(check_policy_tv_bound(full ? 200 : 50, rng));
    }
    {
        Rng rng = next();
        report.checks.push_back(check_zero_noise_contraction(100, rng));
    }
    {
        Rng rng = next();
        report.checks.push_back(check_richness_reconstruction(full ? 1000 : 200, rng));
    }
    {
        Rng rng = next();
        report.checks.push_back(check_selection_bruteforce(full ? 50 : 15, rng));
    }
    return report;
}

} // namespace teachirl::verify
