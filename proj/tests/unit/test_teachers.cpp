#include "doctest.h"

#include "teachirl/car_env.hpp"
#include "teachirl/teachers.hpp"
#include "teachirl/verify.hpp"

#include <cmath>
#include <set>

using namespace teachirl;

namespace {

TabularMdp deterministic_mdp(std::size_t ns, std::size_t na, Rng& rng, std::size_t n_initial) {
    std::vector<std::vector<std::vector<double>>> k(ns, std::vector<std::vector<double>>(na, std::vector<double>(ns)));
    for (auto& row : k)
        for (auto& d : row) d[rng.below(ns)] = 1.0;
    Vector p0 = Vector::Zero(static_cast<Eigen::Index>(ns));
    p0.head(static_cast<Eigen::Index>(n_initial)).setConstant(1.0 / static_cast<double>(n_initial));
    Table r(static_cast<Eigen::Index>(ns), static_cast<Eigen::Index>(na));
    for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = rng.uniform();
    return TabularMdp::from_dense(k, 0.8, std::move(p0), std::move(r));
}

struct Bandit {
    TabularMdp mdp = TabularMdp::from_dense({{{1.0}, {1.0}}}, 0.0, Vector::Ones(1), Table::Zero(1, 2));
    std::shared_ptr<const FeatureMap> features = [] {
        auto f = std::make_shared<FeatureMap>(1, 2, 2);
        f->set(0, 0, (Vector(2) << 1, 0).finished());
        f->set(0, 1, (Vector(2) << 0, 1).finished());
        return f;
    }();
};

} // namespace

TEST_SUITE("teachers") {

TEST_CASE("candidate pool: deterministic systems collapse, K = 1 gives one candidate") {
    Rng rng(1);
    const auto mdp = deterministic_mdp(6, 2, rng, 3);
    const auto pi = optimal_policy(mdp, *mdp.env_reward());
    const auto pool = build_candidate_pool(mdp, pi, 10, 8, rng);
    REQUIRE(pool.starts == std::vector<std::size_t>{0, 1, 2});
    for (const auto& d : pool.demos) CHECK(d.size() == 1);

    const auto sto = verify::random_mdp(5, 3, 0.9, rng, 2);
    const auto one = build_candidate_pool(sto, verify::random_policy(5, 3, rng), 1, 6, rng);
    CHECK(one.size() == 2);
    CHECK_THROWS_AS(build_candidate_pool(sto, verify::random_policy(5, 3, rng), 0, 6, rng), std::invalid_argument);
}

TEST_CASE("candidate pool: realizable and deduplicated") {
    Rng rng(2);
    const auto mdp = verify::random_mdp(4, 2, 0.9, rng, 2);
    const auto pi = verify::random_policy(4, 2, rng);
    const auto pool = build_candidate_pool(mdp, pi, 30, 3, rng);
    for (std::size_t i = 0; i < pool.starts.size(); ++i) {
        std::set<std::vector<std::pair<std::size_t, std::size_t>>> seen;
        for (const auto& d : pool.demos[i]) {
            CHECK(d.start_state() == pool.starts[i]);
            std::vector<std::pair<std::size_t, std::size_t>> key;
            for (std::size_t k = 0; k < d.size(); ++k) {
                const auto& st = d.steps()[k];
                key.emplace_back(st.state, st.action);
                CHECK(pi(st.state, st.action) > 0.0);
                if (k + 1 < d.size()) CHECK(mdp.probability(st.state, st.action, d.steps()[k + 1].state) > 0.0);
            }
            CHECK(seen.insert(key).second);
        }
    }
}

TEST_CASE("candidate pool: edge randomization of the car MDP yields several trajectories") {
    int with_two = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        car::CarMdpConfig cfg;
        cfg.tasks = {0};
        cfg.seed = seed;
        const auto env = car::generate_environment(cfg);
        Rng rng(seed);
        const auto pool = build_candidate_pool(env.mdp, car::teacher_policy(env.mdp), 50, 10, rng);
        if (pool.demos[0].size() >= 2) ++with_two;
    }
    CHECK(with_two == 10);
}

TEST_CASE("omni objective arithmetic") {
    const Vector lt = (Vector(2) << 1, 0).finished(), ls = Vector::Zero(2), mu_pi = (Vector(2) << 1, 0).finished();
    CHECK(omni_objective(1.0, lt, ls, mu_pi, Vector::Zero(2)) == doctest::Approx(-1.0));
    CHECK(omni_objective(1.0, lt, ls, mu_pi, mu_pi) == 0.0);
}

TEST_CASE("omni selection on a bandit") {
    Bandit b;
    const auto learner = make_learner(b.mdp, RewardModel::zeros(RewardVariant::linear, b.features),
                                      LearningSchedule::constant(1.0));
    const Demonstration d0({{0, 0}}, 1), d1({{0, 1}}, 1);
    // mu_pi = (0.5, 0.5); lambda_t - lambda* = (1, 0): objectives 1.5 and -0.5
    const CandidatePool pool{{0}, {{d0, d1}}};
    const Vector lambda_star = (Vector(2) << -1, 0).finished();
    const auto sel = omni_select(learner, pool, lambda_star, b.mdp);
    CHECK(sel.demo == d1);
    CHECK(sel.objective == doctest::Approx(-0.5));

    const CandidatePool single{{0}, {{d0}}};
    CHECK(omni_select(learner, single, lambda_star, b.mdp).demo == d0);

    // equal objectives: pool order decides
    const CandidatePool tie{{0}, {{d1, d1}}};
    CHECK(omni_select(learner, tie, learner.params(), b.mdp).demo == d1);
    CHECK_THROWS_AS(omni_select(learner, CandidatePool{}, lambda_star, b.mdp), std::invalid_argument);
}

TEST_CASE("probe estimates") {
    Rng rng(3);
    const auto mdp = deterministic_mdp(5, 2, rng, 2);
    const auto pi = optimal_policy(mdp, *mdp.env_reward());
    const std::size_t H = 130; // 0.8^130 < 1e-12
    const auto est = probe_learner(mdp, pi, 3, H, rng);
    REQUIRE(est.starts.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        const Table exact = occupancy_from_state(mdp, pi, est.starts[i], 1e-14).rho;
        CHECK((est.rho[i] - exact).cwiseAbs().maxCoeff() < 1e-12);
    }

    const auto sto = verify::random_mdp(4, 2, 0.8, rng, 1);
    const auto sp = verify::random_policy(4, 2, rng);
    Rng a(9), b2(9);
    const auto single = probe_learner(sto, sp, 1, 20, a);
    const auto demo = rollout(sto, sp, 0, 20, b2);
    CHECK((single.rho[0] - demo_occupancy(demo, 4, 2, 0.8).rho).norm() == 0.0);
    CHECK(single.find(3) == nullptr);
    CHECK(single.find(0) != nullptr);
    CHECK_THROWS_AS(probe_learner(sto, sp, 0, 20, a), std::invalid_argument);
}

TEST_CASE("probe estimate converges to the exact occupancy") {
    Rng rng(4);
    const auto mdp = verify::random_mdp(4, 2, 0.8, rng, 1);
    const auto pi = verify::random_policy(4, 2, rng);
    const std::size_t k = 10000, H = 140;
    const auto est = probe_learner(mdp, pi, k, H, rng);
    // per-cell standard error from an independent batch of the same size
    Table sum = Table::Zero(4, 2), sq = sum;
    for (std::size_t i = 0; i < k; ++i) {
        const Table x = demo_occupancy(rollout(mdp, pi, 0, H, rng), 4, 2, 0.8).rho;
        sum += x;
        sq += x.cwiseProduct(x);
    }
    const Table mean = sum / double(k);
    const Table se = ((sq / double(k) - mean.cwiseProduct(mean)) / double(k - 1)).cwiseSqrt();
    const Table exact = occupancy_from_state(mdp, pi, 0, 1e-14).rho;
    for (Eigen::Index c = 0; c < exact.size(); ++c)
        CHECK(std::abs(est.rho[0].data()[c] - exact.data()[c]) <= 3.0 * se.data()[c]);
    CHECK(est.rho[0].sum() <= 1.0 + 1e-9);
}

TEST_CASE("bbox selection") {
    const TabularMdp mdp = TabularMdp::from_dense({{{1, 0}}, {{0, 1}}}, 0.5, (Vector(2) << 0.5, 0.5).finished(),
                                                  Table::Ones(2, 1));
    const Table& env = *mdp.env_reward();
    const Demonstration d0({{0, 0}}, 1), d1({{1, 0}}, 1);
    const CandidatePool pool{{0, 1}, {{d0}, {d1}}};

    ProbeEstimate exact;
    exact.starts = {0, 1};
    exact.rho = {demo_occupancy(d0, 2, 1, 0.5).rho, demo_occupancy(d1, 2, 1, 0.5).rho};
    const auto zero = bbox_select(exact, pool, env, 0.5);
    CHECK(zero.objective == 0.0);
    CHECK(zero.start == 0);

    // discrepancy sums +0.3 (start 0) and -0.5 (start 1)
    ProbeEstimate est;
    est.starts = {0, 1};
    est.rho = {(Table(2, 1) << 0.8, 0.0).finished(), Table::Zero(2, 1)};
    CHECK(bbox_objective(est.rho[0], exact.rho[0], env) == doctest::Approx(0.3));
    CHECK(bbox_objective(est.rho[1], exact.rho[1], env) == doctest::Approx(0.5));
    const auto sel = bbox_select(est, pool, env, 0.5);
    CHECK(sel.start == 1);
    CHECK(sel.objective == doctest::Approx(0.5));

    ProbeEstimate partial;
    partial.starts = {0};
    partial.rho = {Table::Zero(2, 1)};
    CHECK_THROWS_AS(bbox_select(partial, pool, env, 0.5), std::invalid_argument);
}

TEST_CASE("selections agree with exhaustive evaluation over the pool") {
    Rng rng(5);
    const auto res = verify::check_selection_bruteforce(50, rng);
    INFO(res.detail);
    CHECK(res.passed);
}

TEST_CASE("agnostic selection") {
    Rng rng(6);
    auto mdp = verify::random_mdp(4, 2, 0.9, rng);
    const auto pi = verify::random_policy(4, 2, rng);
    const auto point = mdp.with_initial((Vector(4) << 0, 0, 1, 0).finished());
    for (int i = 0; i < 20; ++i) CHECK(agnostic_select(point, pi, 5, rng).start == 2);

    const Vector p0 = (Vector(4) << 0.1, 0.2, 0.3, 0.4).finished();
    const auto m = mdp.with_initial(p0);
    const std::size_t N = 10000;
    std::array<double, 4> count{};
    for (std::size_t i = 0; i < N; ++i) count[agnostic_select(m, pi, 1, rng).start] += 1.0;
    for (int s = 0; s < 4; ++s) {
        const double se = std::sqrt(p0(s) * (1 - p0(s)) / N);
        CHECK(std::abs(count[s] / N - p0(s)) <= 3.0 * se);
    }

    const auto det = deterministic_mdp(5, 2, rng, 5);
    const auto dpi = optimal_policy(det, *det.env_reward());
    const auto a = agnostic_select(det, dpi, 6, rng);
    CHECK(a.demo == rollout(det, dpi, a.start, 6, rng));
}

TEST_CASE("teaching loop: one omni step with a single candidate") {
    Rng rng(7);
    const auto mdp = deterministic_mdp(5, 2, rng, 1);
    const auto pi = optimal_policy(mdp, *mdp.env_reward());
    const auto model = RewardModel::zeros(RewardVariant::linear, verify::random_features(5, 2, 3, rng));
    const auto learner = make_learner(mdp, model, LearningSchedule::constant(0.2));
    PoolConfig pc;
    pc.horizon = 6;
    std::optional<Demonstration> seen;
    Rng r1(1);
    const auto res = teaching_loop(mdp, pi, OmniTeacher{verify::random_vector(3, rng)}, learner, 1, pc, r1,
                                   [&](const StepContext& c) { seen = c.selection.demo; });
    REQUIRE(seen);
    CHECK(res.log.steps.size() == 1);
    CHECK((res.learner.params() - learner_step(learner, *seen, mdp).params()).norm() == 0.0);
    CHECK(res.learner.step == 2);
}

TEST_CASE("teaching loop: bbox probes at the start of every block") {
    Rng rng(8);
    const auto mdp = verify::random_mdp(6, 3, 0.8, rng, 3);
    const auto pi = optimal_policy(mdp, *mdp.env_reward());
    const auto model = RewardModel::zeros(RewardVariant::linear, verify::random_features(6, 3, 3, rng));
    const auto learner = make_learner(mdp, model, LearningSchedule::constant(0.2));
    PoolConfig pc;
    pc.horizon = 8;
    for (std::size_t B : {1u, 5u}) {
        Rng r(11);
        const auto res = teaching_loop(mdp, pi, BboxTeacher{B, 3}, learner, 23, pc, r);
        for (const auto& s : res.log.steps) CHECK(s.probed == ((s.t - 1) % B == 0));
    }
    Rng r(12);
    std::vector<std::size_t> probe_steps;
    teaching_loop(mdp, pi, BboxTeacher{5, 3}, learner, 12, pc, r, [&](const StepContext& c) {
        probe_steps.push_back(c.estimate->probe_step);
    });
    CHECK(probe_steps == std::vector<std::size_t>{1, 1, 1, 1, 1, 6, 6, 6, 6, 6, 11, 11});
}

TEST_CASE("teaching loop determinism and agnostic independence from the learner") {
    Rng rng(9);
    const auto mdp = verify::random_mdp(6, 3, 0.8, rng, 3);
    const auto pi = optimal_policy(mdp, *mdp.env_reward());
    const auto model = RewardModel::zeros(RewardVariant::linear, verify::random_features(6, 3, 3, rng));
    const auto l1 = make_learner(mdp, model, LearningSchedule::constant(0.2));
    const auto l2 = make_learner(mdp, model.with_params(verify::random_vector(3, rng, 4.0)),
                                 LearningSchedule::constant(0.01));
    PoolConfig pc;
    pc.horizon = 8;
    const Vector ls = verify::random_vector(3, rng);
    auto starts = [](const RunLog& log) {
        std::vector<std::size_t> v;
        for (const auto& s : log.steps) v.push_back(s.start);
        return v;
    };
    for (const TeacherKind& kind : {TeacherKind{OmniTeacher{ls}}, TeacherKind{BboxTeacher{5, 5}}}) {
        Rng a(3), b(3);
        const auto ra = teaching_loop(mdp, pi, kind, l1, 15, pc, a);
        const auto rb = teaching_loop(mdp, pi, kind, l1, 15, pc, b);
        CHECK(ra.learner.params() == rb.learner.params());
        CHECK(starts(ra.log) == starts(rb.log));
    }
    Rng a(4), b(4);
    std::vector<Demonstration> da, db;
    teaching_loop(mdp, pi, AgnosticTeacher{}, l1, 30, pc, a, [&](const StepContext& c) { da.push_back(c.selection.demo); });
    teaching_loop(mdp, pi, AgnosticTeacher{}, l2, 30, pc, b, [&](const StepContext& c) { db.push_back(c.selection.demo); });
    CHECK(da == db);
}

TEST_CASE("teaching loop failures carry the step and the log") {
    Rng rng(10);
    const auto mdp = verify::random_mdp(4, 2, 0.8, rng, 2);
    const auto pi = optimal_policy(mdp, *mdp.env_reward());
    const auto model = RewardModel::zeros(RewardVariant::linear, verify::random_features(4, 2, 3, rng));
    const auto learner = make_learner(mdp, model, LearningSchedule::constant(0.2));
    try {
        teaching_loop(mdp, pi, OmniTeacher{Vector::Zero(2)}, learner, 5, PoolConfig{}, rng);
        FAIL("expected TeachingLoopError");
    } catch (const TeachingLoopError& e) {
        CHECK(e.step() == 1);
        CHECK(e.log().steps.empty());
    }
    CHECK_THROWS_AS(teaching_loop(mdp, pi, AgnosticTeacher{}, learner, 0, PoolConfig{}, rng), std::invalid_argument);
}

} // TEST_SUITE
