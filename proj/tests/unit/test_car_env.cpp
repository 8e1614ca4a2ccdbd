#include "doctest.h"

#include "teachirl/car_env.hpp"
#include "teachirl/verify.hpp"

#include <cmath>

using namespace teachirl;
using namespace teachirl::car;

namespace {

CarEnvironment single_lane(TaskSpec spec, TeacherReward reward = TeacherReward::linear) {
    CarMdpConfig cfg;
    cfg.tasks = {spec.id};
    cfg.task_overrides = {std::move(spec)};
    cfg.reward = reward;
    return generate_environment(cfg);
}

/// Greedy actions of an independent hard-max value iteration.
std::vector<std::size_t> greedy(const TabularMdp& mdp) {
    const Table& r = *mdp.env_reward();
    const std::size_t ns = mdp.n_states(), na = mdp.n_actions();
    Vector v = Vector::Zero(static_cast<Eigen::Index>(ns));
    Table q(static_cast<Eigen::Index>(ns), static_cast<Eigen::Index>(na));
    for (int it = 0; it < 400; ++it) {
        for (std::size_t s = 0; s < ns; ++s)
            for (std::size_t a = 0; a < na; ++a) {
                double x = r(s, a);
                for (std::size_t s2 = 0; s2 < ns; ++s2) x += mdp.discount() * mdp.probability(s, a, s2) * v(s2);
                q(s, a) = x;
            }
        v = q.rowwise().maxCoeff();
    }
    std::vector<std::size_t> act(ns);
    for (std::size_t s = 0; s < ns; ++s) {
        std::size_t best = 0;
        for (std::size_t a = 1; a < na; ++a)
            if (q(s, a) > q(s, best) + 1e-9) best = a;
        act[s] = best;
    }
    return act;
}

std::size_t column_of(const CarEnvironment& env, std::size_t s) { return (s % env.cells_per_lane()) % 2; }

} // namespace

TEST_SUITE("car-env") {

TEST_CASE("state counts") {
    CarMdpConfig cfg;
    cfg.lanes_per_task = 5;
    const auto env = generate_environment(cfg);
    CHECK(env.mdp.n_states() == 5 * 8 * 20 + 1);
    CHECK(env.mdp.n_actions() == 3);
    CHECK(env.features->dim() == 8);

    CarMdpConfig one;
    one.tasks = {0};
    CHECK(generate_environment(one).mdp.n_states() == 21);

    CarMdpConfig t;
    t.tasks = {0, 1, 2, 4, 8};
    t.lanes_per_task = 2;
    CHECK(generate_environment(t).mdp.n_states() == 2 * 5 * 20 + 1);
}

TEST_CASE("config validation") {
    CarMdpConfig cfg;
    cfg.tasks = {};
    CHECK_THROWS_AS(generate_environment(cfg), std::invalid_argument);
    cfg.tasks = {9};
    CHECK_THROWS_AS(generate_environment(cfg), std::invalid_argument);
    cfg.tasks = {0};
    cfg.lanes_per_task = 0;
    CHECK_THROWS_AS(generate_environment(cfg), std::invalid_argument);
    CHECK_THROWS_AS(teacher_reward_from_string("cubic"), std::invalid_argument);
}

TEST_CASE("presets") {
    auto prob = [](int id, std::size_t f) {
        double p = 0.0;
        for (const auto& r : TaskSpec::preset(id).rules)
            if (r.feature == f) p = r.probability;
        return p;
    };
    CHECK(prob(0, car_here) < prob(1, car_here));
    CHECK(prob(1, car_here) == 0.25);
    CHECK(prob(7, hov) == 1.0);
    CHECK(prob(8, police) == 0.3);
}

TEST_CASE("transition rows and initial distribution are valid across seeds") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        CarMdpConfig cfg;
        cfg.tasks = {0, 3, 6, 8};
        cfg.seed = seed;
        const auto env = generate_environment(cfg);
        const auto& m = env.mdp;
        double worst = 0.0;
        for (std::size_t s = 0; s < m.n_states(); ++s)
            for (std::size_t a = 0; a < m.n_actions(); ++a) {
                double sum = 0.0;
                for (const auto& t : m.successors(s, a)) sum += t.prob;
                worst = std::max(worst, std::abs(sum - 1.0));
            }
        CHECK(worst <= 1e-12);
        CHECK(std::abs(m.initial_dist().sum() - 1.0) <= 1e-12);
    }
}

TEST_CASE("dynamics") {
    const auto env = single_lane({5, {}});
    const auto& m = env.mdp;
    // bottom-left (0) -> straight to row 1 left (2), right to row 1 right (3)
    CHECK(m.probability(0, straight, 2) == 1.0);
    CHECK(m.probability(0, right, 3) == 1.0);
    CHECK(m.probability(0, left, 2) == 0.5);
    CHECK(m.probability(0, left, 3) == 0.5);
    CHECK(m.probability(1, right, 2) == 0.5);
    CHECK(m.probability(1, left, 2) == 1.0);
    CHECK(m.probability(18, straight, env.terminal) == 1.0);
    CHECK(m.probability(env.terminal, left, env.terminal) == 1.0);
    CHECK(m.initial_dist()(0) == 1.0);
    CHECK(env.state_features.row(static_cast<Eigen::Index>(env.terminal)).norm() == 0.0);
    CHECK(env.task_of_state[env.terminal] == -1);
}

TEST_CASE("state features") {
    LaneGrid g{10, 2, 0, 0, std::vector<std::array<bool, content_count>>(20)};
    CHECK(state_features(g, 3, 0).norm() == 0.0);
    g.cells[3 * 2 + 1][car_here] = true;
    g.cells[4 * 2 + 1][ped] = true;
    const Vector phi = state_features(g, 3, 1);
    Vector expect = Vector::Zero(8);
    expect(car_here) = 1;
    expect(ped_in_front) = 1;
    CHECK(phi == expect);
    g.cells[9 * 2 + 0][car_here] = true;
    CHECK(state_features(g, 9, 0)(car_in_front) == 0.0);
    CHECK(state_features(g, 9, 0)(car_here) == 1.0);
    CHECK_THROWS_AS(state_features(g, 10, 0), std::invalid_argument);
}

TEST_CASE("features are binary with consistent look-ahead") {
    CarMdpConfig cfg;
    cfg.lanes_per_task = 3;
    cfg.seed = 4;
    const auto env = generate_environment(cfg);
    const auto& phi = env.state_features;
    CHECK((phi.array() * (1.0 - phi.array())).abs().maxCoeff() == 0.0);
    for (std::size_t l = 0; l < env.lanes.size(); ++l)
        for (std::size_t r = 0; r + 1 < 10; ++r)
            for (std::size_t c = 0; c < 2; ++c) {
                const auto s = static_cast<Eigen::Index>(l * 20 + r * 2 + c);
                CHECK(phi(s, car_in_front) == phi(s + 2, car_here));
                CHECK(phi(s, ped_in_front) == phi(s + 2, ped));
            }
}

TEST_CASE("teacher rewards") {
    Vector phi = Vector::Zero(8);
    CHECK(linear_teacher_reward(phi) == 0.0);
    phi(car_here) = 1;
    CHECK(linear_teacher_reward(phi) == -5.0);
    phi.setZero();
    phi(grass) = 1;
    phi(ped_in_front) = 1;
    CHECK(linear_teacher_reward(phi) == -5.5);
    CHECK(nonlinear_teacher_reward(phi) == -5.5);
    phi.setZero();
    phi(hov) = 1;
    CHECK(nonlinear_teacher_reward(phi) == 1.0);
    CHECK(linear_teacher_reward(phi) == -1.0);
    phi(police) = 1;
    CHECK(nonlinear_teacher_reward(phi) == -4.0);
    CHECK_THROWS_AS(linear_teacher_reward(Vector::Zero(7)), std::invalid_argument);
}

TEST_CASE("teacher avoids a stone column") {
    const auto env = single_lane({2, {{stone, 1.0, Column::right}}});
    const auto pi = teacher_policy(env.mdp);
    const auto oracle = greedy(env.mdp);
    Rng rng(1);
    const auto d = rollout(env.mdp, pi, 0, 10, rng);
    for (const auto& st : d.steps()) {
        CHECK(column_of(env, st.state) == 0);
        CHECK(pi(st.state, oracle[st.state]) == 1.0);
    }
}

TEST_CASE("nonlinear teacher drives in a police-free HOV column") {
    const auto env = single_lane({7, {{hov, 1.0, Column::right}}}, TeacherReward::nonlinear);
    const auto pi = teacher_policy(env.mdp);
    const auto oracle = greedy(env.mdp);
    Rng rng(2);
    const auto d = rollout(env.mdp, pi, 0, 10, rng);
    for (std::size_t k = 0; k < d.size(); ++k) {
        const auto& st = d.steps()[k];
        if (k > 0) CHECK(column_of(env, st.state) == 1);
        CHECK(pi(st.state, oracle[st.state]) == 1.0);
    }
    // the linear teacher keeps out of it
    const auto lin = single_lane({7, {{hov, 1.0, Column::right}}});
    Rng rng2(3);
    const auto ld = rollout(lin.mdp, teacher_policy(lin.mdp), 0, 10, rng2);
    for (const auto& st : ld.steps())
        CHECK(column_of(lin, st.state) == 0);
}

TEST_CASE("all-zero lane: tie-break picks left everywhere") {
    const auto env = single_lane({0, {}});
    const auto pi = teacher_policy(env.mdp);
    for (std::size_t s = 0; s < env.mdp.n_states(); ++s) CHECK(pi(s, left) == 1.0);
}

TEST_CASE("teacher is optimal against random policies") {
    CarMdpConfig cfg;
    cfg.seed = 9;
    const auto env = generate_environment(cfg);
    const double nu_e = expected_reward(occupancy_measure(env.mdp, teacher_policy(env.mdp)), *env.mdp.env_reward());
    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
        const auto pi = verify::random_policy(env.mdp.n_states(), 3, rng, 0.0);
        CHECK(nu_e >= expected_reward(occupancy_measure(env.mdp, pi), *env.mdp.env_reward()) - 1e-9);
    }
}

TEST_CASE("T8 police is drawn once per row") {
    double hits = 0.0, rows = 0.0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        CarMdpConfig cfg;
        cfg.tasks = {8};
        cfg.seed = seed;
        const auto env = generate_environment(cfg);
        const auto& g = env.lanes[0];
        for (std::size_t r = 0; r < 10; ++r) {
            CHECK(g.has(r, 0, police) == g.has(r, 1, police));
            CHECK(g.has(r, 1, hov));
            CHECK_FALSE(g.has(r, 0, hov));
            hits += g.has(r, 0, police) ? 1.0 : 0.0;
            rows += 1.0;
        }
    }
    const double p = hits / rows, se = std::sqrt(0.3 * 0.7 / rows);
    CHECK(std::abs(p - 0.3) <= 3.0 * se);
}

TEST_CASE("generation is a function of config and seed") {
    CarMdpConfig cfg;
    cfg.seed = 12;
    const auto a = generate_environment(cfg), b = generate_environment(cfg);
    CHECK(a.state_features == b.state_features);
    cfg.seed = 13;
    CHECK_FALSE(generate_environment(cfg).state_features == a.state_features);
}

TEST_CASE("task metadata") {
    CarMdpConfig cfg;
    cfg.tasks = {4, 1};
    cfg.lanes_per_task = 2;
    const auto env = generate_environment(cfg);
    CHECK(env.task_ids() == std::vector<int>{4, 1});
    const Vector p = env.task_initial_dist(1);
    CHECK(p(40) == 0.5);
    CHECK(p(60) == 0.5);
    CHECK(p.sum() == doctest::Approx(1.0));
    CHECK(env.task_of_state[45] == 1);
    CHECK_THROWS_AS(env.task_initial_dist(3), std::invalid_argument);
}

} // TEST_SUITE
