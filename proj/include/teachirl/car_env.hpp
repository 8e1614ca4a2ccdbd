#pragma once

#include "teachirl/mdp.hpp"
#include "teachirl/reward_model.hpp"

#include <array>
#include <memory>

namespace teachirl::car {

/// Feature layout of phi(s).
enum Feature : std::size_t {
    stone = 0,
    grass,
    car_here,
    ped,
    hov,
    police,
    car_in_front,
    ped_in_front,
    feature_count
};

/// Cell contents are the first six features.
inline constexpr std::size_t content_count = 6;

enum Action : std::size_t { left = 0, straight = 1, right = 2, action_count = 3 };

const char* feature_name(std::size_t f);

enum class Column { left, right, any };

/// Each matching cell receives `feature` with `probability`: independently per
/// cell, or with one draw per row shared by the row's matching cells.
struct HazardRule {
    std::size_t feature;
    double probability;
    Column column;
    bool per_row = false;
};

struct TaskSpec {
    int id = 0;
    std::vector<HazardRule> rules;

    /// Default hazard rules for T0..T8.
    static TaskSpec preset(int id);
    void validate() const;
};

/// One lane: rows x cols cells, row 0 at the bottom, column 0 on the left.
struct LaneGrid {
    std::size_t rows = 10;
    std::size_t cols = 2;
    int task = 0;
    std::size_t lane = 0;
    std::vector<std::array<bool, content_count>> cells;

    bool has(std::size_t row, std::size_t col, std::size_t content) const {
        return cells.at(row * cols + col)[content];
    }
    std::size_t cell_count() const { return rows * cols; }
};

enum class TeacherReward { linear, nonlinear };

const char* to_string(TeacherReward r);
TeacherReward teacher_reward_from_string(const std::string& name);

struct CarMdpConfig {
    std::vector<int> tasks{0, 1, 2, 3, 4, 5, 6, 7};
    std::size_t lanes_per_task = 1; // n
    double gamma = 0.9;
    std::uint64_t seed = 0;
    TeacherReward reward = TeacherReward::linear;
    std::size_t rows = 10;
    std::size_t cols = 2;
    /// Replaces the preset rules of the task with the same id.
    std::vector<TaskSpec> task_overrides;

    void validate() const;
    TaskSpec task_spec(int id) const;
};

/**
Generated car environment.

States are numbered lane-major (lane * rows * cols + row * cols + col) with one
absorbing terminal at the end. The agent always moves one row forward;
`left` / `right` shift the column, except that pushing against the outer
edge lands on a uniformly random column. Any action from the top row enters
the terminal.
*/
struct CarEnvironment {
    TabularMdp mdp;
    std::shared_ptr<const FeatureMap> features;
    Eigen::MatrixXd state_features;
    std::vector<LaneGrid> lanes;
    /// Task id per state; -1 for the terminal.
    std::vector<int> task_of_state;
    std::size_t terminal;
    TeacherReward reward;

    std::size_t cells_per_lane() const { return lanes.front().cell_count(); }
    std::size_t start_state(std::size_t lane) const { return lane * cells_per_lane(); }
    /// Distinct task ids in lane order.
    std::vector<int> task_ids() const;
    /// Uniform distribution over the start cells of every lane of `task`.
    Vector task_initial_dist(int task) const;
    /// Same, over the union of the given tasks.
    Vector tasks_initial_dist(std::span<const int> tasks) const;
};

CarEnvironment generate_environment(const CarMdpConfig& cfg, Rng& rng);
/// Uses Rng(cfg.seed).
CarEnvironment generate_environment(const CarMdpConfig& cfg);

/// Binary phi for a cell; look-ahead features are 0 on the top row.
Vector state_features(const LaneGrid& grid, std::size_t row, std::size_t col);

/// Teacher weights (stone, grass, car, ped, HOV, police, car-in-f, ped-in-f).
const Vector& linear_weights();

double linear_teacher_reward(const Vector& phi);
/// HOV weighted +1 instead of -1, plus -5 when HOV and police co-occur.
double nonlinear_teacher_reward(const Vector& phi);
double teacher_reward(TeacherReward variant, const Vector& phi);

/// Hard-max optimal policy of the attached environment reward.
StochasticPolicy teacher_policy(const TabularMdp& mdp);

} // namespace teachirl::car
