#include "teachirl/car_env.hpp"

#include <algorithm>

namespace teachirl::car {

const char* feature_name(std::size_t f) {
    static const char* names[] = {"stone", "grass", "car", "ped", "HOV", "police", "car-in-f", "ped-in-f"};
    if (f >= feature_count) throw std::invalid_argument("feature_name: index out of range");
    return names[f];
}

TaskSpec TaskSpec::preset(int id) {
    switch (id) {
    case 0: return {0, {{car_here, 0.01, Column::any}}};
    case 1: return {1, {{car_here, 0.25, Column::right}}};
    case 2: return {2, {{stone, 0.5, Column::right}}};
    case 3: return {3, {{car_here, 0.15, Column::right}, {stone, 0.3, Column::right}}};
    case 4: return {4, {{grass, 0.5, Column::right}}};
    case 5: return {5, {{grass, 0.3, Column::right}, {car_here, 0.15, Column::right}}};
    case 6: return {6, {{grass, 0.3, Column::right}, {ped, 0.15, Column::right}}};
    case 7: return {7, {{hov, 1.0, Column::right}}};
    // police: one draw per row seen from both columns (marginal 0.3 per cell)
    case 8: return {8, {{hov, 1.0, Column::right}, {police, 0.3, Column::any, true}}};
    default: throw std::invalid_argument("TaskSpec::preset: unknown task T" + std::to_string(id));
    }
}

void TaskSpec::validate() const {
    if (id < 0) throw std::invalid_argument("TaskSpec: negative task id");
    for (const auto& r : rules) {
        if (r.feature >= content_count) throw std::invalid_argument("TaskSpec: rule feature is not a cell content");
        if (!(r.probability >= 0.0 && r.probability <= 1.0))
            throw std::invalid_argument("TaskSpec: probability outside [0, 1]");
    }
}

const char* to_string(TeacherReward r) { return r == TeacherReward::linear ? "linear" : "nonlinear"; }

TeacherReward teacher_reward_from_string(const std::string& name) {
    if (name == "linear") return TeacherReward::linear;
    if (name == "nonlinear") return TeacherReward::nonlinear;
    throw std::invalid_argument("unknown teacher reward: " + name);
}

void CarMdpConfig::validate() const {
    if (tasks.empty()) throw std::invalid_argument("CarMdpConfig: task list is empty");
    if (lanes_per_task == 0) throw std::invalid_argument("CarMdpConfig: n must be >= 1");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("CarMdpConfig: gamma must lie in [0, 1)");
    if (rows == 0 || cols == 0) throw std::invalid_argument("CarMdpConfig: empty lane geometry");
    for (int t : tasks) task_spec(t).validate();
}

TaskSpec CarMdpConfig::task_spec(int id) const {
    for (const auto& o : task_overrides)
        if (o.id == id) return o;
    return TaskSpec::preset(id);
}

std::vector<int> CarEnvironment::task_ids() const {
    std::vector<int> ids;
    for (const auto& l : lanes)
        if (std::find(ids.begin(), ids.end(), l.task) == ids.end()) ids.push_back(l.task);
    return ids;
}

Vector CarEnvironment::task_initial_dist(int task) const {
    const int one[] = {task};
    return tasks_initial_dist(one);
}

Vector CarEnvironment::tasks_initial_dist(std::span<const int> tasks) const {
    Vector p0 = Vector::Zero(static_cast<Eigen::Index>(mdp.n_states()));
    std::size_t count = 0;
    for (std::size_t l = 0; l < lanes.size(); ++l) {
        if (std::find(tasks.begin(), tasks.end(), lanes[l].task) == tasks.end()) continue;
        p0(static_cast<Eigen::Index>(start_state(l))) = 1.0;
        ++count;
    }
    if (count == 0) throw std::invalid_argument("tasks_initial_dist: no lane belongs to the given tasks");
    return p0 / static_cast<double>(count);
}

Vector state_features(const LaneGrid& grid, std::size_t row, std::size_t col) {
    if (row >= grid.rows || col >= grid.cols) throw std::invalid_argument("state_features: cell outside the lane");
    Vector phi = Vector::Zero(feature_count);
    for (std::size_t c = 0; c < content_count; ++c) phi(static_cast<Eigen::Index>(c)) = grid.has(row, col, c) ? 1.0 : 0.0;
    if (row + 1 < grid.rows) {
        phi(car_in_front) = grid.has(row + 1, col, car_here) ? 1.0 : 0.0;
        phi(ped_in_front) = grid.has(row + 1, col, ped) ? 1.0 : 0.0;
    }
    return phi;
}

const Vector& linear_weights() {
    static const Vector w = (Vector(feature_count) << -1.0, -0.5, -5.0, -10.0, -1.0, 0.0, -2.0, -5.0).finished();
    return w;
}

static void check_length(const Vector& phi) {
    if (phi.size() != static_cast<Eigen::Index>(feature_count))
        throw std::invalid_argument("teacher reward: feature vector must have length 8");
}

double linear_teacher_reward(const Vector& phi) {
    check_length(phi);
    return linear_weights().dot(phi);
}

double nonlinear_teacher_reward(const Vector& phi) {
    check_length(phi);
    Vector w = linear_weights();
    w(hov) = 1.0;
    double r = w.dot(phi);
    if (phi(hov) > 0.5 && phi(police) > 0.5) r -= 5.0;
    return r;
}

double teacher_reward(TeacherReward variant, const Vector& phi) {
    return variant == TeacherReward::linear ? linear_teacher_reward(phi) : nonlinear_teacher_reward(phi);
}

CarEnvironment generate_environment(const CarMdpConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::size_t rows = cfg.rows, cols = cfg.cols, per_lane = rows * cols;

    std::vector<LaneGrid> lanes;
    for (int task : cfg.tasks) {
        const TaskSpec spec = cfg.task_spec(task);
        for (std::size_t i = 0; i < cfg.lanes_per_task; ++i) {
            LaneGrid g{rows, cols, task, lanes.size(), std::vector<std::array<bool, content_count>>(per_lane)};
            for (std::size_t r = 0; r < rows; ++r) {
                std::vector<bool> row_hit(spec.rules.size(), false);
                for (std::size_t k = 0; k < spec.rules.size(); ++k)
                    if (spec.rules[k].per_row) row_hit[k] = rng.uniform() < spec.rules[k].probability;
                for (std::size_t c = 0; c < cols; ++c) {
                    auto& cell = g.cells[r * cols + c];
                    cell.fill(false);
                    for (std::size_t k = 0; k < spec.rules.size(); ++k) {
                        const auto& rule = spec.rules[k];
                        const bool matches = rule.column == Column::any ||
                                             (rule.column == Column::left && c == 0) ||
                                             (rule.column == Column::right && c + 1 == cols);
                        if (!matches) continue;
                        if (rule.per_row ? row_hit[k] : rng.uniform() < rule.probability)
                            cell[rule.feature] = true;
                    }
                }
            }
            lanes.push_back(std::move(g));
        }
    }

    const std::size_t n_lanes = lanes.size();
    const std::size_t terminal = n_lanes * per_lane;
    const std::size_t ns = terminal + 1;
    const std::size_t na = action_count;

    Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ns), feature_count);
    std::vector<int> task_of_state(ns, -1);
    for (std::size_t l = 0; l < n_lanes; ++l)
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) {
                const std::size_t s = l * per_lane + r * cols + c;
                phi.row(static_cast<Eigen::Index>(s)) = state_features(lanes[l], r, c).transpose();
                task_of_state[s] = lanes[l].task;
            }

    std::vector<std::vector<Transition>> kernel(ns * na);
    const double spread = 1.0 / static_cast<double>(cols);
    for (std::size_t l = 0; l < n_lanes; ++l) {
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
                const std::size_t s = l * per_lane + r * cols + c;
                for (std::size_t a = 0; a < na; ++a) {
                    auto& row = kernel[s * na + a];
                    if (r + 1 == rows) {
                        row.push_back({terminal, 1.0});
                        continue;
                    }
                    const std::size_t base = l * per_lane + (r + 1) * cols;
                    const bool off_left = a == left && c == 0;
                    const bool off_right = a == right && c + 1 == cols;
                    if (off_left || off_right) {
                        for (std::size_t c2 = 0; c2 < cols; ++c2) row.push_back({base + c2, spread});
                    } else {
                        const std::size_t c2 = a == left ? c - 1 : a == right ? c + 1 : c;
                        row.push_back({base + c2, 1.0});
                    }
                }
            }
        }
    }
    for (std::size_t a = 0; a < na; ++a) kernel[terminal * na + a].push_back({terminal, 1.0});

    Vector p0 = Vector::Zero(static_cast<Eigen::Index>(ns));
    for (std::size_t l = 0; l < n_lanes; ++l) p0(static_cast<Eigen::Index>(l * per_lane)) = 1.0 / static_cast<double>(n_lanes);

    Table env_reward(static_cast<Eigen::Index>(ns), static_cast<Eigen::Index>(na));
    for (std::size_t s = 0; s < ns; ++s) {
        const double r = teacher_reward(cfg.reward, phi.row(static_cast<Eigen::Index>(s)).transpose());
        env_reward.row(static_cast<Eigen::Index>(s)).setConstant(r);
    }

    auto features = std::make_shared<const FeatureMap>(FeatureMap::from_state_features(phi, na));
    TabularMdp mdp(ns, na, std::move(kernel), cfg.gamma, std::move(p0), std::move(env_reward));
    return CarEnvironment{std::move(mdp), std::move(features), std::move(phi), std::move(lanes),
                          std::move(task_of_state), terminal, cfg.reward};
}

CarEnvironment generate_environment(const CarMdpConfig& cfg) {
    Rng rng(cfg.seed);
    return generate_environment(cfg, rng);
}

StochasticPolicy teacher_policy(const TabularMdp& mdp) {
    if (!mdp.env_reward()) throw std::invalid_argument("teacher_policy: environment reward not attached");
    return optimal_policy(mdp, *mdp.env_reward());
}

} // namespace teachirl::car
