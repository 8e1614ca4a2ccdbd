#pragma once

#include "teachirl/mdp.hpp"

#include <memory>

namespace teachirl {

/**
Learner feature map phi(s, a) in R^dim.

State-only features are stored replicated across actions so every consumer
indexes by (s, a).
*/
class FeatureMap {
public:
    FeatureMap(std::size_t n_states, std::size_t n_actions, std::size_t dim);

    /// Rows of `state_features` are phi(s); copied to every action.
    static FeatureMap from_state_features(const Eigen::MatrixXd& state_features, std::size_t n_actions);

    std::size_t n_states() const noexcept { return n_states_; }
    std::size_t n_actions() const noexcept { return n_actions_; }
    std::size_t dim() const noexcept { return dim_; }

    Eigen::Map<const Vector> at(std::size_t s, std::size_t a) const {
        return Eigen::Map<const Vector>(data_.data() + offset(s, a), static_cast<Eigen::Index>(dim_));
    }
    void set(std::size_t s, std::size_t a, const Vector& phi);

    FeatureMap scaled(double c) const;

private:
    std::size_t offset(std::size_t s, std::size_t a) const { return (s * n_actions_ + a) * dim_; }

    std::size_t n_states_;
    std::size_t n_actions_;
    std::size_t dim_;
    std::vector<double> data_;
};

/// Feasible parameter set {lambda : ||lambda||_2 <= radius}.
struct ParameterBall {
    explicit ParameterBall(double radius_ = 100.0) : radius(radius_) {
        if (!(radius > 0.0)) throw std::invalid_argument("ParameterBall: radius must be positive");
    }
    double radius;
};

enum class RewardVariant { linear, quadratic };

const char* to_string(RewardVariant v);
RewardVariant reward_variant_from_string(const std::string& name);

/**
Parametric learner reward R_lambda(s, a).

Linear:     R = <lambda, phi>, lambda in R^d'.
Quadratic:  R = <lambda[0:d'], phi> + <lambda[d':2d'], phi>^2, stored as one
            flat vector of length 2d'.

The feature map is shared immutable data; copies of a model are cheap.
*/
class RewardModel {
public:
    RewardModel(RewardVariant variant, std::shared_ptr<const FeatureMap> features, Vector params);

    /// Model with all-zero parameters.
    static RewardModel zeros(RewardVariant variant, std::shared_ptr<const FeatureMap> features);

    static std::size_t param_dim(RewardVariant variant, std::size_t feature_dim) {
        return variant == RewardVariant::linear ? feature_dim : 2 * feature_dim;
    }

    RewardVariant variant() const noexcept { return variant_; }
    const FeatureMap& features() const noexcept { return *features_; }
    const std::shared_ptr<const FeatureMap>& feature_ptr() const noexcept { return features_; }
    const Vector& params() const noexcept { return params_; }
    std::size_t param_dim() const noexcept { return static_cast<std::size_t>(params_.size()); }

    RewardModel with_params(Vector params) const { return RewardModel(variant_, features_, std::move(params)); }

    double value(std::size_t s, std::size_t a) const;
    Vector gradient(std::size_t s, std::size_t a) const;

    /// R_lambda over every (s, a).
    Table reward_table() const;

private:
    RewardVariant variant_;
    std::shared_ptr<const FeatureMap> features_;
    Vector params_;
};

/// sum_{s,a} rho(s,a) grad R_lambda(s,a).
Vector feature_expectation(const OccupancyMeasure& occ, const RewardModel& model);

/// Feature expectation of `policy` started deterministically from s0.
Vector feature_expectation_policy(const TabularMdp& mdp, const StochasticPolicy& policy,
                                  std::size_t s0, const RewardModel& model, double tol = 1e-10);

Vector feature_expectation_demo(const Demonstration& demo, const RewardModel& model, double discount);

/// Euclidean projection onto the ball.
Vector project_to_ball(const Vector& lambda, const ParameterBall& ball);

} // namespace teachirl
