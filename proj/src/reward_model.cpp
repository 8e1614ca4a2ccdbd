#include "teachirl/reward_model.hpp"

#include <cmath>

namespace teachirl {

FeatureMap::FeatureMap(std::size_t n_states, std::size_t n_actions, std::size_t dim)
    : n_states_(n_states), n_actions_(n_actions), dim_(dim), data_(n_states * n_actions * dim, 0.0) {
    if (dim == 0) throw std::invalid_argument("FeatureMap: dimension must be positive");
}

FeatureMap FeatureMap::from_state_features(const Eigen::MatrixXd& state_features, std::size_t n_actions) {
    if (!state_features.allFinite()) throw std::invalid_argument("FeatureMap: non-finite feature");
    FeatureMap fm(static_cast<std::size_t>(state_features.rows()), n_actions,
                  static_cast<std::size_t>(state_features.cols()));
    for (std::size_t s = 0; s < fm.n_states_; ++s) {
        const Vector phi = state_features.row(static_cast<Eigen::Index>(s)).transpose();
        for (std::size_t a = 0; a < n_actions; ++a) fm.set(s, a, phi);
    }
    return fm;
}

void FeatureMap::set(std::size_t s, std::size_t a, const Vector& phi) {
    if (static_cast<std::size_t>(phi.size()) != dim_) throw std::invalid_argument("FeatureMap::set: wrong dimension");
    if (!phi.allFinite()) throw std::invalid_argument("FeatureMap::set: non-finite feature");
    std::copy(phi.data(), phi.data() + dim_, data_.begin() + static_cast<std::ptrdiff_t>(offset(s, a)));
}

FeatureMap FeatureMap::scaled(double c) const {
    FeatureMap out = *this;
    for (double& x : out.data_) x *= c;
    return out;
}

const char* to_string(RewardVariant v) { return v == RewardVariant::linear ? "linear" : "quadratic"; }

RewardVariant reward_variant_from_string(const std::string& name) {
    if (name == "linear") return RewardVariant::linear;
    if (name == "quadratic" || name == "nonlinear") return RewardVariant::quadratic;
    throw std::invalid_argument("unknown reward variant: " + name);
}

RewardModel::RewardModel(RewardVariant variant, std::shared_ptr<const FeatureMap> features, Vector params)
    : variant_(variant), features_(std::move(features)), params_(std::move(params)) {
    if (!features_) throw std::invalid_argument("RewardModel: missing feature map");
    if (param_dim() != param_dim(variant_, features_->dim()))
        throw std::invalid_argument("RewardModel: parameter length does not match the variant");
    if (!params_.allFinite()) throw std::invalid_argument("RewardModel: non-finite parameters");
}

RewardModel RewardModel::zeros(RewardVariant variant, std::shared_ptr<const FeatureMap> features) {
    const auto n = param_dim(variant, features->dim());
    return RewardModel(variant, std::move(features), Vector::Zero(static_cast<Eigen::Index>(n)));
}

double RewardModel::value(std::size_t s, std::size_t a) const {
    const auto phi = features_->at(s, a);
    const auto d = static_cast<Eigen::Index>(features_->dim());
    if (variant_ == RewardVariant::linear) return params_.dot(phi);
    const double inner = params_.tail(d).dot(phi);
    return params_.head(d).dot(phi) + inner * inner;
}

Vector RewardModel::gradient(std::size_t s, std::size_t a) const {
    const auto phi = features_->at(s, a);
    if (variant_ == RewardVariant::linear) return phi;
    const auto d = static_cast<Eigen::Index>(features_->dim());
    Vector g(2 * d);
    g.head(d) = phi;
    g.tail(d) = 2.0 * params_.tail(d).dot(phi) * phi;
    return g;
}

Table RewardModel::reward_table() const {
    Table r(features_->n_states(), features_->n_actions());
    for (std::size_t s = 0; s < features_->n_states(); ++s)
        for (std::size_t a = 0; a < features_->n_actions(); ++a) r(s, a) = value(s, a);
    return r;
}

Vector feature_expectation(const OccupancyMeasure& occ, const RewardModel& model) {
    const auto& fm = model.features();
    if (static_cast<std::size_t>(occ.rho.rows()) != fm.n_states() ||
        static_cast<std::size_t>(occ.rho.cols()) != fm.n_actions())
        throw std::invalid_argument("feature_expectation: occupancy shape does not match the feature map");
    const auto d = static_cast<Eigen::Index>(fm.dim());
    Vector mu = Vector::Zero(static_cast<Eigen::Index>(model.param_dim()));
    const bool quadratic = model.variant() == RewardVariant::quadratic;
    for (std::size_t s = 0; s < fm.n_states(); ++s) {
        for (std::size_t a = 0; a < fm.n_actions(); ++a) {
            const double w = occ.rho(s, a);
            if (w == 0.0) continue;
            const auto phi = fm.at(s, a);
            mu.head(d) += w * phi;
            if (quadratic) mu.tail(d) += (w * 2.0 * model.params().tail(d).dot(phi)) * phi;
        }
    }
    return mu;
}

Vector feature_expectation_policy(const TabularMdp& mdp, const StochasticPolicy& policy, std::size_t s0,
                                  const RewardModel& model, double tol) {
    return feature_expectation(occupancy_from_state(mdp, policy, s0, tol), model);
}

Vector feature_expectation_demo(const Demonstration& demo, const RewardModel& model, double discount) {
    const auto& fm = model.features();
    return feature_expectation(demo_occupancy(demo, fm.n_states(), fm.n_actions(), discount), model);
}

Vector project_to_ball(const Vector& lambda, const ParameterBall& ball) {
    const double norm = lambda.norm();
    if (norm <= ball.radius) return lambda;
    return lambda * (ball.radius / norm);
}

} // namespace teachirl
