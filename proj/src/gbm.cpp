#include "voxboost/gbm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "voxboost/error.hpp"

namespace voxboost {

void GbmHyperparams::validate() const {
    if (!(learning_rate > 0.0 && learning_rate <= 1.0))
        throw ConfigError("gbm learning_rate must be in (0, 1], got " + std::to_string(learning_rate));
    if (n_trees < 0) throw ConfigError("gbm n_trees must be >= 0");
    if (max_depth < 1) throw ConfigError("gbm max_depth must be >= 1");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("gbm lambda must be >= 0");
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("gbm alpha must be >= 0");
    if (!(subsample > 0.0 && subsample <= 1.0)) throw ConfigError("gbm subsample must be in (0, 1]");
}

GbmModel GbmModel::truncated(std::size_t n_stages) const {
    GbmModel out;
    out.f0 = f0;
    out.gamma = gamma;
    out.n_features = n_features;
    out.hyperparams = hyperparams;
    n_stages = std::min(n_stages, stages.size());
    out.stages.assign(stages.begin(), stages.begin() + static_cast<std::ptrdiff_t>(n_stages));
    out.hyperparams.n_trees = static_cast<int>(n_stages);
    return out;
}

double init_estimator(const TargetVector& y) {
    if (y.size() == 0) throw InvalidInput("init_estimator: empty target vector");
    if (!y.allFinite()) throw InvalidInput("init_estimator: non-finite target");
    double sum = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) sum += y(i);
    return sum / static_cast<double>(y.size());
}

TargetVector pseudo_residuals(const TargetVector& y, const TargetVector& F) {
    if (y.size() != F.size()) throw InvalidInput("pseudo_residuals: length mismatch");
    return y - F;
}

double line_search_rho(const TargetVector& residual, const TargetVector& tree_pred, double lambda, double alpha) {
    if (residual.size() != tree_pred.size()) throw InvalidInput("line_search_rho: length mismatch");
    if (lambda < 0.0 || alpha < 0.0) throw InvalidInput("line_search_rho: lambda and alpha must be >= 0");
    double cross = 0.0;
    double power = 0.0;
    for (Eigen::Index i = 0; i < residual.size(); ++i) {
        cross += residual(i) * tree_pred(i);
        power += tree_pred(i) * tree_pred(i);
    }
    if (power == 0.0) return 0.0;
    return soft_threshold(cross, alpha) / (power + lambda);
}

std::vector<RowIndex> subsample_rows(Eigen::Index n, double fraction, Xoshiro256& rng) {
    if (n < 1) throw InvalidInput("subsample_rows: n must be >= 1");
    if (!(fraction > 0.0 && fraction <= 1.0)) throw InvalidInput("subsample_rows: fraction must be in (0, 1]");
    std::vector<RowIndex> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), 0);
    if (fraction == 1.0) return all;
    auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
    k = std::clamp<std::size_t>(k, 1, all.size());
    for (std::size_t i = 0; i < k; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(all.size() - i));
        std::swap(all[i], all[j]);
    }
    all.resize(k);
    std::sort(all.begin(), all.end());
    return all;
}

namespace {

void add_stage(TargetVector& F, double gamma, double rho, const TargetVector& tree_pred) {
    const double step = gamma * rho;
    for (Eigen::Index i = 0; i < F.size(); ++i) F(i) += step * tree_pred(i);
}

void check_columns(const GbmModel& model, const FeatureMatrix& X) {
    if (X.cols() != model.n_features)
        throw InvalidInput("predict: expected " + std::to_string(model.n_features) + " feature columns, got " +
                           std::to_string(X.cols()));
}

} // namespace

GbmModel fit(const FeatureMatrix& X, const TargetVector& y, const GbmHyperparams& hp) {
    hp.validate();
    if (X.rows() != y.size()) throw InvalidInput("fit: feature rows and target length differ");
    if (!y.allFinite()) throw InvalidInput("fit: non-finite target");

    const TreeGrower grower(X);
    GbmModel model;
    model.hyperparams = hp;
    model.gamma = hp.learning_rate;
    model.n_features = X.cols();
    model.f0 = init_estimator(y);
    model.stages.reserve(static_cast<std::size_t>(hp.n_trees));

    TargetVector F = TargetVector::Constant(y.size(), model.f0);
    Xoshiro256 rng(hp.seed);
    for (int m = 0; m < hp.n_trees; ++m) {
        const auto rows = subsample_rows(X.rows(), hp.subsample, rng);
        const TargetVector g = pseudo_residuals(y, F);
        GbmStage stage;
        stage.tree = grower.grow(std::span<const double>(g.data(), static_cast<std::size_t>(g.size())), rows,
                                 hp.max_depth, hp.lambda, hp.alpha);
        const TargetVector tree_pred = stage.tree.predict(X);
        stage.rho = line_search_rho(g, tree_pred, hp.lambda, hp.alpha);
        add_stage(F, model.gamma, stage.rho, tree_pred);
        model.stages.push_back(std::move(stage));
    }
    return model;
}

TargetVector predict(const GbmModel& model, const FeatureMatrix& X) {
    check_columns(model, X);
    TargetVector F = TargetVector::Constant(X.rows(), model.f0);
    for (const auto& stage : model.stages) add_stage(F, model.gamma, stage.rho, stage.tree.predict(X));
    return F;
}

std::vector<TargetVector> staged_predict(const GbmModel& model, const FeatureMatrix& X) {
    check_columns(model, X);
    std::vector<TargetVector> out;
    out.reserve(model.stages.size() + 1);
    out.push_back(TargetVector::Constant(X.rows(), model.f0));
    for (const auto& stage : model.stages) {
        TargetVector F = out.back();
        add_stage(F, model.gamma, stage.rho, stage.tree.predict(X));
        out.push_back(std::move(F));
    }
    return out;
}

} // namespace voxboost
