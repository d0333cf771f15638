#pragma once

#include <cstdint>
#include <iosfwd>
#include <filesystem>
#include <vector>

#include "voxboost/rng.hpp"
#include "voxboost/tree.hpp"

namespace voxboost {

struct GbmHyperparams {
    double learning_rate = 0.1;  // shrinkage gamma, (0, 1]
    int n_trees = 100;
    int max_depth = 3;
    double lambda = 0.0;         // L2 weight on leaf values and stage weights
    double alpha = 0.0;          // L1 weight on leaf values and stage weights
    double subsample = 0.8;      // row fraction per tree, (0, 1]
    std::uint64_t seed = 0;

    /// Throws ConfigError naming the first out-of-range field.
    void validate() const;

    friend bool operator==(const GbmHyperparams&, const GbmHyperparams&) = default;
};

struct GbmStage {
    RegressionTree tree;
    double rho = 0.0;
};

/// Additive ensemble F(x) = f0 + gamma * sum_m rho_m * tree_m(x).
///
/// Prediction accumulates stage by stage, F <- F + (gamma * rho_m) * tree_m(x),
/// which is the same update fit() applies, so staged_predict prefixes are
/// bit-identical to predictions of truncated models.
struct GbmModel {
    double f0 = 0.0;
    double gamma = 1.0;
    std::vector<GbmStage> stages;
    GbmHyperparams hyperparams;
    Eigen::Index n_features = 0;

    /// Copy holding only the first `n_stages` stages, with hyperparams.n_trees adjusted.
    GbmModel truncated(std::size_t n_stages) const;
};

/// Squared-loss optimum of a constant model: the mean of y.
double init_estimator(const TargetVector& y);

/// Negative gradient of 1/2 (y - F)^2 with respect to F, i.e. y - F.
TargetVector pseudo_residuals(const TargetVector& y, const TargetVector& F);

/// Stage weight minimising 1/2 sum (r_i - rho f_i)^2 + 1/2 lambda rho^2 + alpha |rho|.
/// Returns 0 for an identically-zero predictor.
double line_search_rho(const TargetVector& residual, const TargetVector& tree_pred, double lambda, double alpha);

/// ceil(fraction * n) distinct indices in ascending order, drawn without
/// replacement by a partial Fisher-Yates shuffle. fraction == 1 returns
/// 0..n-1 and leaves the generator untouched.
std::vector<RowIndex> subsample_rows(Eigen::Index n, double fraction, Xoshiro256& rng);

GbmModel fit(const FeatureMatrix& X, const TargetVector& y, const GbmHyperparams& hp);

TargetVector predict(const GbmModel& model, const FeatureMatrix& X);

/// Element m is the prediction after the first m stages; element 0 is the constant f0.
std::vector<TargetVector> staged_predict(const GbmModel& model, const FeatureMatrix& X);

// Text format "gbmmodel v1"; reals use 17 significant digits.
void save_model(std::ostream& out, const GbmModel& model);
void save_model(const std::filesystem::path& path, const GbmModel& model);
GbmModel load_model(std::istream& in);
GbmModel load_model(const std::filesystem::path& path);

} // namespace voxboost
