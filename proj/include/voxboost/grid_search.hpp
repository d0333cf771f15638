#pragma once

#include <filesystem>
#include <vector>

#include "voxboost/gbm.hpp"

namespace voxboost {

/// Coarse candidate lists plus the fine neighbourhood rule. Fine candidates
/// scale the coarse winner's learning rate (clamped to 1) and offset its
/// depth (clamped to >= 1); tree count, lambda and alpha stay at the winner's.
struct GridSpec {
    std::vector<double> learning_rates{0.003, 0.01, 0.03};
    std::vector<int> n_trees{250, 500, 1000};
    std::vector<int> max_depths{3, 5, 7};
    std::vector<double> lambdas{1.05};
    std::vector<double> alphas{0.1};
    std::vector<double> fine_lr_factors{0.6, 1.0, 1.67};
    std::vector<int> fine_depth_offsets{-1, 0, 1};

    /// Throws ConfigError on empty lists or out-of-range values. The fine
    /// rule must contain factor 1 and offset 0 so the coarse winner is kept.
    void validate() const;

    friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

struct GridRow {
    int stage = 1;  // 1 coarse, 2 fine
    int index = 0;  // enumeration order across both stages
    GbmHyperparams hyperparams;
    double val_mse = 0.0;
};

struct GridResult {
    std::vector<GridRow> rows;
    std::size_t best = 0;  // position in rows

    const GridRow& winner() const { return rows[best]; }
};

/// Coarse enumeration order: learning rate, trees, depth, lambda, alpha
/// (last varies fastest). `base` supplies subsample and seed.
std::vector<GbmHyperparams> coarse_grid(const GridSpec& grid, const GbmHyperparams& base);

/// Fine candidates around `winner`, duplicates removed, factor-major order.
std::vector<GbmHyperparams> fine_grid(const GridSpec& grid, const GbmHyperparams& winner);

/// Trains every configuration on (X_train, y_train) and scores validation
/// MSE. Coarse configurations differing only in tree count share one fit:
/// the shorter models are exact prefixes, since each stage's draws do not
/// depend on the total count. The winner is the row with the smallest
/// (val_mse, index). `workers` bounds the number of concurrent fits and
/// does not affect results.
GridResult two_stage_grid_search(const FeatureMatrix& X_train, const TargetVector& y_train,
                                 const FeatureMatrix& X_val, const TargetVector& y_val, const GridSpec& grid,
                                 const GbmHyperparams& base, int workers = 1);

double evaluate_mse(const TargetVector& predictions, const TargetVector& truth);

void write_grid_csv(const std::filesystem::path& path, const GridResult& result);

} // namespace voxboost
