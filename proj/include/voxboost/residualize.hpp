#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "voxboost/synth.hpp"

namespace voxboost {

/// Ordinary least squares fit with an intercept.
struct LinearModelFit {
    std::vector<std::string> columns;  // design columns, intercept excluded
    Eigen::VectorXd coefficients;
    double intercept = 0.0;

    Eigen::VectorXd predict(const Eigen::MatrixXd& design) const;
};

/// Solves the normal equations of [1 X] after scaling every column to unit
/// root-mean-square, with 1e-8 added to the Gram diagonal, then refined
/// against the unjittered Gram. Throws
/// ConfigError naming the collinear columns when the design is rank deficient.
LinearModelFit fit_least_squares(const Eigen::MatrixXd& design, const Eigen::VectorXd& target,
                                 std::vector<std::string> columns);

struct Design {
    std::vector<std::string> columns;
    Eigen::MatrixXd values;  // one row per subject
};

/// Numeric fields as-is; categorical fields one-hot over the cohort
/// vocabulary with the first level dropped. Demographics must be complete.
Design build_design(const std::vector<const DemographicCovariates*>& subjects, const CohortConfig& config);

struct ResidualizeSummary {
    LinearModelFit fit;
    int n_fit = 0;
    int n_excluded = 0;
};

/// Fits raw_score on the covariates of every complete train and validation
/// subject. Train or validation subjects with a missing covariate move to
/// Fold::excluded and get no residual. Residuals are filled for the fitted
/// subjects and for test subjects (with the same fit).
ResidualizeSummary residualize(std::vector<SubjectRecord>& records, const CohortConfig& config);

/// Column-wise z-score parameters.
struct ZScore {
    Eigen::RowVectorXd mean;
    Eigen::RowVectorXd stddev;  // columns below 1e-12 are only centred

    Eigen::MatrixXd apply(const Eigen::MatrixXd& values) const;
};

/// Parameters from `train` (population standard deviation).
ZScore normalize_covariates(const Eigen::MatrixXd& train);

} // namespace voxboost
