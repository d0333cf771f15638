#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace voxboost {

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using TargetVector = Eigen::VectorXd;
using RowIndex = std::int32_t;

/// Soft-thresholding operator sign(s) * max(|s| - alpha, 0).
template <typename Scalar>
Scalar soft_threshold(Scalar s, Scalar alpha) {
    if (s > alpha) return s - alpha;
    if (s < -alpha) return s + alpha;
    return Scalar(0);
}

/// Minimiser of 1/2 sum (g_i - w)^2 + 1/2 lambda w^2 + alpha |w| over w.
double leaf_value(std::span<const double> residuals, double lambda, double alpha);

/// Axis-aligned binary regression tree. Rows with value <= threshold go left.
struct RegressionTree {
    struct Node {
        std::int32_t feature = -1;  // -1 marks a leaf
        double threshold = 0.0;
        std::int32_t left = -1;
        std::int32_t right = -1;
        double value = 0.0;         // leaf output

        bool is_leaf() const { return feature < 0; }
    };

    std::vector<Node> nodes;  // nodes[0] is the root

    template <typename Row>
    double predict_row(const Row& row) const {
        std::int32_t i = 0;
        while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
            const Node& n = nodes[static_cast<std::size_t>(i)];
            i = row(n.feature) <= n.threshold ? n.left : n.right;
        }
        return nodes[static_cast<std::size_t>(i)].value;
    }

    TargetVector predict(const FeatureMatrix& X) const;

    /// Maximum root-to-leaf edge count.
    int depth() const;
    std::size_t leaf_count() const;
};

/// Penalised split gain used by the greedy search:
/// 1/2 [S(GL)^2/(nL+lambda) + S(GR)^2/(nR+lambda) - S(G)^2/(n+lambda)], S = soft threshold.
double split_gain(double sum_left, double count_left, double sum_right, double count_right, double lambda,
                  double alpha);

/// Exact greedy tree construction over a fixed feature matrix.
///
/// Each column is sorted once at construction. grow() keeps, per column, the
/// rows of every open node as a contiguous sorted segment and stably
/// partitions those segments after each level, so a level costs one linear
/// pass per column. Constant columns are skipped; they never yield a split.
///
/// Split candidates are midpoints between consecutive distinct values among
/// the rows of a node. Gains are accumulated left to right in sorted order
/// and ties are resolved toward the lower feature index, then the lower
/// threshold. A node becomes a leaf at max_depth, with fewer than two rows,
/// when all its residuals are equal, or when the best gain is not positive.
class TreeGrower {
public:
    explicit TreeGrower(const FeatureMatrix& X);

    RegressionTree grow(std::span<const double> residuals, std::span<const RowIndex> rows, int max_depth,
                        double lambda, double alpha) const;

    Eigen::Index rows() const { return X_.rows(); }
    Eigen::Index cols() const { return X_.cols(); }

private:
    Eigen::MatrixXd X_;                              // column-major copy
    std::vector<std::int32_t> active_features_;      // non-constant columns
    std::vector<std::vector<RowIndex>> sorted_rows_; // per active feature, rows ordered by (value, row)
};

/// Convenience wrapper: builds a TreeGrower for one tree.
RegressionTree fit_tree(const FeatureMatrix& X, const TargetVector& g, std::span<const RowIndex> rows, int max_depth,
                        double lambda, double alpha);

} // namespace voxboost
