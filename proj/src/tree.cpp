#include "voxboost/tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "voxboost/error.hpp"

namespace voxboost {

double leaf_value(std::span<const double> residuals, double lambda, double alpha) {
    if (residuals.empty()) throw InvalidInput("leaf_value: empty leaf");
    if (lambda < 0.0 || alpha < 0.0) throw InvalidInput("leaf_value: lambda and alpha must be >= 0");
    double sum = 0.0;
    for (double g : residuals) sum += g;
    return soft_threshold(sum, alpha) / (static_cast<double>(residuals.size()) + lambda);
}

double split_gain(double sum_left, double count_left, double sum_right, double count_right, double lambda,
                  double alpha) {
    const double sl = soft_threshold(sum_left, alpha);
    const double sr = soft_threshold(sum_right, alpha);
    const double sp = soft_threshold(sum_left + sum_right, alpha);
    return 0.5 * (sl * sl / (count_left + lambda) + sr * sr / (count_right + lambda) -
                  sp * sp / (count_left + count_right + lambda));
}

TargetVector RegressionTree::predict(const FeatureMatrix& X) const {
    TargetVector out(X.rows());
    for (Eigen::Index r = 0; r < X.rows(); ++r) out(r) = predict_row(X.row(r));
    return out;
}

int RegressionTree::depth() const {
    if (nodes.empty()) return 0;
    int best = 0;
    std::vector<std::pair<std::int32_t, int>> stack{{0, 0}};
    while (!stack.empty()) {
        auto [i, d] = stack.back();
        stack.pop_back();
        const Node& n = nodes[static_cast<std::size_t>(i)];
        if (n.is_leaf()) {
            best = std::max(best, d);
        } else {
            stack.emplace_back(n.left, d + 1);
            stack.emplace_back(n.right, d + 1);
        }
    }
    return best;
}

std::size_t RegressionTree::leaf_count() const {
    return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const Node& n) { return n.is_leaf(); }));
}

TreeGrower::TreeGrower(const FeatureMatrix& X) : X_(X) {
    if (X_.rows() < 1 || X_.cols() < 1) throw InvalidInput("feature matrix must have at least one row and column");
    if (!X_.allFinite()) throw InvalidInput("feature matrix contains non-finite values");
    if (X_.rows() > std::numeric_limits<RowIndex>::max()) throw InvalidInput("too many rows");
    const auto n = static_cast<RowIndex>(X_.rows());
    for (Eigen::Index f = 0; f < X_.cols(); ++f) {
        auto col = X_.col(f);
        if (col.minCoeff() == col.maxCoeff()) continue;
        std::vector<RowIndex> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&col](RowIndex a, RowIndex b) {
            return col(a) < col(b) || (col(a) == col(b) && a < b);
        });
        active_features_.push_back(static_cast<std::int32_t>(f));
        sorted_rows_.push_back(std::move(order));
    }
}

namespace {

struct OpenNode {
    std::int32_t tree_index;
    std::size_t begin;  // segment inside every column's row list
    std::size_t end;
    double sum;
    bool pure;

    double count() const { return static_cast<double>(end - begin); }
};

struct SplitCandidate {
    double gain = -std::numeric_limits<double>::infinity();
    std::int32_t feature = -1;
    double threshold = 0.0;
};

// Branch-free soft threshold for the sweep; the sign of a running sum is unpredictable.
inline double shrink(double s, double alpha) { return std::copysign(std::max(std::fabs(s) - alpha, 0.0), s); }

double midpoint(double lo, double hi) {
    const double mid = std::midpoint(lo, hi);
    // Adjacent doubles: keep lo <= mid < hi so routing stays consistent.
    return mid < hi ? mid : lo;
}

} // namespace

RegressionTree TreeGrower::grow(std::span<const double> residuals, std::span<const RowIndex> rows, int max_depth,
                                double lambda, double alpha) const {
    if (rows.empty()) throw InvalidInput("fit_tree: empty row subset");
    if (static_cast<Eigen::Index>(residuals.size()) != X_.rows())
        throw InvalidInput("fit_tree: residual length does not match feature rows");
    if (max_depth < 0) throw InvalidInput("fit_tree: max_depth must be >= 0");
    if (lambda < 0.0 || alpha < 0.0) throw InvalidInput("fit_tree: lambda and alpha must be >= 0");

    const auto n = static_cast<std::size_t>(X_.rows());
    // 0 = outside the subset, 1 = member; reused below as routing side.
    std::vector<std::uint8_t> side(n, 0);
    for (RowIndex r : rows) {
        if (r < 0 || static_cast<std::size_t>(r) >= n) throw InvalidInput("fit_tree: row index out of range");
        if (side[static_cast<std::size_t>(r)]) throw InvalidInput("fit_tree: duplicate row index");
        side[static_cast<std::size_t>(r)] = 1;
    }
    const std::size_t m = rows.size();
    const std::size_t n_features = active_features_.size();

    // Column k's rows live in lists[k * m, k * m + live).
    std::vector<RowIndex> lists(n_features * m), scratch(m), right_scratch(m);
    for (std::size_t k = 0; k < n_features; ++k) {
        RowIndex* out = lists.data() + k * m;
        for (RowIndex r : sorted_rows_[k])
            if (side[static_cast<std::size_t>(r)]) *out++ = r;
    }
    // Node-membership order by ascending row, for deterministic node sums.
    std::vector<RowIndex> members(rows.begin(), rows.end());
    std::sort(members.begin(), members.end());

    RegressionTree tree;
    tree.nodes.emplace_back();
    auto node_stats = [&](std::int32_t tree_index, std::size_t begin, std::size_t end,
                          std::span<const RowIndex> node_rows) {
        OpenNode node{tree_index, begin, end, 0.0, true};
        for (std::size_t i = 0; i < node_rows.size(); ++i) {
            const double g = residuals[static_cast<std::size_t>(node_rows[i])];
            if (i > 0 && g != residuals[static_cast<std::size_t>(node_rows[0])]) node.pure = false;
            node.sum += g;
        }
        return node;
    };
    std::vector<OpenNode> open{node_stats(0, 0, m, members)};
    std::vector<std::vector<RowIndex>> open_members{members};

    std::vector<double> inverse(m + 1);
    for (std::size_t c = 0; c <= m; ++c) inverse[c] = 1.0 / (static_cast<double>(c) + lambda);

    for (int depth = 0; !open.empty(); ++depth) {
        const std::size_t n_open = open.size();
        std::vector<SplitCandidate> best(n_open);
        std::vector<char> splittable(n_open, 0);
        bool any = false;
        for (std::size_t s = 0; s < n_open; ++s) {
            splittable[s] = depth < max_depth && open[s].count() >= 2.0 && !open[s].pure;
            any = any || splittable[s];
        }

        if (any) {
            // Same arithmetic as split_gain, with 1 / (count + lambda) read from a table.
            std::vector<double> parent_score(n_open);
            for (std::size_t s = 0; s < n_open; ++s) {
                const double sp = soft_threshold(open[s].sum, alpha);
                parent_score[s] = sp * sp * inverse[open[s].end - open[s].begin];
            }
            // Features ascending and strict > keep the lower feature, then the lower threshold, on ties.
            for (std::size_t k = 0; k < n_features; ++k) {
                const std::int32_t f = active_features_[k];
                const double* col = X_.col(f).data();
                const RowIndex* list = lists.data() + k * m;
                for (std::size_t s = 0; s < n_open; ++s) {
                    if (!splittable[s]) continue;
                    const OpenNode& node = open[s];
                    const std::size_t size = node.end - node.begin;
                    const RowIndex* seg = list + node.begin;
                    SplitCandidate local = best[s];
                    double sum_left = residuals[static_cast<std::size_t>(seg[0])];
                    double last = col[seg[0]];
                    for (std::size_t i = 1; i < size; ++i) {
                        const RowIndex r = seg[i];
                        const double v = col[r];
                        if (v > last) {
                            const double sl = shrink(sum_left, alpha);
                            const double sr = shrink(node.sum - sum_left, alpha);
                            const double gain =
                                0.5 * (sl * sl * inverse[i] + sr * sr * inverse[size - i] - parent_score[s]);
                            if (gain > local.gain) local = {gain, f, midpoint(last, v)};
                        }
                        sum_left += residuals[static_cast<std::size_t>(r)];
                        last = v;
                    }
                    best[s] = local;
                }
            }
        }

        // Leaves are emitted now; split nodes get two children whose segments
        // replace the parent's in the compacted lists.
        std::vector<OpenNode> next;
        std::vector<std::vector<RowIndex>> next_members;
        std::vector<std::size_t> keep_begin, keep_end;  // segment of each split parent
        std::size_t cursor = 0;
        for (std::size_t s = 0; s < n_open; ++s) {
            OpenNode& node = open[s];
            auto& out = tree.nodes[static_cast<std::size_t>(node.tree_index)];
            if (!splittable[s] || !(best[s].gain > 0.0)) {
                out.feature = -1;
                out.value = soft_threshold(node.sum, alpha) / (node.count() + lambda);
                continue;
            }
            const auto left = static_cast<std::int32_t>(tree.nodes.size());
            out.feature = best[s].feature;
            out.threshold = best[s].threshold;
            out.left = left;
            out.right = left + 1;
            tree.nodes.emplace_back();
            tree.nodes.emplace_back();

            std::vector<RowIndex> left_rows, right_rows;
            for (RowIndex r : open_members[s]) {
                const bool goes_left = X_(r, best[s].feature) <= best[s].threshold;
                side[static_cast<std::size_t>(r)] = goes_left ? 1 : 2;
                (goes_left ? left_rows : right_rows).push_back(r);
            }
            const std::size_t mid = cursor + left_rows.size();
            const std::size_t stop = mid + right_rows.size();
            next.push_back(node_stats(left, cursor, mid, left_rows));
            next.push_back(node_stats(left + 1, mid, stop, right_rows));
            next_members.push_back(std::move(left_rows));
            next_members.push_back(std::move(right_rows));
            keep_begin.push_back(node.begin);
            keep_end.push_back(node.end);
            cursor = stop;
        }
        // Stable partition of every column's segments into the new layout.
        // Rows are written to both buffers and the cursors advance by side,
        // which avoids a coin-flip branch per row.
        if (!next.empty()) {
            for (std::size_t k = 0; k < n_features; ++k) {
                RowIndex* list = lists.data() + k * m;
                std::size_t out = 0;
                for (std::size_t p = 0; p < keep_begin.size(); ++p) {
                    std::size_t l = 0, r = 0;
                    for (std::size_t i = keep_begin[p]; i < keep_end[p]; ++i) {
                        const RowIndex row = list[i];
                        const std::size_t goes_left = side[static_cast<std::size_t>(row)] == 1;
                        scratch[l] = row;
                        right_scratch[r] = row;
                        l += goes_left;
                        r += 1 - goes_left;
                    }
                    std::copy(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(l), list + out);
                    std::copy(right_scratch.begin(), right_scratch.begin() + static_cast<std::ptrdiff_t>(r),
                              list + out + l);
                    out += l + r;
                }
            }
        }
        open = std::move(next);
        open_members = std::move(next_members);
    }
    return tree;
}

RegressionTree fit_tree(const FeatureMatrix& X, const TargetVector& g, std::span<const RowIndex> rows, int max_depth,
                        double lambda, double alpha) {
    if (g.size() != X.rows()) throw InvalidInput("fit_tree: residual length does not match feature rows");
    if (!g.allFinite()) throw InvalidInput("fit_tree: non-finite residuals");
    TreeGrower grower(X);
    return grower.grow(std::span<const double>(g.data(), static_cast<std::size_t>(g.size())), rows, max_depth, lambda,
                       alpha);
}

} // namespace voxboost
