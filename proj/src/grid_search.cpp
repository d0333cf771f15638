#include "voxboost/grid_search.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <thread>
#include <tuple>

#include "voxboost/csv.hpp"
#include "voxboost/error.hpp"

namespace voxboost {

namespace {

// Runs task(i) for i in [0, count) on up to `workers` threads. The first
// exception is rethrown after all threads finish.
template <typename Task>
void parallel_for(std::size_t count, int workers, Task&& task) {
    const auto threads = static_cast<std::size_t>(std::clamp<long long>(workers, 1, static_cast<long long>(count)));
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) task(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    task(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

// Validation MSE after each stage count in `counts` (ascending), reusing the
// staged update so every value equals the MSE of the truncated model.
std::vector<double> prefix_mse(const GbmModel& model, const FeatureMatrix& X, const TargetVector& y,
                               const std::vector<int>& counts) {
    std::vector<double> out;
    TargetVector F = TargetVector::Constant(X.rows(), model.f0);
    std::size_t stage = 0;
    for (int count : counts) {
        for (; stage < static_cast<std::size_t>(count); ++stage) {
            const auto& s = model.stages[stage];
            const double step = model.gamma * s.rho;
            for (Eigen::Index i = 0; i < X.rows(); ++i) F(i) += step * s.tree.predict_row(X.row(i));
        }
        out.push_back(evaluate_mse(F, y));
    }
    return out;
}

auto fit_key(const GbmHyperparams& hp) {
    return std::make_tuple(hp.learning_rate, hp.max_depth, hp.lambda, hp.alpha);
}

} // namespace

void GridSpec::validate() const {
    if (learning_rates.empty() || n_trees.empty() || max_depths.empty() || lambdas.empty() || alphas.empty() ||
        fine_lr_factors.empty() || fine_depth_offsets.empty())
        throw ConfigError("grid candidate lists must be non-empty");
    for (double v : learning_rates)
        if (!(v > 0.0 && v <= 1.0)) throw ConfigError("grid learning rates must be in (0, 1]");
    for (int v : n_trees)
        if (v < 1) throw ConfigError("grid tree counts must be >= 1");
    for (int v : max_depths)
        if (v < 1) throw ConfigError("grid depths must be >= 1");
    for (double v : lambdas)
        if (!(v >= 0.0)) throw ConfigError("grid lambdas must be >= 0");
    for (double v : alphas)
        if (!(v >= 0.0)) throw ConfigError("grid alphas must be >= 0");
    for (double v : fine_lr_factors)
        if (!(v > 0.0)) throw ConfigError("grid fine learning-rate factors must be > 0");
    if (std::find(fine_lr_factors.begin(), fine_lr_factors.end(), 1.0) == fine_lr_factors.end())
        throw ConfigError("grid fine learning-rate factors must include 1");
    if (std::find(fine_depth_offsets.begin(), fine_depth_offsets.end(), 0) == fine_depth_offsets.end())
        throw ConfigError("grid fine depth offsets must include 0");
}

std::vector<GbmHyperparams> coarse_grid(const GridSpec& grid, const GbmHyperparams& base) {
    std::vector<GbmHyperparams> out;
    for (double lr : grid.learning_rates)
        for (int trees : grid.n_trees)
            for (int depth : grid.max_depths)
                for (double lambda : grid.lambdas)
                    for (double alpha : grid.alphas) {
                        GbmHyperparams hp = base;
                        hp.learning_rate = lr;
                        hp.n_trees = trees;
                        hp.max_depth = depth;
                        hp.lambda = lambda;
                        hp.alpha = alpha;
                        out.push_back(hp);
                    }
    return out;
}

std::vector<GbmHyperparams> fine_grid(const GridSpec& grid, const GbmHyperparams& winner) {
    std::vector<GbmHyperparams> out;
    for (double factor : grid.fine_lr_factors)
        for (int offset : grid.fine_depth_offsets) {
            GbmHyperparams hp = winner;
            hp.learning_rate = factor == 1.0 ? winner.learning_rate : std::min(1.0, winner.learning_rate * factor);
            hp.max_depth = std::max(1, winner.max_depth + offset);
            if (std::find(out.begin(), out.end(), hp) == out.end()) out.push_back(hp);
        }
    return out;
}

GridResult two_stage_grid_search(const FeatureMatrix& X_train, const TargetVector& y_train,
                                 const FeatureMatrix& X_val, const TargetVector& y_val, const GridSpec& grid,
                                 const GbmHyperparams& base, int workers) {
    grid.validate();
    base.validate();
    if (X_train.rows() != y_train.size() || X_val.rows() != y_val.size())
        throw InvalidInput("grid search: features and targets differ in length");
    if (X_train.cols() != X_val.cols()) throw InvalidInput("grid search: train and validation widths differ");
    if (y_train.size() == 0 || y_val.size() == 0) throw InvalidInput("grid search: empty train or validation fold");

    GridResult result;
    const auto coarse = coarse_grid(grid, base);
    for (std::size_t i = 0; i < coarse.size(); ++i)
        result.rows.push_back({1, static_cast<int>(i), coarse[i], 0.0});

    // One fit per (learning rate, depth, lambda, alpha), as long as the largest tree count.
    std::map<decltype(fit_key(base)), std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < coarse.size(); ++i) groups[fit_key(coarse[i])].push_back(i);
    std::vector<std::vector<std::size_t>> jobs;
    for (auto& [key, members] : groups) jobs.push_back(members);
    std::sort(jobs.begin(), jobs.end());

    parallel_for(jobs.size(), workers, [&](std::size_t j) {
        auto members = jobs[j];
        std::sort(members.begin(), members.end(),
                  [&](std::size_t a, std::size_t b) { return coarse[a].n_trees < coarse[b].n_trees; });
        GbmHyperparams hp = coarse[members.back()];
        const auto model = fit(X_train, y_train, hp);
        std::vector<int> counts;
        for (auto m : members) counts.push_back(coarse[m].n_trees);
        const auto scores = prefix_mse(model, X_val, y_val, counts);
        for (std::size_t k = 0; k < members.size(); ++k) result.rows[members[k]].val_mse = scores[k];
    });

    auto argmin = [&](std::size_t begin, std::size_t end) {
        std::size_t best = begin;
        for (std::size_t i = begin + 1; i < end; ++i)
            if (result.rows[i].val_mse < result.rows[best].val_mse) best = i;
        return best;
    };
    const std::size_t coarse_best = argmin(0, result.rows.size());

    const auto fine = fine_grid(grid, result.rows[coarse_best].hyperparams);
    const std::size_t offset = result.rows.size();
    for (std::size_t i = 0; i < fine.size(); ++i)
        result.rows.push_back({2, static_cast<int>(offset + i), fine[i], 0.0});
    parallel_for(fine.size(), workers, [&](std::size_t i) {
        GridRow& row = result.rows[offset + i];
        if (row.hyperparams == result.rows[coarse_best].hyperparams) {
            row.val_mse = result.rows[coarse_best].val_mse;  // same deterministic fit
            return;
        }
        row.val_mse = evaluate_mse(predict(fit(X_train, y_train, row.hyperparams), X_val), y_val);
    });

    result.best = argmin(0, result.rows.size());
    return result;
}

double evaluate_mse(const TargetVector& predictions, const TargetVector& truth) {
    if (predictions.size() != truth.size()) throw InvalidInput("evaluate_mse: length mismatch");
    if (predictions.size() == 0) throw InvalidInput("evaluate_mse: empty input");
    double total = 0.0;
    for (Eigen::Index i = 0; i < truth.size(); ++i) {
        const double d = truth(i) - predictions(i);
        total += d * d;
    }
    return total / static_cast<double>(truth.size());
}

void write_grid_csv(const std::filesystem::path& path, const GridResult& result) {
    CsvTable table;
    table.header = {"stage", "index", "learning_rate", "n_trees", "max_depth", "lambda",
                    "alpha", "subsample", "seed",  "val_mse",  "winner"};
    for (std::size_t i = 0; i < result.rows.size(); ++i) {
        const auto& r = result.rows[i];
        const auto& hp = r.hyperparams;
        table.rows.push_back({std::to_string(r.stage), std::to_string(r.index), format_real(hp.learning_rate),
                              std::to_string(hp.n_trees), std::to_string(hp.max_depth), format_real(hp.lambda),
                              format_real(hp.alpha), format_real(hp.subsample), std::to_string(hp.seed),
                              format_real(r.val_mse), i == result.best ? "1" : "0"});
    }
    write_csv(path, table);
}

} // namespace voxboost
