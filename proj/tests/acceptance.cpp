// Acceptance suite: one PASS/FAIL line per criterion.
// Usage: acceptance <path-to-voxboost> [criterion numbers...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <sys/wait.h>

#include "oracles.hpp"
#include "temp_dir.hpp"
#include "voxboost/csv.hpp"
#include "voxboost/encoder.hpp"
#include "voxboost/gbm.hpp"
#include "voxboost/pipeline.hpp"
#include "voxboost/residualize.hpp"
#include "voxboost/rng.hpp"

using namespace voxboost;
namespace fs = std::filesystem;

namespace {

std::string g_cli;

struct Outcome {
    bool pass = true;
    std::string detail;
};

class Checker {
public:
    void expect(bool ok, const std::string& what) {
        if (ok) return;
        ++failures_;
        if (failures_ <= 5) std::cerr << "    failed: " << what << "\n";
    }
    int failures() const { return failures_; }

private:
    int failures_ = 0;
};

std::string fmt(double v, int digits = 6) {
    std::ostringstream s;
    s.precision(digits);
    s << v;
    return s.str();
}

int run_cli(const std::string& args, const fs::path& out) {
    const std::string cmd = "\"" + g_cli + "\" " + args + " > \"" + out.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

FeatureMatrix random_matrix(Xoshiro256& rng, int rows, int cols, int levels) {
    FeatureMatrix X(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            X(i, j) = levels > 0 ? static_cast<double>(rng.below(static_cast<std::uint64_t>(levels))) : rng.normal();
    return X;
}

Volume<double> random_volume(Xoshiro256& rng, int c, int d, int h, int w) {
    Volume<double> v(c, d, h, w);
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()(i) = rng.normal();
    return v;
}

double weighted_sum(const Volume<double>& v, const Volume<double>& probe) { return v.data().dot(probe.data()); }

// ---------------------------------------------------------------------------

Outcome closed_form() {
    Xoshiro256 rng(101);
    Checker c;
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 1 + static_cast<int>(rng.below(40));
        const bool published_penalty = trial % 2 == 0;
        const double lambda = published_penalty ? 1.05 : rng.uniform(0.0, 5.0);
        const double alpha = published_penalty ? 0.1 : rng.uniform(0.0, 5.0);
        std::vector<double> g(static_cast<std::size_t>(n)), f(g.size());
        const double scale = trial % 5 == 0 ? 0.05 : 3.0;  // small sums exercise the zero region
        for (auto& v : g) v = scale * rng.normal();
        for (auto& v : f) v = rng.normal();
        if (trial % 97 == 0) std::fill(f.begin(), f.end(), 0.0);

        const double w = leaf_value(g, lambda, alpha);
        const double w_ref = oracle::leaf_argmin(g, lambda, alpha);
        worst = std::max(worst, std::fabs(w - w_ref));
        c.expect(std::fabs(w - w_ref) <= 1e-8, "leaf_value trial " + std::to_string(trial));

        const TargetVector r = Eigen::Map<const TargetVector>(g.data(), n);
        const TargetVector fv = Eigen::Map<const TargetVector>(f.data(), n);
        const double rho = line_search_rho(r, fv, lambda, alpha);
        const double rho_ref = oracle::rho_argmin(g, f, lambda, alpha);
        worst = std::max(worst, std::fabs(rho - rho_ref));
        c.expect(std::fabs(rho - rho_ref) <= 1e-8, "line_search_rho trial " + std::to_string(trial));
    }
    return {c.failures() == 0, "1000 cases, max abs diff " + fmt(worst, 3)};
}

Outcome split_search() {
    Xoshiro256 rng(202);
    Checker c;
    int nodes_checked = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(63));
        const int p = 1 + static_cast<int>(rng.below(5));
        const int depth = 1 + trial % 2;
        const FeatureMatrix X = random_matrix(rng, n, p, trial % 3 == 0 ? 4 : 0);
        TargetVector g(n);
        for (int i = 0; i < n; ++i) g(i) = rng.normal();
        const std::vector<double> gv(g.data(), g.data() + n);
        const double lambda = trial % 4 == 0 ? 0.0 : 1.05, alpha = trial % 4 == 0 ? 0.0 : 0.1;
        std::vector<RowIndex> all(static_cast<std::size_t>(n));
        std::iota(all.begin(), all.end(), 0);
        const RegressionTree tree = fit_tree(X, g, all, depth, lambda, alpha);

        // Walk the tree with the row set reaching each node.
        std::function<void(std::int32_t, const std::vector<int>&, int)> visit = [&](std::int32_t id,
                                                                                     const std::vector<int>& rows,
                                                                                     int level) {
            const auto& node = tree.nodes[static_cast<std::size_t>(id)];
            std::vector<oracle::Split> cands;
            const oracle::Split best = oracle::best_split(X, gv, rows, lambda, alpha, &cands);
            const double tol = 1e-9 * std::max(1.0, std::fabs(best.gain));
            const std::string where = "trial " + std::to_string(trial) + " node " + std::to_string(id);
            ++nodes_checked;
            if (node.is_leaf()) {
                bool residuals_equal = true;
                for (int r : rows) residuals_equal = residuals_equal && gv[static_cast<std::size_t>(r)] == gv[static_cast<std::size_t>(rows[0])];
                c.expect(level == depth || rows.size() < 2 || residuals_equal || best.gain <= tol,
                         where + ": leaf where the oracle finds a positive split");
                return;
            }
            c.expect(level < depth, where + ": split below max depth");
            const auto chosen = std::find_if(cands.begin(), cands.end(), [&](const oracle::Split& s) {
                return s.feature == node.feature && s.threshold == node.threshold;
            });
            c.expect(chosen != cands.end(), where + ": split is not a candidate");
            if (chosen == cands.end()) return;
            c.expect(chosen->gain >= best.gain - tol, where + ": suboptimal gain");
            const auto near = std::count_if(cands.begin(), cands.end(),
                                            [&](const oracle::Split& s) { return s.gain >= best.gain - tol; });
            if (near == 1) c.expect(node.feature == best.feature && node.threshold == best.threshold, where + ": different split");
            std::vector<int> left, right;
            for (int r : rows) (X(r, node.feature) <= node.threshold ? left : right).push_back(r);
            visit(node.left, left, level + 1);
            visit(node.right, right, level + 1);
        };
        std::vector<int> rows(static_cast<std::size_t>(n));
        std::iota(rows.begin(), rows.end(), 0);
        visit(0, rows, 0);
    }
    return {c.failures() == 0, "100 datasets, " + std::to_string(nodes_checked) + " nodes"};
}

Outcome monotonicity() {
    Xoshiro256 rng(303);
    Checker c;
    int stages = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 30 + static_cast<int>(rng.below(100)), p = 1 + static_cast<int>(rng.below(8));
        const FeatureMatrix X = random_matrix(rng, n, p, trial % 4 == 0 ? 3 : 0);
        TargetVector y(n);
        for (int i = 0; i < n; ++i) y(i) = std::sin(2.0 * X(i, 0)) + (p > 1 ? X(i, 0) * X(i, 1) : 0.0) + 0.3 * rng.normal();
        GbmHyperparams hp;
        hp.n_trees = 150;
        hp.max_depth = 1 + static_cast<int>(rng.below(4));
        hp.learning_rate = rng.uniform(0.05, 1.0);
        hp.lambda = 0.0;
        hp.alpha = 0.0;
        hp.subsample = 1.0;
        hp.seed = static_cast<std::uint64_t>(trial);
        const auto staged = staged_predict(fit(X, y, hp), X);
        double prev = (staged[0] - y).squaredNorm() / n;
        for (std::size_t m = 1; m < staged.size(); ++m, ++stages) {
            const double cur = (staged[m] - y).squaredNorm() / n;
            c.expect(cur <= prev, "trial " + std::to_string(trial) + " stage " + std::to_string(m));
            prev = cur;
        }
    }
    return {c.failures() == 0, "20 datasets, " + std::to_string(stages) + " stages"};
}

Outcome gradients() {
    Xoshiro256 rng(404);
    Checker c;
    double worst = 0.0;
    auto compare = [&](double analytic, double numeric, const std::string& what) {
        const double e = oracle::relative_error(analytic, numeric);
        worst = std::max(worst, e);
        c.expect(e < 1e-4, what);
    };

    // conv3d: 2 -> 4 channels on 8^3
    const auto in = random_volume(rng, 2, 8, 8, 8);
    Conv3d<double> conv = Conv3d<double>::same(2, 4, 3);
    for (Eigen::Index i = 0; i < conv.weight.size(); ++i) conv.weight.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < conv.bias.size(); ++i) conv.bias(i) = rng.normal();
    const auto probe4 = random_volume(rng, 4, 8, 8, 8);
    const auto cg = conv3d_backward(probe4, in, conv);
    Volume<double> x = in;
    for (Eigen::Index i = 0; i < x.size(); ++i)
        compare(cg.input.data()(i),
                oracle::central_difference([&] { return weighted_sum(conv3d_forward(x, conv), probe4); }, x.data()(i)),
                "conv3d input " + std::to_string(i));
    for (Eigen::Index i = 0; i < conv.weight.size(); ++i)
        compare(cg.weight.data()[i],
                oracle::central_difference([&] { return weighted_sum(conv3d_forward(in, conv), probe4); },
                                           conv.weight.data()[i]),
                "conv3d weight " + std::to_string(i));
    for (Eigen::Index i = 0; i < conv.bias.size(); ++i)
        compare(cg.bias(i),
                oracle::central_difference([&] { return weighted_sum(conv3d_forward(in, conv), probe4); }, conv.bias(i)),
                "conv3d bias " + std::to_string(i));

    // maxpool3d on 4 x 8^3; skip voxels whose pooling window is within 1e-3 of a tie
    auto pool_in = random_volume(rng, 4, 8, 8, 8);
    const auto pooled = maxpool3d_forward(pool_in);
    const auto probe_pool = random_volume(rng, 4, 4, 4, 4);
    const auto pg = maxpool3d_backward(probe_pool, pooled.argmax, pool_in.dims());
    std::set<Eigen::Index> near_tie;
    for (int ch = 0; ch < 4; ++ch)
        for (int z = 0; z < 4; ++z)
            for (int y = 0; y < 4; ++y)
                for (int xx = 0; xx < 4; ++xx) {
                    std::vector<std::pair<double, Eigen::Index>> win;
                    for (int d = 0; d < 8; ++d) {
                        const Eigen::Index i = pool_in.index(ch, 2 * z + (d >> 2), 2 * y + ((d >> 1) & 1), 2 * xx + (d & 1));
                        win.push_back({pool_in.data()(i), i});
                    }
                    std::sort(win.rbegin(), win.rend());
                    if (win[0].first - win[1].first < 1e-3)
                        for (const auto& w : win) near_tie.insert(w.second);
                }
    for (Eigen::Index i = 0; i < pool_in.size(); ++i) {
        if (near_tie.count(i)) continue;
        compare(pg.data()(i),
                oracle::central_difference([&] { return weighted_sum(maxpool3d_forward(pool_in).output, probe_pool); },
                                           pool_in.data()(i)),
                "maxpool3d " + std::to_string(i));
    }

    // relu on 4 x 8^3, away from the kink
    auto relu_in = random_volume(rng, 4, 8, 8, 8);
    for (Eigen::Index i = 0; i < relu_in.size(); ++i)
        if (std::fabs(relu_in.data()(i)) < 1e-3) relu_in.data()(i) = 0.5;
    const auto rg = relu_backward(probe4, relu_in);
    for (Eigen::Index i = 0; i < relu_in.size(); ++i)
        compare(rg.data()(i),
                oracle::central_difference([&] { return weighted_sum(relu_forward(relu_in), probe4); }, relu_in.data()(i)),
                "relu " + std::to_string(i));

    // loss over a batch of 2 x (4 * 8^3) outputs
    Eigen::MatrixXd pred(2, 4 * 512), target(2, 4 * 512);
    for (Eigen::Index i = 0; i < pred.size(); ++i) {
        pred.data()[i] = rng.normal();
        target.data()[i] = rng.normal();
    }
    const auto lg = mse_multi_loss(pred, target);
    for (Eigen::Index i = 0; i < pred.size(); i += 3)
        compare(lg.gradient.data()[i],
                oracle::central_difference([&] { return mse_multi_loss(pred, target).loss; }, pred.data()[i]),
                "loss " + std::to_string(i));

    return {c.failures() == 0, "max relative error " + fmt(worst, 3)};
}

Outcome encoder_contract() {
    Checker c;
    Xoshiro256 rng(505);
    std::ostringstream detail;
    for (const auto& [size, channels] : {std::pair<int, std::vector<int>>{24, {8, 8}}, {48, {8, 16, 32}}}) {
        EncoderConfig cfg;
        cfg.input_size = size;
        cfg.channels = channels;
        const auto model = EncoderModel::initialize(cfg, 9);
        const auto input = random_volume(rng, 2, size, size, size);
        const auto out = forward(model, input);
        c.expect(out.size() == 123, "outputs at " + std::to_string(size));
        const auto f6 = extract_features(model, input, 6);
        c.expect(f6.size() == channels.back() * 216, "6^3 features at " + std::to_string(size));
        c.expect(feature_length(cfg, 6) == static_cast<std::size_t>(channels.back() * 216), "feature_length");
        detail << size << "^3: " << out.size() << " outputs, " << f6.size() << " features; ";
    }

    EncoderConfig cfg;
    const auto model = EncoderModel::initialize(cfg, 10);
    const std::vector<Volume<double>> sample{random_volume(rng, 2, 24, 24, 24)};
    Eigen::MatrixXd target(1, 123);
    for (Eigen::Index i = 0; i < target.size(); ++i) target.data()[i] = rng.normal();
    SgdMomentumConfig sgd;
    sgd.momentum = 0.9;
    sgd.epochs = 200;
    sgd.seed = 1;
    const auto result = train(model, sample, target, sample, target, sgd);
    const double initial = result.log.front().train_mse;
    double reached = initial;
    int epoch = -1;
    for (const auto& e : result.log)
        if (e.epoch > 0 && e.train_mse < 0.1 * initial) {
            reached = e.train_mse;
            epoch = e.epoch;
            break;
        }
    c.expect(epoch > 0, "memorization below 10% within 200 epochs");
    const double final_loss = result.log.back().train_mse;
    c.expect(result.log.back().epoch == 200 && final_loss < 0.1 * initial, "epoch 200 loss below 10% of epoch 0");
    detail << "memorization " << fmt(initial, 4) << " -> " << fmt(reached, 4) << " by epoch " << epoch
           << ", epoch 200 loss " << fmt(final_loss, 3);
    return {c.failures() == 0, detail.str()};
}

Outcome residualization() {
    Checker c;
    Xoshiro256 rng(606);
    CohortConfig cfg;
    auto demographics = [&] {
        DemographicCovariates d;
        d.brain_volume = 2000.0 + 300.0 * rng.normal();
        d.site = cfg.sites[rng.below(cfg.sites.size())];
        d.age_months = rng.uniform(108, 132);
        d.sex = cfg.sexes[rng.below(cfg.sexes.size())];
        d.ethnicity = cfg.ethnicities[rng.below(cfg.ethnicities.size())];
        d.parental_education = 1.0 + static_cast<double>(rng.below(5));
        d.parental_income = 1.0 + static_cast<double>(rng.below(4));
        d.marital_status = cfg.marital_statuses[rng.below(cfg.marital_statuses.size())];
        return d;
    };
    auto make_records = [&](int n, bool with_missing) {
        std::vector<SubjectRecord> records(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            auto& r = records[static_cast<std::size_t>(i)];
            r.subject_id = subject_id(i);
            r.fold = i < n * 6 / 10 ? Fold::train : i < n * 7 / 10 ? Fold::validation : Fold::test;
            r.demographics = demographics();
            if (with_missing && r.fold != Fold::test && i % 17 == 3) {
                switch (i % 3) {
                case 0: r.demographics.age_months.reset(); break;
                case 1: r.demographics.site.reset(); break;
                default: r.demographics.parental_income.reset(); break;
                }
            }
        }
        return records;
    };

    // orthogonality and exclusion
    auto records = make_records(300, true);
    int incomplete = 0;
    for (auto& r : records) {
        r.raw_score = 100.0 + 15.0 * rng.normal() + 0.01 * r.demographics.brain_volume.value_or(0.0);
        incomplete += r.demographics.any_missing();
    }
    const auto summary = residualize(records, cfg);
    c.expect(summary.n_excluded == incomplete && incomplete > 0, "exclusion count");
    std::vector<const DemographicCovariates*> fit_rows;
    std::vector<double> residuals;
    for (const auto& r : records) {
        if (r.demographics.any_missing()) {
            c.expect(r.fold == Fold::excluded && !r.residual_score, "incomplete subject kept: " + r.subject_id);
            continue;
        }
        c.expect(r.fold != Fold::excluded && r.residual_score.has_value(), "complete subject dropped: " + r.subject_id);
        if (r.fold == Fold::test) continue;
        fit_rows.push_back(&r.demographics);
        residuals.push_back(*r.residual_score);
    }
    const auto design = build_design(fit_rows, cfg);
    const Eigen::Map<const Eigen::VectorXd> res(residuals.data(), static_cast<Eigen::Index>(residuals.size()));
    double worst = std::fabs(res.sum()) / (std::sqrt(static_cast<double>(res.size())) * res.norm());
    for (Eigen::Index j = 0; j < design.values.cols(); ++j)
        worst = std::max(worst, std::fabs(design.values.col(j).dot(res)) / (design.values.col(j).norm() * res.norm()));
    c.expect(worst < 1e-6, "orthogonality");

    // exactly linear scores
    auto linear = make_records(200, false);
    std::vector<const DemographicCovariates*> all;
    for (const auto& r : linear) all.push_back(&r.demographics);
    const auto full = build_design(all, cfg);
    Eigen::VectorXd beta(full.values.cols());
    for (Eigen::Index j = 0; j < beta.size(); ++j) beta(j) = rng.normal();
    const Eigen::VectorXd raw = (full.values * beta).array() + 75.0;
    for (std::size_t i = 0; i < linear.size(); ++i) linear[i].raw_score = raw(static_cast<Eigen::Index>(i));
    residualize(linear, cfg);
    double largest = 0.0;
    for (const auto& r : linear) largest = std::max(largest, std::fabs(r.residual_score.value_or(1e9)));
    c.expect(largest < 1e-6, "exact linear residuals");

    return {c.failures() == 0, std::to_string(incomplete) + " excluded, max relative inner product " + fmt(worst, 3) +
                                   ", linear residual max " + fmt(largest, 3)};
}

struct ReportRow {
    std::string method;
    double train = 0, val = 0, test = 0;
};

std::vector<ReportRow> read_report(const fs::path& csv) {
    const CsvTable t = read_csv(csv);
    std::vector<ReportRow> rows;
    for (const auto& r : t.rows)
        rows.push_back({r[t.column("method")], parse_real(r[t.column("train_mse")]), parse_real(r[t.column("val_mse")]),
                        parse_real(r[t.column("test_mse")])});
    return rows;
}

std::string pipeline_args(std::uint64_t seed, const fs::path& workdir) {
    const unsigned workers = std::max(1u, std::thread::hardware_concurrency());
    return "-q -j " + std::to_string(workers) + " -s run.seed=" + std::to_string(seed) + " -w \"" + workdir.string() +
           "\" pipeline";
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Outcome end_to_end(const fs::path& root) {
    Checker c;
    int train_below_val = 0;
    double slowest = 0.0;
    std::vector<double> cnn_test, derived_test, cnn_val, derived_val;
    for (std::uint64_t seed = 17; seed <= 21; ++seed) {
        const fs::path dir = root / ("seed" + std::to_string(seed));
        const auto t0 = std::chrono::steady_clock::now();
        const int code = run_cli(pipeline_args(seed, dir), root / ("seed" + std::to_string(seed) + ".log"));
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        slowest = std::max(slowest, secs);
        c.expect(code == 0, "pipeline exit code for seed " + std::to_string(seed));
        if (code != 0) continue;
        c.expect(secs < 15 * 60, "runtime for seed " + std::to_string(seed));

        const auto rows = read_report(dir / "results" / "report.csv");
        const auto find = [&](const std::string& m) {
            return std::find_if(rows.begin(), rows.end(), [&](const ReportRow& r) { return r.method == m; });
        };
        const auto cnn = find("CNN+GBM"), derived = find("Derived Data+GBM");
        c.expect(rows.size() == 2 && cnn != rows.end() && derived != rows.end(), "ablation methods");
        if (cnn == rows.end() || derived == rows.end()) continue;
        for (const auto& r : rows)
            c.expect(std::isfinite(r.train) && std::isfinite(r.val) && std::isfinite(r.test), "finite MSE " + r.method);
        train_below_val += cnn->train < cnn->val;
        cnn_test.push_back(cnn->test);
        derived_test.push_back(derived->test);
        cnn_val.push_back(cnn->val);
        derived_val.push_back(derived->val);

        const std::string text = slurp(dir / "results" / "report.txt");
        const auto ablation = text.find("Ablation");
        c.expect(ablation != std::string::npos && text.find("Derived Data+GBM", ablation) != std::string::npos &&
                     text.find("CNN+GBM", ablation) != std::string::npos,
                 "ablation table in report.txt");
        std::cerr << "    seed " << seed << ": CNN+GBM train/val/test " << fmt(cnn->train, 5) << " / " << fmt(cnn->val, 5)
                  << " / " << fmt(cnn->test, 5) << ", Derived Data+GBM " << fmt(derived->train, 5) << " / "
                  << fmt(derived->val, 5) << " / " << fmt(derived->test, 5) << ", " << fmt(secs, 4) << " s\n";
    }
    c.expect(train_below_val >= 4, "train MSE < validation MSE in at least 4 of 5 seeds");
    std::ostringstream d;
    d << "train<val in " << train_below_val << "/5 seeds, slowest run " << fmt(slowest, 4) << " s";
    if (!cnn_test.empty())
        d << "; median test MSE CNN+GBM " << fmt(median(cnn_test), 5) << " vs Derived " << fmt(median(derived_test), 5)
          << ", median val " << fmt(median(cnn_val), 5) << " vs " << fmt(median(derived_val), 5);
    return {c.failures() == 0, d.str()};
}

Outcome determinism(const fs::path& root) {
    Checker c;
    const fs::path first = root / "seed17";
    if (!fs::exists(first / "results" / "report.csv")) {
        const int code = run_cli(pipeline_args(17, first), root / "seed17.log");
        c.expect(code == 0, "first run");
    }
    const fs::path second = root / "seed17-rerun";
    c.expect(run_cli(pipeline_args(17, second), root / "seed17-rerun.log") == 0, "second run");
    int compared = 0;
    for (const std::string arm : {"cnn6", "derived"}) {
        for (const std::string file : {"model.gbm", "grid.csv", "predictions_train.csv", "predictions_validation.csv",
                                       "predictions_test.csv"}) {
            const fs::path rel = fs::path("results") / "gbm" / arm / file;
            const bool present = fs::exists(first / rel) && fs::exists(second / rel);
            c.expect(present && slurp(first / rel) == slurp(second / rel), "differs: " + rel.string());
            ++compared;
        }
    }
    for (const fs::path& rel : {fs::path("results/encoder/encoder.vxenc"), fs::path("results/features/cnn6.csv"),
                               fs::path("cohort/manifest.csv"), fs::path("cohort/answers.csv")}) {
        c.expect(fs::exists(first / rel) && slurp(first / rel) == slurp(second / rel), "differs: " + rel.string());
        ++compared;
    }
    return {c.failures() == 0, std::to_string(compared) + " files byte-identical across two runs"};
}

Outcome scoring(const fs::path& root) {
    Checker c;
    const fs::path dir = root / "score";
    fs::create_directories(dir);
    spit(dir / "pred_zero.csv", "subject_id,prediction\ns1,0\ns2,0\n");
    spit(dir / "truth.csv", "subject_id,residual_score\ns1,1\ns2,3\n");
    spit(dir / "pred_other.csv", "subject_id,prediction\ns2,2.5\ns1,-0.5\ns3,4\n");
    spit(dir / "truth3.csv", "subject_id,residual_score\ns1,0.25\ns2,-1\ns3,4\n");

    // independent evaluation of (1/N) sum (y - yhat)^2
    const double expected3 = ((-1.0 - 2.5) * (-1.0 - 2.5) + (0.25 + 0.5) * (0.25 + 0.5) + 0.0) / 3.0;
    const struct {
        fs::path pred, truth;
        double expected;
    } cases[] = {{dir / "pred_zero.csv", dir / "pred_zero.csv", 0.0},
                 {dir / "pred_other.csv", dir / "pred_other.csv", 0.0},
                 {dir / "pred_zero.csv", dir / "truth.csv", 5.0},
                 {dir / "pred_other.csv", dir / "truth3.csv", expected3}};
    std::ostringstream d;
    for (const auto& k : cases) {
        const fs::path out = dir / "out.txt";
        const int code = run_cli("score \"" + k.pred.string() + "\" \"" + k.truth.string() + "\"", out);
        const std::string text = slurp(out);
        c.expect(code == 0, "score exit code");
        double got = std::nan("");
        if (code == 0 && text.rfind("MSE ", 0) == 0) got = parse_real(text.substr(4, text.find('\n') - 4));
        c.expect(got == k.expected, "score " + k.pred.filename().string() + " vs " + k.truth.filename().string() +
                                        ": got " + text);
        c.expect(score_predictions(k.pred, k.truth) == k.expected, "library score");
        d << (d.tellp() > 0 ? ", " : "") << fmt(got, 17);
    }
    return {c.failures() == 0, "MSE values " + d.str()};
}

} // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: acceptance <path-to-voxboost> [criteria...]\n";
        return 2;
    }
    g_cli = argv[1];
    std::set<int> selected;
    for (int i = 2; i < argc; ++i) selected.insert(std::atoi(argv[i]));
    if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7, 8, 9};

    TempDir root;
    struct Criterion {
        int id;
        const char* name;
        double budget_s;  // 0 for none
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {1, "closed-form leaf value and stage weight", 10, closed_form},
        {2, "split search matches exhaustive enumeration", 30, split_search},
        {3, "boosting training loss is non-increasing", 30, monotonicity},
        {4, "layer gradients match finite differences", 60, gradients},
        {5, "encoder contract", 180, encoder_contract},
        {6, "residualization", 5, residualization},
        {7, "end-to-end pipeline over five seeds", 0, [&] { return end_to_end(root.path()); }},
        {8, "determinism of a full rerun", 0, [&] { return determinism(root.path()); }},
        {9, "scoring tool", 0, [&] { return scoring(root.path()); }},
    };

    int failed = 0;
    for (const auto& k : criteria) {
        if (!selected.count(k.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = k.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (k.budget_s > 0 && secs >= k.budget_s) {
            o.pass = false;
            o.detail += "; over the " + fmt(k.budget_s) + " s budget";
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << k.id << ": " << k.name << " (" << o.detail << ", "
                  << fmt(secs, 3) << " s)" << std::endl;
    }
    return failed ? 1 : 0;
}
