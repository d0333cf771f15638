#include "doctest.h"

#include <cmath>

#include <Eigen/SVD>

#include "temp_dir.hpp"
#include "voxboost/error.hpp"
#include "voxboost/residualize.hpp"
#include "voxboost/rng.hpp"
#include "voxboost/synth.hpp"

using namespace voxboost;

namespace {

CohortConfig small_cohort() {
    CohortConfig cfg;
    cfg.n_train = 30;
    cfg.n_val = 10;
    cfg.n_test = 8;
    return cfg;
}

// Least-squares coefficients [intercept, beta] through an SVD pseudo-inverse.
Eigen::VectorXd pinv_solution(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    Eigen::MatrixXd A(X.rows(), X.cols() + 1);
    A.col(0).setOnes();
    A.rightCols(X.cols()) = X;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd s = svd.singularValues();
    Eigen::VectorXd inv = s;
    for (Eigen::Index i = 0; i < s.size(); ++i) inv(i) = s(i) > 1e-12 * s(0) ? 1.0 / s(i) : 0.0;
    return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose() * y;
}

DemographicCovariates complete_demographics(Xoshiro256& rng, const CohortConfig& cfg) {
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
}

} // namespace

TEST_CASE("region template geometry") {
    CohortConfig cfg;
    const auto t = RegionTemplate::for_config(cfg);
    CHECK(t.grid == 5);
    CHECK(t.cell_edge == 4);
    CHECK(t.margin == 2);
    CHECK(t.cell_origin(0) == std::array<int, 3>{2, 2, 2});
    CHECK(t.cell_origin(122) == std::array<int, 3>{18, 18, 10});
    cfg.volume_size = 48;
    CHECK(RegionTemplate::for_config(cfg).cell_edge == 9);
    cfg.volume_size = 12;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("subjects are deterministic and labels recount exactly") {
    TempDir dir;
    CohortConfig cfg;
    cfg.noise = 0.0;
    const auto a = generate_subject(cfg, 3, Fold::train, 99);
    const auto b = generate_subject(cfg, 3, Fold::train, 99);
    CHECK(a.volume == b.volume);
    CHECK(a.record.raw_score == b.record.raw_score);
    CHECK(a.record.derived == b.record.derived);
    CHECK(a.record.subject_id == "sub-0004");

    write_vvol(dir / "a.vvol", a.volume);
    const auto vol = read_vvol(dir / "a.vvol");
    // 5^3 cells of 4 voxels starting at offset 2; region j in cell (j/25, j/5%5, j%5)
    double total = 0.0;
    for (int j = 0; j < 123; ++j) {
        const int oz = 2 + 4 * (j / 25), oy = 2 + 4 * (j / 5 % 5), ox = 2 + 4 * (j % 5);
        int count = 0;
        for (int z = oz; z < oz + 4; ++z)
            for (int y = oy; y < oy + 4; ++y)
                for (int x = ox; x < ox + 4; ++x)
                    if (vol(1, z, y, x) != 0.0f) {
                        CHECK(vol(1, z, y, x) == static_cast<float>(1 + j % 3));
                        ++count;
                    }
        CHECK(a.record.derived(j) == count);
        total += count;
    }
    CHECK((vol.matrix().row(1).array() != 0.0f).count() == static_cast<Eigen::Index>(total));
    CHECK(*a.record.demographics.brain_volume == total);

    const auto stats = region_count_stats(RegionTemplate::for_config(cfg));
    CHECK(a.record.raw_score == planted_score(cfg, stats, a.record.demographics, a.record.derived));
}

TEST_CASE("fold split") {
    CohortConfig cfg;
    const auto folds = split_folds(340, cfg);
    CHECK(std::count(folds.begin(), folds.end(), Fold::train) == 200);
    CHECK(std::count(folds.begin(), folds.end(), Fold::validation) == 40);
    CHECK(std::count(folds.begin(), folds.end(), Fold::test) == 100);
    CHECK(folds == split_folds(340, cfg));
    cfg.seed = 18;
    CHECK(folds != split_folds(340, cfg));
    CHECK_THROWS_AS(split_folds(339, cfg), ConfigError);
}

TEST_CASE("cohort files, exclusion and sealed answers") {
    TempDir dir;
    auto cfg = small_cohort();
    cfg.n_train = 80;
    cfg.n_val = 20;
    cfg.missing_rate = 0.03;
    auto records = generate_cohort(cfg, dir.path());
    REQUIRE(records.size() == 108);
    for (const auto& r : records) {
        CHECK(std::filesystem::exists(dir.path() / r.volume_path));
        if (r.fold == Fold::test) CHECK_FALSE(r.demographics.any_missing());
    }
    const auto summary = residualize(records, cfg);
    CHECK(summary.n_excluded > 0);
    int excluded = 0;
    for (const auto& r : records) {
        if (r.fold == Fold::excluded) {
            ++excluded;
            CHECK(r.demographics.any_missing());
            CHECK_FALSE(r.residual_score);
        } else {
            CHECK(r.residual_score);
            CHECK_FALSE(r.demographics.any_missing());
        }
    }
    CHECK(excluded == summary.n_excluded);
    CHECK(summary.n_fit + summary.n_excluded == 100);

    write_manifest(dir / "manifest.csv", records);
    write_answers(dir / "answers.csv", records);
    const auto back = read_manifest(dir / "manifest.csv");
    REQUIRE(back.size() == records.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].derived == records[i].derived);
        CHECK(back[i].raw_score == records[i].raw_score);
        CHECK(back[i].fold == records[i].fold);
        CHECK(back[i].demographics.site == records[i].demographics.site);
        if (records[i].fold == Fold::test) CHECK_FALSE(back[i].residual_score);
        else CHECK(back[i].residual_score == records[i].residual_score);
    }
    const auto answers = slurp(dir / "answers.csv");
    CHECK(std::count(answers.begin(), answers.end(), '\n') == 1 + cfg.n_test);

    TempDir again;
    auto records2 = generate_cohort(cfg, again.path());
    residualize(records2, cfg);
    write_manifest(again / "manifest.csv", records2);
    CHECK(slurp(again / "manifest.csv") == slurp(dir / "manifest.csv"));
    CHECK(slurp(again.path() / records2[5].volume_path) == slurp(dir.path() / records[5].volume_path));
}

TEST_CASE("missing rate zero keeps every subject") {
    TempDir dir;
    auto cfg = small_cohort();
    cfg.missing_rate = 0.0;
    auto records = generate_cohort(cfg, dir.path());
    const auto summary = residualize(records, cfg);
    CHECK(summary.n_excluded == 0);
    for (const auto& r : records) CHECK(r.residual_score);
}

TEST_CASE("least squares against a pseudo-inverse oracle") {
    Xoshiro256 rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 20 + trial * 5, p = 1 + trial % 6;
        Eigen::MatrixXd X(n, p);
        Eigen::VectorXd y(n);
        for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal() * (1 + trial);
        for (int i = 0; i < n; ++i) y(i) = rng.normal() * 5.0 + 3.0;
        std::vector<std::string> names;
        for (int j = 0; j < p; ++j) names.push_back("x" + std::to_string(j));
        const auto fit = fit_least_squares(X, y, names);
        const Eigen::VectorXd oracle = pinv_solution(X, y);
        CHECK(std::fabs(fit.intercept - oracle(0)) < 1e-8);
        CHECK((fit.coefficients - oracle.tail(p)).cwiseAbs().maxCoeff() < 1e-8);

        const Eigen::VectorXd r = y - fit.predict(X);
        CHECK(std::fabs(r.sum()) < 1e-8);
        for (int j = 0; j < p; ++j) CHECK(std::fabs(X.col(j).dot(r)) < 1e-6 * X.col(j).norm() * r.norm());
    }
}

TEST_CASE("intercept-only and exact linear fits") {
    const Eigen::VectorXd y{{1.0, 4.0, -2.0, 7.0}};
    const auto fit = fit_least_squares(Eigen::MatrixXd(4, 0), y, {});
    const Eigen::VectorXd r = y - fit.predict(Eigen::MatrixXd(4, 0));
    CHECK((r.array() - (y.array() - y.mean())).abs().maxCoeff() < 1e-12);

    CohortConfig cfg;
    Xoshiro256 rng(4);
    std::vector<SubjectRecord> records(60);
    for (std::size_t i = 0; i < records.size(); ++i) {
        auto& rec = records[i];
        rec.subject_id = subject_id(static_cast<int>(i));
        rec.fold = i < 40 ? Fold::train : i < 50 ? Fold::validation : Fold::test;
        rec.demographics = complete_demographics(rng, cfg);
    }
    std::vector<const DemographicCovariates*> demo;
    for (const auto& rec : records) demo.push_back(&rec.demographics);
    const auto design = build_design(demo, cfg);
    Eigen::VectorXd beta(static_cast<Eigen::Index>(design.columns.size()));
    for (Eigen::Index j = 0; j < beta.size(); ++j) beta(j) = rng.normal();
    const Eigen::VectorXd raw = (design.values * beta).array() + 50.0;
    for (std::size_t i = 0; i < records.size(); ++i) records[i].raw_score = raw(static_cast<Eigen::Index>(i));
    residualize(records, cfg);
    for (const auto& rec : records) {
        REQUIRE(rec.residual_score);
        CHECK(std::fabs(*rec.residual_score) < 1e-6);
    }
}

TEST_CASE("rank deficiency names the collinear columns") {
    Xoshiro256 rng(5);
    Eigen::MatrixXd X(30, 3);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
    X.col(2) = 2.0 * X.col(0) - X.col(1);
    Eigen::VectorXd y = Eigen::VectorXd::Random(30);
    try {
        fit_least_squares(X, y, {"a", "b", "c"});
        FAIL("expected a rank error");
    } catch (const ConfigError& e) {
        const std::string what = e.what();
        CHECK(what.find("collinear") != std::string::npos);
        CHECK((what.find("a") != std::string::npos || what.find("b") != std::string::npos ||
               what.find("c") != std::string::npos));
    }
    CHECK_THROWS_AS(fit_least_squares(Eigen::MatrixXd::Zero(5, 1), y.head(5), {"zero"}), ConfigError);
}

TEST_CASE("covariate normalisation") {
    Xoshiro256 rng(6);
    Eigen::MatrixXd train(50, 4), val(20, 4);
    for (Eigen::Index i = 0; i < train.size(); ++i) train.data()[i] = 3.0 + 2.0 * rng.normal();
    for (Eigen::Index i = 0; i < val.size(); ++i) val.data()[i] = 5.0 + 2.0 * rng.normal();
    train.col(3).setConstant(7.0);
    const auto z = normalize_covariates(train);
    const auto t = z.apply(train);
    CHECK(t.col(3).isZero(0));
    for (int j = 0; j < 3; ++j) {
        CHECK(std::fabs(t.col(j).mean()) < 1e-10);
        CHECK(std::fabs(t.col(j).squaredNorm() / 50.0 - 1.0) < 1e-10);
    }
    CHECK(std::fabs(z.apply(val).col(0).mean()) > 0.1);
}
