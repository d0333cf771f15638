#include "voxboost/residualize.hpp"

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include "voxboost/error.hpp"

namespace voxboost {

namespace {

constexpr double kJitter = 1e-8;
constexpr int kRefinementSteps = 3;

void append_one_hot(std::vector<std::string>& columns, const std::string& field,
                    const std::vector<std::string>& vocabulary) {
    for (std::size_t i = 1; i < vocabulary.size(); ++i) columns.push_back(field + "=" + vocabulary[i]);
}

template <typename Row>
void fill_one_hot(Row&& row, Eigen::Index& col, const std::string& value,
                  const std::vector<std::string>& vocabulary, const char* field) {
    std::size_t level = vocabulary.size();
    for (std::size_t i = 0; i < vocabulary.size(); ++i)
        if (vocabulary[i] == value) level = i;
    if (level == vocabulary.size()) throw InvalidInput(std::string("unknown ") + field + " level '" + value + "'");
    for (std::size_t i = 1; i < vocabulary.size(); ++i, ++col) row(col) = level == i ? 1.0 : 0.0;
}

} // namespace

Eigen::VectorXd LinearModelFit::predict(const Eigen::MatrixXd& design) const {
    if (design.cols() != coefficients.size()) throw InvalidInput("linear model: design column count mismatch");
    return (design * coefficients).array() + intercept;
}

LinearModelFit fit_least_squares(const Eigen::MatrixXd& design, const Eigen::VectorXd& target,
                                 std::vector<std::string> columns) {
    if (design.rows() != target.size()) throw InvalidInput("least squares: row count mismatch");
    if (static_cast<Eigen::Index>(columns.size()) != design.cols())
        throw InvalidInput("least squares: column names do not match design");
    const Eigen::Index n = design.rows(), p = design.cols() + 1;
    if (n < 1) throw InvalidInput("least squares: no rows");

    Eigen::MatrixXd A(n, p);
    A.col(0).setOnes();
    A.rightCols(p - 1) = design;
    Eigen::VectorXd scale(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        const double rms = A.col(j).norm() / std::sqrt(static_cast<double>(n));
        scale(j) = rms > 0.0 ? 1.0 / rms : 1.0;
    }
    A = A * scale.asDiagonal();

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    qr.setThreshold(1e-10);
    if (qr.rank() < p) {
        std::string names;
        const auto perm = qr.colsPermutation().indices();
        for (Eigen::Index k = qr.rank(); k < p; ++k) {
            const auto j = perm(k);
            if (!names.empty()) names += ", ";
            names += j == 0 ? std::string("(intercept)") : columns[static_cast<std::size_t>(j - 1)];
        }
        throw ConfigError("residualization design is rank deficient; collinear columns: " + names);
    }

    const Eigen::MatrixXd gram = A.transpose() * A;
    Eigen::MatrixXd jittered = gram;
    jittered.diagonal().array() += kJitter;
    const auto factor = jittered.ldlt();
    const Eigen::VectorXd rhs = A.transpose() * target;
    Eigen::VectorXd beta = factor.solve(rhs);
    // Iterative refinement against the unjittered system removes the jitter bias.
    for (int step = 0; step < kRefinementSteps; ++step) beta += factor.solve(rhs - gram * beta);
    beta = beta.cwiseProduct(scale);
    if (!beta.allFinite()) throw ConfigError("residualization produced non-finite coefficients");

    LinearModelFit fit;
    fit.columns = std::move(columns);
    fit.intercept = beta(0);
    fit.coefficients = beta.tail(p - 1);
    return fit;
}

Design build_design(const std::vector<const DemographicCovariates*>& subjects, const CohortConfig& config) {
    Design d;
    d.columns = {"brain_volume", "age_months", "parental_education", "parental_income"};
    append_one_hot(d.columns, "site", config.sites);
    append_one_hot(d.columns, "sex", config.sexes);
    append_one_hot(d.columns, "ethnicity", config.ethnicities);
    append_one_hot(d.columns, "marital_status", config.marital_statuses);

    d.values.resize(static_cast<Eigen::Index>(subjects.size()), static_cast<Eigen::Index>(d.columns.size()));
    for (std::size_t i = 0; i < subjects.size(); ++i) {
        const auto& s = *subjects[i];
        if (s.any_missing()) throw InvalidInput("build_design: subject with missing covariates");
        auto row = d.values.row(static_cast<Eigen::Index>(i));
        row(0) = *s.brain_volume;
        row(1) = *s.age_months;
        row(2) = *s.parental_education;
        row(3) = *s.parental_income;
        Eigen::Index col = 4;
        fill_one_hot(row, col, *s.site, config.sites, "site");
        fill_one_hot(row, col, *s.sex, config.sexes, "sex");
        fill_one_hot(row, col, *s.ethnicity, config.ethnicities, "ethnicity");
        fill_one_hot(row, col, *s.marital_status, config.marital_statuses, "marital_status");
    }
    return d;
}

ResidualizeSummary residualize(std::vector<SubjectRecord>& records, const CohortConfig& config) {
    ResidualizeSummary summary;
    std::vector<SubjectRecord*> fitted, test;
    for (auto& r : records) {
        r.residual_score.reset();
        if (r.fold == Fold::test) {
            if (r.demographics.any_missing())
                throw InvalidInput("test subject " + r.subject_id + " has missing covariates");
            test.push_back(&r);
        } else if (r.fold == Fold::excluded || r.demographics.any_missing()) {
            r.fold = Fold::excluded;
            ++summary.n_excluded;
        } else {
            fitted.push_back(&r);
        }
    }
    if (fitted.empty()) throw ConfigError("residualization: no complete train or validation subjects");

    auto design_of = [&](const std::vector<SubjectRecord*>& rs) {
        std::vector<const DemographicCovariates*> demo;
        for (const auto* r : rs) demo.push_back(&r->demographics);
        return build_design(demo, config);
    };
    Design design = design_of(fitted);
    Eigen::VectorXd y(static_cast<Eigen::Index>(fitted.size()));
    for (std::size_t i = 0; i < fitted.size(); ++i) y(static_cast<Eigen::Index>(i)) = fitted[i]->raw_score;
    summary.fit = fit_least_squares(design.values, y, design.columns);
    summary.n_fit = static_cast<int>(fitted.size());

    const Eigen::VectorXd pred = summary.fit.predict(design.values);
    for (std::size_t i = 0; i < fitted.size(); ++i)
        fitted[i]->residual_score = fitted[i]->raw_score - pred(static_cast<Eigen::Index>(i));
    if (!test.empty()) {
        const Eigen::VectorXd test_pred = summary.fit.predict(design_of(test).values);
        for (std::size_t i = 0; i < test.size(); ++i)
            test[i]->residual_score = test[i]->raw_score - test_pred(static_cast<Eigen::Index>(i));
    }
    return summary;
}

Eigen::MatrixXd ZScore::apply(const Eigen::MatrixXd& values) const {
    if (values.cols() != mean.size()) throw InvalidInput("z-score: column count mismatch");
    Eigen::MatrixXd out = values.rowwise() - mean;
    for (Eigen::Index j = 0; j < out.cols(); ++j)
        if (stddev(j) >= 1e-12) out.col(j) /= stddev(j);
    return out;
}

ZScore normalize_covariates(const Eigen::MatrixXd& train) {
    if (train.rows() < 1) throw InvalidInput("normalize_covariates: empty training fold");
    ZScore z;
    z.mean = train.colwise().mean();
    z.stddev = ((train.rowwise() - z.mean).colwise().squaredNorm() / static_cast<double>(train.rows())).cwiseSqrt();
    return z;
}

} // namespace voxboost
