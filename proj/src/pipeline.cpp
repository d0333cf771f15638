#include "voxboost/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "voxboost/csv.hpp"
#include "voxboost/error.hpp"
#include "voxboost/residualize.hpp"

namespace voxboost {

namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename... Parts>
void note(const Workspace& ws, const Parts&... parts) {
    if (!ws.log) return;
    ((*ws.log) << ... << parts) << '\n';
    ws.log->flush();
}

void require_file(const std::filesystem::path& path, const char* produced_by) {
    if (!std::filesystem::exists(path))
        throw IoError("missing " + path.string() + " (run '" + produced_by + "' first)");
}

std::vector<SubjectRecord> load_records(const Workspace& ws) {
    require_file(ws.manifest, "synth");
    return read_manifest(ws.manifest);
}

std::vector<const SubjectRecord*> in_folds(const std::vector<SubjectRecord>& records, std::initializer_list<Fold> folds) {
    std::vector<const SubjectRecord*> out;
    for (const auto& r : records)
        for (Fold f : folds)
            if (r.fold == f) out.push_back(&r);
    return out;
}

Eigen::MatrixXd derived_matrix(const std::vector<const SubjectRecord*>& records) {
    if (records.empty()) return {};
    Eigen::MatrixXd out(static_cast<Eigen::Index>(records.size()), records.front()->derived.size());
    for (std::size_t i = 0; i < records.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = records[i]->derived;
    return out;
}

std::vector<Volume<double>> load_inputs(const std::vector<const SubjectRecord*>& records, const Workspace& ws,
                                        const InputNormalization& norm) {
    std::vector<Volume<double>> out;
    out.reserve(records.size());
    for (const auto* r : records) out.push_back(norm.apply(read_vvol(ws.cohort_dir() / r->volume_path)));
    return out;
}

InputNormalization fit_normalization(const std::vector<const SubjectRecord*>& train, const Workspace& ws) {
    double sum = 0.0, sum_sq = 0.0, count = 0.0;
    for (const auto* r : train) {
        const auto vol = read_vvol(ws.cohort_dir() / r->volume_path);
        const auto intensity = vol.matrix().row(0).cast<double>();
        sum += intensity.sum();
        sum_sq += intensity.squaredNorm();
        count += static_cast<double>(intensity.size());
    }
    InputNormalization norm;
    norm.intensity_mean = sum / count;
    const double var = sum_sq / count - norm.intensity_mean * norm.intensity_mean;
    norm.intensity_scale = var > 1e-24 ? 1.0 / std::sqrt(var) : 1.0;
    return norm;
}

int arm_scale(const std::string& arm) {
    if (arm == "cnn6") return 6;
    if (arm == "cnn3") return 3;
    return 0;
}

void check_arm(const std::string& arm) {
    for (const auto& known : known_arms())
        if (arm == known) return;
    throw ConfigError("unknown feature set '" + arm + "' (expected derived, cnn6 or cnn3)");
}

struct FoldData {
    std::vector<std::string> ids;
    FeatureMatrix X;
    TargetVector y;  // empty for the test fold
};

// Features of `arm` for the subjects of one fold, in manifest order.
FoldData fold_data(const std::vector<SubjectRecord>& records, const Workspace& ws, const std::string& arm, Fold fold) {
    check_arm(arm);
    FoldData data;
    const auto members = in_folds(records, {fold});
    if (members.empty()) throw InvalidInput(std::string("fold '") + std::string(fold_name(fold)) + "' is empty");
    for (const auto* r : members) data.ids.push_back(r->subject_id);
    if (arm == "derived") {
        data.X = derived_matrix(members);
    } else {
        const auto path = ws.features(arm_scale(arm));
        require_file(path, "extract");
        const auto table = read_labeled_matrix(path);
        std::map<std::string, Eigen::Index> row_of;
        for (std::size_t i = 0; i < table.ids.size(); ++i) row_of[table.ids[i]] = static_cast<Eigen::Index>(i);
        data.X.resize(static_cast<Eigen::Index>(members.size()), table.values.cols());
        for (std::size_t i = 0; i < members.size(); ++i) {
            const auto it = row_of.find(members[i]->subject_id);
            if (it == row_of.end())
                throw InvalidInput(path.string() + ": no features for " + members[i]->subject_id);
            data.X.row(static_cast<Eigen::Index>(i)) = table.values.row(it->second);
        }
    }
    if (fold != Fold::test) {
        data.y.resize(static_cast<Eigen::Index>(members.size()));
        for (std::size_t i = 0; i < members.size(); ++i) {
            if (!members[i]->residual_score)
                throw InvalidInput("subject " + members[i]->subject_id + " has no residual score");
            data.y(static_cast<Eigen::Index>(i)) = *members[i]->residual_score;
        }
    }
    return data;
}

GbmHyperparams read_grid_winner(const std::filesystem::path& path) {
    const auto table = read_csv(path);
    const auto winner = table.column("winner");
    for (const auto& row : table.rows) {
        if (row[winner] != "1") continue;
        GbmHyperparams hp;
        hp.learning_rate = parse_real(row[table.column("learning_rate")]);
        hp.n_trees = static_cast<int>(parse_integer(row[table.column("n_trees")]));
        hp.max_depth = static_cast<int>(parse_integer(row[table.column("max_depth")]));
        hp.lambda = parse_real(row[table.column("lambda")]);
        hp.alpha = parse_real(row[table.column("alpha")]);
        hp.subsample = parse_real(row[table.column("subsample")]);
        hp.seed = std::stoull(row[table.column("seed")]);
        hp.validate();
        return hp;
    }
    throw InvalidInput(path.string() + ": no winner row");
}

std::map<std::string, double> truth_values(const std::filesystem::path& path) {
    const auto table = read_csv(path);
    const auto id = table.column("subject_id");
    const auto value = table.find("residual_score") ? table.column("residual_score") : table.column("prediction");
    std::map<std::string, double> out;
    for (const auto& row : table.rows) {
        if (row[value].empty()) continue;
        if (!out.emplace(row[id], parse_real(row[value])).second)
            throw InvalidInput(path.string() + ": duplicate subject " + row[id]);
    }
    return out;
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

} // namespace

void PipelineConfig::validate() const {
    cohort.validate();
    encoder.validate();
    sgd.validate();
    gbm.validate();
    grid.validate();
    if (feature_scale != 6 && feature_scale != 3) throw ConfigError("pipeline feature_scale must be 6 or 3");
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (encoder.input_size != cohort.volume_size)
        throw ConfigError("encoder input_size (" + std::to_string(encoder.input_size) +
                          ") must equal cohort volume_size (" + std::to_string(cohort.volume_size) + ")");
    if (encoder.head_outputs != cohort.n_regions)
        throw ConfigError("encoder head_outputs must equal cohort n_regions");
    if (encoder.input_channels != 2) throw ConfigError("encoder input_channels must be 2 (intensity, label)");
}

Workspace Workspace::under(const std::filesystem::path& root) {
    Workspace ws;
    ws.manifest = root / "cohort" / "manifest.csv";
    ws.answers = root / "cohort" / "answers.csv";
    ws.outputs = root / "results";
    return ws;
}

std::filesystem::path Workspace::features(int scale) const {
    return outputs / "features" / ("cnn" + std::to_string(scale) + ".csv");
}

std::filesystem::path Workspace::predictions(const std::string& arm, Fold fold) const {
    return arm_dir(arm) / ("predictions_" + std::string(fold_name(fold)) + ".csv");
}

std::vector<std::string> known_arms() { return {"derived", "cnn6", "cnn3"}; }

std::string cnn_arm(int scale) { return "cnn" + std::to_string(scale); }

std::string arm_label(const std::string& arm) {
    if (arm == "derived") return "Derived Data+GBM";
    if (arm == "cnn6") return "CNN+GBM";
    if (arm == "cnn3") return "CNN+GBM (3^3 features)";
    throw ConfigError("unknown feature set '" + arm + "'");
}

CohortSummary run_synth(const PipelineConfig& config, const Workspace& ws) {
    config.cohort.validate();
    note(ws, "synth: generating ", config.cohort.total(), " subjects at ", config.cohort.volume_size, "^3");
    auto records = generate_cohort(config.cohort, ws.cohort_dir());
    const auto fit = residualize(records, config.cohort);
    write_manifest(ws.manifest, records);
    write_answers(ws.answers, records);
    CohortSummary s;
    for (const auto& r : records) {
        s.n_train += r.fold == Fold::train;
        s.n_val += r.fold == Fold::validation;
        s.n_test += r.fold == Fold::test;
    }
    s.n_excluded = fit.n_excluded;
    return s;
}

TrainResult run_train_encoder(const PipelineConfig& config, const Workspace& ws) {
    config.validate();
    const auto records = load_records(ws);
    const auto train_fold = in_folds(records, {Fold::train});
    const auto fit_set = in_folds(records, {Fold::train, Fold::test});
    const auto val_set = in_folds(records, {Fold::validation});
    if (train_fold.empty() || val_set.empty()) throw InvalidInput("encoder needs train and validation subjects");

    auto model = EncoderModel::initialize(config.encoder, config.sgd.seed);
    model.normalization = fit_normalization(train_fold, ws);
    const auto targets = normalize_covariates(derived_matrix(train_fold));
    const auto fit_inputs = load_inputs(fit_set, ws, model.normalization);
    const auto val_inputs = load_inputs(val_set, ws, model.normalization);
    note(ws, "train-encoder: ", fit_inputs.size(), " training and ", val_inputs.size(), " validation volumes, ",
         model.parameter_count(), " parameters");

    CsvTable log;
    log.header = {"epoch", "train_mse", "val_mse"};
    auto result = train(model, fit_inputs, targets.apply(derived_matrix(fit_set)), val_inputs,
                        targets.apply(derived_matrix(val_set)), config.sgd, [&](const EpochLog& e) {
                            note(ws, "  epoch ", e.epoch, "  train ", fixed(e.train_mse, 6), "  val ",
                                 fixed(e.val_mse, 6));
                        });
    for (const auto& e : result.log)
        log.rows.push_back({std::to_string(e.epoch), format_real(e.train_mse), format_real(e.val_mse)});
    write_csv(ws.encoder_log(), log);
    save_encoder(ws.encoder_checkpoint(), result.best);
    note(ws, "train-encoder: best epoch ", result.best_epoch);
    return result;
}

void run_extract(const PipelineConfig& config, const Workspace& ws, int scale) {
    require_file(ws.encoder_checkpoint(), "train-encoder");
    const auto model = load_encoder(ws.encoder_checkpoint());
    const auto records = load_records(ws);
    const auto subjects = in_folds(records, {Fold::train, Fold::validation, Fold::test});
    LabeledMatrix table;
    const auto width = feature_length(model.config, scale);
    for (std::size_t j = 0; j < width; ++j) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "f%05zu", j);
        table.columns.emplace_back(buf);
    }
    table.values.resize(static_cast<Eigen::Index>(subjects.size()), static_cast<Eigen::Index>(width));
    for (std::size_t i = 0; i < subjects.size(); ++i) {
        const auto input = model.normalization.apply(read_vvol(ws.cohort_dir() / subjects[i]->volume_path));
        table.ids.push_back(subjects[i]->subject_id);
        table.values.row(static_cast<Eigen::Index>(i)) = extract_features(model, input, scale).transpose();
    }
    write_labeled_matrix(ws.features(scale), table);
    note(ws, "extract: ", subjects.size(), " subjects x ", width, " features at ", scale, "^3");
    (void)config;
}

GridResult run_gridsearch(const PipelineConfig& config, const Workspace& ws, const std::string& arm) {
    config.grid.validate();
    const auto records = load_records(ws);
    const auto train = fold_data(records, ws, arm, Fold::train);
    const auto val = fold_data(records, ws, arm, Fold::validation);
    note(ws, "gridsearch ", arm, ": ", train.X.rows(), " x ", train.X.cols(), " training matrix");
    auto result = two_stage_grid_search(train.X, train.y, val.X, val.y, config.grid, config.gbm, config.workers);
    write_grid_csv(ws.grid_csv(arm), result);
    const auto& w = result.winner();
    note(ws, "gridsearch ", arm, ": ", result.rows.size(), " configurations, winner lr ", w.hyperparams.learning_rate,
         " trees ", w.hyperparams.n_trees, " depth ", w.hyperparams.max_depth, " lambda ", w.hyperparams.lambda,
         " alpha ", w.hyperparams.alpha, " val MSE ", fixed(w.val_mse, 4));
    return result;
}

GbmModel run_train_gbm(const PipelineConfig& config, const Workspace& ws, const std::string& arm) {
    const auto records = load_records(ws);
    GbmHyperparams hp = config.gbm;
    if (std::filesystem::exists(ws.grid_csv(arm))) hp = read_grid_winner(ws.grid_csv(arm));
    hp.validate();
    const auto train = fold_data(records, ws, arm, Fold::train);
    auto model = fit(train.X, train.y, hp);
    save_model(ws.model(arm), model);
    note(ws, "train-gbm ", arm, ": ", model.stages.size(), " stages");
    return model;
}

std::size_t run_predict(const PipelineConfig&, const Workspace& ws, const std::string& arm, Fold fold) {
    if (fold == Fold::excluded) throw InvalidInput("cannot predict the excluded fold");
    require_file(ws.model(arm), "train-gbm");
    const auto model = load_model(ws.model(arm));
    const auto records = load_records(ws);
    const auto data = fold_data(records, ws, arm, fold);
    const auto pred = predict(model, data.X);
    CsvTable table;
    table.header = {"subject_id", "prediction"};
    for (std::size_t i = 0; i < data.ids.size(); ++i)
        table.rows.push_back({data.ids[i], format_real(pred(static_cast<Eigen::Index>(i)))});
    write_csv(ws.predictions(arm, fold), table);
    return table.rows.size();
}

double score_predictions(const std::filesystem::path& predictions, const std::filesystem::path& truth) {
    const auto table = read_csv(predictions);
    const auto id = table.column("subject_id"), value = table.column("prediction");
    const auto answers = truth_values(truth);
    TargetVector yhat(static_cast<Eigen::Index>(table.rows.size())), y(yhat.size());
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        const auto it = answers.find(row[id]);
        if (it == answers.end()) throw InvalidInput(truth.string() + ": no value for subject " + row[id]);
        yhat(static_cast<Eigen::Index>(i)) = parse_real(row[value]);
        y(static_cast<Eigen::Index>(i)) = it->second;
    }
    return evaluate_mse(yhat, y);
}

const ArmReport& ExperimentReport::arm(const std::string& name) const {
    for (const auto& a : arms)
        if (a.arm == name) return a;
    throw InvalidInput("report has no '" + name + "' row");
}

ArmReport run_arm(const PipelineConfig& config, const Workspace& ws, const std::string& arm) {
    ArmReport report;
    report.arm = arm;
    report.label = arm_label(arm);
    report.grid = run_gridsearch(config, ws, arm);
    run_train_gbm(config, ws, arm);
    for (Fold f : {Fold::train, Fold::validation, Fold::test}) run_predict(config, ws, arm, f);
    // Scoring reads only the written prediction files and the truth files.
    report.train_mse = score_predictions(ws.predictions(arm, Fold::train), ws.manifest);
    report.val_mse = score_predictions(ws.predictions(arm, Fold::validation), ws.manifest);
    report.test_mse = score_predictions(ws.predictions(arm, Fold::test), ws.answers);
    note(ws, report.label, ": train ", fixed(report.train_mse, 4), "  val ", fixed(report.val_mse, 4), "  test ",
         fixed(report.test_mse, 4));
    return report;
}

ExperimentReport run_cnn_gbm(const PipelineConfig& config, const Workspace& ws) {
    config.validate();
    ExperimentReport report;
    report.encoder_best_epoch = run_train_encoder(config, ws).best_epoch;
    std::vector<int> scales{config.feature_scale};
    if (config.compare_scales) scales.push_back(config.feature_scale == 6 ? 3 : 6);
    for (int scale : scales) {
        run_extract(config, ws, scale);
        report.arms.push_back(run_arm(config, ws, cnn_arm(scale)));
    }
    return report;
}

ExperimentReport run_ablation(const PipelineConfig& config, const Workspace& ws) {
    auto report = run_cnn_gbm(config, ws);
    report.arms.push_back(run_arm(config, ws, "derived"));
    return report;
}

std::string format_report(const ExperimentReport& report) {
    std::ostringstream out;
    const auto& main = report.arms.front();
    const auto& w = main.grid.winner();
    out << "Experiment report\n\n";
    if (report.encoder_best_epoch >= 0) out << "Encoder best epoch: " << report.encoder_best_epoch << "\n";
    out << "Chosen hyperparameters (" << main.label << "): learning_rate " << format_shortest(w.hyperparams.learning_rate)
        << ", n_trees " << w.hyperparams.n_trees << ", max_depth " << w.hyperparams.max_depth << ", lambda "
        << format_shortest(w.hyperparams.lambda) << ", alpha " << format_shortest(w.hyperparams.alpha) << ", subsample "
        << format_shortest(w.hyperparams.subsample) << "\n\n";

    char line[160];
    out << "Final MSE\n";
    std::snprintf(line, sizeof line, "%-26s %12s %12s %12s\n", "Method", "Train", "Validation", "Test");
    out << line;
    for (const auto& a : report.arms) {
        std::snprintf(line, sizeof line, "%-26s %12.4f %12.4f %12.4f\n", a.label.c_str(), a.train_mse, a.val_mse,
                      a.test_mse);
        out << line;
    }

    out << "\nAblation\n";
    std::snprintf(line, sizeof line, "%-26s %12s %12s\n", "Method", "Train", "Validation");
    out << line;
    for (const char* name : {"derived", "cnn6", "cnn3"})
        for (const auto& a : report.arms)
            if (a.arm == name) {
                std::snprintf(line, sizeof line, "%-26s %12.4f %12.4f\n", a.label.c_str(), a.train_mse, a.val_mse);
                out << line;
            }

    for (const auto& a : report.arms) {
        out << "\nGrid (" << a.label << ", validation MSE)\n";
        std::snprintf(line, sizeof line, "%5s %5s %10s %6s %5s %7s %7s %12s\n", "stage", "index", "lr", "trees",
                      "depth", "lambda", "alpha", "val_mse");
        out << line;
        for (std::size_t i = 0; i < a.grid.rows.size(); ++i) {
            const auto& r = a.grid.rows[i];
            std::snprintf(line, sizeof line, "%5d %5d %10.6g %6d %5d %7.4g %7.4g %12.4f%s\n", r.stage, r.index,
                          r.hyperparams.learning_rate, r.hyperparams.n_trees, r.hyperparams.max_depth,
                          r.hyperparams.lambda, r.hyperparams.alpha, r.val_mse, i == a.grid.best ? "  *" : "");
            out << line;
        }
    }
    return out.str();
}

void write_report(const Workspace& ws, const ExperimentReport& report) {
    auto text = open_output(ws.report_text());
    text << format_report(report);
    if (!text) throw IoError("failed writing " + ws.report_text().string());

    CsvTable table;
    table.header = {"method", "features", "train_mse", "val_mse", "test_mse", "learning_rate",
                    "n_trees", "max_depth", "lambda", "alpha"};
    for (const auto& a : report.arms) {
        const auto& hp = a.grid.winner().hyperparams;
        table.rows.push_back({a.label, a.arm, format_real(a.train_mse), format_real(a.val_mse),
                              format_real(a.test_mse), format_real(hp.learning_rate), std::to_string(hp.n_trees),
                              std::to_string(hp.max_depth), format_real(hp.lambda), format_real(hp.alpha)});
    }
    write_csv(ws.report_csv(), table);
}

} // namespace voxboost
