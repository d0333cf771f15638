// voxboost: synthetic cohort, 3D encoder features and elastic-net GBM from the command line.

#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "voxboost/config.hpp"
#include "voxboost/csv.hpp"
#include "voxboost/error.hpp"

using namespace voxboost;

namespace {

constexpr int kExitDomain = 1;
constexpr int kExitEnvironment = 2;

struct Options {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string workdir;
    int workers = 0;
    bool quiet = false;
};

RunConfig build_config(const Options& opt) {
    RunConfig config;
    if (!opt.config_path.empty()) config = load_config(opt.config_path);
    apply_overrides(config, opt.overrides);
    if (const char* env = std::getenv("VOXBOOST_WORKDIR"); env && *env) config.workdir = env;
    if (!opt.workdir.empty()) config.workdir = opt.workdir;
    if (opt.workers > 0) config.workers = opt.workers;
    return config;
}

Workspace workspace_of(const RunConfig& config, const Options& opt) {
    Workspace ws = config.workspace();
    if (!opt.quiet) ws.log = &std::cerr;
    return ws;
}

void print_report(const ExperimentReport& report, const Workspace& ws) {
    write_report(ws, report);
    std::cout << format_report(report) << "\nReport written to " << ws.report_text().string() << "\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Synthetic-cohort pipeline: 3D convolutional encoder features and an elastic-net "
                 "gradient boosting machine for residualised score regression."};
    app.require_subcommand(1);
    app.fallthrough();

    Options opt;
    app.add_option("-c,--config", opt.config_path, "Config file of 'section.key = value' lines")
        ->check(CLI::ExistingFile);
    app.add_option("-s,--set", opt.overrides, "Override one config key, e.g. --set gbm.n_trees=50 (repeatable)");
    app.add_option("-w,--workdir", opt.workdir, "Working directory (overrides VOXBOOST_WORKDIR and paths.workdir)");
    app.add_option("-j,--workers", opt.workers, "Concurrent grid-search fits (overrides run.workers)")
        ->check(CLI::PositiveNumber);
    app.add_flag("-q,--quiet", opt.quiet, "No progress messages on stderr");

    std::string arm;
    auto add_features = [&](CLI::App* cmd) {
        cmd->add_option("-f,--features", arm, "Feature set: derived, cnn6 or cnn3 (default: cnn at pipeline.feature_scale)")
            ->check(CLI::IsMember({"derived", "cnn6", "cnn3"}));
    };

    auto* synth = app.add_subcommand("synth", "Generate the cohort: volumes, manifest and sealed test answers");
    auto* train_encoder = app.add_subcommand("train-encoder", "Train the encoder on the derived covariates");
    auto* extract = app.add_subcommand("extract", "Write encoder features for every subject");
    int scale = 0;
    extract->add_option("--scale", scale, "Feature map edge, 6 or 3 (default pipeline.feature_scale)")
        ->check(CLI::IsMember({3, 6}));
    auto* gridsearch = app.add_subcommand("gridsearch", "Two-stage grid search over GBM hyperparameters");
    add_features(gridsearch);
    auto* train_gbm = app.add_subcommand("train-gbm", "Fit the grid winner on the train fold");
    add_features(train_gbm);
    auto* predict_cmd = app.add_subcommand("predict", "Write subject_id,prediction for one fold");
    add_features(predict_cmd);
    std::string fold = "test";
    predict_cmd->add_option("--fold", fold, "train, validation or test")
        ->check(CLI::IsMember({"train", "validation", "test"}))
        ->capture_default_str();
    auto* score = app.add_subcommand("score", "MSE of a predictions file against an answers file");
    std::string predictions_path, answers_path;
    score->add_option("predictions", predictions_path, "CSV with subject_id,prediction")->required();
    score->add_option("answers", answers_path, "CSV with subject_id and residual_score (or prediction)")->required();
    auto* ablation = app.add_subcommand("ablation", "Encoder features versus derived covariates, same grid protocol");
    auto* pipeline = app.add_subcommand("pipeline", "synth, then the full ablation, then the report");
    auto* print_config = app.add_subcommand("print-config", "Print the effective configuration");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitDomain;
    }

    try {
        const RunConfig config = build_config(opt);
        if (print_config->parsed()) {
            std::cout << format_config(config);
            return 0;
        }
        if (score->parsed()) {
            std::cout << "MSE " << format_real(score_predictions(predictions_path, answers_path)) << "\n";
            return 0;
        }

        const PipelineConfig pc = config.resolved();
        const Workspace ws = workspace_of(config, opt);
        const std::string chosen_arm = arm.empty() ? cnn_arm(pc.feature_scale) : arm;

        if (synth->parsed()) {
            const auto s = run_synth(pc, ws);
            std::cout << "cohort: " << s.n_train << " train, " << s.n_val << " validation, " << s.n_test << " test, "
                      << s.n_excluded << " excluded for missing covariates\n"
                      << "manifest: " << ws.manifest.string() << "\nanswers: " << ws.answers.string() << "\n";
        } else if (train_encoder->parsed()) {
            const auto r = run_train_encoder(pc, ws);
            std::cout << "best epoch " << r.best_epoch << " (val MSE " << format_real(r.log[static_cast<std::size_t>(r.best_epoch)].val_mse)
                      << ")\ncheckpoint: " << ws.encoder_checkpoint().string() << "\n";
        } else if (extract->parsed()) {
            const int s = scale ? scale : pc.feature_scale;
            run_extract(pc, ws, s);
            std::cout << "features: " << ws.features(s).string() << "\n";
        } else if (gridsearch->parsed()) {
            const auto r = run_gridsearch(pc, ws, chosen_arm);
            std::cout << r.rows.size() << " configurations, winner index " << r.winner().index << " (val MSE "
                      << format_real(r.winner().val_mse) << ")\ngrid: " << ws.grid_csv(chosen_arm).string() << "\n";
        } else if (train_gbm->parsed()) {
            const auto m = run_train_gbm(pc, ws, chosen_arm);
            std::cout << m.stages.size() << " stages\nmodel: " << ws.model(chosen_arm).string() << "\n";
        } else if (predict_cmd->parsed()) {
            const auto f = parse_fold(fold);
            const auto rows = run_predict(pc, ws, chosen_arm, f);
            std::cout << rows << " predictions\npredictions: " << ws.predictions(chosen_arm, f).string() << "\n";
        } else if (ablation->parsed()) {
            print_report(run_ablation(pc, ws), ws);
        } else if (pipeline->parsed()) {
            run_synth(pc, ws);
            print_report(run_ablation(pc, ws), ws);
        }
        return 0;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitEnvironment;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitEnvironment;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDomain;
    }
}
