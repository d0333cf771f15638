#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "voxboost/encoder.hpp"
#include "voxboost/gbm.hpp"
#include "voxboost/grid_search.hpp"
#include "voxboost/synth.hpp"

namespace voxboost {

struct PipelineConfig {
    CohortConfig cohort;
    EncoderConfig encoder;
    SgdMomentumConfig sgd;
    GbmHyperparams gbm;  // subsample and seed for every grid fit; the rest is used without a grid
    GridSpec grid;
    int feature_scale = 6;        // 6 or 3
    bool compare_scales = false;  // also run a CNN+GBM arm on the other scale
    int workers = 1;

    void validate() const;
};

/// On-disk layout of one experiment. Every stage reads its inputs from
/// here and writes its outputs here, so stages can be rerun in isolation.
struct Workspace {
    std::filesystem::path manifest;  // cohort/manifest.csv
    std::filesystem::path answers;   // cohort/answers.csv (sealed test residuals)
    std::filesystem::path outputs;   // results/
    std::ostream* log = nullptr;     // progress messages, none when null

    static Workspace under(const std::filesystem::path& root);

    std::filesystem::path cohort_dir() const { return manifest.parent_path(); }
    std::filesystem::path encoder_checkpoint() const { return outputs / "encoder" / "encoder.vxenc"; }
    std::filesystem::path encoder_log() const { return outputs / "encoder" / "epochs.csv"; }
    std::filesystem::path features(int scale) const;
    std::filesystem::path arm_dir(const std::string& arm) const { return outputs / "gbm" / arm; }
    std::filesystem::path grid_csv(const std::string& arm) const { return arm_dir(arm) / "grid.csv"; }
    std::filesystem::path model(const std::string& arm) const { return arm_dir(arm) / "model.gbm"; }
    std::filesystem::path predictions(const std::string& arm, Fold fold) const;
    std::filesystem::path report_text() const { return outputs / "report.txt"; }
    std::filesystem::path report_csv() const { return outputs / "report.csv"; }
};

/// "derived" (the region covariates), "cnn6" and "cnn3" (encoder features
/// at the 6^3 and 3^3 scales).
std::vector<std::string> known_arms();
std::string arm_label(const std::string& arm);
std::string cnn_arm(int scale);

struct CohortSummary {
    int n_train = 0;
    int n_val = 0;
    int n_test = 0;
    int n_excluded = 0;
};

CohortSummary run_synth(const PipelineConfig& config, const Workspace& ws);

/// Trains on the train and test folds' covariates, selects the epoch by
/// validation covariate MSE, writes the checkpoint and the epoch log.
TrainResult run_train_encoder(const PipelineConfig& config, const Workspace& ws);

/// Features for every non-excluded subject at `scale`.
void run_extract(const PipelineConfig& config, const Workspace& ws, int scale);

GridResult run_gridsearch(const PipelineConfig& config, const Workspace& ws, const std::string& arm);

/// Fits the grid winner of `arm` on the train fold; falls back to the gbm
/// section when the arm has no grid results.
GbmModel run_train_gbm(const PipelineConfig& config, const Workspace& ws, const std::string& arm);

/// Writes `subject_id,prediction` for every subject of `fold`; returns the row count.
std::size_t run_predict(const PipelineConfig& config, const Workspace& ws, const std::string& arm, Fold fold);

/// MSE = (1/N) sum (y - yhat)^2 over the rows of the predictions file, in
/// file order. The truth file is matched by subject_id and read from its
/// residual_score column, or its prediction column when there is none.
double score_predictions(const std::filesystem::path& predictions, const std::filesystem::path& truth);

struct ArmReport {
    std::string arm;
    std::string label;
    GridResult grid;
    double train_mse = 0.0;
    double val_mse = 0.0;
    double test_mse = 0.0;
};

struct ExperimentReport {
    std::vector<ArmReport> arms;  // the CNN+GBM arm at the configured scale comes first
    int encoder_best_epoch = -1;

    const ArmReport& arm(const std::string& name) const;
};

/// Grid search, final fit, predictions for all folds, then scoring from the
/// written prediction files.
ArmReport run_arm(const PipelineConfig& config, const Workspace& ws, const std::string& arm);

/// Encoder, feature extraction and the CNN+GBM arm(s).
ExperimentReport run_cnn_gbm(const PipelineConfig& config, const Workspace& ws);

/// Both arms of the ablation: CNN features versus the derived covariates.
ExperimentReport run_ablation(const PipelineConfig& config, const Workspace& ws);

void write_report(const Workspace& ws, const ExperimentReport& report);
std::string format_report(const ExperimentReport& report);

} // namespace voxboost
