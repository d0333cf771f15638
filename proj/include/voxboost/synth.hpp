#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "voxboost/volume.hpp"

namespace voxboost {

enum class Fold { train, validation, test, excluded };

std::string_view fold_name(Fold fold);
Fold parse_fold(std::string_view name);

/// Residualisation covariates. Every field may be missing.
struct DemographicCovariates {
    std::optional<double> brain_volume;        // labelled voxel count
    std::optional<std::string> site;
    std::optional<double> age_months;
    std::optional<std::string> sex;
    std::optional<std::string> ethnicity;
    std::optional<double> parental_education;  // ordinal level 1..5
    std::optional<double> parental_income;     // ordinal level 1..4
    std::optional<std::string> marital_status;

    bool any_missing() const;
};

struct SubjectRecord {
    std::string subject_id;
    std::string volume_path;  // relative to the manifest directory
    Fold fold = Fold::train;
    Eigen::VectorXd derived;  // voxel count per region
    DemographicCovariates demographics;
    double raw_score = 0.0;
    std::optional<double> residual_score;
};

struct CohortConfig {
    int n_train = 200;
    int n_val = 40;
    int n_test = 100;
    int volume_size = 24;
    int n_regions = 123;
    double noise = 2.0;              // score noise standard deviation
    double signal = 4.0;             // amplitude of the volumetric interaction term
    double intensity_noise = 0.05;
    double missing_rate = 0.01;      // per field, train and validation subjects only
    std::uint64_t seed = 17;
    std::vector<std::string> sites{"S01", "S02", "S03", "S04", "S05"};
    std::vector<std::string> sexes{"F", "M"};
    std::vector<std::string> ethnicities{"white", "black", "hispanic", "asian", "other"};
    std::vector<std::string> marital_statuses{"married", "divorced", "separated", "never_married"};

    int total() const { return n_train + n_val + n_test; }
    /// Throws ConfigError, including when the region grid does not fit the volume.
    void validate() const;

    friend bool operator==(const CohortConfig&, const CohortConfig&) = default;
};

/// Regions sit in a cubic grid of equal cells centred in the volume; region
/// j occupies cell (j / g^2, (j / g) % g, j % g) with g = ceil(cbrt(n_regions)).
/// Each region is an axis-aligned ellipsoid centred in its cell with radii of
/// at most half the cell edge, so regions never overlap or leave their cell.
struct RegionTemplate {
    int grid = 0;       // cells per axis
    int cell_edge = 0;  // voxels
    int margin = 0;     // offset of the grid from the volume origin
    int n_regions = 0;

    static RegionTemplate for_config(const CohortConfig& config);

    /// (z, y, x) of the first voxel of region j's cell.
    std::array<int, 3> cell_origin(int region) const;
    /// Tissue class (1..3) written to the label channel.
    static int tissue_class(int region) { return 1 + region % 3; }
};

/// Mean and standard deviation of a single region's voxel count under the
/// radius distribution, estimated once from a fixed Monte Carlo sample.
struct RegionCountStats {
    double mean = 0.0;
    double stddev = 1.0;
};

RegionCountStats region_count_stats(const RegionTemplate& layout);

/// Regions entering the planted interaction: (a * b) + (c * d).
inline constexpr std::array<int, 4> kSignalRegions{7, 31, 62, 98};

/// Noise-free score: linear demographic part plus signal * (z_a z_b + z_c z_d)
/// of standardised region counts. Demographics must be complete.
double planted_score(const CohortConfig& config, const RegionCountStats& stats, const DemographicCovariates& demo,
                     const Eigen::VectorXd& derived);

struct GeneratedSubject {
    SubjectRecord record;
    Volume<float> volume;  // channel 0 intensity, channel 1 tissue label
};

/// One subject from its own seed. Missing demographics are only drawn for
/// train and validation subjects.
GeneratedSubject generate_subject(const CohortConfig& config, int index, Fold fold, std::uint64_t seed);

/// Fold per subject index: a seeded shuffle, then the first n_train are
/// train, the next n_val validation, the rest test.
std::vector<Fold> split_folds(int n_subjects, const CohortConfig& config);

std::string subject_id(int index);

/// Generates every subject, writes `volumes/<id>.vvol` below `directory` and
/// returns the records (residual scores not yet filled).
std::vector<SubjectRecord> generate_cohort(const CohortConfig& config, const std::filesystem::path& directory);

/// Manifest columns: subject_id, fold, volume_path, raw_score, residual_score,
/// the demographic columns, d001..dNNN. Missing values are empty fields and
/// test-fold residual scores are never written here.
void write_manifest(const std::filesystem::path& path, const std::vector<SubjectRecord>& records);
std::vector<SubjectRecord> read_manifest(const std::filesystem::path& path);

/// Sealed test answers: subject_id, residual_score.
void write_answers(const std::filesystem::path& path, const std::vector<SubjectRecord>& records);

} // namespace voxboost
