#include "voxboost/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "voxboost/csv.hpp"
#include "voxboost/error.hpp"
#include "voxboost/rng.hpp"

namespace voxboost {

namespace {

constexpr std::uint64_t kFoldStream = 0xF01D5;
constexpr std::uint64_t kCalibrationSeed = 0x5EED;
constexpr int kCalibrationDraws = 4096;

constexpr double kBaseScore = 100.0;
constexpr double kBrainVolumeSlope = 0.002;
constexpr double kAgeSlope = 0.12;
constexpr double kEducationSlope = 1.1;
constexpr double kIncomeSlope = 0.9;

// Tissue intensity means for background and classes 1..3.
constexpr std::array<double, 4> kTissueIntensity{0.1, 0.35, 0.6, 0.85};
constexpr double kFieldAmplitude = 0.05;

const char* const kDemographicColumns[] = {"brain_volume", "site",  "age_months", "sex", "ethnicity",
                                           "parental_education", "parental_income", "marital_status"};

std::size_t level_of(const std::vector<std::string>& vocabulary, const std::string& value, const char* field) {
    for (std::size_t i = 0; i < vocabulary.size(); ++i)
        if (vocabulary[i] == value) return i;
    throw InvalidInput(std::string("unknown ") + field + " level '" + value + "'");
}

// Offsets of categorical levels; level 0 is the reference.
double site_offset(std::size_t i) { return 2.0 * std::sin(1.3 * static_cast<double>(i)); }
double ethnicity_offset(std::size_t i) { return 1.2 * (std::cos(0.9 * static_cast<double>(i)) - 1.0); }
double marital_offset(std::size_t i) { return -0.7 * static_cast<double>(i); }
double sex_offset(std::size_t i) { return 0.8 * static_cast<double>(i); }

struct Ellipsoid {
    double rz, ry, rx;
};

// Radii of one subject: a global scale times an independent factor per axis.
double draw_scale(Xoshiro256& rng) { return rng.uniform(0.85, 1.0); }

Ellipsoid draw_ellipsoid(Xoshiro256& rng, int cell_edge, double scale) {
    const double half = 0.5 * cell_edge * scale;
    const double rz = half * rng.uniform(0.55, 1.0);
    const double ry = half * rng.uniform(0.55, 1.0);
    const double rx = half * rng.uniform(0.55, 1.0);
    return {rz, ry, rx};
}

template <typename Visit>
void for_each_inside(int cell_edge, const Ellipsoid& e, Visit&& visit) {
    const double c = 0.5 * (cell_edge - 1);
    for (int z = 0; z < cell_edge; ++z)
        for (int y = 0; y < cell_edge; ++y)
            for (int x = 0; x < cell_edge; ++x) {
                const double dz = (z - c) / e.rz, dy = (y - c) / e.ry, dx = (x - c) / e.rx;
                if (dz * dz + dy * dy + dx * dx <= 1.0) visit(z, y, x);
            }
}

template <typename T>
T pick(Xoshiro256& rng, const std::vector<T>& values) {
    return values[static_cast<std::size_t>(rng.below(values.size()))];
}

std::string region_column(int j) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "d%03d", j + 1);
    return buf;
}

std::string optional_text(const std::optional<std::string>& v) { return v ? *v : std::string(); }
std::string optional_real(const std::optional<double>& v) { return v ? format_real(*v) : std::string(); }

std::optional<std::string> text_field(const std::string& v) {
    if (v.empty()) return std::nullopt;
    return v;
}

} // namespace

std::string_view fold_name(Fold fold) {
    switch (fold) {
    case Fold::train: return "train";
    case Fold::validation: return "validation";
    case Fold::test: return "test";
    case Fold::excluded: return "excluded";
    }
    throw InternalError("bad fold");
}

Fold parse_fold(std::string_view name) {
    for (Fold f : {Fold::train, Fold::validation, Fold::test, Fold::excluded})
        if (fold_name(f) == name) return f;
    throw InvalidInput("unknown fold '" + std::string(name) + "'");
}

bool DemographicCovariates::any_missing() const {
    return !brain_volume || !site || !age_months || !sex || !ethnicity || !parental_education || !parental_income ||
           !marital_status;
}

void CohortConfig::validate() const {
    if (n_train < 1 || n_val < 1 || n_test < 1) throw ConfigError("cohort fold counts must all be >= 1");
    if (n_regions < 1) throw ConfigError("cohort n_regions must be >= 1");
    if (!(noise >= 0.0)) throw ConfigError("cohort noise must be >= 0");
    if (!(signal >= 0.0)) throw ConfigError("cohort signal must be >= 0");
    if (!(intensity_noise >= 0.0)) throw ConfigError("cohort intensity_noise must be >= 0");
    if (!(missing_rate >= 0.0 && missing_rate <= 1.0)) throw ConfigError("cohort missing_rate must be in [0, 1]");
    for (const auto* vocab : {&sites, &sexes, &ethnicities, &marital_statuses})
        if (vocab->empty()) throw ConfigError("cohort vocabularies must be non-empty");
    if (n_regions <= kSignalRegions.back())
        throw ConfigError("cohort n_regions must exceed " + std::to_string(kSignalRegions.back()));
    RegionTemplate::for_config(*this);
}

RegionTemplate RegionTemplate::for_config(const CohortConfig& config) {
    RegionTemplate t;
    t.n_regions = config.n_regions;
    while (t.grid * t.grid * t.grid < config.n_regions) ++t.grid;
    t.cell_edge = config.volume_size / t.grid;
    if (t.cell_edge < 4)
        throw ConfigError("region template of " + std::to_string(t.grid) + "^3 cells does not fit volume_size " +
                          std::to_string(config.volume_size) + " (cells need >= 4 voxels per edge)");
    t.margin = (config.volume_size - t.grid * t.cell_edge) / 2;
    return t;
}

std::array<int, 3> RegionTemplate::cell_origin(int region) const {
    return {margin + (region / (grid * grid)) * cell_edge, margin + (region / grid % grid) * cell_edge,
            margin + (region % grid) * cell_edge};
}

RegionCountStats region_count_stats(const RegionTemplate& layout) {
    Xoshiro256 rng(kCalibrationSeed);
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < kCalibrationDraws; ++i) {
        const double scale = draw_scale(rng);
        int count = 0;
        for_each_inside(layout.cell_edge, draw_ellipsoid(rng, layout.cell_edge, scale), [&](int, int, int) { ++count; });
        sum += count;
        sum_sq += static_cast<double>(count) * count;
    }
    const double mean = sum / kCalibrationDraws;
    const double var = sum_sq / kCalibrationDraws - mean * mean;
    return {mean, std::sqrt(std::max(var, 1e-12))};
}

double planted_score(const CohortConfig& config, const RegionCountStats& stats, const DemographicCovariates& demo,
                     const Eigen::VectorXd& derived) {
    if (demo.any_missing()) throw InvalidInput("planted_score needs complete demographics");
    if (derived.size() != config.n_regions) throw InvalidInput("planted_score: derived covariate count mismatch");
    double score = kBaseScore + kBrainVolumeSlope * *demo.brain_volume + kAgeSlope * (*demo.age_months - 120.0) +
                   kEducationSlope * *demo.parental_education + kIncomeSlope * *demo.parental_income;
    score += site_offset(level_of(config.sites, *demo.site, "site"));
    score += sex_offset(level_of(config.sexes, *demo.sex, "sex"));
    score += ethnicity_offset(level_of(config.ethnicities, *demo.ethnicity, "ethnicity"));
    score += marital_offset(level_of(config.marital_statuses, *demo.marital_status, "marital_status"));
    auto z = [&](int j) { return (derived(j) - stats.mean) / stats.stddev; };
    const auto& r = kSignalRegions;
    return score + config.signal * (z(r[0]) * z(r[1]) + z(r[2]) * z(r[3]));
}

std::string subject_id(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "sub-%04d", index + 1);
    return buf;
}

GeneratedSubject generate_subject(const CohortConfig& config, int index, Fold fold, std::uint64_t seed) {
    const RegionTemplate layout = RegionTemplate::for_config(config);
    const int S = config.volume_size;
    Xoshiro256 rng(seed);

    GeneratedSubject out{{}, Volume<float>::cube(2, S)};
    SubjectRecord& rec = out.record;
    rec.subject_id = subject_id(index);
    rec.volume_path = "volumes/" + rec.subject_id + ".vvol";
    rec.fold = fold;
    rec.derived = Eigen::VectorXd::Zero(config.n_regions);

    const double scale = draw_scale(rng);
    const double phase_z = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double phase_y = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double phase_x = rng.uniform(0.0, 2.0 * std::numbers::pi);
    Volume<float>& vol = out.volume;
    for (int j = 0; j < config.n_regions; ++j) {
        const auto e = draw_ellipsoid(rng, layout.cell_edge, scale);
        const auto o = layout.cell_origin(j);
        const float label = static_cast<float>(RegionTemplate::tissue_class(j));
        int count = 0;
        for_each_inside(layout.cell_edge, e, [&](int z, int y, int x) {
            vol(1, o[0] + z, o[1] + y, o[2] + x) = label;
            ++count;
        });
        rec.derived(j) = count;
    }

    DemographicCovariates& demo = rec.demographics;
    demo.brain_volume = rec.derived.sum();
    demo.site = pick(rng, config.sites);
    demo.age_months = rng.uniform(108.0, 132.0);
    demo.sex = pick(rng, config.sexes);
    demo.ethnicity = pick(rng, config.ethnicities);
    demo.parental_education = 1.0 + static_cast<double>(rng.below(5));
    demo.parental_income = 1.0 + static_cast<double>(rng.below(4));
    demo.marital_status = pick(rng, config.marital_statuses);

    const double score_noise = rng.normal();
    rec.raw_score = planted_score(config, region_count_stats(layout), demo, rec.derived) + config.noise * score_noise;

    // Missingness is drawn for every subject so the stream does not depend on the fold.
    std::array<bool, 7> missing{};
    for (bool& m : missing) m = rng.uniform() < config.missing_rate;
    if (fold == Fold::train || fold == Fold::validation) {
        if (missing[0]) demo.site.reset();
        if (missing[1]) demo.age_months.reset();
        if (missing[2]) demo.sex.reset();
        if (missing[3]) demo.ethnicity.reset();
        if (missing[4]) demo.parental_education.reset();
        if (missing[5]) demo.parental_income.reset();
        if (missing[6]) demo.marital_status.reset();
    }

    const double w = 2.0 * std::numbers::pi / S;
    for (int z = 0; z < S; ++z)
        for (int y = 0; y < S; ++y)
            for (int x = 0; x < S; ++x) {
                const int tissue = static_cast<int>(vol(1, z, y, x));
                const double field =
                    kFieldAmplitude * std::sin(w * z + phase_z) * std::sin(w * y + phase_y) * std::sin(w * x + phase_x);
                vol(0, z, y, x) = static_cast<float>(kTissueIntensity[static_cast<std::size_t>(tissue)] + field +
                                                     config.intensity_noise * rng.normal());
            }
    return out;
}

std::vector<Fold> split_folds(int n_subjects, const CohortConfig& config) {
    if (n_subjects != config.total())
        throw ConfigError("fold counts " + std::to_string(config.n_train) + "/" + std::to_string(config.n_val) + "/" +
                          std::to_string(config.n_test) + " do not sum to " + std::to_string(n_subjects) +
                          " subjects");
    std::vector<int> order(static_cast<std::size_t>(n_subjects));
    for (int i = 0; i < n_subjects; ++i) order[static_cast<std::size_t>(i)] = i;
    Xoshiro256 rng(derive_seed(config.seed, kFoldStream));
    rng.shuffle(std::span<int>(order));
    std::vector<Fold> folds(static_cast<std::size_t>(n_subjects));
    for (int rank = 0; rank < n_subjects; ++rank)
        folds[static_cast<std::size_t>(order[static_cast<std::size_t>(rank)])] =
            rank < config.n_train ? Fold::train : rank < config.n_train + config.n_val ? Fold::validation : Fold::test;
    return folds;
}

std::vector<SubjectRecord> generate_cohort(const CohortConfig& config, const std::filesystem::path& directory) {
    config.validate();
    const auto folds = split_folds(config.total(), config);
    std::vector<SubjectRecord> records;
    records.reserve(folds.size());
    for (int i = 0; i < config.total(); ++i) {
        auto subject = generate_subject(config, i, folds[static_cast<std::size_t>(i)], derive_seed(config.seed, i));
        write_vvol(directory / subject.record.volume_path, subject.volume);
        records.push_back(std::move(subject.record));
    }
    return records;
}

void write_manifest(const std::filesystem::path& path, const std::vector<SubjectRecord>& records) {
    CsvTable table;
    table.header = {"subject_id", "fold", "volume_path", "raw_score", "residual_score"};
    for (const char* c : kDemographicColumns) table.header.emplace_back(c);
    const Eigen::Index regions = records.empty() ? 0 : records.front().derived.size();
    for (int j = 0; j < regions; ++j) table.header.push_back(region_column(j));

    for (const auto& r : records) {
        if (r.derived.size() != regions) throw InvalidInput("write_manifest: inconsistent region counts");
        const auto& d = r.demographics;
        std::vector<std::string> row{r.subject_id,
                                     std::string(fold_name(r.fold)),
                                     r.volume_path,
                                     format_real(r.raw_score),
                                     r.fold == Fold::test ? std::string() : optional_real(r.residual_score),
                                     optional_real(d.brain_volume),
                                     optional_text(d.site),
                                     optional_real(d.age_months),
                                     optional_text(d.sex),
                                     optional_text(d.ethnicity),
                                     optional_real(d.parental_education),
                                     optional_real(d.parental_income),
                                     optional_text(d.marital_status)};
        for (int j = 0; j < regions; ++j) row.push_back(format_real(r.derived(j)));
        table.rows.push_back(std::move(row));
    }
    write_csv(path, table);
}

std::vector<SubjectRecord> read_manifest(const std::filesystem::path& path) {
    const CsvTable table = read_csv(path);
    const auto id = table.column("subject_id"), fold = table.column("fold"), vol = table.column("volume_path"),
               raw = table.column("raw_score"), res = table.column("residual_score");
    std::array<std::size_t, 8> demo{};
    for (std::size_t k = 0; k < demo.size(); ++k) demo[k] = table.column(kDemographicColumns[k]);
    std::vector<std::size_t> regions;
    for (int j = 0;; ++j) {
        const auto c = table.find(region_column(j));
        if (!c) break;
        regions.push_back(*c);
    }
    if (regions.empty()) throw InvalidInput(path.string() + ": manifest has no derived covariate columns");

    std::vector<SubjectRecord> records;
    for (const auto& row : table.rows) {
        SubjectRecord r;
        r.subject_id = row[id];
        r.fold = parse_fold(row[fold]);
        r.volume_path = row[vol];
        r.raw_score = parse_real(row[raw]);
        r.residual_score = parse_optional_real(row[res]);
        auto& d = r.demographics;
        d.brain_volume = parse_optional_real(row[demo[0]]);
        d.site = text_field(row[demo[1]]);
        d.age_months = parse_optional_real(row[demo[2]]);
        d.sex = text_field(row[demo[3]]);
        d.ethnicity = text_field(row[demo[4]]);
        d.parental_education = parse_optional_real(row[demo[5]]);
        d.parental_income = parse_optional_real(row[demo[6]]);
        d.marital_status = text_field(row[demo[7]]);
        r.derived.resize(static_cast<Eigen::Index>(regions.size()));
        for (std::size_t j = 0; j < regions.size(); ++j)
            r.derived(static_cast<Eigen::Index>(j)) = parse_real(row[regions[j]]);
        records.push_back(std::move(r));
    }
    return records;
}

void write_answers(const std::filesystem::path& path, const std::vector<SubjectRecord>& records) {
    CsvTable table;
    table.header = {"subject_id", "residual_score"};
    for (const auto& r : records) {
        if (r.fold != Fold::test) continue;
        if (!r.residual_score) throw InvalidInput("write_answers: test subject " + r.subject_id + " has no residual");
        table.rows.push_back({r.subject_id, format_real(*r.residual_score)});
    }
    write_csv(path, table);
}

} // namespace voxboost
