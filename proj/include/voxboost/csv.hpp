#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace voxboost {

/// Minimal RFC-4180-ish CSV: comma separated, optional double quotes,
/// '.' decimal separator, first line is the header.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Column position by name, or nullopt.
    std::optional<std::size_t> find(std::string_view name) const;
    /// Column position by name; throws InvalidInput when absent.
    std::size_t column(std::string_view name) const;
};

CsvTable read_csv(std::istream& in);
CsvTable read_csv(const std::filesystem::path& path);
void write_csv(std::ostream& out, const CsvTable& table);
void write_csv(const std::filesystem::path& path, const CsvTable& table);

/// Reals are written with 17 significant digits so they round-trip exactly.
std::string format_real(double value);
/// Shortest text that parses back to the same double.
std::string format_shortest(double value);
double parse_real(std::string_view text);
/// Empty field -> nullopt (missing value).
std::optional<double> parse_optional_real(std::string_view text);
long long parse_integer(std::string_view text);

/// Table whose first column is a subject id and remaining columns are reals.
struct LabeledMatrix {
    std::vector<std::string> ids;
    std::vector<std::string> columns;
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> values;
};

LabeledMatrix read_labeled_matrix(const std::filesystem::path& path);
void write_labeled_matrix(const std::filesystem::path& path, const LabeledMatrix& table,
                          std::string_view id_header = "subject_id");

/// Open for writing, creating parent directories; throws IoError on failure.
std::ofstream open_output(const std::filesystem::path& path, bool binary = false);
std::ifstream open_input(const std::filesystem::path& path, bool binary = false);

} // namespace voxboost
