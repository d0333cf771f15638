#include "voxboost/csv.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "voxboost/error.hpp"

namespace voxboost {

std::optional<std::size_t> CsvTable::find(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return i;
    return std::nullopt;
}

std::size_t CsvTable::column(std::string_view name) const {
    if (auto pos = find(name)) return *pos;
    throw InvalidInput("CSV column not found: " + std::string(name));
}

namespace {

std::vector<std::string> split_record(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else {
            field.push_back(c);
        }
    }
    if (quoted) throw InvalidInput("CSV: unterminated quoted field");
    fields.push_back(std::move(field));
    return fields;
}

std::string quote_if_needed(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

} // namespace

CsvTable read_csv(std::istream& in) {
    CsvTable table;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!have_header) {
            if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
            table.header = split_record(line);
            have_header = true;
            continue;
        }
        if (line.empty()) continue;
        auto fields = split_record(line);
        if (fields.size() != table.header.size())
            throw InvalidInput("CSV: row has " + std::to_string(fields.size()) + " fields, header has " +
                               std::to_string(table.header.size()));
        table.rows.push_back(std::move(fields));
    }
    if (!have_header) throw InvalidInput("CSV: missing header row");
    return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
    auto in = open_input(path);
    return read_csv(in);
}

void write_csv(std::ostream& out, const CsvTable& table) {
    auto write_row = [&out](const std::vector<std::string>& row) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out << ',';
            out << quote_if_needed(row[i]);
        }
        out << '\n';
    };
    write_row(table.header);
    for (const auto& row : table.rows) write_row(row);
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
    auto out = open_output(path);
    write_csv(out, table);
    if (!out) throw IoError("failed writing " + path.string());
}

std::string format_real(double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

std::string format_shortest(double value) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, r.ptr);
}

double parse_real(std::string_view text) {
    while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
    while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty())
        throw InvalidInput("not a real number: '" + std::string(text) + "'");
    return value;
}

std::optional<double> parse_optional_real(std::string_view text) {
    if (text.empty()) return std::nullopt;
    return parse_real(text);
}

long long parse_integer(std::string_view text) {
    while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
    while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
    long long value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty())
        throw InvalidInput("not an integer: '" + std::string(text) + "'");
    return value;
}

LabeledMatrix read_labeled_matrix(const std::filesystem::path& path) {
    const CsvTable table = read_csv(path);
    if (table.header.size() < 2) throw InvalidInput(path.string() + ": expected an id column and at least one value column");
    LabeledMatrix out;
    out.columns.assign(table.header.begin() + 1, table.header.end());
    out.values.resize(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(out.columns.size()));
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        out.ids.push_back(table.rows[r][0]);
        for (std::size_t c = 1; c < table.header.size(); ++c) {
            const double v = parse_real(table.rows[r][c]);
            if (!std::isfinite(v)) throw InvalidInput(path.string() + ": non-finite value");
            out.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c - 1)) = v;
        }
    }
    return out;
}

void write_labeled_matrix(const std::filesystem::path& path, const LabeledMatrix& table, std::string_view id_header) {
    if (table.ids.size() != static_cast<std::size_t>(table.values.rows()) ||
        table.columns.size() != static_cast<std::size_t>(table.values.cols()))
        throw InvalidInput("labeled matrix: ids/columns do not match value shape");
    auto out = open_output(path);
    out << id_header;
    for (const auto& c : table.columns) out << ',' << c;
    out << '\n';
    for (Eigen::Index r = 0; r < table.values.rows(); ++r) {
        out << table.ids[static_cast<std::size_t>(r)];
        for (Eigen::Index c = 0; c < table.values.cols(); ++c) out << ',' << format_real(table.values(r, c));
        out << '\n';
    }
    if (!out) throw IoError("failed writing " + path.string());
}

std::ofstream open_output(const std::filesystem::path& path, bool binary) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    std::ofstream out(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    return out;
}

std::ifstream open_input(const std::filesystem::path& path, bool binary) {
    std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
    if (!in) throw IoError("missing or unreadable file: " + path.string());
    return in;
}

} // namespace voxboost
