#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace qpass::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
    /// 1-based source line number for each row, for error reporting.
    std::vector<size_t> line_numbers;

    size_t column(const std::string& name) const;       // throws ConfigError if missing
    bool has_column(const std::string& name) const;
};

/// Read a numeric CSV. Lines starting with '#' are skipped (run manifests are
/// written that way). Parse failures report the 1-based line number.
Table read_file(const std::filesystem::path& path);
Table read_string(const std::string& text, const std::string& origin = "<string>");

/// Format a double so that it parses back bit-exactly.
std::string format_double(double v);

struct Writer {
    std::string text;
    void comment(const std::string& line);
    void header(const std::vector<std::string>& names);
    void row(const std::vector<double>& values);
};

/// Write a file atomically (temp file in the same directory, then rename).
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace qpass::csv
