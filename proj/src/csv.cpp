#include "qpass/csv.hpp"

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "qpass/errors.hpp"

namespace qpass::csv {

size_t Table::column(const std::string& name) const {
    for (size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    throw ConfigError("missing column '" + name + "'");
}

bool Table::has_column(const std::string& name) const {
    for (const auto& h : header) {
        if (h == name) return true;
    }
    return false;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) {
        // trim spaces and a possible trailing CR
        size_t b = field.find_first_not_of(" \t\r");
        size_t e = field.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

}  // namespace

Table read_string(const std::string& text, const std::string& origin) {
    Table table;
    std::stringstream ss(text);
    std::string line;
    size_t lineno = 0;
    bool have_header = false;
    while (std::getline(ss, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        auto fields = split_line(line);
        if (!have_header) {
            table.header = fields;
            have_header = true;
            continue;
        }
        if (fields.size() != table.header.size()) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected " +
                              std::to_string(table.header.size()) + " fields, got " +
                              std::to_string(fields.size()));
        }
        std::vector<double> row;
        row.reserve(fields.size());
        for (const auto& f : fields) {
            char* end = nullptr;
            errno = 0;
            double v = std::strtod(f.c_str(), &end);
            if (end == f.c_str() || *end != '\0' || errno == ERANGE) {
                throw ConfigError(origin + ":" + std::to_string(lineno) +
                                  ": not a number: '" + f + "'");
            }
            row.push_back(v);
        }
        table.rows.push_back(std::move(row));
        table.line_numbers.push_back(lineno);
    }
    if (!have_header) throw ConfigError(origin + ": empty file (no header row)");
    return table;
}

Table read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return read_string(buf.str(), path.string());
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void Writer::comment(const std::string& line) {
    text += "# ";
    text += line;
    text += '\n';
}

void Writer::header(const std::vector<std::string>& names) {
    for (size_t i = 0; i < names.size(); ++i) {
        if (i) text += ',';
        text += names[i];
    }
    text += '\n';
}

void Writer::row(const std::vector<double>& values) {
    for (size_t i = 0; i < values.size(); ++i) {
        if (i) text += ',';
        text += format_double(values[i]);
    }
    text += '\n';
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot write '" + tmp.string() + "'");
        out << content;
        if (!out.good()) throw ConfigError("write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw ConfigError("rename failed for '" + path.string() + "': " + ec.message());
}

}  // namespace qpass::csv
