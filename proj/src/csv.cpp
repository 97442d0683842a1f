#include "trajmask/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace trajmask {

std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

int CsvTable::col(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    return -1;
}

double CsvTable::num(std::size_t row, int c) const {
    const std::string& s = rows[row][static_cast<std::size_t>(c)];
    return s.empty() ? 0.0 : std::stod(s);
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header)
    : path_(path), ncols_(header.size()) {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i) buf_ += ',';
        buf_ += csv_escape(header[i]);
    }
    buf_ += '\n';
}

void CsvWriter::row(const std::vector<std::string>& cells) {
    if (cells.size() != ncols_)
        throw ContractError("csv row has " + std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(ncols_));
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) buf_ += ',';
        buf_ += csv_escape(cells[i]);
    }
    buf_ += '\n';
}

void CsvWriter::close() {
    if (closed_) return;
    closed_ = true;
    std::ofstream out(path_, std::ios::trunc | std::ios::binary);
    if (!out.is_open()) throw ConfigError("cannot write csv file: " + path_);
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out.good()) throw ConfigError("write failed for csv file: " + path_);
}

CsvWriter::~CsvWriter() {
    try {
        close();
    } catch (...) {
    }
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.is_open()) throw ConfigError("cannot open csv file: " + path);
    CsvTable t;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() && in.peek() == std::char_traits<char>::eof()) break;
        std::vector<std::string> cells;
        std::string cur;
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            char c = line[i];
            if (quoted) {
                if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else if (c == '"') {
                    quoted = false;
                } else {
                    cur += c;
                }
            } else if (c == '"') {
                quoted = true;
            } else if (c == ',') {
                cells.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        cells.push_back(cur);
        if (first) {
            t.header = cells;
            first = false;
        } else {
            t.rows.push_back(cells);
        }
    }
    if (first) throw ConfigError("csv file is empty: " + path);
    return t;
}

void require_columns(const CsvTable& t, const std::vector<std::string>& expected,
                     const std::string& path) {
    for (const auto& name : expected) {
        if (t.col(name) >= 0) continue;
        std::ostringstream os;
        os << path << ": expected columns [";
        for (std::size_t i = 0; i < expected.size(); ++i) os << (i ? "," : "") << expected[i];
        os << "], found [";
        for (std::size_t i = 0; i < t.header.size(); ++i) os << (i ? "," : "") << t.header[i];
        os << "]";
        throw ConfigError(os.str());
    }
}

}  // namespace trajmask
