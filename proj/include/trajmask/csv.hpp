#pragma once

#include <string>
#include <vector>

#include "trajmask/common.hpp"

namespace trajmask {

// Minimal CSV support. Numbers are written with shortest round-trip
// formatting so identical runs produce byte-identical files.

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int col(const std::string& name) const;  // -1 when absent
    double num(std::size_t row, int c) const;
};

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header);
    void row(const std::vector<std::string>& cells);
    void close();
    ~CsvWriter();

private:
    std::string path_;
    std::string buf_;
    std::size_t ncols_;
    bool closed_ = false;
};

CsvTable read_csv(const std::string& path);
// Throws ConfigError naming expected vs found columns.
void require_columns(const CsvTable& t, const std::vector<std::string>& expected,
                     const std::string& path);

std::string csv_escape(const std::string& s);

}  // namespace trajmask
