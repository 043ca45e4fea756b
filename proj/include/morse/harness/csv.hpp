#pragma once

#include <string>
#include <vector>

namespace morse::harness {

/// Shortest round-trip decimal form, '.' separator, no locale dependence.
std::string format_number(double v);
std::string format_number(long long v);

/// Comma-separated table with a fixed header. Cells are written as given; rows must match the header width.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header);

    void add_row(std::vector<std::string> cells);
    const std::vector<std::string>& header() const { return header_; }
    const std::vector<std::vector<std::string>>& rows() const { return rows_; }

    std::string str() const;
    void save(const std::string& path) const;

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

void write_text(const std::string& path, const std::string& text);

}  // namespace morse::harness
