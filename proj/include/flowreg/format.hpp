#pragma once

#include <charconv>
#include <initializer_list>
#include <string>
#include <vector>

namespace flowreg {

/// Shortest decimal string that round-trips to the same double.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header) : columns_(header.size()) { line(header); }

    CsvWriter& row(std::initializer_list<std::string> cells) {
        line(std::vector<std::string>(cells));
        return *this;
    }
    CsvWriter& row(const std::vector<std::string>& cells) {
        line(cells);
        return *this;
    }

    std::size_t columns() const noexcept { return columns_; }
    const std::string& str() const noexcept { return text_; }

private:
    void line(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) text_ += ',';
            text_ += cells[i];
        }
        text_ += '\n';
    }

    std::size_t columns_;
    std::string text_;
};

}  // namespace flowreg
