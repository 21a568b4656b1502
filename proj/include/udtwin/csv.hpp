#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace udtwin::csv {

// Shortest representation that parses back to the identical double.
// Keeps every emitted file byte-deterministic and lossless across the
// file-based pipeline stages.
std::string format_double(double v);

double parse_double(std::string_view field, std::size_t line);
std::uint64_t parse_u64(std::string_view field, std::size_t line);
std::size_t parse_size(std::string_view field, std::size_t line);

std::vector<std::string_view> split_fields(std::string_view line, char sep = ',');
std::string_view trim(std::string_view s);

// Splits text into lines on LF, tolerating a trailing CR per line and a
// missing final newline. Empty lines are skipped.
std::vector<std::string_view> split_lines(std::string_view text);

class Writer {
public:
    explicit Writer(std::string header) { out_ = std::move(header); out_ += '\n'; }

    void row(const std::vector<std::string>& fields);
    const std::string& str() const { return out_; }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

}  // namespace udtwin::csv
