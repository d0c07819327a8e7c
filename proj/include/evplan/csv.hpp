#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace evplan::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::optional<std::size_t> find(const std::string& column) const;
    // Index of a required column; throws naming the column if absent.
    std::size_t require(const std::string& column) const;
};

Table read_file(const std::filesystem::path& path);
Table parse(const std::string& text);

void write_file(const std::filesystem::path& path, const Table& table);
std::string to_string(const Table& table);

// Shortest round-trip decimal representation; deterministic across runs.
std::string format_double(double v);

std::optional<double> parse_double(const std::string& s);
std::optional<long long> parse_int(const std::string& s);

}  // namespace evplan::csv
