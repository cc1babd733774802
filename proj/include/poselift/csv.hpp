#pragma once

// Small text-IO helpers shared by the CSV/JSON readers and writers. Numbers
// are written in shortest round-trip form so outputs are byte-stable and
// reload bit-exactly.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace poselift {

std::vector<std::string_view> split_fields(std::string_view line);

/// Parses a finite double; throws ParseError naming source and row.
double parse_double(std::string_view field, const std::string& source, std::size_t row);
long long parse_integer(std::string_view field, const std::string& source, std::size_t row);

std::string format_double(double v);
std::string format_optional(const std::optional<double>& v);

/// Reads every line of a text file (trailing '\r' stripped). Missing file ->
/// ConfigError.
std::vector<std::string> read_lines(const std::filesystem::path& path);

nlohmann::json read_json(const std::filesystem::path& path);

/// Writes the whole file, creating parent directories as needed.
void write_text(const std::filesystem::path& path, const std::string& content);
void write_json(const nlohmann::json& doc, const std::filesystem::path& path);

}  // namespace poselift
