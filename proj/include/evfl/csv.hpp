// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace evfl::csv {

/// Splits one CSV record. Supports double-quoted fields with `""` escapes;
/// does not support embedded newlines.
std::vector<std::string> split(std::string_view line);

/// Quotes a field when it contains a comma, quote, or leading/trailing space.
std::string escape(std::string_view field);

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

/// Strict full-field parse; nullopt on trailing junk or empty input.
std::optional<double> parse_double(std::string_view text);

std::ifstream open_input(const std::filesystem::path& path);
std::ofstream open_output(const std::filesystem::path& path);

/// Reads a whole line, stripping a trailing CR.
bool read_line(std::istream& in, std::string& line);

}  // namespace evfl::csv
