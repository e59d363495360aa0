#ifndef BAE_IO_HPP
#define BAE_IO_HPP

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bae::io {

/// Shortest decimal form that parses back to the identical double.
std::string format_double(double v);
void append_double(std::string& out, double v);

/// Strict parse of the whole token; nullopt on garbage or trailing characters.
std::optional<double> parse_double(std::string_view token);
std::optional<long long> parse_int(std::string_view token);

/// Splits on a single-character delimiter. Runs of spaces are not collapsed.
std::vector<std::string_view> split(std::string_view line, char delim);
/// Splits on any run of spaces/tabs, dropping empty fields.
std::vector<std::string_view> split_ws(std::string_view line);

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it into place, so readers
/// never see a partially written file. Throws PersistenceError.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace bae::io

#endif  // BAE_IO_HPP
