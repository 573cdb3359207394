#pragma once
// Delimited-text tables and the small amount of formatting shared by every
// writer in the toolkit. Output must be byte-stable, so numbers are always
// written in shortest round-trip form.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace indexprobe {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // Throws Schema when the column is absent.
    std::size_t column(std::string_view name) const;
    std::optional<std::size_t> find_column(std::string_view name) const;
};

// RFC 4180 quoting; CRLF and LF line endings; a UTF-8 BOM is skipped.
// Every row must have as many fields as the header.
CsvTable parse_csv(std::string_view text);
CsvTable read_csv(const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

std::string csv_escape(std::string_view field);
void write_csv_row(std::ostream& os, const std::vector<std::string>& fields);

// Shortest representation that parses back to the same double.
std::string format_number(double value);
std::string format_optional(const std::optional<double>& value);

// Strict decimal parse of the whole field (surrounding blanks allowed).
std::optional<double> parse_number(std::string_view field);

// 64-bit FNV-1a, hex encoded. Used for spec and config fingerprints.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

std::string trim(std::string_view s);

}  // namespace indexprobe
