#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace dpreach {

// Shortest decimal string that round-trips to the same double.
std::string format_real(double x);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    // Written as a trailing "# ..." line when present.
    std::optional<std::string> footer;

    void add_row(std::vector<std::string> row) { rows.push_back(std::move(row)); }
};

// Provenance footer used by every emitted artifact.
std::string provenance_footer(std::uint64_t seed, std::uint64_t config_hash);

void write_csv(std::ostream& out, const CsvTable& table);
// Throws IoError when the file cannot be written.
void write_csv(const std::filesystem::path& path, const CsvTable& table);

// Parses what write_csv produces; comment lines are returned in `footer`.
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace dpreach
