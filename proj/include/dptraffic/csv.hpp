#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace dptraffic::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;  // source line of each row, for error messages
};

/** Reads a comma-separated file. Blank lines and lines starting with '#' are
 *  skipped; the first remaining line is the header. Throws std::runtime_error
 *  if the file cannot be opened. */
Table read_file(const std::filesystem::path& path);

/** Writes header + rows; creates parent directories as needed. */
void write_file(const std::filesystem::path& path, const std::vector<std::string>& header,
                const std::vector<std::vector<std::string>>& rows);

/** Strict scalar parses; `context` names the file/line in thrown messages. */
double parse_double(const std::string& field, const std::string& context);
long parse_long(const std::string& field, const std::string& context);

/** Fixed six-decimal formatting used by all emitted numeric columns. */
std::string format(double value);

}  // namespace dptraffic::csv
