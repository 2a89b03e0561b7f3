#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "f3ast/fedtrain.hpp"

namespace f3ast::harness {

/// Decimal with 9 significant digits ("%.9g"); the CSV and summary format.
std::string format_number(double x);

/// Value of `x` after a round trip through format_number.
double round_trip(double x);

/// Fixed column order of the per-round CSV. wall_clock_seconds is appended
/// only when requested because it breaks byte-for-byte reproducibility.
std::vector<std::string> round_csv_header(bool wall_clock);

std::string round_csv_row(const fedtrain::RoundRecord& rec, bool wall_clock);

/// Writes header plus one row per record. Errors carry the path.
void write_round_csv(const std::filesystem::path& path, const std::vector<fedtrain::RoundRecord>& records,
                     bool wall_clock);

class CsvParseError : public std::runtime_error {
 public:
  CsvParseError(const std::filesystem::path& path, std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Plain comma-separated table without quoting. Every row must match the
/// header's field count. `line_numbers[i]` is the 1-based source line of row i.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;

  /// Column index by name, or -1.
  int column(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

/// Parses a numeric cell; empty cells are std::nullopt, junk throws CsvParseError.
std::optional<double> parse_cell(const CsvTable& table, std::size_t row, int column,
                                 const std::filesystem::path& path);

}  // namespace f3ast::harness
