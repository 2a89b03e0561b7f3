#include "f3ast/csv.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace f3ast::harness {

namespace {

std::string join_ids(const ClientSet& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(ids[i]);
  }
  return out;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  if (line.empty()) fields.emplace_back();
  return fields;
}

}  // namespace

std::string format_number(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

double round_trip(double x) { return std::strtod(format_number(x).c_str(), nullptr); }

std::vector<std::string> round_csv_header(bool wall_clock) {
  std::vector<std::string> h{"round",          "skipped",           "num_available",      "capacity",
                             "num_selected",   "selected",          "per_sample_loss",    "per_sample_accuracy",
                             "per_user_loss",  "per_user_accuracy", "max_update_norm",    "update_norm_bound",
                             "rates"};
  if (wall_clock) h.emplace_back("wall_clock_seconds");
  return h;
}

std::string round_csv_row(const fedtrain::RoundRecord& rec, bool wall_clock) {
  std::string row = std::to_string(rec.round);
  auto add = [&row](const std::string& cell) {
    row += ',';
    row += cell;
  };
  auto metric = [](const std::optional<data::Metrics>& m, bool loss) {
    if (!m) return std::string();
    return format_number(loss ? m->loss : m->accuracy);
  };
  add(rec.skipped ? "1" : "0");
  add(std::to_string(rec.num_available));
  add(std::to_string(rec.capacity));
  add(std::to_string(rec.selected.size()));
  add(join_ids(rec.selected));
  add(metric(rec.per_sample, true));
  add(metric(rec.per_sample, false));
  add(metric(rec.per_user, true));
  add(metric(rec.per_user, false));
  add(format_number(rec.max_update_norm));
  add(format_number(rec.update_norm_bound));
  std::string rates;
  if (rec.rates) {
    for (std::size_t i = 0; i < rec.rates->size(); ++i) {
      if (i) rates += ' ';
      rates += format_number((*rec.rates)[i]);
    }
  }
  add(rates);
  if (wall_clock) add(format_number(rec.wall_clock_seconds));
  return row;
}

void write_round_csv(const std::filesystem::path& path, const std::vector<fedtrain::RoundRecord>& records,
                     bool wall_clock) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const auto header = round_csv_header(wall_clock);
  for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
  os << '\n';
  for (const auto& rec : records) os << round_csv_row(rec, wall_clock) << '\n';
  os.flush();
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

CsvParseError::CsvParseError(const std::filesystem::path& path, std::size_t line, const std::string& what)
    : std::runtime_error(path.string() + ":" + std::to_string(line) + ": " + what), line_(line) {}

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  CsvTable table;
  std::string line;
  std::size_t number = 0;
  while (std::getline(is, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (number == 1) {
      if (line.empty()) throw CsvParseError(path, number, "missing header");
      table.header = split(line);
      continue;
    }
    if (line.empty()) continue;
    auto fields = split(line);
    if (fields.size() != table.header.size()) {
      throw CsvParseError(path, number, "expected " + std::to_string(table.header.size()) + " fields, found " +
                                            std::to_string(fields.size()));
    }
    table.rows.push_back(std::move(fields));
    table.line_numbers.push_back(number);
  }
  if (number == 0) throw CsvParseError(path, 1, "empty file");
  return table;
}

std::optional<double> parse_cell(const CsvTable& table, std::size_t row, int column,
                                 const std::filesystem::path& path) {
  const auto& cell = table.rows.at(row).at(static_cast<std::size_t>(column));
  if (cell.empty()) return std::nullopt;
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (end != cell.c_str() + cell.size() || errno == ERANGE) {
    throw CsvParseError(path, table.line_numbers[row],
                        "column '" + table.header[static_cast<std::size_t>(column)] + "' is not a number: '" + cell +
                            "'");
  }
  return v;
}

}  // namespace f3ast::harness
