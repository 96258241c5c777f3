#include "rpie/csv.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "rpie/error.hpp"

namespace rpie {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

bool parse_number(const std::string& cell, double* out) {
  if (cell.empty()) return false;
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (end != cell.c_str() + cell.size() || errno == ERANGE || !std::isfinite(v)) return false;
  *out = v;
  return true;
}

}  // namespace

Eigen::Index CsvTable::column(const std::string& name) const {
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == name) return static_cast<Eigen::Index>(j);
  }
  throw DataError("column '" + name + "' not found in the CSV header");
}

CsvTable parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  CsvTable table;
  bool have_header = false;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells = split(trim(line));
    if (!have_header) {
      table.header = std::move(cells);
      have_header = true;
      for (const auto& h : table.header) {
        if (h.empty()) throw DataError("CSV header has an empty column name");
      }
      continue;
    }
    const std::size_t data_row = rows.size() + 1;
    if (cells.size() != table.header.size()) {
      throw DataError("row " + std::to_string(data_row) + " (line " + std::to_string(line_no) +
                      ") has " + std::to_string(cells.size()) + " cells, header has " +
                      std::to_string(table.header.size()));
    }
    std::vector<double> row(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (!parse_number(cells[j], &row[j])) {
        throw DataError("row " + std::to_string(data_row) + " (line " + std::to_string(line_no) +
                        "), column '" + table.header[j] + "': non-numeric value '" + cells[j] +
                        "'");
      }
    }
    rows.push_back(std::move(row));
  }
  if (!have_header) throw DataError("CSV input is empty");
  if (rows.empty()) throw DataError("CSV input has a header but no data rows");
  table.values.resize(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(table.header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      table.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path.string());
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_csv(buf.str());
}

Dataset dataset_from_table(const CsvTable& table, const std::string& target) {
  const Eigen::Index t = table.column(target);
  if (table.header.size() < 2) throw DataError("CSV needs at least one input column");
  Dataset data;
  data.target = target;
  data.y = table.values.col(t);
  data.X.resize(table.values.rows(), table.values.cols() - 1);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < table.values.cols(); ++j) {
    if (j == t) continue;
    data.X.col(k++) = table.values.col(j);
    data.columns.push_back(table.header[static_cast<std::size_t>(j)]);
  }
  data.validate();
  return data;
}

Dataset read_dataset(const std::filesystem::path& path, const std::string& target) {
  return dataset_from_table(read_csv(path), target);
}

Eigen::MatrixXd select_inputs(const CsvTable& table, const std::vector<std::string>& columns) {
  if (columns.empty()) return table.values;
  Eigen::MatrixXd X(table.values.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) {
    Eigen::Index c = -1;
    for (std::size_t k = 0; k < table.header.size(); ++k) {
      if (table.header[k] == columns[j]) c = static_cast<Eigen::Index>(k);
    }
    if (c < 0) {
      throw ShapeError("input CSV lacks model column '" + columns[j] + "' (model expects " +
                       std::to_string(columns.size()) + " inputs)");
    }
    X.col(static_cast<Eigen::Index>(j)) = table.values.col(c);
  }
  return X;
}

std::string format_csv(const std::vector<std::string>& header, const Eigen::MatrixXd& values) {
  if (static_cast<Eigen::Index>(header.size()) != values.cols()) {
    throw ShapeError("CSV header and value columns disagree");
  }
  std::string out;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (j) out += ',';
    out += header[j];
  }
  out += '\n';
  char buf[40];
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      if (j) out += ',';
      std::snprintf(buf, sizeof buf, "%.17g", values(i, j));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const Eigen::MatrixXd& values) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << format_csv(header, values);
}

}  // namespace rpie
