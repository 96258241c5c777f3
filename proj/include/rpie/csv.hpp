#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rpie/gp_core.hpp"

namespace rpie {

/// Header plus an all-numeric body.
struct CsvTable {
  std::vector<std::string> header;
  Eigen::MatrixXd values;

  /// Index of `name` in the header; throws DataError naming the column.
  Eigen::Index column(const std::string& name) const;
};

/// Parses a comma-separated table with a header row. Every body cell must be
/// numeric; the error for a bad cell names its 1-based data row, file line
/// and column. Blank lines are skipped.
CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::filesystem::path& path);

/// The `target` column becomes y, every other column becomes an input.
Dataset dataset_from_table(const CsvTable& table, const std::string& target);
Dataset read_dataset(const std::filesystem::path& path, const std::string& target);

/// Input matrix with columns in the order of `columns`; extra columns are
/// ignored. With an empty `columns` every column is taken as-is.
Eigen::MatrixXd select_inputs(const CsvTable& table, const std::vector<std::string>& columns);

/// Writes `values` under `header`, 17 significant digits.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const Eigen::MatrixXd& values);
std::string format_csv(const std::vector<std::string>& header, const Eigen::MatrixXd& values);

}  // namespace rpie
