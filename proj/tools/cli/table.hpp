#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <string>
#include <vector>

namespace rowsurv::cli {

/// Numeric CSV with a header row.
struct Table {
  std::vector<std::string> header;
  Eigen::MatrixXd values;  ///< rows x columns

  /// Index of `name` in the header, or -1.
  int find(const std::string& name) const;
};

/// Parses a comma-separated file. Every cell must be a finite decimal number.
/// Throws InvalidInput naming the file, line and column on failure.
Table read_table(const std::string& path);
Table parse_table(std::istream& in, const std::string& source);

/// Shortest round-trip representation is not required; 17 significant digits is.
std::string format_number(double v);

}  // namespace rowsurv::cli
