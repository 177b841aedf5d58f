#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace kinlab {

/// Shortest-safe decimal form with 17 significant digits.
std::string format_double(double x);

/// RFC 4180 field quoting: fields containing a comma, quote, CR or LF are
/// wrapped in double quotes with embedded quotes doubled.
std::string csv_field(const std::string& s);

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row);
  /// Convenience for all-numeric rows.
  void add_numeric_row(const std::vector<double>& row);
};

std::string to_csv(const Table& t);
/// JSON array of objects keyed by column name; numeric cells stay numeric.
std::string to_json(const Table& t);

void write_text(const std::filesystem::path& path, const std::string& text);

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_y = false;
};

/// Minimal standalone SVG line chart.
std::string svg_line_plot(const std::vector<PlotSeries>& series, const PlotOptions& options);

}  // namespace kinlab
