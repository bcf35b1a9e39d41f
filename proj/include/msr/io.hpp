#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "msr/linalg.hpp"

namespace msr::io {

// All text output uses 17 significant digits so round trips are exact.
std::string format_double(double v);
std::string format_row(const double* row, int n);
double parse_double(const std::string& s);  // understands "inf"
Vec parse_row(const std::string& line);

// Text matrix format: header "# rows,cols", then comma-separated rows.
void write_matrix(const std::string& path, const Mat& m);
Mat read_matrix(const std::string& path);

// Two-column plot data: header "x,y", index starting at 1.
void write_dat(const std::string& path, std::span<const double> y);
Vec read_dat(const std::string& path);

// Ordered key=value files (config.used, critic.meta).
using KvMap = std::vector<std::pair<std::string, std::string>>;
void write_kv(const std::string& path, const KvMap& kv);
std::map<std::string, std::string> read_kv(const std::string& path);

}  // namespace msr::io
