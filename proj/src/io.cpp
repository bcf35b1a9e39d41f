#include "msr/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace msr::io {

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_row(const double* row, int n) {
  std::string out;
  for (int i = 0; i < n; ++i) {
    if (i) out += ',';
    out += format_double(row[i]);
  }
  return out;
}

double parse_double(const std::string& s) {
  std::string t;
  for (char c : s)
    if (c != ' ' && c != '\t') t += c;
  if (t == "inf" || t == "+inf" || t == "Inf")
    return std::numeric_limits<double>::infinity();
  if (t == "-inf") return -std::numeric_limits<double>::infinity();
  return std::stod(t);
}

Vec parse_row(const std::string& line) {
  Vec out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(parse_double(cell));
  return out;
}

void write_matrix(const std::string& path, const Mat& m) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_matrix: cannot open " + path);
  f << "# " << m.rows << "," << m.cols << "\n";
  for (int i = 0; i < m.rows; ++i) f << format_row(m.row(i), m.cols) << "\n";
}

Mat read_matrix(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("read_matrix: cannot open " + path);
  std::string line;
  if (!std::getline(f, line) || line.size() < 2 || line[0] != '#')
    throw std::runtime_error("read_matrix: missing header in " + path);
  int rows, cols;
  if (std::sscanf(line.c_str(), "# %d,%d", &rows, &cols) != 2)
    throw std::runtime_error("read_matrix: bad header in " + path);
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    if (!std::getline(f, line)) throw std::runtime_error("read_matrix: truncated " + path);
    Vec r = parse_row(line);
    if (static_cast<int>(r.size()) != cols)
      throw std::runtime_error("read_matrix: ragged row in " + path);
    std::copy(r.begin(), r.end(), m.row(i));
  }
  return m;
}

void write_dat(const std::string& path, std::span<const double> y) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_dat: cannot open " + path);
  f << "x,y\n";
  for (size_t i = 0; i < y.size(); ++i)
    f << (i + 1) << "," << format_double(y[i]) << "\n";
}

Vec read_dat(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("read_dat: cannot open " + path);
  std::string line;
  std::getline(f, line);  // "x,y" header
  Vec out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto comma = line.find(',');
    if (comma == std::string::npos) throw std::runtime_error("read_dat: bad line in " + path);
    out.push_back(parse_double(line.substr(comma + 1)));
  }
  return out;
}

void write_kv(const std::string& path, const KvMap& kv) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_kv: cannot open " + path);
  for (const auto& [k, v] : kv) f << k << "=" << v << "\n";
}

std::map<std::string, std::string> read_kv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("read_kv: cannot open " + path);
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

}  // namespace msr::io
