#pragma once

// Measured polarization-vs-delay datasets. On disk: CSV with header
// "index,t_ns,PL_percent,sigma_percent", '#' comment lines, percentages.
// In memory everything is a fraction.

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "errors.hpp"

namespace hfqb {

struct beat_point {
  int index;
  double t_ns;
  double pl;     // fraction
  double sigma;  // fraction, > 0
};

struct beat_dataset {
  std::vector<beat_point> points;
  double t_sigma_ns = 0.0;  // common delay calibration uncertainty, metadata only
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

inline double parse_number(const std::string& field, std::size_t line_no, std::size_t column) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last)
    throw parse_error("bad number '" + field + "'", line_no, column);
  return v;
}

}  // namespace detail

inline beat_dataset load_dataset(std::istream& in) {
  beat_dataset data;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::set<int> indices;

  while (std::getline(in, line)) {
    ++line_no;
    const std::string text = detail::trim(line);
    if (text.empty()) continue;
    if (text.front() == '#') {
      // optional metadata directive: "# t_sigma_ns = 0.16"
      const auto eq = text.find('=');
      if (eq != std::string::npos &&
          text.find("t_sigma_ns") != std::string::npos && text.find("t_sigma_ns") < eq)
        data.t_sigma_ns = detail::parse_number(detail::trim(text.substr(eq + 1)), line_no, eq + 2);
      continue;
    }

    const std::vector<std::string> fields = detail::split_csv(text);
    if (!header_seen) {
      if (fields.size() != 4 || fields[0] != "index" || fields[1] != "t_ns" ||
          fields[2] != "PL_percent" || fields[3] != "sigma_percent")
        throw parse_error("expected header 'index,t_ns,PL_percent,sigma_percent'", line_no, 1);
      header_seen = true;
      continue;
    }

    if (fields.size() != 4)
      throw parse_error("expected 4 fields, got " + std::to_string(fields.size()), line_no, 1);
    beat_point p;
    p.index = static_cast<int>(detail::parse_number(fields[0], line_no, 1));
    p.t_ns = detail::parse_number(fields[1], line_no, 2);
    p.pl = detail::parse_number(fields[2], line_no, 3) / 100.0;
    p.sigma = detail::parse_number(fields[3], line_no, 4) / 100.0;

    if (p.sigma <= 0.0)
      throw validation_error("line " + std::to_string(line_no) + ": sigma must be > 0");
    if (!indices.insert(p.index).second)
      throw validation_error("line " + std::to_string(line_no) + ": duplicate index " +
                             std::to_string(p.index));
    data.points.push_back(p);
  }

  if (!header_seen) throw parse_error("no header found", line_no ? line_no : 1, 1);
  if (data.points.empty())
    throw parse_error("no data rows", line_no ? line_no : 1, 1);
  return data;
}

inline beat_dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw invalid_argument("cannot open '" + path + "'");
  return load_dataset(in);
}

inline void save_dataset(std::ostream& out, const beat_dataset& data) {
  if (data.t_sigma_ns > 0.0) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "# t_sigma_ns = %.6g\n", data.t_sigma_ns);
    out << buf;
  }
  out << "index,t_ns,PL_percent,sigma_percent\n";
  for (const beat_point& p : data.points) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.6f\n", p.index, p.t_ns, p.pl * 100.0,
                  p.sigma * 100.0);
    out << buf;
  }
}

inline void save_dataset(const std::string& path, const beat_dataset& data) {
  std::ofstream out(path);
  if (!out) throw invalid_argument("cannot open '" + path + "' for writing");
  save_dataset(out, data);
}

}  // namespace hfqb
