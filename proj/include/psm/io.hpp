#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "psm/errors.hpp"
#include "psm/signal_pipeline.hpp"

namespace psm {

inline constexpr const char* kCsvHeader =
    "t,theta_mx,theta_my,theta_mz,gx,gy,gz,ax,ay,az";

// Shortest round-trip decimal of a double (matches the JSON writer).
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  double back = std::strtod(buf, nullptr);
  if (back == v) {
    for (int prec = 1; prec < 17; ++prec) {
      char shorter[32];
      std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
      if (std::strtod(shorter, nullptr) == v) return shorter;
    }
  }
  return buf;
}

inline void write_csv(std::ostream& os, const std::vector<ImuSample>& samples) {
  os << kCsvHeader << "\n";
  for (const ImuSample& s : samples) {
    os << format_double(s.t) << ',' << format_double(s.theta_m.x) << ','
       << format_double(s.theta_m.y) << ',' << format_double(s.theta_m.z)
       << ',' << format_double(s.theta_dot_m.x) << ','
       << format_double(s.theta_dot_m.y) << ','
       << format_double(s.theta_dot_m.z) << ',' << format_double(s.a_c.x)
       << ',' << format_double(s.a_c.y) << ',' << format_double(s.a_c.z)
       << "\n";
  }
}

inline void write_csv_file(const std::string& path,
                           const std::vector<ImuSample>& samples) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::IoError, "cannot open for writing: " + path);
  write_csv(os, samples);
}

inline std::vector<ImuSample> read_csv(std::istream& is,
                                       const std::string& name = "<stream>") {
  std::string line;
  if (!std::getline(is, line))
    throw Error(ErrorCode::IoError, name + ": empty input");
  // tolerate a trailing carriage return from foreign line endings
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader)
    throw Error(ErrorCode::IoError, name + ": bad CSV header");

  std::vector<ImuSample> out;
  std::size_t line_no = 1;
  double prev_t = 0.0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    double f[10];
    const char* p = line.c_str();
    for (int i = 0; i < 10; ++i) {
      char* end = nullptr;
      f[i] = std::strtod(p, &end);
      if (end == p)
        throw Error(ErrorCode::IoError,
                    name + ": parse error at line " + std::to_string(line_no));
      p = end;
      if (i < 9) {
        if (*p != ',')
          throw Error(ErrorCode::IoError, name + ": expected comma at line " +
                                              std::to_string(line_no));
        ++p;
      }
    }
    ImuSample s;
    s.t = f[0];
    s.theta_m = {f[1], f[2], f[3]};
    s.theta_dot_m = {f[4], f[5], f[6]};
    s.a_c = {f[7], f[8], f[9]};
    validate_sample(s);
    if (!out.empty() && s.t <= prev_t)
      throw Error(ErrorCode::IoError, name + ": timestamps must increase at line " +
                                          std::to_string(line_no));
    prev_t = s.t;
    out.push_back(s);
  }
  return out;
}

inline std::vector<ImuSample> read_csv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::IoError, "cannot open: " + path);
  return read_csv(is, path);
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::IoError, "cannot open: " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IoError, path + ": " + e.what());
  }
  return j;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::IoError, "cannot open for writing: " + path);
  os << text;
}

}  // namespace psm
