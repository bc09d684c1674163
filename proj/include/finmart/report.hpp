#pragma once

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "finmart/config.hpp"
#include "finmart/ensemble.hpp"
#include "finmart/rational.hpp"

namespace finmart {

using Json = nlohmann::json;

inline constexpr int kReportSchemaVersion = 1;
inline constexpr const char* kArtifactVersion = "finmart 0.1.0";

inline Json verdict_json(const EmpiricalVerdict& v) {
  return Json{{"estimate", v.estimate}, {"ci_low", v.ci_low},   {"ci_high", v.ci_high},
              {"bound", v.bound},       {"ci_mode", v.ci_mode}, {"pass", v.pass}};
}

inline Json config_echo(const Config& cfg) {
  Json j = Json::object();
  for (const auto& [k, v] : cfg.raw()) j[k] = v;
  return j;
}

inline Json report_skeleton(const Config& cfg, const std::string& kind) {
  return Json{{"schema_version", kReportSchemaVersion},
              {"artifact_version", kArtifactVersion},
              {"kind", kind},
              {"config", config_echo(cfg)},
              {"verdicts", Json::array()}};
}

// Written via a temp file and rename so a crashed run never leaves a
// truncated report behind.
inline void write_text_atomic(const std::string& path, const std::string& text) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
  }
  fs::rename(tmp, target);
}

inline void write_report(const std::string& path, const Json& report) {
  write_text_atomic(path, report.dump(2) + "\n");
}

inline void write_csv(const std::string& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
  std::string text;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) text += ',';
    text += header[i];
  }
  text += '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) text += ',';
      text += row[i];
    }
    text += '\n';
  }
  write_text_atomic(path, text);
}

inline std::string csv_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace finmart
