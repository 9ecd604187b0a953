#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace coverlab {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  bool operator==(const Table&) const = default;
};

// RFC 4180 style: fields with commas, quotes or newlines are quoted, quotes doubled.
std::string emit_csv(const Table& t);
Table parse_csv(const std::string& text);

// Leaf values of a JSON document keyed by dotted paths (array elements by index).
std::vector<std::pair<std::string, std::string>> flatten(const nlohmann::json& j);

// Long format: key,value.
Table summary_table(const nlohmann::json& summary);
// Long format: replica,key,value.
Table replicas_table(const nlohmann::json& replicas);
std::string summary_text(const nlohmann::json& record);

inline const std::vector<std::string> kReportFormats = {"json", "csv", "txt", "all"};
// Writes summary.json / summary.csv + replicas.csv / summary.txt into dir. Unknown format: ConfigError.
void write_report(const nlohmann::json& record, const std::string& format, const std::string& dir);

}  // namespace coverlab
