#include "coverlab/report.hpp"

#include <algorithm>
#include <filesystem>
#include <sstream>

#include "coverlab/errors.hpp"
#include "coverlab/experiment.hpp"

namespace coverlab {

namespace {

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void emit_row(std::ostringstream& os, const std::vector<std::string>& row) {
  for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << quote(row[i]);
  os << '\n';
}

void flatten_into(const nlohmann::json& j, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& out) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) flatten_into(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) flatten_into(j[i], prefix + "." + std::to_string(i), out);
  } else {
    out.emplace_back(prefix, j.is_string() ? j.get<std::string>() : j.dump());
  }
}

std::string fmt(const nlohmann::json& v) {
  if (v.is_null()) return "n/a";
  if (v.is_number_float()) {
    std::ostringstream os;
    os.precision(6);
    os << v.get<double>();
    return os.str();
  }
  return v.is_string() ? v.get<std::string>() : v.dump();
}

}  // namespace

std::string emit_csv(const Table& t) {
  std::ostringstream os;
  emit_row(os, t.header);
  for (const auto& r : t.rows) emit_row(os, r);
  return os.str();
}

Table parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(field);
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      row.push_back(field);
      rows.push_back(row);
      row.clear();
      field.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (quoted) throw ConfigError("unterminated quoted CSV field");
  if (any) {
    row.push_back(field);
    rows.push_back(row);
  }
  Table t;
  if (rows.empty()) return t;
  t.header = rows.front();
  t.rows.assign(rows.begin() + 1, rows.end());
  return t;
}

std::vector<std::pair<std::string, std::string>> flatten(const nlohmann::json& j) {
  std::vector<std::pair<std::string, std::string>> out;
  flatten_into(j, "", out);
  return out;
}

Table summary_table(const nlohmann::json& summary) {
  Table t{{"key", "value"}, {}};
  for (auto& [k, v] : flatten(summary)) t.rows.push_back({k, v});
  return t;
}

Table replicas_table(const nlohmann::json& replicas) {
  Table t{{"replica", "key", "value"}, {}};
  if (!replicas.is_array()) return t;
  for (std::size_t i = 0; i < replicas.size(); ++i)
    for (auto& [k, v] : flatten(replicas[i])) t.rows.push_back({std::to_string(i), k, v});
  return t;
}

std::string summary_text(const nlohmann::json& record) {
  std::ostringstream os;
  const auto& s = record.at("summary");
  os << "experiment: " << record.value("experiment", std::string("?")) << "\n";
  os << "config hash: " << record.value("config_hash", std::string("?")) << "\n";
  os << "code version: " << record.value("code_version", std::string("?")) << "\n";
  os << "rng: " << record.value("rng", std::string("?")) << "\n";
  os << "replicas: " << fmt(s.value("replicas", nlohmann::json())) << "\n\n";
  os << "parameters (value, provenance):\n";
  if (s.contains("parameters"))
    for (auto it = s.at("parameters").begin(); it != s.at("parameters").end(); ++it)
      os << "  " << it.key() << " = " << fmt(it.value().at("value")) << "  [" << it.value().at("provenance").get<std::string>() << "]\n";
  os << "\nresults:\n";
  if (s.contains("results"))
    for (auto& [k, v] : flatten(s.at("results"))) os << "  " << k << " = " << v << "\n";
  if (s.contains("tv_lower_bound_line")) os << "\n" << s.at("tv_lower_bound_line").get<std::string>() << "\n";
  if (s.contains("warnings") && !s.at("warnings").empty()) {
    os << "\nwarnings:\n";
    for (const auto& w : s.at("warnings")) os << "  - " << w.get<std::string>() << "\n";
  }
  return os.str();
}

void write_report(const nlohmann::json& record, const std::string& format, const std::string& dir) {
  if (std::find(kReportFormats.begin(), kReportFormats.end(), format) == kReportFormats.end())
    throw ConfigError("unknown report format '" + format + "' (expected json, csv, txt or all)");
  if (!record.contains("summary")) throw ConfigError("record is incomplete: no summary");
  std::filesystem::create_directories(dir);
  const auto path = [&](const char* f) { return (std::filesystem::path(dir) / f).string(); };
  if (format == "json" || format == "all") write_atomic(path("summary.json"), record.at("summary").dump(2) + "\n");
  if (format == "csv" || format == "all") {
    write_atomic(path("summary.csv"), emit_csv(summary_table(record.at("summary"))));
    write_atomic(path("replicas.csv"), emit_csv(replicas_table(record.value("replicas", nlohmann::json::array()))));
  }
  if (format == "txt" || format == "all") write_atomic(path("summary.txt"), summary_text(record));
}

}  // namespace coverlab
