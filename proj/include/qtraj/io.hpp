#pragma once

// Run-artifact plumbing: CSV emission and parsing, the flat key = value
// config format, FNV-1a content checksums, and the manifest / summary
// documents every experiment run writes next to its data files.
//
// All doubles are formatted with std::to_chars (shortest round-trip form,
// locale independent), so rerunning an experiment with the same resolved
// config reproduces every data file byte for byte.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace qtraj {

inline constexpr const char* k_code_version = "0.1.0";

// ---------------------------------------------------------------------------
// number formatting

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// CSV (RFC 4180: CRLF record ends, quotes doubled inside quoted fields)

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out;
  out.reserve(s.size() + 2);
  out += '"';
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  explicit CsvTable(std::vector<std::string> h) : header(std::move(h)) {
    if (header.empty()) throw std::invalid_argument("CsvTable: empty header");
  }

  void add_row(std::vector<std::string> row) {
    if (row.size() != header.size())
      throw std::invalid_argument("CsvTable: row has " + std::to_string(row.size()) +
                                  " fields, header has " + std::to_string(header.size()));
    rows.push_back(std::move(row));
  }

  std::string to_string() const {
    std::string out;
    auto emit = [&out](const std::vector<std::string>& fields) {
      for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        out += csv_field(fields[i]);
      }
      out += "\r\n";
    };
    emit(header);
    for (const auto& r : rows) emit(r);
    return out;
  }
};

struct CsvData {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // index of a named column, or -1 when absent
  std::ptrdiff_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<std::ptrdiff_t>(i);
    return -1;
  }
};

inline std::size_t require_column(const CsvData& csv, const std::string& name) {
  auto idx = csv.column(name);
  if (idx >= 0) return static_cast<std::size_t>(idx);
  std::string have;
  for (std::size_t i = 0; i < csv.header.size(); ++i) {
    if (i) have += ", ";
    have += csv.header[i];
  }
  throw std::runtime_error("missing column '" + name + "' (file has: " + have + ")");
}

inline CsvData parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  const std::size_t n = text.size();
  std::size_t i = 0;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
  };
  auto end_record = [&] {
    end_field();
    // a bare blank line is not a record
    if (record.size() != 1 || !record[0].empty()) records.push_back(std::move(record));
    record.clear();
  };
  while (i < n) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < n && text[i + 1] == '"') {
          field += '"';
          i += 2;
        } else {
          in_quotes = false;
          ++i;
        }
      } else {
        field += c;
        ++i;
      }
    } else if (c == '"' && field.empty()) {
      in_quotes = true;
      ++i;
    } else if (c == ',') {
      end_field();
      ++i;
    } else if (c == '\r' && i + 1 < n && text[i + 1] == '\n') {
      end_record();
      i += 2;
    } else if (c == '\n') {
      end_record();
      ++i;
    } else {
      field += c;
      ++i;
    }
  }
  if (in_quotes) throw std::invalid_argument("csv: unterminated quoted field");
  if (!field.empty() || !record.empty()) end_record();
  if (records.empty()) throw std::invalid_argument("csv: no header record");
  CsvData out;
  out.header = std::move(records.front());
  out.rows.assign(std::make_move_iterator(records.begin() + 1),
                  std::make_move_iterator(records.end()));
  return out;
}

// Equal-width histogram over [min, max] with explicit bin-edge columns.
// Every finite sample lands in exactly one bin, so the counts sum to the
// sample count; the top edge is closed.
inline CsvTable histogram_table(const std::vector<double>& xs, int bins) {
  if (xs.empty()) throw std::invalid_argument("histogram_table: no samples");
  if (bins < 1) throw std::invalid_argument("histogram_table: bins must be >= 1");
  for (double x : xs)
    if (!std::isfinite(x)) throw std::invalid_argument("histogram_table: non-finite sample");
  double lo = *std::min_element(xs.begin(), xs.end());
  double hi = *std::max_element(xs.begin(), xs.end());
  CsvTable t({"bin_lo", "bin_hi", "count"});
  if (lo == hi) {
    t.add_row({format_double(lo), format_double(hi), std::to_string(xs.size())});
    return t;
  }
  double width = (hi - lo) / bins;
  std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
  for (double x : xs) {
    auto idx = static_cast<std::ptrdiff_t>((x - lo) / width);
    idx = std::clamp<std::ptrdiff_t>(idx, 0, bins - 1);
    ++counts[static_cast<std::size_t>(idx)];
  }
  for (int i = 0; i < bins; ++i) {
    double b_lo = lo + i * width;
    double b_hi = i + 1 == bins ? hi : lo + (i + 1) * width;
    t.add_row({format_double(b_lo), format_double(b_hi), std::to_string(counts[i])});
  }
  return t;
}

// ---------------------------------------------------------------------------
// flat config: one `key = value` per line, '#' starts a comment

using ConfigMap = std::map<std::string, std::string>;

inline std::string trim_ws(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline ConfigMap parse_config_text(const std::string& text) {
  ConfigMap out;
  std::size_t pos = 0, line_no = 0;
  while (pos <= text.size()) {
    if (pos == text.size() && line_no > 0) break;
    auto nl = text.find('\n', pos);
    std::string line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = (nl == std::string::npos) ? text.size() + 1 : nl + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::string t = trim_ws(line);
    if (t.empty()) continue;
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected key = value, got '" + t + "'");
    std::string key = trim_ws(std::string_view(t).substr(0, eq));
    std::string val = trim_ws(std::string_view(t).substr(eq + 1));
    if (key.empty())
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": empty key");
    if (!out.emplace(std::move(key), std::move(val)).second)
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": duplicate key '" + trim_ws(std::string_view(t).substr(0, eq)) + "'");
  }
  return out;
}

// keys emitted in sorted order, so the echo is deterministic
inline std::string config_to_text(const ConfigMap& cfg) {
  std::string out;
  for (const auto& [k, v] : cfg) {
    out += k;
    out += " = ";
    out += v;
    out += '\n';
  }
  return out;
}

inline void reject_unknown_keys(const ConfigMap& cfg, const std::vector<std::string>& allowed) {
  std::string bad;
  for (const auto& [k, v] : cfg) {
    bool ok = false;
    for (const auto& a : allowed)
      if (k == a) {
        ok = true;
        break;
      }
    if (!ok) {
      if (!bad.empty()) bad += ", ";
      bad += k;
    }
  }
  if (bad.empty()) return;
  std::string valid;
  for (std::size_t i = 0; i < allowed.size(); ++i) {
    if (i) valid += ", ";
    valid += allowed[i];
  }
  throw std::invalid_argument("unknown config keys: " + bad + " (valid keys: " + valid + ")");
}

inline const std::string& config_value(const ConfigMap& cfg, const std::string& key) {
  auto it = cfg.find(key);
  if (it == cfg.end()) throw std::invalid_argument("config: missing key '" + key + "'");
  return it->second;
}

inline double config_double(const ConfigMap& cfg, const std::string& key) {
  const std::string& s = config_value(cfg, key);
  const char* begin = s.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (s.empty() || end != begin + s.size())
    throw std::invalid_argument("config: key '" + key + "' is not a number: '" + s + "'");
  return v;
}

inline double config_double(const ConfigMap& cfg, const std::string& key, double fallback) {
  return cfg.count(key) ? config_double(cfg, key) : fallback;
}

inline long long config_int(const ConfigMap& cfg, const std::string& key) {
  const std::string& s = config_value(cfg, key);
  const char* begin = s.c_str();
  char* end = nullptr;
  long long v = std::strtoll(begin, &end, 10);
  if (s.empty() || end != begin + s.size())
    throw std::invalid_argument("config: key '" + key + "' is not an integer: '" + s + "'");
  return v;
}

inline long long config_int(const ConfigMap& cfg, const std::string& key, long long fallback) {
  return cfg.count(key) ? config_int(cfg, key) : fallback;
}

inline std::uint64_t config_u64(const ConfigMap& cfg, const std::string& key) {
  const std::string& s = config_value(cfg, key);
  const char* begin = s.c_str();
  char* end = nullptr;
  unsigned long long v = std::strtoull(begin, &end, 10);
  if (s.empty() || s[0] == '-' || end != begin + s.size())
    throw std::invalid_argument("config: key '" + key + "' is not an unsigned integer: '" + s + "'");
  return v;
}

// ---------------------------------------------------------------------------
// checksums and files

inline std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// run documents

// Everything needed to reproduce and audit one run: the fully resolved
// config, the code version, wall time, and a checksum per data file.
// Wall time varies between reruns, so manifest.json itself is excluded
// from byte-identity comparisons; the checksummed data files are not.
struct RunManifest {
  std::string experiment;
  ConfigMap config;
  std::string code_version = k_code_version;
  double wall_time_s = 0.0;
  std::map<std::string, std::string> file_checksums;

  std::string to_json() const {
    nlohmann::ordered_json j;
    j["experiment"] = experiment;
    j["code_version"] = code_version;
    j["wall_time_s"] = wall_time_s;
    j["config"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : config) j["config"][k] = v;
    j["files"] = nlohmann::ordered_json::object();
    for (const auto& [name, sum] : file_checksums) j["files"][name] = sum;
    return j.dump(2) + "\n";
  }

  static RunManifest from_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    RunManifest m;
    m.experiment = j.at("experiment").get<std::string>();
    m.code_version = j.at("code_version").get<std::string>();
    m.wall_time_s = j.at("wall_time_s").get<double>();
    m.config.clear();
    for (const auto& [k, v] : j.at("config").items()) m.config[k] = v.get<std::string>();
    for (const auto& [k, v] : j.at("files").items()) m.file_checksums[k] = v.get<std::string>();
    return m;
  }
};

// Headline numbers for a run. Metrics that do not apply to a given
// experiment stay NaN and serialize as JSON null.
struct RunSummary {
  std::string protocol;
  long long n_traj = 0;
  std::uint64_t seed = 0;
  double ift_mean = std::numeric_limits<double>::quiet_NaN();
  double ift_stderr = std::numeric_limits<double>::quiet_NaN();
  double mean_entropy = std::numeric_limits<double>::quiet_NaN();
  double mean_W = std::numeric_limits<double>::quiet_NaN();
  double mean_Qcl = std::numeric_limits<double>::quiet_NaN();
  double mean_Qq = std::numeric_limits<double>::quiet_NaN();

  std::string to_json() const {
    nlohmann::ordered_json j;
    j["protocol"] = protocol;
    j["n_traj"] = n_traj;
    j["seed"] = seed;
    j["ift_mean"] = ift_mean;
    j["ift_stderr"] = ift_stderr;
    j["mean_entropy"] = mean_entropy;
    j["mean_W"] = mean_W;
    j["mean_Qcl"] = mean_Qcl;
    j["mean_Qq"] = mean_Qq;
    return j.dump(2) + "\n";
  }
};

}  // namespace qtraj
