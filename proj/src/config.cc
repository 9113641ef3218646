#include "hiloc/config.h"

#include <charconv>
#include <fstream>
#include <sstream>

#include "hiloc/error.h"

namespace hiloc {

namespace {

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void BadValue(const std::string& key, const std::string& value,
                           const char* expected) {
  throw Error(ErrorCode::kConfig,
              "key '" + key + "': expected " + expected + ", got '" + value + "'");
}

}  // namespace

Config Config::Parse(std::istream& in, const std::string& source) {
  Config cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = Trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kConfig,
                  source + ":" + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = Trim(t.substr(0, eq));
    if (key.empty()) {
      throw Error(ErrorCode::kConfig, source + ":" + std::to_string(line_no) + ": empty key");
    }
    cfg.values_[key] = Trim(t.substr(eq + 1));
  }
  return cfg;
}

Config Config::Load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read config " + path);
  return Parse(in, path);
}

void Config::ApplyOverride(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Error(ErrorCode::kConfig, "override '" + assignment + "' is not key=value");
  }
  values_[Trim(assignment.substr(0, eq))] = Trim(assignment.substr(eq + 1));
}

std::string Config::GetString(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::string Config::RequireString(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) {
    throw Error(ErrorCode::kConfig, "missing required key '" + key + "'");
  }
  return it->second;
}

double Config::GetDouble(const std::string& key, double fallback) const {
  return Has(key) ? RequireDouble(key) : fallback;
}

double Config::RequireDouble(const std::string& key) const {
  const std::string v = RequireString(key);
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0') BadValue(key, v, "a number");
  return d;
}

int Config::GetInt(const std::string& key, int fallback) const {
  return Has(key) ? RequireInt(key) : fallback;
}

int Config::RequireInt(const std::string& key) const {
  const std::string v = RequireString(key);
  int out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) BadValue(key, v, "an integer");
  return out;
}

std::uint64_t Config::GetUint64(const std::string& key, std::uint64_t fallback) const {
  if (!Has(key)) return fallback;
  const std::string v = RequireString(key);
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    BadValue(key, v, "a non-negative integer");
  }
  return out;
}

bool Config::GetBool(const std::string& key, bool fallback) const {
  if (!Has(key)) return fallback;
  const std::string v = RequireString(key);
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  BadValue(key, v, "a boolean");
}

std::vector<double> Config::GetDoubles(const std::string& key,
                                       const std::vector<double>& fallback) const {
  if (!Has(key)) return fallback;
  const std::string v = RequireString(key);
  std::istringstream in(v);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) {
    char* end = nullptr;
    out.push_back(std::strtod(tok.c_str(), &end));
    if (*end != '\0') BadValue(key, v, "a list of numbers");
  }
  return out;
}

void Config::Write(std::ostream& out) const {
  for (const auto& [k, v] : values_) out << k << '=' << v << '\n';
}

}  // namespace hiloc
