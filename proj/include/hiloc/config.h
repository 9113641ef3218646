#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace hiloc {

/// Flat key=value configuration. Blank lines and '#' comments are
/// ignored. Lookups of malformed or missing required values throw
/// kConfig naming the key.
class Config {
 public:
  static Config Parse(std::istream& in, const std::string& source = "<config>");
  static Config Load(const std::string& path);

  /// "key=value"; throws kConfig when there is no '='.
  void ApplyOverride(const std::string& assignment);
  void Set(const std::string& key, const std::string& value) { values_[key] = value; }

  bool Has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string GetString(const std::string& key, const std::string& fallback) const;
  std::string RequireString(const std::string& key) const;
  double GetDouble(const std::string& key, double fallback) const;
  double RequireDouble(const std::string& key) const;
  int GetInt(const std::string& key, int fallback) const;
  int RequireInt(const std::string& key) const;
  std::uint64_t GetUint64(const std::string& key, std::uint64_t fallback) const;
  bool GetBool(const std::string& key, bool fallback) const;
  /// Whitespace-separated reals.
  std::vector<double> GetDoubles(const std::string& key,
                                 const std::vector<double>& fallback) const;

  /// Sorted key=value lines.
  void Write(std::ostream& out) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace hiloc
