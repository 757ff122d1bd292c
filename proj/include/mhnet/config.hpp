#pragma once

#include <boost/property_tree/ptree.hpp>
#include <optional>
#include <string>
#include <vector>

namespace mhnet {

/// Key-value configuration with [sections]. Keys are addressed as
/// "section.key". Values given on the command line override file values.
class Config {
 public:
  Config() = default;

  static Config load(const std::string& path);
  static Config parse(const std::string& text);

  bool has(const std::string& key) const;
  void set(const std::string& key, const std::string& value);

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// Comma-separated list; surrounding whitespace trimmed, empty items dropped.
  std::vector<std::string> get_list(const std::string& key,
                                    const std::vector<std::string>& fallback) const;

 private:
  std::optional<std::string> raw(const std::string& key) const;
  boost::property_tree::ptree tree_;
};

}  // namespace mhnet
