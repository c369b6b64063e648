#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace dts {

/// INI-flavoured key=value text: optional `[section]` headers, `#` comments, blank lines.
/// Keys outside any header live in section "".
class KeyValueFile {
 public:
  using Section = std::map<std::string, std::string>;

  static KeyValueFile parse(std::string_view text);
  static KeyValueFile load(const std::filesystem::path& path);

  void save(const std::filesystem::path& path) const;
  std::string str() const;

  void set(const std::string& section, const std::string& key, const std::string& value);
  bool has(const std::string& section, const std::string& key) const;
  std::optional<std::string> get(const std::string& section, const std::string& key) const;

  std::string get_string(const std::string& section, const std::string& key) const;
  double get_double(const std::string& section, const std::string& key) const;
  long long get_int(const std::string& section, const std::string& key) const;

  const std::map<std::string, Section>& sections() const { return sections_; }
  bool has_section(const std::string& section) const { return sections_.count(section) != 0; }

  /// Throws a config error naming the first key in `section` not listed in `allowed`.
  void reject_unknown(const std::string& section, const std::set<std::string>& allowed) const;

 private:
  std::map<std::string, Section> sections_;
};

std::string format_double(double v);
std::vector<std::string> split(std::string_view s, char sep);
std::string trim(std::string_view s);

}  // namespace dts
