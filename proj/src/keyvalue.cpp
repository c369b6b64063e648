#include "dts/keyvalue.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dts/error.hpp"

namespace dts {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '\n')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '\n')) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

std::string format_double(double v) {
  // Shortest representation that round-trips.
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

KeyValueFile KeyValueFile::parse(std::string_view text) {
  KeyValueFile kv;
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty() || line[0] == '#' || line[0] == ';') {
      if (nl == text.size()) break;
      continue;
    }
    if (line.front() == '[') {
      if (line.back() != ']') fail(ErrorKind::config, "line " + std::to_string(line_no) + ": malformed section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      kv.sections_[section];
    } else {
      auto eq = line.find('=');
      if (eq == std::string::npos) fail(ErrorKind::config, "line " + std::to_string(line_no) + ": expected key=value");
      std::string key = trim(std::string_view(line).substr(0, eq));
      std::string value = trim(std::string_view(line).substr(eq + 1));
      if (key.empty()) fail(ErrorKind::config, "line " + std::to_string(line_no) + ": empty key");
      auto& sec = kv.sections_[section];
      if (sec.count(key)) fail(ErrorKind::config, "line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
      sec[key] = value;
    }
    if (nl == text.size()) break;
  }
  return kv;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string KeyValueFile::str() const {
  std::ostringstream os;
  bool first = true;
  for (const auto& [name, sec] : sections_) {
    if (!name.empty()) {
      if (!first) os << '\n';
      os << '[' << name << "]\n";
    }
    for (const auto& [k, v] : sec) os << k << " = " << v << '\n';
    first = false;
  }
  return os.str();
}

void KeyValueFile::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out << str();
}

void KeyValueFile::set(const std::string& section, const std::string& key, const std::string& value) {
  sections_[section][key] = value;
}

bool KeyValueFile::has(const std::string& section, const std::string& key) const {
  auto it = sections_.find(section);
  return it != sections_.end() && it->second.count(key) != 0;
}

std::optional<std::string> KeyValueFile::get(const std::string& section, const std::string& key) const {
  auto it = sections_.find(section);
  if (it == sections_.end()) return std::nullopt;
  auto jt = it->second.find(key);
  if (jt == it->second.end()) return std::nullopt;
  return jt->second;
}

std::string KeyValueFile::get_string(const std::string& section, const std::string& key) const {
  auto v = get(section, key);
  if (!v) fail(ErrorKind::config, "missing key [" + section + "] " + key);
  return *v;
}

double KeyValueFile::get_double(const std::string& section, const std::string& key) const {
  std::string s = get_string(section, key);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    fail(ErrorKind::config, "[" + section + "] " + key + ": not a number: '" + s + "'");
  return v;
}

long long KeyValueFile::get_int(const std::string& section, const std::string& key) const {
  std::string s = get_string(section, key);
  long long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    fail(ErrorKind::config, "[" + section + "] " + key + ": not an integer: '" + s + "'");
  return v;
}

void KeyValueFile::reject_unknown(const std::string& section, const std::set<std::string>& allowed) const {
  auto it = sections_.find(section);
  if (it == sections_.end()) return;
  for (const auto& [k, v] : it->second) {
    if (!allowed.count(k)) fail(ErrorKind::config, "unknown key [" + section + "] " + k);
  }
}

}  // namespace dts
