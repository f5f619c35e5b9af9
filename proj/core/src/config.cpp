#include "dexbody/config.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dexbody/errors.hpp"

namespace dexbody {

namespace {

std::string trim(std::string_view s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  size_t e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

}  // namespace

void ConfigSection::fail(const std::string& msg, int line) const {
  throw SchemaError(origin_ + ":" + std::to_string(line) + ": " + msg);
}

void ConfigSection::add_entry(const std::string& key, const std::string& value, int line) {
  for (const Entry& e : entries_) {
    if (e.key == key) fail("duplicate key '" + key + "' in section [" + name_ + "]", line);
  }
  entries_.push_back(Entry{key, value, line, false});
}

const ConfigSection::Entry* ConfigSection::find(const std::string& key) const {
  for (const Entry& e : entries_) {
    if (e.key == key) {
      e.consumed = true;
      return &e;
    }
  }
  return nullptr;
}

const ConfigSection::Entry& ConfigSection::require(const std::string& key) const {
  const Entry* e = find(key);
  if (!e) fail("missing key '" + key + "' in section [" + name_ + "]", line_);
  return *e;
}

bool ConfigSection::has(const std::string& key) const {
  for (const Entry& e : entries_) {
    if (e.key == key) return true;
  }
  return false;
}

std::string ConfigSection::get_str(const std::string& key) const { return require(key).value; }

std::string ConfigSection::get_str(const std::string& key, const std::string& fallback) const {
  const Entry* e = find(key);
  return e ? e->value : fallback;
}

double ConfigSection::get_num(const std::string& key) const {
  const Entry& e = require(key);
  try {
    size_t pos = 0;
    double v = std::stod(e.value, &pos);
    if (trim(e.value.substr(pos)).empty()) return v;
  } catch (const std::exception&) {
  }
  fail("key '" + key + "' is not a number: '" + e.value + "'", e.line);
}

double ConfigSection::get_num(const std::string& key, double fallback) const {
  return has(key) ? get_num(key) : fallback;
}

int ConfigSection::get_int(const std::string& key) const {
  double v = get_num(key);
  int i = static_cast<int>(v);
  if (static_cast<double>(i) != v) fail("key '" + key + "' is not an integer", line_);
  return i;
}

int ConfigSection::get_int(const std::string& key, int fallback) const {
  return has(key) ? get_int(key) : fallback;
}

bool ConfigSection::get_bool(const std::string& key) const {
  const Entry& e = require(key);
  if (e.value == "true" || e.value == "1") return true;
  if (e.value == "false" || e.value == "0") return false;
  fail("key '" + key + "' is not a bool: '" + e.value + "'", e.line);
}

bool ConfigSection::get_bool(const std::string& key, bool fallback) const {
  return has(key) ? get_bool(key) : fallback;
}

std::vector<double> ConfigSection::get_nums(const std::string& key) const {
  const Entry& e = require(key);
  std::vector<double> out;
  for (const std::string& w : split_ws(e.value)) {
    try {
      size_t pos = 0;
      out.push_back(std::stod(w, &pos));
      if (pos != w.size()) throw std::invalid_argument(w);
    } catch (const std::exception&) {
      fail("key '" + key + "' has a non-numeric element '" + w + "'", e.line);
    }
  }
  return out;
}

std::vector<std::string> ConfigSection::get_words(const std::string& key) const {
  return split_ws(require(key).value);
}

std::vector<std::string> ConfigSection::get_words(
    const std::string& key, const std::vector<std::string>& fallback) const {
  return has(key) ? get_words(key) : fallback;
}

void ConfigSection::require_all_consumed() const {
  for (const Entry& e : entries_) {
    if (!e.consumed) fail("unknown key '" + e.key + "' in section [" + name_ + "]", e.line);
  }
}

ConfigFile ConfigFile::parse_string(const std::string& text, const std::string& origin) {
  ConfigFile cfg;
  cfg.origin_ = origin;
  cfg.sections_.reserve(64);
  cfg.sections_.emplace_back("", origin, 0);

  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  size_t current = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    if (size_t hash = line.find('#'); hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw SchemaError(origin + ":" + std::to_string(line_no) + ": unterminated section header");
      std::string name = trim(line.substr(1, line.size() - 2));
      if (name.empty())
        throw SchemaError(origin + ":" + std::to_string(line_no) + ": empty section name");
      cfg.sections_.emplace_back(name, origin, line_no);
      current = cfg.sections_.size() - 1;
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw SchemaError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw SchemaError(origin + ":" + std::to_string(line_no) + ": empty key");
    cfg.sections_[current].add_entry(key, value, line_no);
  }
  cfg.top_ = &cfg.sections_[0];
  return cfg;
}

ConfigFile ConfigFile::parse_file(const std::string& path) {
  ConfigFile cfg = parse_string(read_text_file(path), path);
  return cfg;
}

std::vector<ConfigSection*> ConfigFile::named(const std::string& name) {
  std::vector<ConfigSection*> out;
  for (ConfigSection& s : sections_) {
    if (s.name() == name) out.push_back(&s);
  }
  return out;
}

ConfigSection* ConfigFile::unique(const std::string& name) {
  auto all = named(name);
  if (all.empty()) return nullptr;
  if (all.size() > 1)
    throw SchemaError(origin_ + ": section [" + name + "] appears more than once");
  return all[0];
}

void ConfigFile::require_all_consumed() const {
  for (const ConfigSection& s : sections_) s.require_all_consumed();
}

uint64_t fnv1a64(std::string_view bytes) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path);
  return ss.str();
}

void write_file_atomic(const std::string& path, std::string_view content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write file: " + tmp);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename failed: " + tmp + " -> " + path + " (" + ec.message() + ")");
}

bool file_exists(const std::string& path) {
  std::error_code ec;
  return std::filesystem::exists(path, ec);
}

std::string format_double(double v) {
  char buf[32];
  // Try successively longer precision until the value round-trips.
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace dexbody
