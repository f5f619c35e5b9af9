#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace dexbody {

/// One `[name]` block of a config file. Keys are consumed through the typed
/// getters; `require_all_consumed()` rejects anything the loader never asked
/// for, so stray keys fail loudly instead of being silently ignored.
class ConfigSection {
 public:
  ConfigSection(std::string name, std::string origin, int line)
      : name_(std::move(name)), origin_(std::move(origin)), line_(line) {}

  const std::string& name() const { return name_; }
  int line() const { return line_; }

  bool has(const std::string& key) const;

  std::string get_str(const std::string& key) const;
  std::string get_str(const std::string& key, const std::string& fallback) const;
  double get_num(const std::string& key) const;
  double get_num(const std::string& key, double fallback) const;
  int get_int(const std::string& key) const;
  int get_int(const std::string& key, int fallback) const;
  bool get_bool(const std::string& key) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_nums(const std::string& key) const;
  std::vector<std::string> get_words(const std::string& key) const;
  std::vector<std::string> get_words(const std::string& key,
                                     const std::vector<std::string>& fallback) const;

  void require_all_consumed() const;

  void add_entry(const std::string& key, const std::string& value, int line);

 private:
  struct Entry {
    std::string key;
    std::string value;
    int line = 0;
    mutable bool consumed = false;
  };
  const Entry* find(const std::string& key) const;
  const Entry& require(const std::string& key) const;
  [[noreturn]] void fail(const std::string& msg, int line) const;

  std::string name_;
  std::string origin_;
  int line_ = 0;
  std::vector<Entry> entries_;
};

/// Parsed key/value config file: top-level entries plus ordered, possibly
/// repeated `[section]` blocks. `#` starts a comment.
class ConfigFile {
 public:
  static ConfigFile parse_file(const std::string& path);
  static ConfigFile parse_string(const std::string& text, const std::string& origin);

  ConfigSection& top() { return *top_; }
  const ConfigSection& top() const { return *top_; }
  const std::vector<ConfigSection>& sections() const { return sections_; }
  std::vector<ConfigSection>& sections() { return sections_; }

  /// All sections with the given name, in file order.
  std::vector<ConfigSection*> named(const std::string& name);
  /// The unique section with this name, or null if absent. Throws if repeated.
  ConfigSection* unique(const std::string& name);

  void require_all_consumed() const;

  const std::string& origin() const { return origin_; }

 private:
  ConfigFile() = default;
  std::string origin_;
  std::vector<ConfigSection> sections_;
  ConfigSection* top_ = nullptr;  // sections_[0]
};

// Small IO helpers shared by manifests, clips and checkpoints.
uint64_t fnv1a64(std::string_view bytes);
std::string read_text_file(const std::string& path);
void write_file_atomic(const std::string& path, std::string_view content);
bool file_exists(const std::string& path);

/// Shortest decimal form that round-trips a double exactly.
std::string format_double(double v);

}  // namespace dexbody
