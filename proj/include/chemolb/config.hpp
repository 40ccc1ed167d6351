#pragma once

#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace chemolb {

// INI-style document: [section] headers, key = value lines, '#' or ';'
// comments. Values may be wrapped in double quotes. Getters record which
// keys were consumed so leftovers can be reported as unknown.
class ConfigDocument {
 public:
  struct Section {
    std::string name;
    std::vector<std::pair<std::string, std::string>> entries;
  };

  static ConfigDocument parse(const std::string& text, const std::string& source = "<config>");
  static ConfigDocument load_file(const std::string& path);

  bool has_section(const std::string& name) const;
  bool has(const std::string& section, const std::string& key) const;
  // Section names "prefix.<name>" in file order; returns the <name> parts.
  std::vector<std::string> subsections(const std::string& prefix) const;
  std::vector<std::string> keys(const std::string& section) const;

  std::optional<std::string> raw(const std::string& section, const std::string& key) const;
  std::string get_string(const std::string& section, const std::string& key) const;
  std::string get_string(const std::string& section, const std::string& key, const std::string& dflt) const;
  double get_double(const std::string& section, const std::string& key) const;
  double get_double(const std::string& section, const std::string& key, double dflt) const;
  int get_int(const std::string& section, const std::string& key) const;
  int get_int(const std::string& section, const std::string& key, int dflt) const;
  bool get_bool(const std::string& section, const std::string& key, bool dflt) const;

  void set(const std::string& section, const std::string& key, const std::string& value);
  void mark_used(const std::string& section, const std::string& key) const;
  // Throws ConfigError for the first entry in the listed sections never consumed.
  void reject_unused(const std::vector<std::string>& section_prefixes) const;

  std::string serialize() const;
  const std::vector<Section>& sections() const { return sections_; }

 private:
  Section* find(const std::string& name);
  const Section* find(const std::string& name) const;

  std::vector<Section> sections_;
  mutable std::set<std::pair<std::string, std::string>> used_;
};

}  // namespace chemolb
