#include "chemolb/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fstream>
#include <sstream>

#include "chemolb/errors.hpp"

namespace chemolb {

namespace {

std::string unquote(const std::string& v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  return v;
}

// Drops "# ..." and "; ..." tails that follow whitespace. Line count is kept
// so parser errors still point at the right line.
std::string strip_inline_comments(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    for (std::size_t i = 1; i < line.size(); ++i) {
      if ((line[i] == '#' || line[i] == ';') && (line[i - 1] == ' ' || line[i - 1] == '\t')) {
        line.erase(i);
        break;
      }
    }
    out += line;
    out += '\n';
  }
  return out;
}

}  // namespace

ConfigDocument ConfigDocument::parse(const std::string& text, const std::string& source) {
  boost::property_tree::ptree pt;
  std::istringstream in(strip_inline_comments(text));
  try {
    boost::property_tree::read_ini(in, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("parse", "", source + " line " + std::to_string(e.line()) + ": " + e.message());
  }
  ConfigDocument doc;
  for (const auto& [name, child] : pt) {
    if (child.empty()) {
      throw ConfigError("parse", name, source + ": key outside of any section");
    }
    Section s;
    s.name = name;
    for (const auto& [key, val] : child) s.entries.emplace_back(key, unquote(val.data()));
    doc.sections_.push_back(std::move(s));
  }
  return doc;
}

ConfigDocument ConfigDocument::load_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("file", path, "cannot open config file");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str(), path);
}

ConfigDocument::Section* ConfigDocument::find(const std::string& name) {
  for (auto& s : sections_) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

const ConfigDocument::Section* ConfigDocument::find(const std::string& name) const {
  for (const auto& s : sections_) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

bool ConfigDocument::has_section(const std::string& name) const { return find(name) != nullptr; }

bool ConfigDocument::has(const std::string& section, const std::string& key) const {
  return raw(section, key).has_value();
}

std::vector<std::string> ConfigDocument::subsections(const std::string& prefix) const {
  std::vector<std::string> out;
  const std::string p = prefix + ".";
  for (const auto& s : sections_) {
    if (s.name.size() > p.size() && s.name.compare(0, p.size(), p) == 0) out.push_back(s.name.substr(p.size()));
  }
  return out;
}

std::vector<std::string> ConfigDocument::keys(const std::string& section) const {
  std::vector<std::string> out;
  if (const Section* s = find(section)) {
    for (const auto& [k, v] : s->entries) out.push_back(k);
  }
  return out;
}

std::optional<std::string> ConfigDocument::raw(const std::string& section, const std::string& key) const {
  const Section* s = find(section);
  if (!s) return std::nullopt;
  for (const auto& [k, v] : s->entries) {
    if (k == key) {
      used_.insert({section, key});
      return v;
    }
  }
  return std::nullopt;
}

std::string ConfigDocument::get_string(const std::string& section, const std::string& key) const {
  auto v = raw(section, key);
  if (!v) throw ConfigError(section, key, "missing required key");
  return *v;
}

std::string ConfigDocument::get_string(const std::string& section, const std::string& key,
                                       const std::string& dflt) const {
  auto v = raw(section, key);
  return v ? *v : dflt;
}

double ConfigDocument::get_double(const std::string& section, const std::string& key) const {
  const std::string v = get_string(section, key);
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing characters");
    return d;
  } catch (const std::exception&) {
    throw ConfigError(section, key, "expected a number, got '" + v + "'");
  }
}

double ConfigDocument::get_double(const std::string& section, const std::string& key, double dflt) const {
  return has(section, key) ? get_double(section, key) : dflt;
}

int ConfigDocument::get_int(const std::string& section, const std::string& key) const {
  const std::string v = get_string(section, key);
  try {
    std::size_t used = 0;
    const long long d = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing characters");
    return static_cast<int>(d);
  } catch (const std::exception&) {
    throw ConfigError(section, key, "expected an integer, got '" + v + "'");
  }
}

int ConfigDocument::get_int(const std::string& section, const std::string& key, int dflt) const {
  return has(section, key) ? get_int(section, key) : dflt;
}

bool ConfigDocument::get_bool(const std::string& section, const std::string& key, bool dflt) const {
  auto v = raw(section, key);
  if (!v) return dflt;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  throw ConfigError(section, key, "expected a boolean, got '" + *v + "'");
}

void ConfigDocument::set(const std::string& section, const std::string& key, const std::string& value) {
  Section* s = find(section);
  if (!s) {
    sections_.push_back(Section{section, {}});
    s = &sections_.back();
  }
  for (auto& [k, v] : s->entries) {
    if (k == key) {
      v = value;
      return;
    }
  }
  s->entries.emplace_back(key, value);
}

void ConfigDocument::mark_used(const std::string& section, const std::string& key) const {
  used_.insert({section, key});
}

void ConfigDocument::reject_unused(const std::vector<std::string>& prefixes) const {
  for (const auto& s : sections_) {
    bool checked = false;
    for (const auto& p : prefixes) {
      if (s.name == p || s.name.rfind(p + ".", 0) == 0) checked = true;
    }
    if (!checked) continue;
    for (const auto& [k, v] : s.entries) {
      if (!used_.count({s.name, k})) throw ConfigError(s.name, k, "unknown key");
    }
  }
}

std::string ConfigDocument::serialize() const {
  std::ostringstream out;
  bool first = true;
  for (const auto& s : sections_) {
    if (!first) out << "\n";
    first = false;
    out << "[" << s.name << "]\n";
    for (const auto& [k, v] : s.entries) out << k << " = " << v << "\n";
  }
  return out.str();
}

}  // namespace chemolb
