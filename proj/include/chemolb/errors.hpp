#pragma once

#include <stdexcept>
#include <string>

namespace chemolb {

class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Rejection of a config entry; carries the section and key it came from.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string section, std::string key, const std::string& msg)
      : std::runtime_error(format(section, key, msg)),
        section_(std::move(section)),
        key_(std::move(key)) {}

  const std::string& section() const { return section_; }
  const std::string& key() const { return key_; }

 private:
  static std::string format(const std::string& s, const std::string& k, const std::string& msg) {
    std::string where = "[" + s + "]";
    if (!k.empty()) where += " " + k;
    return where + ": " + msg;
  }
  std::string section_;
  std::string key_;
};

class StabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int step, std::string species, const std::string& msg)
      : std::runtime_error(msg), step_(step), species_(std::move(species)) {}
  int step() const { return step_; }
  const std::string& species() const { return species_; }

 private:
  int step_;
  std::string species_;
};

class UnsupportedModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PreconditionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace chemolb
