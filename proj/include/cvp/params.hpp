#pragma once

// Flat `key = value` parameter files. `#` starts a comment; lists are
// comma-separated. Every key must be consumed by the caller, otherwise
// check_all_used() reports it, which catches misspelled keys.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace cvp {

class ParamFile {
 public:
  static ParamFile parse(std::istream& in, const std::string& source = "<params>");
  static ParamFile load(const std::string& path);
  static ParamFile from_string(const std::string& text);

  [[nodiscard]] bool has(const std::string& key) const;

  double number(const std::string& key) const;
  double number(const std::string& key, double fallback) const;
  std::size_t count(const std::string& key) const;
  std::size_t count(const std::string& key, std::size_t fallback) const;
  std::uint64_t u64(const std::string& key, std::uint64_t fallback) const;
  bool flag(const std::string& key, bool fallback) const;
  std::string text(const std::string& key) const;
  std::string text(const std::string& key, const std::string& fallback) const;
  /// Comma-separated numbers; `expected` = 0 accepts any length.
  std::vector<double> numbers(const std::string& key, std::size_t expected = 0) const;

  /// Throws InvalidInput naming every key nobody read.
  void check_all_used(const std::string& context) const;

 private:
  struct Entry {
    std::string value;
    std::size_t line = 0;
    mutable bool used = false;
  };
  const Entry& entry(const std::string& key) const;

  std::string source_;
  std::map<std::string, Entry> entries_;
};

}  // namespace cvp
