#include "cvp/params.hpp"

#include "cvp/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace cvp {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

ParamFile ParamFile::parse(std::istream& in, const std::string& source) {
  ParamFile pf;
  pf.source_ = source;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidInput(source + ":" + std::to_string(n) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw InvalidInput(source + ":" + std::to_string(n) + ": empty key");
    if (value.empty())
      throw InvalidInput(source + ":" + std::to_string(n) + ": key '" + key + "' has no value");
    if (pf.entries_.count(key))
      throw InvalidInput(source + ":" + std::to_string(n) + ": duplicate key '" + key + "' (first on line " +
                         std::to_string(pf.entries_.at(key).line) + ")");
    pf.entries_[key] = Entry{value, n, false};
  }
  return pf;
}

ParamFile ParamFile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open parameter file '" + path + "'");
  return parse(in, path);
}

ParamFile ParamFile::from_string(const std::string& text) {
  std::istringstream in(text);
  return parse(in);
}

bool ParamFile::has(const std::string& key) const { return entries_.count(key) != 0; }

const ParamFile::Entry& ParamFile::entry(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) throw InvalidInput(source_ + ": missing required key '" + key + "'");
  it->second.used = true;
  return it->second;
}

double ParamFile::number(const std::string& key) const {
  const Entry& e = entry(key);
  double v = 0.0;
  const char* first = e.value.data();
  const char* last = first + e.value.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v))
    throw InvalidInput(source_ + ":" + std::to_string(e.line) + ": key '" + key +
                       "' expects a number, got '" + e.value + "'");
  return v;
}

double ParamFile::number(const std::string& key, double fallback) const {
  return has(key) ? number(key) : fallback;
}

std::size_t ParamFile::count(const std::string& key) const {
  const double v = number(key);
  if (v < 0.0 || v != std::floor(v) || v > 1e15)
    throw InvalidInput(source_ + ":" + std::to_string(entries_.at(key).line) + ": key '" + key +
                       "' expects a nonnegative integer");
  return static_cast<std::size_t>(v);
}

std::size_t ParamFile::count(const std::string& key, std::size_t fallback) const {
  return has(key) ? count(key) : fallback;
}

std::uint64_t ParamFile::u64(const std::string& key, std::uint64_t fallback) const {
  if (!has(key)) return fallback;
  const Entry& e = entry(key);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(e.value.data(), e.value.data() + e.value.size(), v);
  if (ec != std::errc() || ptr != e.value.data() + e.value.size())
    throw InvalidInput(source_ + ":" + std::to_string(e.line) + ": key '" + key +
                       "' expects an unsigned integer");
  return v;
}

bool ParamFile::flag(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const Entry& e = entry(key);
  std::string v = e.value;
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw InvalidInput(source_ + ":" + std::to_string(e.line) + ": key '" + key + "' expects true/false");
}

std::string ParamFile::text(const std::string& key) const { return entry(key).value; }

std::string ParamFile::text(const std::string& key, const std::string& fallback) const {
  return has(key) ? text(key) : fallback;
}

std::vector<double> ParamFile::numbers(const std::string& key, std::size_t expected) const {
  const Entry& e = entry(key);
  std::vector<double> out;
  std::stringstream ss(e.value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    double v = 0.0;
    const char* first = item.data();
    const char* last = first + item.size();
    if (first != last && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (item.empty() || ec != std::errc() || ptr != last || !std::isfinite(v))
      throw InvalidInput(source_ + ":" + std::to_string(e.line) + ": key '" + key +
                         "' has a non-numeric list entry '" + item + "'");
    out.push_back(v);
  }
  if (expected != 0 && out.size() != expected)
    throw InvalidInput(source_ + ":" + std::to_string(e.line) + ": key '" + key + "' expects " +
                       std::to_string(expected) + " values, got " + std::to_string(out.size()));
  return out;
}

void ParamFile::check_all_used(const std::string& context) const {
  std::ostringstream msg;
  bool any = false;
  for (const auto& [key, e] : entries_) {
    if (e.used) continue;
    msg << (any ? "; " : "") << "line " << e.line << ": '" << key << "'";
    any = true;
  }
  if (any)
    throw InvalidInput(source_ + ": unknown key(s) for " + context + ": " + msg.str());
}

}  // namespace cvp
