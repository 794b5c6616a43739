#include "disa/config.hpp"

#include "disa/cli.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

namespace disa::cli {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::pair<std::string, std::string> split_assignment(std::string_view line, std::string_view where) {
  const auto eq = line.find('=');
  if (eq == std::string_view::npos) throw UsageError(std::string(where) + ": expected key=value");
  const std::string_view key = trim(line.substr(0, eq));
  if (key.empty()) throw UsageError(std::string(where) + ": empty key");
  return {std::string(key), std::string(trim(line.substr(eq + 1)))};
}

}  // namespace

double parse_number(std::string_view text, std::string_view what) {
  text = trim(text);
  double v = 0.0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size() || !std::isfinite(v))
    throw UsageError(std::string(what) + ": not a number: '" + std::string(text) + "'");
  return v;
}

std::vector<double> parse_numbers(std::string_view text, std::string_view what) {
  std::vector<double> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = text.find(',', start);
    out.push_back(parse_number(text.substr(start, comma - start), what));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

void Config::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file " + path.string());
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view s = trim(line);
    if (s.empty() || s.front() == '#') continue;
    auto [key, value] = split_assignment(s, path.string() + ":" + std::to_string(line_no));
    values_[key] = value;
  }
}

void Config::assign(std::string_view assignment) {
  auto [key, value] = split_assignment(assignment, "--set " + std::string(assignment));
  values_[key] = value;
}

std::optional<std::string> Config::text(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::optional<double> Config::number(const std::string& key) const {
  const auto t = text(key);
  if (!t) return std::nullopt;
  return parse_number(*t, key);
}

std::optional<long long> Config::integer(const std::string& key) const {
  const auto t = text(key);
  if (!t) return std::nullopt;
  const std::string_view s = trim(*t);
  long long v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) throw UsageError(key + ": not an integer: '" + *t + "'");
  return v;
}

std::optional<std::vector<double>> Config::numbers(const std::string& key) const {
  const auto t = text(key);
  if (!t) return std::nullopt;
  return parse_numbers(*t, key);
}

std::optional<Vec3> Config::vec3(const std::string& key) const {
  const auto v = numbers(key);
  if (!v) return std::nullopt;
  if (v->size() != 3) throw UsageError(key + ": expected x,y,z");
  return Vec3((*v)[0], (*v)[1], (*v)[2]);
}

void Config::require_known(const std::vector<std::string_view>& known) const {
  for (const auto& [key, value] : values_) {
    bool ok = false;
    for (std::string_view k : known) ok = ok || key == k;
    if (!ok) throw UsageError("unknown config key '" + key + "'");
  }
}

}  // namespace disa::cli
