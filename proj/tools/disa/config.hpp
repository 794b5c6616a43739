#pragma once

#include "disa/common.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace disa::cli {

// Flat key=value settings. Later assignments win, so command-line overrides go after the file.
class Config {
 public:
  /// Lines of `key = value`; blank lines and lines starting with '#' are skipped.
  void load_file(const std::filesystem::path& path);
  void assign(std::string_view assignment);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> text(const std::string& key) const;
  std::optional<double> number(const std::string& key) const;
  std::optional<long long> integer(const std::string& key) const;
  /// Comma-separated numbers.
  std::optional<std::vector<double>> numbers(const std::string& key) const;
  std::optional<Vec3> vec3(const std::string& key) const;

  /// Throws UsageError naming the first key outside `known`.
  void require_known(const std::vector<std::string_view>& known) const;
  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

double parse_number(std::string_view text, std::string_view what);
std::vector<double> parse_numbers(std::string_view text, std::string_view what);

}  // namespace disa::cli
