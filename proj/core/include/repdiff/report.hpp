#pragma once

#include <string>
#include <vector>

namespace repdiff {

/// 64-bit FNV-1a, hex-encoded; used as the config fingerprint in every output.
std::string fnv1a_hex(const std::string& s);

/// Shortest round-trip decimal form of a double ("%.17g" with cleanup), so
/// reruns produce byte-identical text.
std::string format_double(double v);

void write_text_file(const std::string& path, const std::string& content);
void ensure_directory(const std::string& path);

/// Minimal CSV emitter with a fixed, documented header and a leading
/// config-hash comment line.
class CsvTable {
 public:
  CsvTable(std::string config_hash, std::vector<std::string> columns);
  void add_row(const std::vector<std::string>& cells);
  std::string to_string() const;

 private:
  std::string config_hash_;
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace repdiff
