#pragma once

// Output plumbing: CSV files (RFC 4180 quoting, %.17g floats), SHA-256 file
// checksums and the per-experiment run manifest.

#include <concepts>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace mfatlas::io {

/// %.17g; non-finite values print as nan / inf / -inf.
std::string format_double(double x);

/// Quotes a field if it contains a comma, quote, CR or LF.
std::string csv_escape(std::string_view field);

struct CsvCell {
  std::string text;
  CsvCell(double x) : text(format_double(x)) {}
  template <std::integral I>
  CsvCell(I x) : text(std::to_string(x)) {}
  CsvCell(std::string s) : text(csv_escape(s)) {}
  CsvCell(const char* s) : text(csv_escape(s)) {}
  CsvCell(std::string_view s) : text(csv_escape(s)) {}
  static CsvCell empty() { return CsvCell(std::string()); }
};

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  void row(const std::vector<CsvCell>& cells);
  void close();
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t columns_;
};

std::string sha256_file(const std::filesystem::path& path);
std::string sha256_hex(std::string_view data);

/// Writes `j` (pretty-printed, sorted keys, trailing newline) atomically.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

inline constexpr std::string_view kCodeVersion = "mfatlas 1.0.0";

/// Run manifest: written before any result file, then rewritten at the end
/// with the checksums of every emitted file.
class RunManifest {
 public:
  RunManifest(std::filesystem::path dir, std::string experiment, nlohmann::json config);
  ~RunManifest();
  RunManifest(const RunManifest&) = delete;
  RunManifest& operator=(const RunManifest&) = delete;

  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path file(const std::string& name);
  void set(const std::string& key, const nlohmann::json& value);
  /// Records checksums and marks the run finished.
  void finish(bool passed);
  /// Marks the run as stopped by an error.
  void abort(const std::string& reason);

 private:
  void write();
  std::filesystem::path dir_;
  std::unique_ptr<nlohmann::json> doc_;
  std::vector<std::string> outputs_;
};

}  // namespace mfatlas::io
