#include "mfatlas/io.hpp"

#include <openssl/evp.h>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <sstream>

#include "mfatlas/errors.hpp"

namespace mfatlas::io {

namespace fs = std::filesystem;

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  std::array<char, 32> buf{};
  std::snprintf(buf.data(), buf.size(), "%.17g", x);
  return buf.data();
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

CsvWriter::CsvWriter(const fs::path& path, const std::vector<std::string>& header)
    : path_(path), columns_(header.size()) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw Error("cannot open " + path.string() + " for writing");
  std::vector<CsvCell> cells;
  for (const auto& h : header) cells.emplace_back(h);
  row(cells);
}

void CsvWriter::row(const std::vector<CsvCell>& cells) {
  if (cells.size() != columns_) throw Error("CsvWriter: row width does not match header in " + path_.string());
  for (std::size_t k = 0; k < cells.size(); ++k) {
    if (k) out_ << ',';
    out_ << cells[k].text;
  }
  // RFC 4180 line terminator
  out_ << "\r\n";
}

void CsvWriter::close() {
  out_.close();
  if (out_.fail()) throw Error("error while writing " + path_.string());
}

namespace {

std::string to_hex(const unsigned char* data, unsigned len) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  s.reserve(2 * len);
  for (unsigned k = 0; k < len; ++k) {
    s += digits[data[k] >> 4];
    s += digits[data[k] & 15];
  }
  return s;
}

struct Digest {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  Digest() {
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) throw Error("sha256: init failed");
  }
  ~Digest() { EVP_MD_CTX_free(ctx); }
  void update(const void* p, std::size_t n) {
    if (EVP_DigestUpdate(ctx, p, n) != 1) throw Error("sha256: update failed");
  }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned len = 0;
    if (EVP_DigestFinal_ex(ctx, md, &len) != 1) throw Error("sha256: final failed");
    return to_hex(md, len);
  }
};

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::array<char, 32> buf{};
  std::strftime(buf.data(), buf.size(), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf.data();
}

}  // namespace

std::string sha256_hex(std::string_view data) {
  Digest d;
  d.update(data.data(), data.size());
  return d.hex();
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  Digest d;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    d.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return d.hex();
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out << j.dump(2) << '\n';
    if (!out) throw Error("error while writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

RunManifest::RunManifest(fs::path dir, std::string experiment, nlohmann::json config)
    : dir_(std::move(dir)), doc_(std::make_unique<nlohmann::json>()) {
  fs::create_directories(dir_);
  auto& d = *doc_;
  d["experiment"] = std::move(experiment);
  d["config"] = std::move(config);
  d["code_version"] = std::string(kCodeVersion);
  d["started_utc"] = utc_now();
  d["status"] = "running";
  d["outputs"] = nlohmann::json::object();
  write();
}

RunManifest::~RunManifest() = default;

fs::path RunManifest::file(const std::string& name) {
  outputs_.push_back(name);
  return dir_ / name;
}

void RunManifest::set(const std::string& key, const nlohmann::json& value) {
  (*doc_)[key] = value;
  write();
}

void RunManifest::finish(bool passed) {
  auto& d = *doc_;
  for (const auto& name : outputs_) {
    const fs::path p = dir_ / name;
    if (fs::exists(p)) d["outputs"][name] = {{"sha256", sha256_file(p)}, {"bytes", fs::file_size(p)}};
  }
  d["finished_utc"] = utc_now();
  d["status"] = passed ? "pass" : "fail";
  write();
}

void RunManifest::abort(const std::string& reason) {
  auto& d = *doc_;
  d["finished_utc"] = utc_now();
  d["status"] = "error";
  d["error"] = reason;
  write();
}

void RunManifest::write() { write_json(dir_ / "manifest.json", *doc_); }

}  // namespace mfatlas::io
