#pragma once

// Container format shared by functasets and model checkpoints:
//
//   FUNCTA <kind> <version>
//   key=value                       (any number, insertion order kept)
//   tensor <name> <f32|f64|i32> <rows> <cols>
//   payload <bytes>
//   digest sha256:<hex>
//   <raw little-endian row-major payload>
//
// The digest covers every header byte before the digest line plus the
// payload, so any corrupted byte is detected on load.

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "functa/ad.hpp"

namespace functa::io {

enum class DType { kF32, kF64, kI32 };

struct ArchiveTensor {
  std::string name;
  DType dtype = DType::kF64;
  ad::Tensor values;
};

class Archive {
 public:
  Archive() = default;
  Archive(std::string kind, int version) : kind_(std::move(kind)), version_(version) {}

  const std::string& kind() const { return kind_; }
  int version() const { return version_; }

  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, double value);
  void set(const std::string& key, long value);
  void set(const std::string& key, int value) { set(key, static_cast<long>(value)); }
  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  long get_long(const std::string& key) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  void add_tensor(const std::string& name, ad::Tensor values, DType dtype);
  bool has_tensor(const std::string& name) const;
  const ad::Tensor& tensor(const std::string& name) const;
  const std::vector<ArchiveTensor>& tensors() const { return tensors_; }

  void save(const std::filesystem::path& path) const;
  /// Throws FormatError, VersionMismatch, TruncatedFile or DigestMismatch.
  static Archive load(const std::filesystem::path& path, std::string_view expected_kind,
                      int supported_version);

  std::string serialize() const;
  static Archive parse(const std::string& bytes, std::string_view expected_kind,
                       int supported_version);

 private:
  std::string kind_;
  int version_ = 1;
  std::vector<std::pair<std::string, std::string>> entries_;
  std::vector<ArchiveTensor> tensors_;
};

std::string sha256_hex(std::string_view bytes);
std::string file_sha256(const std::filesystem::path& path);
/// Digest of tensors serialised as little-endian float64 in order.
std::string tensors_sha256(const std::vector<ad::Tensor>& tensors);

/// Shortest round-trip decimal representation.
std::string format_double(double v);
double parse_double(const std::string& s);
long parse_long(const std::string& s);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace functa::io
