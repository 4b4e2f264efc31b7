#include "functa/archive.hpp"

#include <openssl/evp.h>

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

#include "functa/error.hpp"

namespace functa::io {

static_assert(std::endian::native == std::endian::little,
              "archive payloads are written in host byte order, which must be little-endian");

namespace {

constexpr std::string_view kMagic = "FUNCTA";

const char* dtype_name(DType d) {
  switch (d) {
    case DType::kF32: return "f32";
    case DType::kF64: return "f64";
    case DType::kI32: return "i32";
  }
  return "?";
}

std::size_t dtype_size(DType d) { return d == DType::kF64 ? 8 : 4; }

DType parse_dtype(const std::string& s) {
  if (s == "f32") return DType::kF32;
  if (s == "f64") return DType::kF64;
  if (s == "i32") return DType::kI32;
  throw FormatError("archive: unknown dtype '" + s + "'");
}

void append_tensor(std::string& out, const ArchiveTensor& t) {
  const auto& v = t.values;
  for (ad::Index r = 0; r < v.rows(); ++r) {
    for (ad::Index c = 0; c < v.cols(); ++c) {
      const double x = v(r, c);
      switch (t.dtype) {
        case DType::kF32: {
          const float f = static_cast<float>(x);
          out.append(reinterpret_cast<const char*>(&f), sizeof f);
          break;
        }
        case DType::kF64:
          out.append(reinterpret_cast<const char*>(&x), sizeof x);
          break;
        case DType::kI32: {
          const auto i = static_cast<std::int32_t>(x);
          out.append(reinterpret_cast<const char*>(&i), sizeof i);
          break;
        }
      }
    }
  }
}

ad::Tensor read_tensor(const char* p, DType dtype, ad::Index rows, ad::Index cols) {
  ad::Tensor t(rows, cols);
  for (ad::Index r = 0; r < rows; ++r) {
    for (ad::Index c = 0; c < cols; ++c) {
      switch (dtype) {
        case DType::kF32: {
          float f;
          std::memcpy(&f, p, sizeof f);
          t(r, c) = f;
          p += sizeof f;
          break;
        }
        case DType::kF64: {
          double d;
          std::memcpy(&d, p, sizeof d);
          t(r, c) = d;
          p += sizeof d;
          break;
        }
        case DType::kI32: {
          std::int32_t i;
          std::memcpy(&i, p, sizeof i);
          t(r, c) = i;
          p += sizeof i;
          break;
        }
      }
    }
  }
  return t;
}

void check_token(const std::string& s, const char* what) {
  if (s.empty() || s.find_first_of("\n\r") != std::string::npos) {
    throw ContractViolation(std::string("archive: invalid ") + what + " '" + s + "'");
  }
}

}  // namespace

// ---------------------------------------------------------------------------

void Archive::set(const std::string& key, const std::string& value) {
  check_token(key, "key");
  require(key.find('=') == std::string::npos && key.rfind("tensor", 0) != 0 &&
              key.rfind("payload", 0) != 0 && key.rfind("digest", 0) != 0,
          "archive: reserved or malformed key '" + key + "'");
  require(value.find_first_of("\n\r") == std::string::npos, "archive: value contains newline");
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = value;
      return;
    }
  }
  entries_.emplace_back(key, value);
}

void Archive::set(const std::string& key, double value) { set(key, format_double(value)); }

void Archive::set(const std::string& key, long value) { set(key, std::to_string(value)); }

bool Archive::has(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return true;
  }
  return false;
}

const std::string& Archive::get(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return v;
  }
  throw FormatError("archive: missing key '" + key + "'");
}

double Archive::get_double(const std::string& key) const { return parse_double(get(key)); }

long Archive::get_long(const std::string& key) const { return parse_long(get(key)); }

void Archive::add_tensor(const std::string& name, ad::Tensor values, DType dtype) {
  check_token(name, "tensor name");
  require(name.find(' ') == std::string::npos, "archive: tensor name contains space");
  require(!has_tensor(name), "archive: duplicate tensor '" + name + "'");
  tensors_.push_back(ArchiveTensor{name, dtype, std::move(values)});
}

bool Archive::has_tensor(const std::string& name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return true;
  }
  return false;
}

const ad::Tensor& Archive::tensor(const std::string& name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t.values;
  }
  throw FormatError("archive: missing tensor '" + name + "'");
}

std::string Archive::serialize() const {
  std::string header;
  header += std::string(kMagic) + " " + kind_ + " " + std::to_string(version_) + "\n";
  for (const auto& [k, v] : entries_) header += k + "=" + v + "\n";
  std::string payload;
  for (const auto& t : tensors_) {
    header += "tensor " + t.name + " " + dtype_name(t.dtype) + " " + std::to_string(t.values.rows()) +
              " " + std::to_string(t.values.cols()) + "\n";
    append_tensor(payload, t);
  }
  header += "payload " + std::to_string(payload.size()) + "\n";
  const std::string digest = sha256_hex(header + payload);
  return header + "digest sha256:" + digest + "\n" + payload;
}

Archive Archive::parse(const std::string& bytes, std::string_view expected_kind,
                       int supported_version) {
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    const auto nl = bytes.find('\n', pos);
    if (nl == std::string::npos) throw TruncatedFile("archive: header is truncated");
    std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };

  std::istringstream first(next_line());
  std::string magic, kind;
  int version = 0;
  if (!(first >> magic >> kind >> version) || magic != kMagic) {
    throw FormatError("archive: not a functa archive");
  }
  if (kind != expected_kind) {
    throw FormatError("archive: expected kind '" + std::string(expected_kind) + "', found '" + kind +
                      "'");
  }
  if (version != supported_version) {
    throw VersionMismatch("archive: " + kind + " schema version " + std::to_string(version) +
                          " is not supported (expected " + std::to_string(supported_version) + ")");
  }

  Archive ar(kind, version);
  struct Decl {
    std::string name;
    DType dtype;
    ad::Index rows, cols;
  };
  std::vector<Decl> decls;
  std::size_t payload_size = 0;
  std::size_t digest_line_start = 0;
  std::string digest;
  for (;;) {
    digest_line_start = pos;
    const std::string line = next_line();
    if (line.rfind("tensor ", 0) == 0) {
      std::istringstream ss(line.substr(7));
      Decl d;
      std::string dt;
      if (!(ss >> d.name >> dt >> d.rows >> d.cols) || d.rows < 0 || d.cols < 0) {
        throw FormatError("archive: malformed tensor line '" + line + "'");
      }
      d.dtype = parse_dtype(dt);
      decls.push_back(d);
    } else if (line.rfind("payload ", 0) == 0) {
      payload_size = static_cast<std::size_t>(parse_long(line.substr(8)));
    } else if (line.rfind("digest sha256:", 0) == 0) {
      digest = line.substr(14);
      break;
    } else {
      const auto eq = line.find('=');
      if (eq == std::string::npos || eq == 0) {
        throw FormatError("archive: malformed header line '" + line + "'");
      }
      ar.entries_.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    }
  }

  std::size_t expected = 0;
  for (const auto& d : decls) {
    expected += static_cast<std::size_t>(d.rows * d.cols) * dtype_size(d.dtype);
  }
  if (expected != payload_size) throw FormatError("archive: payload size disagrees with tensors");
  const std::size_t available = bytes.size() - pos;
  if (available < payload_size) {
    throw TruncatedFile("archive: payload truncated (" + std::to_string(available) + " of " +
                        std::to_string(payload_size) + " bytes)");
  }
  if (available > payload_size) throw FormatError("archive: trailing bytes after payload");

  const std::string actual =
      sha256_hex(bytes.substr(0, digest_line_start) + bytes.substr(pos, payload_size));
  if (actual != digest) throw DigestMismatch("archive: content digest mismatch");

  const char* p = bytes.data() + pos;
  for (const auto& d : decls) {
    ar.tensors_.push_back(ArchiveTensor{d.name, d.dtype, read_tensor(p, d.dtype, d.rows, d.cols)});
    p += static_cast<std::size_t>(d.rows * d.cols) * dtype_size(d.dtype);
  }
  return ar;
}

void Archive::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

Archive Archive::load(const std::filesystem::path& path, std::string_view expected_kind,
                      int supported_version) {
  return parse(read_file(path), expected_kind, supported_version);
}

// ---------------------------------------------------------------------------

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256: digest computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xF]);
  }
  return out;
}

std::string file_sha256(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

std::string tensors_sha256(const std::vector<ad::Tensor>& tensors) {
  std::string bytes;
  for (const auto& t : tensors) append_tensor(bytes, ArchiveTensor{"", DType::kF64, t});
  return sha256_hex(bytes);
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError("expected a number, got '" + s + "'");
  }
  return v;
}

long parse_long(const std::string& s) {
  long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError("expected an integer, got '" + s + "'");
  }
  return v;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

}  // namespace functa::io
