#include "traitsteer/io.hpp"

#include <openssl/evp.h>

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>

#include "traitsteer/error.hpp"

namespace traitsteer {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::kIo, "read failed: " + path.string());
  return buffer.str();
}

void atomic_write(const fs::path& path, std::string_view bytes) {
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw Error(ErrorCode::kIo, "cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw Error(ErrorCode::kIo, "write failed: " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot rename " + tmp.string() + ": " + ec.message());
}

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &length, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::kIo, "sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(length * 2);
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

Json parse_json(std::string_view text, const std::string& source) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kSchema, source + ": " + e.what());
  }
}

Json load_json(const fs::path& path) { return parse_json(read_file(path), path.string()); }

std::string dump_json(const Json& value) {
  return value.dump(4, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
}

void require_schema_version(const Json& doc, const std::string& what) {
  if (!doc.is_object() || !doc.contains("schema_version")) {
    throw Error(ErrorCode::kSchema, what + ": missing schema_version");
  }
  const Json& v = doc.at("schema_version");
  if (!v.is_number_integer() || v.get<int>() != kSchemaVersion) {
    throw Error(ErrorCode::kIncompatibleVersion,
                what + ": schema_version " + v.dump() + " is not supported (expected " +
                    std::to_string(kSchemaVersion) + ")");
  }
}

std::string format_double(double value) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc{}) throw Error(ErrorCode::kInvalidArgument, "cannot format double");
  return std::string(buf.data(), end);
}

Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json out = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  return out;
}

Eigen::MatrixXd matrix_from_json(const Json& flat, Eigen::Index rows, Eigen::Index cols,
                                 const std::string& what) {
  if (!flat.is_array() || static_cast<Eigen::Index>(flat.size()) != rows * cols) {
    throw Error(ErrorCode::kSchema, what + ": expected " + std::to_string(rows * cols) +
                                        " values for shape [" + std::to_string(rows) + ", " +
                                        std::to_string(cols) + "]");
  }
  Eigen::MatrixXd m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c, ++k) {
      const Json& v = flat[k];
      if (!v.is_number()) throw Error(ErrorCode::kSchema, what + ": non-numeric entry at " + std::to_string(k));
      m(r, c) = v.get<double>();
    }
  }
  return m;
}

Json vector_to_json(const Eigen::VectorXd& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Eigen::VectorXd vector_from_json(const Json& flat, Eigen::Index size, const std::string& what) {
  return matrix_from_json(flat, size, 1, what).col(0);
}

}  // namespace traitsteer
