#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <Eigen/Dense>
#include <json.hpp>

namespace traitsteer {

using Json = nlohmann::ordered_json;

/// Current version of every JSON artifact this library writes.
inline constexpr int kSchemaVersion = 1;

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`, creating
/// parent directories as needed.
void atomic_write(const std::filesystem::path& path, std::string_view bytes);

/// SHA-256 of the bytes, lowercase hex.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

Json parse_json(std::string_view text, const std::string& source);
Json load_json(const std::filesystem::path& path);

/// Pretty JSON (4-space indent) with a trailing newline. Invalid UTF-8 is
/// replaced rather than rejected.
std::string dump_json(const Json& value);

/// Rejects anything but kSchemaVersion in `doc["schema_version"]`.
void require_schema_version(const Json& doc, const std::string& what);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

Json matrix_to_json(const Eigen::MatrixXd& m);  // flat, row-major
Eigen::MatrixXd matrix_from_json(const Json& flat, Eigen::Index rows, Eigen::Index cols,
                                 const std::string& what);
Json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const Json& flat, Eigen::Index size, const std::string& what);

}  // namespace traitsteer
