#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "traitsteer/io.hpp"
#include "traitsteer/pressure_features.hpp"
#include "traitsteer/registry.hpp"
#include "traitsteer/sae.hpp"

namespace traitsteer {

// ---- factor registries ----------------------------------------------------

/// Accepts a full JSON object or a bare `"Factor": {...}` fragment. Errors
/// carry the JSON path of the offending node.
FactorRegistry parse_registry(std::string_view text, const std::string& source = "registry");

/// Canonical file form: 4-space indented object, trailing newline, optional
/// leading "_meta" block when layer or sae_id is set.
std::string serialize_registry(const FactorRegistry& registry);

/// The same nesting without the outer braces, as a bare fragment. Only
/// defined for registries without metadata.
std::string serialize_registry_fragment(const FactorRegistry& registry);

void save_registry(const FactorRegistry& registry, const std::filesystem::path& path);
FactorRegistry load_registry(const std::filesystem::path& path);

/// Every index must address a row of the SAE decoder; layers must agree when
/// both sides declare one.
void validate_registry_against(const FactorRegistry& registry, const SAEModel& sae);

// ---- pressure directions --------------------------------------------------

constexpr double kUnitNormTolerance = 1e-6;

std::string serialize_direction(const DirectionResult& direction);
DirectionResult parse_direction(std::string_view text, const std::string& source = "direction");
void save_direction(const DirectionResult& direction, const std::filesystem::path& path);
DirectionResult load_direction(const std::filesystem::path& path);

// ---- SAE weights ----------------------------------------------------------

std::string serialize_sae(const SAEModel& sae);
/// Undercomplete dictionaries load but add a note to `warnings`.
SAEModel parse_sae(std::string_view text, const std::string& source = "sae",
                   std::vector<std::string>* warnings = nullptr);
void save_sae(const SAEModel& sae, const std::filesystem::path& path);
SAEModel load_sae(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr);

// ---- run manifests --------------------------------------------------------

struct FileDigest {
  std::string role;
  std::string path;  // as recorded; relative paths resolve against the manifest's base
  std::string sha256;
  bool operator==(const FileDigest&) const = default;
};

struct RunManifest {
  std::string timestamp;
  std::string tool_version;
  std::string command;
  std::map<std::string, std::string> parameters;  // command arguments needed to replay
  std::string config_path;
  std::string config_sha256;
  std::map<std::string, std::uint64_t> seeds;
  std::vector<FileDigest> inputs;
  std::vector<FileDigest> artifacts;
  bool operator==(const RunManifest&) const = default;
};

constexpr std::string_view kToolVersion = "0.1.0";

std::string serialize_manifest(const RunManifest& manifest);
RunManifest parse_manifest(std::string_view text, const std::string& source = "manifest");

/// Writes `manifest.json` into `run_dir`. Refuses to overwrite an existing
/// manifest.
std::filesystem::path write_manifest(const RunManifest& manifest,
                                     const std::filesystem::path& run_dir);
RunManifest load_manifest(const std::filesystem::path& path);

/// Digest entry for `path`, recorded relative to `base` when possible.
FileDigest digest_file(const std::string& role, const std::filesystem::path& path,
                       const std::filesystem::path& base);

/// Recomputes every digest. Returns one message per mismatch or missing file.
std::vector<std::string> verify_manifest(const RunManifest& manifest,
                                         const std::filesystem::path& base);

/// "YYYYMMDDTHHMMSSZ" for the current UTC time.
std::string utc_timestamp();

// ---- store layout ---------------------------------------------------------

/// registries/, directions/, saes/, runs/<timestamp>/ under one root.
struct StoreLayout {
  std::filesystem::path root;

  std::filesystem::path registries() const { return root / "registries"; }
  std::filesystem::path directions() const { return root / "directions"; }
  std::filesystem::path saes() const { return root / "saes"; }
  std::filesystem::path runs() const { return root / "runs"; }

  std::filesystem::path registry_file(const std::string& name) const;
  std::filesystem::path direction_file(const std::string& pressure) const;
  std::filesystem::path sae_file(const std::string& id) const;
  /// Creates runs/<timestamp>/, appending -1, -2, ... on collision.
  std::filesystem::path new_run_dir(const std::string& timestamp) const;
};

/// Lowercase, non-alphanumerics collapsed to '-'.
std::string slugify(std::string_view name);

}  // namespace traitsteer
