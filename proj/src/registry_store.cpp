#include "traitsteer/registry_store.hpp"

#include <algorithm>
#include <chrono>
#include <cctype>
#include <cmath>
#include <ctime>
#include <set>
#include <system_error>

#include "traitsteer/error.hpp"

namespace traitsteer {

namespace fs = std::filesystem;

const RegistryCategory* RegistryFactor::find(const std::string& category) const {
  for (const auto& c : categories) {
    if (c.name == category) return &c;
  }
  return nullptr;
}

const RegistryFactor* FactorRegistry::find(const std::string& factor) const {
  for (const auto& f : factors) {
    if (f.name == factor) return &f;
  }
  return nullptr;
}

std::vector<std::int64_t> FactorRegistry::all_indices() const {
  std::vector<std::int64_t> out;
  for (const auto& f : factors) {
    for (const auto& c : f.categories) {
      for (const auto& e : c.entries) out.push_back(e.index);
    }
  }
  return out;
}

namespace {

constexpr const char* kMetaKey = "_meta";

[[noreturn]] void schema_error(const std::string& source, const std::string& path,
                               const std::string& what) {
  throw Error(ErrorCode::kSchema, source + ": " + path + ": " + what);
}

std::string child_path(const std::string& parent, const std::string& key) {
  return parent + "[" + Json(key).dump() + "]";
}

Json registry_body(const FactorRegistry& registry) {
  Json body = Json::object();
  for (const auto& factor : registry.factors) {
    Json f = Json::object();
    for (const auto& category : factor.categories) {
      Json c = Json::object();
      for (const auto& entry : category.entries) c[entry.explanation] = entry.index;
      f[category.name] = std::move(c);
    }
    body[factor.name] = std::move(f);
  }
  return body;
}

void check_registry_shape(const FactorRegistry& registry) {
  std::set<std::string> factors;
  for (const auto& factor : registry.factors) {
    if (factor.name.empty() || factor.name == kMetaKey) {
      throw Error(ErrorCode::kSchema, "invalid factor name '" + factor.name + "'");
    }
    if (!factors.insert(factor.name).second) {
      throw Error(ErrorCode::kSchema, "duplicate factor '" + factor.name + "'");
    }
    std::set<std::string> categories;
    for (const auto& category : factor.categories) {
      if (!categories.insert(category.name).second) {
        throw Error(ErrorCode::kSchema, "duplicate category '" + category.name + "' in " + factor.name);
      }
      std::set<std::string> explanations;
      for (const auto& entry : category.entries) {
        if (entry.index < 0) {
          throw Error(ErrorCode::kSchema, "negative feature index in " + factor.name + "/" + category.name);
        }
        if (!explanations.insert(entry.explanation).second) {
          throw Error(ErrorCode::kSchema, "duplicate explanation '" + entry.explanation + "' in " +
                                              factor.name + "/" + category.name);
        }
      }
    }
  }
}

std::string require_string(const Json& doc, const char* key, const std::string& source) {
  if (!doc.contains(key) || !doc[key].is_string()) {
    schema_error(source, std::string("$.") + key, "expected a string");
  }
  return doc[key].get<std::string>();
}

std::int64_t require_int(const Json& doc, const char* key, const std::string& source) {
  if (!doc.contains(key) || !doc[key].is_number_integer()) {
    schema_error(source, std::string("$.") + key, "expected an integer");
  }
  return doc[key].get<std::int64_t>();
}

double require_number(const Json& doc, const char* key, const std::string& source) {
  if (!doc.contains(key) || !doc[key].is_number()) {
    schema_error(source, std::string("$.") + key, "expected a number");
  }
  return doc[key].get<double>();
}

std::string trim_copy(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

FactorRegistry parse_registry(std::string_view text, const std::string& source) {
  const std::string trimmed = trim_copy(text);
  Json doc = parse_json(!trimmed.empty() && trimmed.front() == '{' ? trimmed : "{" + trimmed + "}",
                        source);
  if (!doc.is_object()) schema_error(source, "$", "expected an object");

  FactorRegistry registry;
  for (const auto& [fname, fval] : doc.items()) {
    const std::string fpath = child_path("$", fname);
    if (fname == kMetaKey) {
      if (!fval.is_object()) schema_error(source, fpath, "expected an object");
      if (fval.contains("schema_version")) require_schema_version(fval, source + " registry metadata");
      if (fval.contains("layer")) {
        if (!fval["layer"].is_number_integer()) schema_error(source, fpath + ".layer", "expected an integer");
        registry.layer = fval["layer"].get<int>();
      }
      if (fval.contains("sae_id")) {
        if (!fval["sae_id"].is_string()) schema_error(source, fpath + ".sae_id", "expected a string");
        registry.sae_id = fval["sae_id"].get<std::string>();
      }
      continue;
    }
    if (!fval.is_object()) schema_error(source, fpath, "factor must map categories to objects");
    RegistryFactor factor{fname, {}};
    for (const auto& [cname, cval] : fval.items()) {
      const std::string cpath = child_path(fpath, cname);
      if (!cval.is_object()) schema_error(source, cpath, "category must map explanations to indices");
      RegistryCategory category{cname, {}};
      for (const auto& [ename, eval] : cval.items()) {
        const std::string epath = child_path(cpath, ename);
        if (!eval.is_number_integer()) schema_error(source, epath, "feature index must be an integer");
        const auto index = eval.get<std::int64_t>();
        if (index < 0) schema_error(source, epath, "feature index must be non-negative");
        category.entries.push_back({ename, index});
      }
      factor.categories.push_back(std::move(category));
    }
    registry.factors.push_back(std::move(factor));
  }
  return registry;
}

std::string serialize_registry(const FactorRegistry& registry) {
  check_registry_shape(registry);
  Json doc = Json::object();
  if (registry.layer || registry.sae_id) {
    Json meta = Json::object();
    meta["schema_version"] = kSchemaVersion;
    if (registry.layer) meta["layer"] = *registry.layer;
    if (registry.sae_id) meta["sae_id"] = *registry.sae_id;
    doc[kMetaKey] = std::move(meta);
  }
  const Json body = registry_body(registry);
  for (const auto& [k, v] : body.items()) doc[k] = v;
  return dump_json(doc);
}

std::string serialize_registry_fragment(const FactorRegistry& registry) {
  if (registry.layer || registry.sae_id) {
    throw Error(ErrorCode::kInvalidArgument, "fragments cannot carry registry metadata");
  }
  check_registry_shape(registry);
  const std::string full = registry_body(registry).dump(4);
  // Drop the outer braces and one indentation level.
  std::string out;
  std::size_t pos = full.find('\n');
  const std::size_t end = full.rfind('\n');
  if (pos == std::string::npos || end == pos) return {};
  std::string_view body(full.data() + pos + 1, end - pos - 1);
  std::size_t start = 0;
  while (start <= body.size()) {
    std::size_t nl = body.find('\n', start);
    if (nl == std::string_view::npos) nl = body.size();
    std::string_view line = body.substr(start, nl - start);
    if (line.substr(0, 4) == "    ") line.remove_prefix(4);
    if (!out.empty()) out += '\n';
    out += line;
    start = nl + 1;
  }
  return out;
}

void save_registry(const FactorRegistry& registry, const fs::path& path) {
  atomic_write(path, serialize_registry(registry));
}

FactorRegistry load_registry(const fs::path& path) {
  return parse_registry(read_file(path), path.string());
}

void validate_registry_against(const FactorRegistry& registry, const SAEModel& sae) {
  for (const auto& factor : registry.factors) {
    for (const auto& category : factor.categories) {
      for (const auto& entry : category.entries) {
        if (entry.index < 0 || entry.index >= sae.m()) {
          throw Error(ErrorCode::kIndexOutOfRange,
                      factor.name + "/" + category.name + "/" + entry.explanation + ": index " +
                          std::to_string(entry.index) + " outside SAE with " +
                          std::to_string(sae.m()) + " features");
        }
      }
    }
  }
  if (registry.layer && *registry.layer != sae.layer) {
    throw Error(ErrorCode::kInvalidArgument, "registry layer " + std::to_string(*registry.layer) +
                                                 " != SAE layer " + std::to_string(sae.layer));
  }
  if (registry.sae_id && !sae.id.empty() && *registry.sae_id != sae.id) {
    throw Error(ErrorCode::kInvalidArgument,
                "registry built for SAE '" + *registry.sae_id + "', got '" + sae.id + "'");
  }
}

// ---- directions -----------------------------------------------------------

std::string serialize_direction(const DirectionResult& direction) {
  const double norm = direction.direction.values.norm();
  if (std::abs(norm - 1.0) > kUnitNormTolerance) {
    throw Error(ErrorCode::kNormViolation, "direction norm " + format_double(norm) + " is not 1");
  }
  Json doc = Json::object();
  doc["schema_version"] = kSchemaVersion;
  doc["kind"] = "pressure-direction";
  doc["pressure"] = direction.direction.explanation;
  doc["layer"] = direction.layer;
  doc["d_model"] = direction.direction.values.size();
  doc["explained_variance"] = direction.diagnostics.explained_variance;
  doc["sign_alignment"] = direction.diagnostics.sign_alignment;
  doc["values"] = vector_to_json(direction.direction.values);
  return dump_json(doc);
}

DirectionResult parse_direction(std::string_view text, const std::string& source) {
  const Json doc = parse_json(text, source);
  if (!doc.is_object()) schema_error(source, "$", "expected an object");
  require_schema_version(doc, source);
  if (require_string(doc, "kind", source) != "pressure-direction") {
    schema_error(source, "$.kind", "expected \"pressure-direction\"");
  }
  DirectionResult out;
  out.layer = static_cast<int>(require_int(doc, "layer", source));
  const auto d = require_int(doc, "d_model", source);
  if (d < 1) schema_error(source, "$.d_model", "must be positive");
  out.diagnostics.explained_variance = require_number(doc, "explained_variance", source);
  out.diagnostics.sign_alignment = require_number(doc, "sign_alignment", source);
  if (!doc.contains("values")) schema_error(source, "$.values", "missing");
  out.direction.kind = FeatureKind::kPressure;
  out.direction.layer = out.layer;
  out.direction.index = -1;
  out.direction.explanation = require_string(doc, "pressure", source);
  out.direction.values = vector_from_json(doc["values"], d, source + " $.values");
  const double norm = out.direction.values.norm();
  if (!std::isfinite(norm) || std::abs(norm - 1.0) > kUnitNormTolerance) {
    throw Error(ErrorCode::kNormViolation,
                source + ": direction norm " + format_double(norm) + " differs from 1 by more than 1e-6");
  }
  return out;
}

void save_direction(const DirectionResult& direction, const fs::path& path) {
  atomic_write(path, serialize_direction(direction));
}

DirectionResult load_direction(const fs::path& path) {
  return parse_direction(read_file(path), path.string());
}

// ---- SAE --------------------------------------------------------------------

std::string serialize_sae(const SAEModel& sae) {
  sae.validate(false);
  Json doc = Json::object();
  doc["schema_version"] = kSchemaVersion;
  doc["kind"] = "sae";
  doc["id"] = sae.id;
  doc["layer"] = sae.layer;
  doc["d"] = sae.d();
  doc["m"] = sae.m();
  doc["alpha"] = sae.alpha;
  doc["seed"] = sae.seed;
  doc["sparsity_input"] = sae.sparsity_input == SparsityInput::kRaw ? "raw" : "centered";
  doc["w_enc"] = matrix_to_json(sae.w_enc);
  doc["w_dec"] = matrix_to_json(sae.w_dec);
  doc["b_enc"] = vector_to_json(sae.b_enc);
  doc["b_dec"] = vector_to_json(sae.b_dec);
  return dump_json(doc);
}

SAEModel parse_sae(std::string_view text, const std::string& source, std::vector<std::string>* warnings) {
  const Json doc = parse_json(text, source);
  if (!doc.is_object()) schema_error(source, "$", "expected an object");
  require_schema_version(doc, source);
  if (require_string(doc, "kind", source) != "sae") schema_error(source, "$.kind", "expected \"sae\"");
  SAEModel sae;
  sae.id = require_string(doc, "id", source);
  sae.layer = static_cast<int>(require_int(doc, "layer", source));
  const auto d = require_int(doc, "d", source);
  const auto m = require_int(doc, "m", source);
  if (d < 1 || m < 1) schema_error(source, "$.d", "dimensions must be positive");
  sae.alpha = require_number(doc, "alpha", source);
  if (!doc.contains("seed") || !doc["seed"].is_number_unsigned()) {
    schema_error(source, "$.seed", "expected a non-negative integer");
  }
  sae.seed = doc["seed"].get<std::uint64_t>();
  const std::string input = require_string(doc, "sparsity_input", source);
  if (input == "raw") {
    sae.sparsity_input = SparsityInput::kRaw;
  } else if (input == "centered") {
    sae.sparsity_input = SparsityInput::kCentered;
  } else {
    schema_error(source, "$.sparsity_input", "expected \"raw\" or \"centered\"");
  }
  for (const char* key : {"w_enc", "w_dec", "b_enc", "b_dec"}) {
    if (!doc.contains(key)) schema_error(source, std::string("$.") + key, "missing");
  }
  sae.w_enc = matrix_from_json(doc["w_enc"], d, m, source + " $.w_enc");
  sae.w_dec = matrix_from_json(doc["w_dec"], m, d, source + " $.w_dec");
  sae.b_enc = vector_from_json(doc["b_enc"], m, source + " $.b_enc");
  sae.b_dec = vector_from_json(doc["b_dec"], d, source + " $.b_dec");
  sae.validate(false);
  if (m < d && warnings) {
    warnings->push_back(source + ": SAE is not overcomplete (m=" + std::to_string(m) +
                        " < d=" + std::to_string(d) + ")");
  }
  return sae;
}

void save_sae(const SAEModel& sae, const fs::path& path) { atomic_write(path, serialize_sae(sae)); }

SAEModel load_sae(const fs::path& path, std::vector<std::string>* warnings) {
  return parse_sae(read_file(path), path.string(), warnings);
}

// ---- manifests --------------------------------------------------------------

namespace {

Json digests_to_json(const std::vector<FileDigest>& digests) {
  Json out = Json::array();
  for (const auto& d : digests) out.push_back(Json{{"role", d.role}, {"path", d.path}, {"sha256", d.sha256}});
  return out;
}

std::vector<FileDigest> digests_from_json(const Json& doc, const char* key, const std::string& source) {
  if (!doc.contains(key) || !doc[key].is_array()) schema_error(source, std::string("$.") + key, "expected an array");
  std::vector<FileDigest> out;
  std::size_t i = 0;
  for (const auto& item : doc[key]) {
    const std::string path = std::string("$.") + key + "[" + std::to_string(i++) + "]";
    if (!item.is_object()) schema_error(source, path, "expected an object");
    FileDigest d;
    for (auto [field, dst] : {std::pair{"role", &d.role}, {"path", &d.path}, {"sha256", &d.sha256}}) {
      if (!item.contains(field) || !item[field].is_string()) {
        schema_error(source, path + "." + field, "expected a string");
      }
      *dst = item[field].get<std::string>();
    }
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace

std::string serialize_manifest(const RunManifest& manifest) {
  Json doc = Json::object();
  doc["schema_version"] = kSchemaVersion;
  doc["kind"] = "run-manifest";
  doc["timestamp"] = manifest.timestamp;
  doc["tool_version"] = manifest.tool_version;
  doc["command"] = manifest.command;
  Json params = Json::object();
  for (const auto& [k, v] : manifest.parameters) params[k] = v;
  doc["parameters"] = std::move(params);
  doc["config"] = Json{{"path", manifest.config_path}, {"sha256", manifest.config_sha256}};
  Json seeds = Json::object();
  for (const auto& [k, v] : manifest.seeds) seeds[k] = v;
  doc["seeds"] = std::move(seeds);
  doc["inputs"] = digests_to_json(manifest.inputs);
  doc["artifacts"] = digests_to_json(manifest.artifacts);
  return dump_json(doc);
}

RunManifest parse_manifest(std::string_view text, const std::string& source) {
  const Json doc = parse_json(text, source);
  if (!doc.is_object()) schema_error(source, "$", "expected an object");
  require_schema_version(doc, source);
  if (require_string(doc, "kind", source) != "run-manifest") {
    schema_error(source, "$.kind", "expected \"run-manifest\"");
  }
  RunManifest m;
  m.timestamp = require_string(doc, "timestamp", source);
  m.tool_version = require_string(doc, "tool_version", source);
  m.command = require_string(doc, "command", source);
  if (doc.contains("parameters")) {
    if (!doc["parameters"].is_object()) schema_error(source, "$.parameters", "expected an object");
    for (const auto& [k, v] : doc["parameters"].items()) {
      if (!v.is_string()) schema_error(source, child_path("$.parameters", k), "expected a string");
      m.parameters[k] = v.get<std::string>();
    }
  }
  if (!doc.contains("config") || !doc["config"].is_object()) schema_error(source, "$.config", "expected an object");
  m.config_path = require_string(doc["config"], "path", source);
  m.config_sha256 = require_string(doc["config"], "sha256", source);
  if (!doc.contains("seeds") || !doc["seeds"].is_object()) schema_error(source, "$.seeds", "expected an object");
  for (const auto& [k, v] : doc["seeds"].items()) {
    if (!v.is_number_unsigned()) schema_error(source, child_path("$.seeds", k), "expected a non-negative integer");
    m.seeds[k] = v.get<std::uint64_t>();
  }
  m.inputs = digests_from_json(doc, "inputs", source);
  m.artifacts = digests_from_json(doc, "artifacts", source);
  return m;
}

fs::path write_manifest(const RunManifest& manifest, const fs::path& run_dir) {
  const fs::path path = run_dir / "manifest.json";
  if (fs::exists(path)) {
    throw Error(ErrorCode::kIo, path.string() + ": manifest already exists and is immutable");
  }
  atomic_write(path, serialize_manifest(manifest));
  return path;
}

RunManifest load_manifest(const fs::path& path) { return parse_manifest(read_file(path), path.string()); }

FileDigest digest_file(const std::string& role, const fs::path& path, const fs::path& base) {
  FileDigest d;
  d.role = role;
  d.sha256 = sha256_file(path);
  std::error_code ec;
  const fs::path abs = fs::weakly_canonical(path, ec);
  const fs::path abs_base = fs::weakly_canonical(base, ec);
  fs::path rel = abs.lexically_relative(abs_base);
  d.path = (!ec && !rel.empty()) ? rel.generic_string() : abs.generic_string();
  return d;
}

std::vector<std::string> verify_manifest(const RunManifest& manifest, const fs::path& base) {
  std::vector<std::string> problems;
  auto check = [&](const std::string& recorded, const std::string& expected) {
    const fs::path p = fs::path(recorded).is_absolute() ? fs::path(recorded) : base / recorded;
    if (!fs::exists(p)) {
      problems.push_back(recorded + ": missing");
      return;
    }
    const std::string actual = sha256_file(p);
    if (actual != expected) problems.push_back(recorded + ": sha256 " + actual + " != recorded " + expected);
  };
  if (!manifest.config_path.empty()) check(manifest.config_path, manifest.config_sha256);
  for (const auto& d : manifest.inputs) check(d.path, d.sha256);
  for (const auto& d : manifest.artifacts) check(d.path, d.sha256);
  return problems;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

// ---- layout -----------------------------------------------------------------

std::string slugify(std::string_view name) {
  std::string out;
  bool dash = false;
  for (unsigned char c : name) {
    if (std::isalnum(c)) {
      if (dash && !out.empty()) out += '-';
      out += static_cast<char>(std::tolower(c));
      dash = false;
    } else {
      dash = true;
    }
  }
  return out.empty() ? "unnamed" : out;
}

fs::path StoreLayout::registry_file(const std::string& name) const {
  return registries() / (slugify(name) + ".json");
}

fs::path StoreLayout::direction_file(const std::string& pressure) const {
  return directions() / (slugify(pressure) + ".json");
}

fs::path StoreLayout::sae_file(const std::string& id) const { return saes() / (slugify(id) + ".json"); }

fs::path StoreLayout::new_run_dir(const std::string& timestamp) const {
  fs::path dir = runs() / timestamp;
  for (int i = 1; fs::exists(dir); ++i) dir = runs() / (timestamp + "-" + std::to_string(i));
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, dir.string() + ": " + ec.message());
  return dir;
}

}  // namespace traitsteer
