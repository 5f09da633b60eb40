// Flat key=value configuration: file parsing, environment overrides, schema
// descriptions shared by the CLI flags, canonical formatting and hashing, and
// run manifests.
//
// Resolution order everywhere: schema defaults < config file < CMLAB_*
// environment variables < explicit command-line flags.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace cmlab {

using KvMap = std::map<std::string, std::string>;  // sorted == canonical

struct KeySpec {
  std::string key;
  std::string default_value;
  std::string help;
};

using Schema = std::vector<KeySpec>;

// "key=value" lines; '#' starts a comment; blank lines ignored.
KvMap parse_kv_file(const std::string& path);
KvMap parse_kv_text(const std::string& text);

// Starts from schema defaults, overlays file_values then env (CMLAB_<KEY>,
// uppercased, '.'->'_'), and rejects unknown keys in file_values.
KvMap resolve_config(const Schema& schema, const KvMap& file_values);

std::string env_var_for(const std::string& key);

std::string format_kv(const KvMap& kv);
uint64_t config_hash(const KvMap& kv);

// typed getters with range validation
int64_t kv_int(const KvMap& kv, const std::string& key);
double kv_double(const KvMap& kv, const std::string& key);
bool kv_bool(const KvMap& kv, const std::string& key);
const std::string& kv_str(const KvMap& kv, const std::string& key);

// ---------------------------------------------------------------- manifest
//
// Text manifest: header, config hash, seed, the full resolved config (itself
// a valid config file under [config]), and the artifact list with sizes and
// content hashes. A run is reproducible from its manifest alone.

struct ArtifactEntry {
  std::string name;
  uint64_t bytes = 0;
  uint64_t hash = 0;
};

void write_manifest(const std::string& path, const KvMap& config,
                    uint64_t seed, const std::vector<ArtifactEntry>& artifacts);

// extracts the [config] section back out of a manifest
KvMap manifest_config(const std::string& path);

}  // namespace cmlab
