#include "cmlab/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cmlab/hash.hpp"

namespace cmlab {

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace

KvMap parse_kv_text(const std::string& text) {
  KvMap out;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash_at = line.find('#');
    if (hash_at != std::string::npos) line = line.substr(0, hash_at);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(lineno) +
                               ": expected key=value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::runtime_error("config line " + std::to_string(lineno) +
                               ": empty key");
    out[key] = val;
  }
  return out;
}

KvMap parse_kv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_kv_text(ss.str());
}

std::string env_var_for(const std::string& key) {
  std::string out = "CMLAB_";
  for (char c : key)
    out += (c == '.' || c == '-') ? '_'
                                  : static_cast<char>(std::toupper(
                                        static_cast<unsigned char>(c)));
  return out;
}

KvMap resolve_config(const Schema& schema, const KvMap& file_values) {
  KvMap out;
  for (const auto& spec : schema) out[spec.key] = spec.default_value;
  for (const auto& [k, v] : file_values) {
    if (!out.count(k))
      throw std::runtime_error("unknown config key '" + k + "'");
    out[k] = v;
  }
  for (const auto& spec : schema) {
    if (const char* e = std::getenv(env_var_for(spec.key).c_str()))
      out[spec.key] = e;
  }
  return out;
}

std::string format_kv(const KvMap& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

uint64_t config_hash(const KvMap& kv) { return fnv1a64(format_kv(kv)); }

int64_t kv_int(const KvMap& kv, const std::string& key) {
  const auto& s = kv_str(kv, key);
  try {
    size_t used = 0;
    const int64_t v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (...) {
    throw std::runtime_error("config key '" + key + "': '" + s +
                             "' is not an integer");
  }
}

double kv_double(const KvMap& kv, const std::string& key) {
  const auto& s = kv_str(kv, key);
  try {
    size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (...) {
    throw std::runtime_error("config key '" + key + "': '" + s +
                             "' is not a number");
  }
}

bool kv_bool(const KvMap& kv, const std::string& key) {
  const auto& s = kv_str(kv, key);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw std::runtime_error("config key '" + key + "': '" + s +
                           "' is not a boolean");
}

const std::string& kv_str(const KvMap& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end())
    throw std::runtime_error("config key '" + key + "' missing");
  return it->second;
}

void write_manifest(const std::string& path, const KvMap& config,
                    uint64_t seed, const std::vector<ArtifactEntry>& artifacts) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write manifest '" + path + "'");
  os << "cmlab run manifest v1\n";
  os << "config_hash=" << hex64(config_hash(config)) << "\n";
  os << "seed=" << seed << "\n";
  os << "[config]\n" << format_kv(config);
  os << "[artifacts]\n";
  for (const auto& a : artifacts)
    os << a.name << " " << a.bytes << " " << hex64(a.hash) << "\n";
  if (!os) throw std::runtime_error("manifest write failed");
}

KvMap manifest_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read manifest '" + path + "'");
  std::string line;
  std::string config_text;
  bool in_config = false;
  while (std::getline(is, line)) {
    if (line == "[config]") {
      in_config = true;
      continue;
    }
    if (line == "[artifacts]") break;
    if (in_config) config_text += line + "\n";
  }
  if (config_text.empty())
    throw std::runtime_error("manifest '" + path + "' has no [config] section");
  return parse_kv_text(config_text);
}

}  // namespace cmlab
