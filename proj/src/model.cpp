#include "cmlab/model.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "cmlab/hash.hpp"

namespace cmlab {

// ------------------------------------------------------------------ flops

FlopsReport flops_report(const VitConfig& vit, double mask_ratio) {
  vit.validate();
  const int n = vit.grid_total();
  const int keep = keep_count_for(n, mask_ratio);
  const double s = keep + 1;
  const double s0 = n + 1;
  const double d = vit.embed_dim;
  const double layers = vit.num_layers;
  const double p = vit.patch_dim();
  const double mlp_hidden = static_cast<double>(vit.mlp_ratio) * d;

  FlopsReport r;
  r.keep_count = keep;
  r.seq_masked = static_cast<int>(s);
  r.seq_unmasked = static_cast<int>(s0);

  auto push = [&](const std::string& name, double masked, double unmasked) {
    FlopsReport::Row row;
    row.component = name;
    row.macs_masked = masked;
    row.macs_unmasked = unmasked;
    row.ratio = masked / unmasked;
    r.rows.push_back(row);
    r.total_masked += masked;
    r.total_unmasked += unmasked;
  };

  push("patch_embed", keep * p * d, n * p * d);
  // scores (S^2 d) + attention-weighted sum (S^2 d), per layer
  push("attention", 2.0 * s * s * d * layers, 2.0 * s0 * s0 * d * layers);
  // token-linear work: qkv + output projections and the MLP
  push("linear", (4.0 * s * d * d + 2.0 * s * d * mlp_hidden) * layers,
       (4.0 * s0 * d * d + 2.0 * s0 * d * mlp_hidden) * layers);
  r.total_ratio = r.total_masked / r.total_unmasked;
  return r;
}

std::string format_flops(const FlopsReport& r) {
  std::ostringstream os;
  os << "component     macs_masked   macs_unmasked   ratio\n";
  char line[128];
  for (const auto& row : r.rows) {
    std::snprintf(line, sizeof line, "%-12s %12.0f %14.0f   %.6f\n",
                  row.component.c_str(), row.macs_masked, row.macs_unmasked,
                  row.ratio);
    os << line;
  }
  std::snprintf(line, sizeof line, "%-12s %12.0f %14.0f   %.6f\n", "total",
                r.total_masked, r.total_unmasked, r.total_ratio);
  os << line;
  std::snprintf(line, sizeof line,
                "tokens: %d masked vs %d unmasked (keep_count %d)\n",
                r.seq_masked, r.seq_unmasked, r.keep_count);
  os << line;
  return os.str();
}

// ------------------------------------------------------------- checkpoint

namespace {

constexpr char kCkptMagic[8] = {'C', 'M', 'L', 'C', 'K', 'P', 'T', '1'};
constexpr uint32_t kCkptVersion = 1;

template <typename U>
void put(std::ostream& os, U v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <typename U>
U get(std::istream& is) {
  U v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

void put_vit(std::ostream& os, const VitConfig& v) {
  for (int x : {v.image_px, v.patch_px, v.embed_dim, v.num_layers, v.num_heads,
                v.mlp_ratio, v.proj_dim})
    put<int32_t>(os, x);
}
VitConfig get_vit(std::istream& is) {
  VitConfig v;
  v.image_px = get<int32_t>(is);
  v.patch_px = get<int32_t>(is);
  v.embed_dim = get<int32_t>(is);
  v.num_layers = get<int32_t>(is);
  v.num_heads = get<int32_t>(is);
  v.mlp_ratio = get<int32_t>(is);
  v.proj_dim = get<int32_t>(is);
  return v;
}
void put_txt(std::ostream& os, const TextConfig& t) {
  for (int x : {t.vocab_size, t.context_len, t.embed_dim, t.num_layers,
                t.num_heads, t.proj_dim, t.mlp_ratio})
    put<int32_t>(os, x);
}
TextConfig get_txt(std::istream& is) {
  TextConfig t;
  t.vocab_size = get<int32_t>(is);
  t.context_len = get<int32_t>(is);
  t.embed_dim = get<int32_t>(is);
  t.num_layers = get<int32_t>(is);
  t.num_heads = get<int32_t>(is);
  t.proj_dim = get<int32_t>(is);
  t.mlp_ratio = get<int32_t>(is);
  return t;
}

}  // namespace

template <typename T>
void save_checkpoint(const std::string& path, const ModelParams<T>& params,
                     uint64_t step) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  os.write(kCkptMagic, sizeof kCkptMagic);
  put<uint32_t>(os, kCkptVersion);
  put<uint8_t>(os, static_cast<uint8_t>(dtype_of<T>()));
  put<uint64_t>(os, step);
  put_vit(os, params.vit);
  put_txt(os, params.txt);
  put<uint32_t>(os, static_cast<uint32_t>(params.count()));
  for (size_t i = 0; i < params.names.size(); ++i) {
    const auto& name = params.names[i];
    put<uint16_t>(os, static_cast<uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<uint8_t>(os, params.decay[i]);
    write_tensor(os, params.tensors[i]);
  }
  if (!os) throw std::runtime_error("checkpoint write failed for '" + path + "'");
}

Dtype checkpoint_dtype(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read checkpoint '" + path + "'");
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kCkptMagic, sizeof magic) != 0)
    throw std::runtime_error("'" + path + "' is not a checkpoint");
  get<uint32_t>(is);
  const auto tag = get<uint8_t>(is);
  if (tag != 1 && tag != 2)
    throw std::runtime_error("checkpoint: unknown dtype tag");
  return static_cast<Dtype>(tag);
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read checkpoint '" + path + "'");
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kCkptMagic, sizeof magic) != 0)
    throw std::runtime_error("'" + path + "' is not a checkpoint");
  const auto version = get<uint32_t>(is);
  if (version != kCkptVersion)
    throw std::runtime_error("checkpoint version " + std::to_string(version) +
                             " unsupported");
  const auto tag = get<uint8_t>(is);
  if (tag != static_cast<uint8_t>(dtype_of<T>()))
    throw std::runtime_error(std::string("checkpoint dtype is ") +
                             dtype_name(static_cast<Dtype>(tag)) +
                             ", caller wants " + dtype_name(dtype_of<T>()));
  Checkpoint<T> out;
  out.step = get<uint64_t>(is);
  out.params.vit = get_vit(is);
  out.params.txt = get_txt(is);
  const auto count = get<uint32_t>(is);

  // the expected parameter set for these configs; loading is strict
  const auto specs = detail::param_specs(out.params.vit, out.params.txt);
  if (count != specs.size())
    throw std::runtime_error("checkpoint: parameter count mismatch");
  for (const auto& spec : specs) {
    const auto nlen = get<uint16_t>(is);
    std::string name(nlen, '\0');
    is.read(name.data(), nlen);
    if (!is || name != spec.name)
      throw std::runtime_error("checkpoint: expected parameter '" + spec.name +
                               "', found '" + name + "'");
    const auto decay = get<uint8_t>(is);
    Tensor<T> t = read_tensor<T>(is);
    if (t.shape != spec.shape)
      throw std::runtime_error("checkpoint: '" + name + "' has shape " +
                               shape_str(t.shape) + ", config requires " +
                               shape_str(spec.shape));
    out.params.names.push_back(name);
    out.params.tensors.push_back(std::move(t));
    out.params.decay.push_back(decay);
  }
  return out;
}

template <typename T>
uint64_t params_hash(const ModelParams<T>& p) {
  uint64_t h = kFnvOffset;
  for (size_t i = 0; i < p.names.size(); ++i) {
    h = fnv1a64(p.names[i], h);
    h = fnv1a64(p.tensors[i].data.data(), p.tensors[i].data.size() * sizeof(T), h);
  }
  return h;
}

template void save_checkpoint<float>(const std::string&,
                                     const ModelParams<float>&, uint64_t);
template void save_checkpoint<double>(const std::string&,
                                      const ModelParams<double>&, uint64_t);
template Checkpoint<float> load_checkpoint<float>(const std::string&);
template Checkpoint<double> load_checkpoint<double>(const std::string&);
template uint64_t params_hash<float>(const ModelParams<float>&);
template uint64_t params_hash<double>(const ModelParams<double>&);

}  // namespace cmlab
