#include "rwkvir/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "json.hpp"
#include "rwkvir/error.hpp"

namespace rwkvir::checkpoint {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

template <typename U>
void put(std::ostream& os, U v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename U>
U get(std::istream& is, const std::string& what) {
  U v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError("checkpoint truncated while reading " + what);
  return v;
}

}  // namespace

template <typename T>
void save(const std::filesystem::path& path, const std::string& meta_json, const model::NamedParams<T>& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(os, kVersion);
  put<std::uint64_t>(os, meta_json.size());
  os.write(meta_json.data(), static_cast<std::streamsize>(meta_json.size()));
  put<std::uint64_t>(os, params.size());
  for (const auto& [name, t] : params) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint8_t>(os, dtype_of<T>() == Dtype::f32 ? 0 : 1);
    put<std::uint8_t>(os, static_cast<std::uint8_t>(t->ndim()));
    for (auto e : t->shape()) put<std::uint64_t>(os, e);
    const auto data = t->data();
    os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(T)));
  }
  if (!os) throw IoError("write failed: " + path.string());
}

Checkpoint read(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw IoError("not a checkpoint: " + path.string());
  const auto version = get<std::uint32_t>(is, "version");
  if (version != kVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.meta_json.resize(get<std::uint64_t>(is, "metadata length"));
  if (!is.read(ck.meta_json.data(), static_cast<std::streamsize>(ck.meta_json.size()))) {
    throw IoError("checkpoint truncated in metadata");
  }
  const auto n = get<std::uint64_t>(is, "tensor count");
  for (std::uint64_t i = 0; i < n; ++i) {
    Entry e;
    e.name.resize(get<std::uint32_t>(is, "name length"));
    if (!is.read(e.name.data(), static_cast<std::streamsize>(e.name.size()))) throw IoError("checkpoint truncated");
    const auto dt = get<std::uint8_t>(is, "dtype");
    if (dt > 1) throw IoError("checkpoint: unknown dtype code for " + e.name);
    e.dtype = dt == 0 ? Dtype::f32 : Dtype::f64;
    const auto rank = get<std::uint8_t>(is, "rank");
    for (unsigned r = 0; r < rank; ++r) e.shape.push_back(get<std::uint64_t>(is, "extent"));
    const std::size_t count = numel_of(e.shape);
    e.values.resize(count);
    if (e.dtype == Dtype::f32) {
      std::vector<float> buf(count);
      if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count * 4))) {
        throw IoError("checkpoint truncated in " + e.name);
      }
      std::copy(buf.begin(), buf.end(), e.values.begin());
    } else if (!is.read(reinterpret_cast<char*>(e.values.data()), static_cast<std::streamsize>(count * 8))) {
      throw IoError("checkpoint truncated in " + e.name);
    }
    ck.entries.push_back(std::move(e));
  }
  return ck;
}

template <typename T>
void load_into(const Checkpoint& ck, model::NamedParams<T>& params) {
  std::map<std::string, const Entry*> by_name;
  for (const auto& e : ck.entries) by_name[e.name] = &e;
  for (auto& [name, t] : params) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ConfigError("checkpoint has no tensor named " + name);
    if (it->second->shape != t->shape()) {
      throw ConfigError("checkpoint tensor " + name + " has shape " + shape_str(it->second->shape) + ", expected " +
                        shape_str(t->shape()));
    }
    auto dst = t->mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(it->second->values[i]);
  }
}

template <typename T>
void save_model(const std::filesystem::path& path, model::Model<T>& m, const std::string& extra_json) {
  auto meta = nlohmann::json::parse(extra_json);
  meta["model"] = nlohmann::json::parse(m.config().to_json());
  save(path, meta.dump(), m.parameters());
}

template <typename T>
std::unique_ptr<model::Model<T>> load_model(const std::filesystem::path& path) {
  const auto ck = read(path);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(ck.meta_json);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint metadata: ") + e.what());
  }
  if (!meta.contains("model")) throw IoError("checkpoint metadata has no model config");
  auto m = model::build_model<T>(model::ModelConfig::from_json(meta["model"].dump()), 0);
  load_into(ck, m->parameters());
  return m;
}

#define RWKVIR_INSTANTIATE_CKPT(T)                                                                        \
  template void save<T>(const std::filesystem::path&, const std::string&, const model::NamedParams<T>&); \
  template void load_into<T>(const Checkpoint&, model::NamedParams<T>&);                                  \
  template void save_model<T>(const std::filesystem::path&, model::Model<T>&, const std::string&);       \
  template std::unique_ptr<model::Model<T>> load_model<T>(const std::filesystem::path&);

RWKVIR_INSTANTIATE_CKPT(float)
RWKVIR_INSTANTIATE_CKPT(double)

}  // namespace rwkvir::checkpoint
