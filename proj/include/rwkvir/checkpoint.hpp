#pragma once

// Binary parameter container. All integers little-endian.
//
//   offset  size  field
//   0       8     magic "RWKVIRCK"
//   8       4     u32 format version (1)
//   12      8     u64 L, byte length of the metadata JSON
//   20      L     metadata JSON (UTF-8; holds "model" config and free-form fields)
//   20+L    8     u64 N, number of tensors
//   then N records:
//           4     u32 name length K
//           K     name bytes
//           1     u8 dtype (0 = f32, 1 = f64)
//           1     u8 rank R
//           8*R   u64 extents
//           ...   numel * sizeof(dtype) raw values

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "rwkvir/model.hpp"
#include "rwkvir/tensor.hpp"

namespace rwkvir::checkpoint {

inline constexpr char kMagic[8] = {'R', 'W', 'K', 'V', 'I', 'R', 'C', 'K'};
inline constexpr std::uint32_t kVersion = 1;

struct Entry {
  std::string name;
  Dtype dtype = Dtype::f32;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  std::string meta_json;
  std::vector<Entry> entries;
};

template <typename T>
void save(const std::filesystem::path& path, const std::string& meta_json, const model::NamedParams<T>& params);

Checkpoint read(const std::filesystem::path& path);

/// Copies values into params by name; throws ConfigError on missing names or shape mismatch.
template <typename T>
void load_into(const Checkpoint& ck, model::NamedParams<T>& params);

/// Stores the model config under "model" plus the given extra JSON object fields.
template <typename T>
void save_model(const std::filesystem::path& path, model::Model<T>& m, const std::string& extra_json = "{}");

/// Rebuilds the model from the stored config and loads its parameters.
template <typename T>
std::unique_ptr<model::Model<T>> load_model(const std::filesystem::path& path);

}  // namespace rwkvir::checkpoint
