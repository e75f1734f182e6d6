#pragma once

#include "talkhead/tensor.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <type_traits>
#include <vector>

namespace talkhead {

/// Named parameter tensors, ordered by name.
template <typename T> class BasicWeightStore {
public:
  using Map = std::map<std::string, BasicTensor<T>>;

  bool contains(const std::string &name) const { return tensors_.count(name) != 0; }

  const BasicTensor<T> &get(const std::string &name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end())
      fail(ErrorKind::usage, "weight store has no tensor named '" + name + "'");
    return it->second;
  }

  BasicTensor<T> &get(const std::string &name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end())
      fail(ErrorKind::usage, "weight store has no tensor named '" + name + "'");
    return it->second;
  }

  void set(const std::string &name, BasicTensor<T> tensor) {
    tensors_[name] = std::move(tensor);
  }

  void erase(const std::string &name) { tensors_.erase(name); }

  /// Copies every tensor of `other` into this store, replacing same-named ones.
  void merge(const BasicWeightStore &other) {
    for (const auto &[name, t] : other.tensors_)
      tensors_[name] = t;
  }

  /// Tensors whose names start with `prefix`.
  BasicWeightStore subset(const std::string &prefix) const {
    BasicWeightStore out;
    for (const auto &[name, t] : tensors_)
      if (name.compare(0, prefix.size(), prefix) == 0)
        out.tensors_.emplace(name, t);
    return out;
  }

  std::size_t size() const { return tensors_.size(); }
  std::int64_t scalar_count() const {
    std::int64_t n = 0;
    for (const auto &[name, t] : tensors_)
      n += static_cast<std::int64_t>(t.size());
    return n;
  }

  Map &tensors() { return tensors_; }
  const Map &tensors() const { return tensors_; }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

  friend bool operator==(const BasicWeightStore &a, const BasicWeightStore &b) {
    return a.tensors_ == b.tensors_;
  }

private:
  Map tensors_;
};

using WeightStore = BasicWeightStore<float>;
using WeightStore64 = BasicWeightStore<double>;

// File layout (all integers little-endian):
//   "AVWT" | u32 version | u32 tensor count
//   per tensor: u32 name length | UTF-8 name | u32 dtype (0 = f32, 1 = f64)
//               | u32 rank | u64 extent × rank | raw scalars
namespace weight_file {

inline constexpr char kMagic[4] = {'A', 'V', 'W', 'T'};
inline constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "weight files are written by memcpy of little-endian scalars");

template <typename T> constexpr std::uint32_t dtype_code() {
  if constexpr (std::is_same_v<T, float>)
    return 0;
  else
    return 1;
}

template <typename U> void put(std::ostream &out, U value) {
  char bytes[sizeof(U)];
  std::memcpy(bytes, &value, sizeof(U));
  out.write(bytes, sizeof(U));
}

template <typename U> U take(std::istream &in) {
  char bytes[sizeof(U)];
  in.read(bytes, sizeof(U));
  if (!in)
    fail(ErrorKind::io, "truncated weight file");
  U value;
  std::memcpy(&value, bytes, sizeof(U));
  return value;
}

} // namespace weight_file

template <typename T>
void write_weights(std::ostream &out, const BasicWeightStore<T> &store) {
  using namespace weight_file;
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(store.size()));
  for (const auto &[name, tensor] : store) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, dtype_code<T>());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
    for (auto extent : tensor.shape())
      put<std::uint64_t>(out, static_cast<std::uint64_t>(extent));
    out.write(reinterpret_cast<const char *>(tensor.raw()),
              static_cast<std::streamsize>(tensor.size() * sizeof(T)));
  }
}

/// Reads a weight file; f32 and f64 payloads are converted to T.
template <typename T> BasicWeightStore<T> read_weights(std::istream &in) {
  using namespace weight_file;
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    fail(ErrorKind::io, "not a weight file (bad magic)");
  const auto version = take<std::uint32_t>(in);
  if (version != kVersion)
    fail(ErrorKind::io, "unsupported weight file version " + std::to_string(version));
  const auto count = take<std::uint32_t>(in);
  BasicWeightStore<T> store;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = take<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto dtype = take<std::uint32_t>(in);
    const auto rank = take<std::uint32_t>(in);
    Shape shape(rank);
    for (auto &extent : shape)
      extent = static_cast<std::int64_t>(take<std::uint64_t>(in));
    const auto n = static_cast<std::size_t>(shape_size(shape));
    std::vector<T> data(n);
    if (dtype == 0) {
      std::vector<float> raw(n);
      in.read(reinterpret_cast<char *>(raw.data()), static_cast<std::streamsize>(n * 4));
      std::copy(raw.begin(), raw.end(), data.begin());
    } else if (dtype == 1) {
      std::vector<double> raw(n);
      in.read(reinterpret_cast<char *>(raw.data()), static_cast<std::streamsize>(n * 8));
      std::copy(raw.begin(), raw.end(), data.begin());
    } else {
      fail(ErrorKind::io, "unknown dtype code " + std::to_string(dtype) + " for '" + name + "'");
    }
    if (!in)
      fail(ErrorKind::io, "truncated weight file while reading '" + name + "'");
    store.set(name, BasicTensor<T>(std::move(shape), std::move(data)));
  }
  return store;
}

template <typename T>
void save_weights(const std::filesystem::path &path, const BasicWeightStore<T> &store) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    fail(ErrorKind::io, "cannot open " + path.string() + " for writing");
  write_weights(out, store);
  if (!out)
    fail(ErrorKind::io, "failed writing " + path.string());
}

template <typename T = float>
BasicWeightStore<T> load_weights(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    fail(ErrorKind::missing_file, "cannot open weight file " + path.string());
  return read_weights<T>(in);
}

template <typename U, typename T>
BasicWeightStore<U> cast_weights(const BasicWeightStore<T> &store) {
  BasicWeightStore<U> out;
  for (const auto &[name, t] : store)
    out.set(name, t.template cast<U>());
  return out;
}

} // namespace talkhead
