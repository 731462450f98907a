#pragma once

// Binary checkpoint layout (all integers little-endian):
//   "MIFC" | version u32 | tensor count u32
//   per tensor: name_len u32 | name utf-8 | dtype u8 (0=f32, 1=f64) | ndim u32
//               | dims u64 * ndim | raw little-endian values
//   metadata_len u32 | metadata utf-8

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "mifruit/model.hpp"

namespace mifruit {

inline constexpr char kCheckpointMagic[4] = {'M', 'I', 'F', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

template <typename T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

struct StoredTensor {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::variant<std::vector<float>, std::vector<double>> values;

  DType dtype() const { return values.index() == 0 ? DType::f32 : DType::f64; }
  std::size_t numel() const {
    return std::visit([](const auto& v) { return v.size(); }, values);
  }
};

struct Checkpoint {
  std::vector<StoredTensor> tensors;
  std::string metadata;

  const StoredTensor* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
};

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
  const std::vector<char>& buffer() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<char> data) : data_(std::move(data)) {}

  void need(std::size_t n, const char* what) {
    if (data_.size() - pos_ < n)
      fail(ErrorKind::format_error, std::string("checkpoint truncated while reading ") + what);
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(data_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::vector<char> data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<char> encode_checkpoint(const Checkpoint& ckpt) {
  detail::ByteWriter w;
  w.bytes(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    w.u32(static_cast<std::uint32_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.u8(static_cast<std::uint8_t>(t.dtype()));
    w.u32(static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) w.u64(d);
    if (const auto* f = std::get_if<std::vector<float>>(&t.values))
      for (float v : *f) w.f32(v);
    else
      for (double v : std::get<std::vector<double>>(t.values)) w.f64(v);
  }
  w.u32(static_cast<std::uint32_t>(ckpt.metadata.size()));
  w.bytes(ckpt.metadata.data(), ckpt.metadata.size());
  return w.buffer();
}

inline Checkpoint decode_checkpoint(std::vector<char> bytes) {
  detail::ByteReader r(std::move(bytes));
  if (r.remaining() < 4 || r.str(4, "magic") != std::string(kCheckpointMagic, 4))
    fail(ErrorKind::format_error, "not a checkpoint file (bad magic)");
  const auto version = r.u32("version");
  if (version != kCheckpointVersion)
    fail(ErrorKind::format_error, "unsupported checkpoint version " + std::to_string(version));
  const auto count = r.u32("tensor count");
  Checkpoint ckpt;
  for (std::uint32_t i = 0; i < count; ++i) {
    StoredTensor t;
    t.name = r.str(r.u32("name length"), "tensor name");
    const auto dtype = r.u8("dtype");
    if (dtype > 1) fail(ErrorKind::format_error, "tensor " + t.name + ": unknown dtype " + std::to_string(dtype));
    const auto ndim = r.u32("ndim");
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      t.dims.push_back(r.u64("dims"));
      if (t.dims.back() == 0) fail(ErrorKind::format_error, "tensor " + t.name + ": zero dimension");
      n *= t.dims.back();
    }
    r.need(n * (dtype == 0 ? 4 : 8), "tensor data");
    if (dtype == 0) {
      std::vector<float> v(n);
      for (auto& x : v) x = std::bit_cast<float>(r.u32("tensor data"));
      t.values = std::move(v);
    } else {
      std::vector<double> v(n);
      for (auto& x : v) x = std::bit_cast<double>(r.u64("tensor data"));
      t.values = std::move(v);
    }
    ckpt.tensors.push_back(std::move(t));
  }
  ckpt.metadata = r.str(r.u32("metadata length"), "metadata");
  if (!r.at_end()) fail(ErrorKind::format_error, "trailing bytes after checkpoint metadata");
  return ckpt;
}

inline void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io_error, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::io_error, "write failed for " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io_error, "cannot open checkpoint " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(std::move(bytes));
}

/// Snapshot of every named parameter and running statistic.
template <typename T>
Checkpoint capture_checkpoint(const FruitNet<T>& model, std::string metadata) {
  Checkpoint ckpt;
  ckpt.metadata = std::move(metadata);
  for (const auto& nt : model.parameters().all()) {
    StoredTensor st;
    st.name = nt.name;
    for (auto d : nt.tensor.shape()) st.dims.push_back(d);
    st.values = std::vector<T>(nt.tensor.vec());
    ckpt.tensors.push_back(std::move(st));
  }
  return ckpt;
}

/// Copies stored values into the model. Every model tensor must be present
/// with a matching shape; nothing is modified if validation fails.
template <typename T>
void restore_checkpoint(FruitNet<T>& model, const Checkpoint& ckpt) {
  const auto targets = model.parameters().all();
  std::vector<const StoredTensor*> sources;
  for (const auto& nt : targets) {
    const StoredTensor* st = ckpt.find(nt.name);
    if (!st) fail(ErrorKind::format_error, "checkpoint is missing parameter " + nt.name);
    std::vector<std::uint64_t> dims(nt.tensor.shape().begin(), nt.tensor.shape().end());
    if (st->dims != dims) fail(ErrorKind::format_error, "checkpoint parameter " + nt.name + " has a different shape");
    sources.push_back(st);
  }
  if (ckpt.tensors.size() != targets.size())
    fail(ErrorKind::format_error, "checkpoint holds " + std::to_string(ckpt.tensors.size()) +
                                      " tensors, model expects " + std::to_string(targets.size()));
  for (std::size_t i = 0; i < targets.size(); ++i) {
    auto dst = targets[i].tensor;
    std::visit(
        [&](const auto& v) {
          for (std::size_t j = 0; j < v.size(); ++j) dst[j] = static_cast<T>(v[j]);
        },
        sources[i]->values);
  }
}

template <typename T>
void save_checkpoint(const FruitNet<T>& model, const std::string& metadata, const std::filesystem::path& path) {
  write_checkpoint(capture_checkpoint(model, metadata), path);
}

}  // namespace mifruit
