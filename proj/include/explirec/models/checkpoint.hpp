#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <zlib.h>

#include <json.hpp>

#include "explirec/error.hpp"
#include "explirec/models/factor_model.hpp"
#include "explirec/models/knn.hpp"
#include "explirec/models/train_config.hpp"

namespace explirec {

using RatingModel = std::variant<FactorModel, KnnModel>;

inline ModelKind model_kind(const RatingModel& m) {
  return std::visit(
      [](const auto& x) {
        if constexpr (std::is_same_v<std::decay_t<decltype(x)>, KnnModel>)
          return ModelKind::knn;
        else
          return x.kind;
      },
      m);
}

inline double predict(const RatingModel& m, std::size_t user, std::size_t item) {
  return std::visit([&](const auto& x) { return x.predict(user, item); }, m);
}

inline constexpr char kCheckpointMagic[8] = {'E', 'X', 'P', 'L', 'I', 'R', 'E', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) {
    auto b = static_cast<const unsigned char*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) bytes_.push_back(static_cast<unsigned char>(v >> s));
  }
  void u64(std::uint64_t v) {
    for (int s = 0; s < 64; s += 8) bytes_.push_back(static_cast<unsigned char>(v >> s));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void f64s(const std::vector<double>& v) {
    for (double x : v) f64(x);
  }
  void u8s(const std::vector<std::uint8_t>& v) { bytes_.insert(bytes_.end(), v.begin(), v.end()); }

  std::vector<unsigned char>& bytes() { return bytes_; }

 private:
  std::vector<unsigned char> bytes_;
};

class ByteReader {
 public:
  ByteReader(const unsigned char* data, std::size_t size) : data_(data), size_(size) {}

  void need(std::size_t n) const {
    if (size_ - pos_ < n) throw Error(ErrorCode::corrupt_file, "checkpoint ends unexpectedly");
  }
  void raw(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, data_ + pos_, n);
    pos_ += n;
  }
  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int s = 0; s < 4; ++s) v |= static_cast<std::uint32_t>(data_[pos_++]) << (8 * s);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int s = 0; s < 8; ++s) v |= static_cast<std::uint64_t>(data_[pos_++]) << (8 * s);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::vector<double> f64s(std::uint64_t n) {
    need(n * 8);
    std::vector<double> v(n);
    for (auto& x : v) x = f64();
    return v;
  }
  std::vector<std::uint8_t> u8s(std::uint64_t n) {
    need(n);
    std::vector<std::uint8_t> v(data_ + pos_, data_ + pos_ + n);
    pos_ += n;
    return v;
  }
  // Guards element counts read from the file before allocating.
  std::uint64_t count(std::uint64_t element_size) {
    std::uint64_t n = u64();
    if (element_size && n > (size_ - pos_) / element_size)
      throw Error(ErrorCode::corrupt_file, "checkpoint declares more data than it holds");
    return n;
  }
  bool at_end() const { return pos_ == size_; }

 private:
  const unsigned char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(const unsigned char* data, std::size_t n) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths
  while (n > 0) {
    uInt chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = ::crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

inline Matrix read_matrix(ByteReader& r, std::uint64_t rows, std::uint64_t cols) {
  Matrix m(rows, cols);
  m.values() = r.f64s(rows * cols);
  return m;
}

}  // namespace detail

// Binary checkpoint: magic, version, kind tag, dimensions, little-endian
// float64 parameter blocks, trailing CRC32 of everything before it.
inline std::vector<unsigned char> serialize_model(const RatingModel& model) {
  detail::ByteWriter w;
  w.raw(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u8(static_cast<std::uint8_t>(model_kind(model)));
  if (const auto* f = std::get_if<FactorModel>(&model)) {
    const std::uint64_t hidden = f->dense ? f->dense->units() : 0;
    w.u64(f->num_users());
    w.u64(f->num_items());
    w.u64(f->latent_dim());
    w.u64(hidden);
    w.u8(f->dense ? 1 : 0);
    w.f64(f->global_mean);
    w.f64s(f->user_vectors.values());
    w.f64s(f->item_vectors.values());
    w.f64s(f->user_bias);
    w.f64s(f->item_bias);
    w.u8s(f->known_users);
    w.u8s(f->known_items);
    if (f->dense) {
      w.f64s(f->dense->weights.values());
      w.f64s(f->dense->bias);
      w.f64s(f->dense->output);
    }
  } else {
    const auto& k = std::get<KnnModel>(model);
    w.u64(k.num_users());
    w.u64(k.num_items);
    w.u64(k.k);
    w.u64(k.min_overlap);
    w.f64(k.global_mean);
    w.f64s(k.user_means);
    w.u8s(k.known_users);
    for (const auto& row : k.centered_ratings) {
      w.u64(row.size());
      for (const auto& e : row) {
        w.u64(e.item);
        w.f64(e.centered);
      }
    }
  }
  auto& bytes = w.bytes();
  const std::uint32_t crc = detail::crc32_of(bytes.data(), bytes.size());
  w.u32(crc);
  return std::move(bytes);
}

// Throws checksum_mismatch, version_mismatch, kind_mismatch (when `expected`
// is given and differs) or corrupt_file.
inline RatingModel deserialize_model(const std::vector<unsigned char>& bytes,
                                     std::optional<ModelKind> expected = std::nullopt) {
  if (bytes.size() < 4) throw Error(ErrorCode::checksum_mismatch, "checkpoint checksum missing");
  const std::size_t body = bytes.size() - 4;
  detail::ByteReader tail(bytes.data() + body, 4);
  if (tail.u32() != detail::crc32_of(bytes.data(), body))
    throw Error(ErrorCode::checksum_mismatch, "checkpoint checksum mismatch");

  detail::ByteReader r(bytes.data(), body);
  char magic[8];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw Error(ErrorCode::corrupt_file, "not a model checkpoint");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw Error(ErrorCode::version_mismatch,
                "checkpoint format version " + std::to_string(version) + ", expected " +
                    std::to_string(kCheckpointVersion));
  const std::uint8_t tag = r.u8();
  if (tag < 1 || tag > 4) throw Error(ErrorCode::corrupt_file, "unknown model kind tag");
  const auto kind = static_cast<ModelKind>(tag);
  if (expected && *expected != kind)
    throw Error(ErrorCode::kind_mismatch, "checkpoint holds a " + std::string(kind_name(kind)) +
                                              " model, expected " +
                                              std::string(kind_name(*expected)));

  if (kind != ModelKind::knn) {
    FactorModel f;
    f.kind = kind;
    const auto nu = r.count(8), ni = r.count(8), d = r.u64(), hidden = r.u64();
    const bool has_dense = r.u8() != 0;
    f.global_mean = r.f64();
    r.need(nu * d * 8);
    f.user_vectors = detail::read_matrix(r, nu, d);
    r.need(ni * d * 8);
    f.item_vectors = detail::read_matrix(r, ni, d);
    f.user_bias = r.f64s(nu);
    f.item_bias = r.f64s(ni);
    f.known_users = r.u8s(nu);
    f.known_items = r.u8s(ni);
    if (has_dense) {
      DenseLayer L;
      r.need(hidden * d * 8);
      L.weights = detail::read_matrix(r, hidden, d);
      L.bias = r.f64s(hidden);
      L.output = r.f64s(hidden);
      f.dense = std::move(L);
    }
    if (!r.at_end()) throw Error(ErrorCode::corrupt_file, "trailing bytes in checkpoint");
    return f;
  }
  KnnModel k;
  const auto nu = r.count(8);
  k.num_items = r.u64();
  k.k = r.u64();
  k.min_overlap = r.u64();
  k.global_mean = r.f64();
  k.user_means = r.f64s(nu);
  k.known_users = r.u8s(nu);
  k.centered_ratings.resize(nu);
  for (auto& row : k.centered_ratings) {
    const auto n = r.count(16);
    row.resize(n);
    for (auto& e : row) {
      e.item = r.u64();
      e.centered = r.f64();
    }
  }
  if (!r.at_end()) throw Error(ErrorCode::corrupt_file, "trailing bytes in checkpoint");
  return k;
}

// Writes `path` and a `path.json` sidecar recording the training config.
inline void save_model(const RatingModel& model, const std::string& path,
                       const TrainConfig& config = {}) {
  const auto bytes = serialize_model(model);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::unreadable_file, "cannot write checkpoint '" + path + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::unreadable_file, "failed writing checkpoint '" + path + "'");
  }
  nlohmann::json meta;
  meta["format_version"] = kCheckpointVersion;
  meta["kind"] = kind_name(model_kind(model));
  meta["train_config"] = config;
  std::ofstream side(path + ".json", std::ios::trunc);
  side << meta.dump(2) << '\n';
}

inline RatingModel load_model(const std::string& path,
                              std::optional<ModelKind> expected = std::nullopt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::unreadable_file, "cannot read checkpoint '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return deserialize_model(bytes, expected);
}

}  // namespace explirec
