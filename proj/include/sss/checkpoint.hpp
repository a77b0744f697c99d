#pragma once

// Flat binary model checkpoints. Layout (all integers and floats
// little-endian):
//
//   bytes 0..7   magic "SSSDNET1"
//   config       i32 channels_enc, i32 channels_dec,
//                f64 keep_prob, f64 dropout_rate, f64 lr, f64 lrelu_alpha,
//                f64 adam_beta1, f64 adam_beta2, f64 adam_eps,
//                i32 iterations, u64 seed, u8 literal_masked_loss,
//                i32 width, i32 height
//   u32          tensor count
//   per tensor   u32 name length, name bytes, u32 rank, i32 dims[rank],
//                f32 values (row-major)
//
// Values are stored as f32 regardless of the in-memory scalar type.

#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>

#include "sss/self2self.hpp"
#include "sss/tensor.hpp"

namespace sss {

class CheckpointError : public std::runtime_error {
 public:
  explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

constexpr char kCheckpointMagic[8] = {'S', 'S', 'S', 'D', 'N', 'E', 'T', '1'};

inline void ck_write_bytes(std::ostream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  if (!out) throw CheckpointError("checkpoint: write failed");
}

inline void ck_read_bytes(std::istream& in, void* p, std::size_t n) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (in.gcount() != static_cast<std::streamsize>(n))
    throw CheckpointError("checkpoint: truncated file");
}

inline void ck_write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  ck_write_bytes(out, b, 8);
}

inline std::uint64_t ck_read_u64(std::istream& in) {
  unsigned char b[8];
  ck_read_bytes(in, b, 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void ck_write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  ck_write_bytes(out, b, 4);
}

inline std::uint32_t ck_read_u32(std::istream& in) {
  unsigned char b[4];
  ck_read_bytes(in, b, 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline void ck_write_i32(std::ostream& out, std::int32_t v) {
  ck_write_u32(out, static_cast<std::uint32_t>(v));
}

inline std::int32_t ck_read_i32(std::istream& in) {
  return static_cast<std::int32_t>(ck_read_u32(in));
}

inline void ck_write_f32(std::ostream& out, float v) {
  ck_write_u32(out, std::bit_cast<std::uint32_t>(v));
}

inline float ck_read_f32(std::istream& in) { return std::bit_cast<float>(ck_read_u32(in)); }

inline void ck_write_f64(std::ostream& out, double v) {
  ck_write_u64(out, std::bit_cast<std::uint64_t>(v));
}

inline double ck_read_f64(std::istream& in) {
  return std::bit_cast<double>(ck_read_u64(in));
}

}  // namespace detail

template <typename T>
void save_model(UNetModel<T>& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("checkpoint: cannot open '" + path + "' for writing");
  using namespace detail;
  ck_write_bytes(out, kCheckpointMagic, 8);
  const TrainConfig& c = model.config;
  ck_write_i32(out, c.channels_enc);
  ck_write_i32(out, c.channels_dec);
  ck_write_f64(out, c.keep_prob);
  ck_write_f64(out, c.dropout_rate);
  ck_write_f64(out, c.lr);
  ck_write_f64(out, c.lrelu_alpha);
  ck_write_f64(out, c.adam_beta1);
  ck_write_f64(out, c.adam_beta2);
  ck_write_f64(out, c.adam_eps);
  ck_write_i32(out, c.iterations);
  ck_write_u64(out, c.seed);
  const unsigned char lit = c.literal_masked_loss ? 1 : 0;
  ck_write_bytes(out, &lit, 1);
  ck_write_i32(out, model.width);
  ck_write_i32(out, model.height);

  std::uint32_t count = 0;
  model.for_each_parameter([&count](Parameter<T>&) { ++count; });
  ck_write_u32(out, count);
  model.for_each_parameter([&out](Parameter<T>& p) {
    ck_write_u32(out, static_cast<std::uint32_t>(p.name.size()));
    ck_write_bytes(out, p.name.data(), p.name.size());
    ck_write_u32(out, static_cast<std::uint32_t>(p.value.rank()));
    for (int i = 0; i < p.value.rank(); ++i) ck_write_i32(out, p.value.dim(i));
    for (std::int64_t i = 0; i < p.value.size(); ++i)
      ck_write_f32(out, static_cast<float>(p.value[i]));
  });
}

template <typename T>
UNetModel<T> load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open '" + path + "'");
  using namespace detail;
  char magic[8];
  ck_read_bytes(in, magic, 8);
  for (int i = 0; i < 8; ++i)
    if (magic[i] != kCheckpointMagic[i]) throw CheckpointError("checkpoint: bad magic");

  TrainConfig c;
  c.channels_enc = ck_read_i32(in);
  c.channels_dec = ck_read_i32(in);
  c.keep_prob = ck_read_f64(in);
  c.dropout_rate = ck_read_f64(in);
  c.lr = ck_read_f64(in);
  c.lrelu_alpha = ck_read_f64(in);
  c.adam_beta1 = ck_read_f64(in);
  c.adam_beta2 = ck_read_f64(in);
  c.adam_eps = ck_read_f64(in);
  c.iterations = ck_read_i32(in);
  c.seed = ck_read_u64(in);
  unsigned char lit = 0;
  ck_read_bytes(in, &lit, 1);
  c.literal_masked_loss = lit != 0;
  const int width = ck_read_i32(in);
  const int height = ck_read_i32(in);

  UNetModel<T> model;
  try {
    model = build_unet<T>(c, width, height);
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("checkpoint: invalid config: ") + e.what());
  }

  std::uint32_t expected = 0;
  model.for_each_parameter([&expected](Parameter<T>&) { ++expected; });
  const std::uint32_t count = ck_read_u32(in);
  if (count != expected) throw CheckpointError("checkpoint: unexpected tensor count");

  model.for_each_parameter([&in](Parameter<T>& p) {
    const std::uint32_t name_len = ck_read_u32(in);
    if (name_len > 4096) throw CheckpointError("checkpoint: absurd name length");
    std::string name(name_len, '\0');
    ck_read_bytes(in, name.data(), name_len);
    if (name != p.name)
      throw CheckpointError("checkpoint: parameter name mismatch, expected '" + p.name +
                            "' got '" + name + "'");
    const std::uint32_t rank = ck_read_u32(in);
    if (rank != static_cast<std::uint32_t>(p.value.rank()))
      throw CheckpointError("checkpoint: rank mismatch for '" + p.name + "'");
    for (int i = 0; i < p.value.rank(); ++i)
      if (ck_read_i32(in) != p.value.dim(i))
        throw CheckpointError("checkpoint: shape mismatch for '" + p.name + "'");
    for (std::int64_t i = 0; i < p.value.size(); ++i)
      p.value[i] = static_cast<T>(ck_read_f32(in));
  });
  return model;
}

}  // namespace sss
