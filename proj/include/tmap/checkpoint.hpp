#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "tmap/address.hpp"
#include "tmap/errors.hpp"
#include "tmap/model.hpp"

namespace tmap {

// Checkpoint layout (all integers little-endian):
//
//   u32 magic 'TMAP'            u32 version (1)
//   u32 address_bits/page_bits/block_bits
//   u32 history_len, window, k_max
//   u32 d_model, heads, d_ff, n_layers
//   u32 tensor count
//   per tensor: u32 name length, name bytes,
//               u64 rows, u64 cols, rows*cols f32 values row-major
//
// The header makes a checkpoint self-describing: predict and simulate rebuild
// the exact model and address geometry from the file alone.
inline constexpr uint32_t kCheckpointMagic = 0x50414D54;  // "TMAP"
inline constexpr uint32_t kCheckpointVersion = 1;

template <class S>
struct CheckpointData {
  AddressConfig addr;
  uint32_t window = 0;
  ModelConfig model;
  ModelParams<S> params;
};

namespace detail {

inline void write_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& out, uint64_t v) {
  write_u32(out, static_cast<uint32_t>(v));
  write_u32(out, static_cast<uint32_t>(v >> 32));
}

inline void write_f32(std::ostream& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(out, bits);
}

inline uint32_t read_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw InputError(std::string("checkpoint truncated reading ") + what);
  }
  return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
         static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

inline uint64_t read_u64(std::istream& in, const char* what) {
  uint64_t lo = read_u32(in, what);
  uint64_t hi = read_u32(in, what);
  return lo | hi << 32;
}

inline float read_f32(std::istream& in, const char* what) {
  uint32_t bits = read_u32(in, what);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace detail

template <class S>
void save_checkpoint(const std::string& path, const ModelParams<S>& params,
                     const ModelConfig& model, const AddressConfig& addr, uint32_t window) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open checkpoint file '" + path + "' for writing");
  detail::write_u32(out, kCheckpointMagic);
  detail::write_u32(out, kCheckpointVersion);
  detail::write_u32(out, addr.address_bits);
  detail::write_u32(out, addr.page_bits);
  detail::write_u32(out, addr.block_bits);
  detail::write_u32(out, model.history_len);
  detail::write_u32(out, window);
  detail::write_u32(out, model.k_max);
  detail::write_u32(out, model.d_model);
  detail::write_u32(out, model.heads);
  detail::write_u32(out, model.d_ff);
  detail::write_u32(out, model.n_layers);

  uint32_t count = 0;
  for_each_param(params, [&](const std::string&, const Mat<S>&) { ++count; });
  detail::write_u32(out, count);
  for_each_param(params, [&](const std::string& name, const Mat<S>& m) {
    detail::write_u32(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_u64(out, static_cast<uint64_t>(m.rows()));
    detail::write_u64(out, static_cast<uint64_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        detail::write_f32(out, static_cast<float>(m(r, c)));
  });
  if (!out) throw InputError("failed writing checkpoint '" + path + "'");
}

template <class S>
CheckpointData<S> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint file '" + path + "'");
  if (detail::read_u32(in, "magic") != kCheckpointMagic) {
    throw InputError("'" + path + "' is not a model checkpoint (bad magic)");
  }
  if (uint32_t v = detail::read_u32(in, "version"); v != kCheckpointVersion) {
    throw InputError("unsupported checkpoint version " + std::to_string(v));
  }
  CheckpointData<S> data;
  data.addr.address_bits = detail::read_u32(in, "address_bits");
  data.addr.page_bits = detail::read_u32(in, "page_bits");
  data.addr.block_bits = detail::read_u32(in, "block_bits");
  data.addr.validate();
  uint32_t history = detail::read_u32(in, "history_len");
  data.window = detail::read_u32(in, "window");
  uint32_t k_max = detail::read_u32(in, "k_max");
  uint32_t d_model = detail::read_u32(in, "d_model");
  uint32_t heads = detail::read_u32(in, "heads");
  uint32_t d_ff = detail::read_u32(in, "d_ff");
  uint32_t n_layers = detail::read_u32(in, "n_layers");
  data.model = make_model_config(data.addr, history, k_max, d_model, heads, d_ff, n_layers);

  ModelParamsT<std::pair<uint32_t, uint32_t>> shapes;
  shape_params(shapes, data.model);
  std::vector<std::pair<std::string, std::pair<uint32_t, uint32_t>>> expected;
  for_each_param(shapes, [&](const std::string& name, std::pair<uint32_t, uint32_t>& s) {
    expected.emplace_back(name, s);
  });

  uint32_t count = detail::read_u32(in, "tensor count");
  if (count != expected.size()) {
    throw InputError("checkpoint holds " + std::to_string(count) + " tensors, expected " +
                     std::to_string(expected.size()));
  }
  data.params.encoder.resize(data.model.n_layers);
  data.params.decoder.resize(data.model.n_layers);
  std::vector<Mat<S>*> slots;
  for_each_param(data.params, [&](const std::string&, Mat<S>& m) { slots.push_back(&m); });

  for (size_t i = 0; i < expected.size(); ++i) {
    uint32_t name_len = detail::read_u32(in, "tensor name length");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw InputError("checkpoint truncated reading name");
    if (name != expected[i].first) {
      throw InputError("checkpoint tensor '" + name + "' where '" + expected[i].first +
                       "' was expected");
    }
    uint64_t rows = detail::read_u64(in, "rows");
    uint64_t cols = detail::read_u64(in, "cols");
    if (rows != expected[i].second.first || cols != expected[i].second.second) {
      throw InputError("tensor '" + name + "' has shape [" + std::to_string(rows) + "x" +
                       std::to_string(cols) + "], expected [" +
                       std::to_string(expected[i].second.first) + "x" +
                       std::to_string(expected[i].second.second) + "]");
    }
    Mat<S>& m = *slots[i];
    m.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (uint64_t r = 0; r < rows; ++r)
      for (uint64_t c = 0; c < cols; ++c)
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
            static_cast<S>(detail::read_f32(in, "tensor data"));
  }
  return data;
}

}  // namespace tmap
