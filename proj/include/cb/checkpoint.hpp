#pragma once

// Checkpoint container shared by every module: magic "CBCK", version 1,
// tensor count, then per tensor: u16 name length, name, u8 rank, u32 dims,
// raw little-endian f32 data row-major.

#include <string>

#include "cb/io.hpp"
#include "cb/net.hpp"
#include "cb/tensor.hpp"

namespace cb {

inline constexpr char kCheckpointMagic[4] = {'C', 'B', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::string encode_checkpoint(const ParamSet& params) {
  BinWriter w;
  w.bytes(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(params.tensors.size()));
  for (const auto& [name, t] : params.tensors) {
    if (name.size() > 0xffff) throw IoError("tensor name too long: " + name);
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.str(name);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (int d : t.shape) w.u32(static_cast<std::uint32_t>(d));
    for (long long i = 0; i < t.size(); ++i) w.f32(t.data[i]);
  }
  return w.buffer();
}

inline ParamSet decode_checkpoint(const std::string& bytes, const std::string& origin) {
  BinReader r(bytes, origin);
  if (r.str(4) != std::string(kCheckpointMagic, 4))
    throw IoError(origin + ": bad checkpoint magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw IoError(origin + ": unsupported checkpoint version " + std::to_string(version));
  ParamSet ps;
  const std::uint32_t count = r.u32();
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint16_t name_len = r.u16();
    const std::string name = r.str(name_len);
    const int rank = r.u8();
    std::vector<int> shape(rank);
    for (int i = 0; i < rank; ++i) shape[i] = static_cast<int>(r.u32());
    Tensor t(shape);
    for (long long i = 0; i < t.size(); ++i) t.data[i] = r.f32();
    ps.insert(name, std::move(t));
  }
  r.expect_end();
  return ps;
}

inline void save_checkpoint(const std::string& path, const ParamSet& params) {
  write_file_atomic(path, encode_checkpoint(params));
}

inline ParamSet load_checkpoint(const std::string& path) {
  return decode_checkpoint(read_file(path), path);
}

// Merge a net's parameters into a checkpoint ParamSet under a name prefix.
inline void add_prefixed(ParamSet& dst, const std::string& prefix, const ParamSet& src) {
  for (const auto& [name, t] : src.tensors) dst.insert(prefix + "." + name, t);
}

// Extract the tensors under `prefix.` into a fresh ParamSet (prefix removed).
inline ParamSet take_prefixed(const ParamSet& src, const std::string& prefix) {
  ParamSet out;
  const std::string pre = prefix + ".";
  for (const auto& [name, t] : src.tensors)
    if (name.rfind(pre, 0) == 0) out.insert(name.substr(pre.size()), t);
  if (out.tensors.empty()) throw IoError("checkpoint has no tensors under prefix " + prefix);
  return out;
}

// Copies stored tensors into an already-built net, verifying shapes.
template <typename S>
void load_net_params(NetT<S>& net, const ParamSet& stored) {
  for (auto& [name, t] : net.params.tensors) {
    const Tensor& s = stored.at(name);
    if (s.shape != t.shape)
      throw IoError("checkpoint tensor " + name + " has shape " + shape_str(s.shape) +
                    ", net expects " + shape_str(t.shape));
    for (long long i = 0; i < t.size(); ++i) t.data[i] = static_cast<S>(s.data[i]);
  }
}

}  // namespace cb
