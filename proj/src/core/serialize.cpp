#include "mealsynth/core/serialize.hpp"

#include <cstring>
#include <fstream>

namespace mealsynth {

namespace {

constexpr char kMagic[8] = {'M', 'S', 'C', 'K', 'P', 'T', '0', '1'};

void write_u64(std::ofstream& out, uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), 8);
}

uint64_t read_u64(std::ifstream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open checkpoint for write: " + path);
  out.write(kMagic, 8);
  write_u64(out, ckpt.config_hash);
  write_u64(out, static_cast<uint64_t>(ckpt.step));
  write_u64(out, ckpt.tensors.size());
  for (const auto& [name, t] : ckpt.tensors) {
    write_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u64(out, t.shape.size());
    for (int64_t d : t.shape) write_u64(out, static_cast<uint64_t>(d));
    static_assert(sizeof(double) == 8);
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * 8));
  }
  if (!out) throw ConfigError("short write on checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw ConfigError("bad checkpoint magic: " + path);
  Checkpoint ckpt;
  ckpt.config_hash = read_u64(in);
  ckpt.step = static_cast<int64_t>(read_u64(in));
  const uint64_t count = read_u64(in);
  for (uint64_t i = 0; i < count; ++i) {
    const uint64_t name_len = read_u64(in);
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(name_len));
    const uint64_t ndim = read_u64(in);
    std::vector<int64_t> shape(ndim);
    for (auto& d : shape) d = static_cast<int64_t>(read_u64(in));
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * 8));
    if (!in) throw ConfigError("truncated checkpoint: " + path);
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ckpt;
}

Checkpoint snapshot(const nn::ParamRegistry& reg, uint64_t config_hash, int64_t step) {
  Checkpoint ckpt;
  ckpt.config_hash = config_hash;
  ckpt.step = step;
  for (const auto& [name, v] : reg.items) ckpt.tensors.emplace_back(name, v->value);
  return ckpt;
}

void restore(const Checkpoint& ckpt, nn::ParamRegistry& reg) {
  for (auto& [name, v] : reg.items) {
    bool found = false;
    for (const auto& [cname, t] : ckpt.tensors) {
      if (cname == name) {
        if (t.shape != v->value.shape)
          throw ConfigError("checkpoint tensor '" + name + "' shape mismatch: " +
                            t.shape_str() + " vs " + v->value.shape_str());
        v->value = t;
        found = true;
        break;
      }
    }
    if (!found) throw ConfigError("checkpoint missing tensor: " + name);
  }
}

}  // namespace mealsynth
