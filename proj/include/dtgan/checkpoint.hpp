#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dtgan/param_store.hpp"

namespace dtgan {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

// Raised when a checkpoint exists and parses but does not match the model it
// is being loaded into (missing/extra parameter, shape mismatch, wrong
// format version). Callers treat this as a usage error, not an I/O failure.
class CheckpointMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace ckpt_detail {

constexpr std::uint32_t kMagic = 0x4E544744;  // "DGTN" little-endian
constexpr std::uint32_t kVersion = 1;

template <class T>
void write_pod(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::ifstream& f, const std::string& path) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) {
    throw std::runtime_error("checkpoint: truncated file '" + path + "'");
  }
  return v;
}

}  // namespace ckpt_detail

// Binary container, little-endian throughout:
//   u32 magic, u32 format version, u64 rng seed, u64 entry count;
//   then per entry: u32 name length, name bytes, u32 rank, u64 dims[rank],
//   f64 values[prod(dims)].
// Entries appear in registration order, concatenated over the given stores.
inline void save_checkpoint(const std::string& path, std::uint64_t rng_seed,
                            const std::vector<const ParameterStore*>& stores) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) {
    throw std::runtime_error("save_checkpoint: cannot open '" + path +
                             "' for writing");
  }
  std::uint64_t count = 0;
  for (const auto* s : stores) count += s->size();
  ckpt_detail::write_pod(f, ckpt_detail::kMagic);
  ckpt_detail::write_pod(f, ckpt_detail::kVersion);
  ckpt_detail::write_pod(f, rng_seed);
  ckpt_detail::write_pod(f, count);
  for (const auto* s : stores) {
    for (const auto& [name, p] : s->entries()) {
      ckpt_detail::write_pod(f, static_cast<std::uint32_t>(name.size()));
      f.write(name.data(), static_cast<std::streamsize>(name.size()));
      const auto& shape = p.shape();
      ckpt_detail::write_pod(f, static_cast<std::uint32_t>(shape.size()));
      for (int d : shape)
        ckpt_detail::write_pod(f, static_cast<std::uint64_t>(d));
      f.write(reinterpret_cast<const char*>(p.values().data()),
              static_cast<std::streamsize>(p.values().size() * sizeof(double)));
    }
  }
  if (!f) {
    throw std::runtime_error("save_checkpoint: write failed for '" + path + "'");
  }
}

// Loads a checkpoint into already-constructed stores. Every entry in the file
// must match an existing parameter by name and shape, and every parameter
// must be covered; anything else is a CheckpointMismatch. Returns the stored
// rng seed.
inline std::uint64_t load_checkpoint_into(const std::string& path,
                                          const std::vector<ParameterStore*>& stores) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    throw std::runtime_error("load_checkpoint_into: cannot open '" + path + "'");
  }
  const auto magic = ckpt_detail::read_pod<std::uint32_t>(f, path);
  if (magic != ckpt_detail::kMagic) {
    throw CheckpointMismatch("checkpoint '" + path +
                             "': bad magic, not a checkpoint file");
  }
  const auto version = ckpt_detail::read_pod<std::uint32_t>(f, path);
  if (version != ckpt_detail::kVersion) {
    throw CheckpointMismatch("checkpoint '" + path +
                             "': unsupported format version " +
                             std::to_string(version));
  }
  const auto seed = ckpt_detail::read_pod<std::uint64_t>(f, path);
  const auto count = ckpt_detail::read_pod<std::uint64_t>(f, path);

  std::uint64_t expected = 0;
  for (auto* s : stores) expected += s->size();
  if (count != expected) {
    throw CheckpointMismatch(
        "checkpoint '" + path + "': holds " + std::to_string(count) +
        " parameters, model has " + std::to_string(expected));
  }

  auto find_param = [&](const std::string& name) -> DiffArray* {
    for (auto* s : stores)
      if (s->contains(name)) return &s->get(name);
    return nullptr;
  };

  for (std::uint64_t e = 0; e < count; ++e) {
    const auto name_len = ckpt_detail::read_pod<std::uint32_t>(f, path);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    if (!f) throw std::runtime_error("checkpoint: truncated file '" + path + "'");
    const auto rank = ckpt_detail::read_pod<std::uint32_t>(f, path);
    Shape shape(rank);
    for (auto& d : shape)
      d = static_cast<int>(ckpt_detail::read_pod<std::uint64_t>(f, path));
    DiffArray* p = find_param(name);
    if (!p) {
      throw CheckpointMismatch("checkpoint '" + path +
                               "': parameter '" + name +
                               "' does not exist in the model");
    }
    if (p->shape() != shape) {
      throw CheckpointMismatch("checkpoint '" + path + "': parameter '" +
                               name + "' has shape " + shape_str(shape) +
                               ", model wants " + shape_str(p->shape()));
    }
    f.read(reinterpret_cast<char*>(p->mutable_values().data()),
           static_cast<std::streamsize>(p->values().size() * sizeof(double)));
    if (!f) throw std::runtime_error("checkpoint: truncated file '" + path + "'");
  }
  return seed;
}

}  // namespace dtgan
