#include "vtp/checkpoint.hpp"

#include "vtp/synthworld.hpp"  // IoError

#include <cstring>
#include <fstream>

namespace vtp::policy {

namespace {

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& is, const char* what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw synth::IoError(std::string("checkpoint truncated while reading ") + what);
  return v;
}

void put_blob(std::ostream& os, const std::string& name, const ad::Shape& shape,
              const ad::Array& values) {
  put<uint32_t>(os, static_cast<uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  put<uint32_t>(os, static_cast<uint32_t>(shape.size()));
  for (ad::Index e : shape) put<uint64_t>(os, static_cast<uint64_t>(e));
  os.write(reinterpret_cast<const char*>(values.data()),
           static_cast<std::streamsize>(values.size() * sizeof(double)));
}

}  // namespace

std::map<std::string, ad::Array> Checkpoint::arrays() const {
  std::map<std::string, ad::Array> out;
  for (const auto& [name, blob] : blobs) out.emplace(name, blob.values);
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const nn::ParamStore& params,
                     const std::map<std::string, ad::Array>& extra_blobs, uint64_t config_digest,
                     uint64_t model_digest) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw synth::IoError("cannot open " + path.string() + " for writing");
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  put<uint32_t>(os, kCheckpointVersion);
  put<uint64_t>(os, config_digest);
  put<uint64_t>(os, model_digest);
  put<uint32_t>(os, static_cast<uint32_t>(params.entries().size() + extra_blobs.size()));
  for (const auto& [name, t] : params.entries()) put_blob(os, name, t.shape(), t.values());
  for (const auto& [name, a] : extra_blobs) put_blob(os, name, {a.size()}, a);
  if (!os) throw synth::IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw synth::IoError("cannot open " + path.string());
  char magic[sizeof(kCheckpointMagic)];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw synth::IoError("checkpoint magic mismatch in " + path.string());
  }
  uint32_t version = take<uint32_t>(is, "version");
  if (version != kCheckpointVersion) {
    throw synth::IoError("checkpoint version " + std::to_string(version) + " unsupported");
  }
  Checkpoint ckpt;
  ckpt.config_digest = take<uint64_t>(is, "config digest");
  ckpt.model_digest = take<uint64_t>(is, "model digest");
  uint32_t count = take<uint32_t>(is, "blob count");
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t name_len = take<uint32_t>(is, "blob name length");
    if (name_len > 4096) throw synth::IoError("checkpoint blob name length corrupt");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw synth::IoError("checkpoint truncated while reading blob name");
    uint32_t rank = take<uint32_t>(is, "blob rank");
    if (rank > 8) throw synth::IoError("checkpoint blob rank corrupt");
    CheckpointBlob blob;
    ad::Index n = 1;
    for (uint32_t r = 0; r < rank; ++r) {
      auto e = static_cast<ad::Index>(take<uint64_t>(is, "blob dims"));
      blob.shape.push_back(e);
      n *= e;
    }
    blob.values = ad::Array(n);
    is.read(reinterpret_cast<char*>(blob.values.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw synth::IoError("checkpoint truncated while reading blob " + name);
    ckpt.blobs.emplace(std::move(name), std::move(blob));
  }
  return ckpt;
}

void restore_params(nn::ParamStore& params, const Checkpoint& ckpt) {
  for (auto& [name, t] : params.entries()) {
    auto it = ckpt.blobs.find(name);
    if (it == ckpt.blobs.end()) {
      throw synth::IoError("checkpoint missing parameter " + name);
    }
    if (it->second.shape != t.shape()) {
      throw synth::IoError("checkpoint parameter " + name + " has shape " +
                           ad::shape_str(it->second.shape) + ", model wants " +
                           ad::shape_str(t.shape()));
    }
    t.mutable_values() = it->second.values;
  }
}

}  // namespace vtp::policy
