#include "chexfuse/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "chexfuse/errors.hpp"

namespace chexfuse {

using nlohmann::json;

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t.value;
  }
  return nullptr;
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void put_f32le(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

float get_f32le(const unsigned char* p) {
  const std::uint32_t bits = get_u32(p);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

}  // namespace

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
  json meta;
  meta["config"] = checkpoint.config;
  meta["epoch"] = checkpoint.epoch;
  meta["best_val_loss"] = checkpoint.best_val_loss;
  meta["lr"] = checkpoint.lr;
  meta["val_history"] = checkpoint.val_history;
  if (checkpoint.has_optimizer) {
    meta["optimizer"] = {{"step", checkpoint.optimizer_step}};
  }
  json directory = json::array();
  std::uint64_t offset = 0;
  for (const auto& t : checkpoint.tensors) {
    directory.push_back(
        {{"name", t.name}, {"shape", t.value.shape()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(t.value.numel()) * 4;
  }
  meta["tensors"] = std::move(directory);

  const std::string meta_text = meta.dump();
  std::string blob;
  blob.reserve(16 + meta_text.size() + offset);
  blob.append(kCheckpointMagic, 4);
  put_u32(blob, checkpoint.format_version);
  put_u64(blob, static_cast<std::uint64_t>(meta_text.size()));
  blob += meta_text;
  for (const auto& t : checkpoint.tensors) {
    for (std::size_t i = 0; i < t.value.numel(); ++i)
      put_f32le(blob, t.value[i]);
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw IoError("short write on checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  std::string blob((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());

  if (blob.size() < 16) throw CheckpointCorruptError("truncated checkpoint '" + path + "'");
  if (std::memcmp(blob.data(), kCheckpointMagic, 4) != 0) {
    throw CheckpointCorruptError("bad magic in checkpoint '" + path + "'");
  }
  Checkpoint checkpoint;
  checkpoint.format_version = get_u32(bytes + 4);
  if (checkpoint.format_version != kCheckpointVersion) {
    throw CheckpointVersionError(
        "unsupported checkpoint format_version " +
        std::to_string(checkpoint.format_version) + " in '" + path + "'");
  }
  const std::uint64_t meta_len = get_u64(bytes + 8);
  if (16 + meta_len > blob.size()) {
    throw CheckpointCorruptError("truncated metadata in checkpoint '" + path + "'");
  }

  json meta;
  try {
    meta = json::parse(blob.substr(16, meta_len));
  } catch (const json::exception& e) {
    throw CheckpointCorruptError("unreadable metadata in '" + path + "': " +
                                 e.what());
  }
  const std::size_t payload_start = 16 + static_cast<std::size_t>(meta_len);
  try {
    checkpoint.config =
        meta.at("config").get<std::map<std::string, std::string>>();
    checkpoint.epoch = meta.at("epoch").get<int>();
    checkpoint.best_val_loss = meta.at("best_val_loss").get<double>();
    checkpoint.lr = meta.at("lr").get<double>();
    checkpoint.val_history = meta.at("val_history").get<std::vector<double>>();
    if (meta.contains("optimizer")) {
      checkpoint.has_optimizer = true;
      checkpoint.optimizer_step = meta["optimizer"].at("step").get<long long>();
    }
    std::uint64_t expected_offset = 0;
    for (const auto& entry : meta.at("tensors")) {
      NamedTensor t;
      t.name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<std::vector<int>>();
      const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
      if (offset != expected_offset) {
        throw CheckpointCorruptError("tensor directory offsets inconsistent in '" +
                                     path + "'");
      }
      t.value = Tensor(shape);
      const std::size_t nbytes = t.value.numel() * 4;
      if (payload_start + offset + nbytes > blob.size()) {
        throw CheckpointCorruptError("truncated tensor payload in '" + path + "'");
      }
      const unsigned char* src = bytes + payload_start + offset;
      for (std::size_t i = 0; i < t.value.numel(); ++i)
        t.value[i] = get_f32le(src + i * 4);
      expected_offset = offset + nbytes;
      checkpoint.tensors.push_back(std::move(t));
    }
    if (payload_start + expected_offset != blob.size()) {
      throw CheckpointCorruptError("trailing bytes in checkpoint '" + path + "'");
    }
  } catch (const json::exception& e) {
    throw CheckpointCorruptError("malformed metadata in '" + path + "': " +
                                 e.what());
  }
  return checkpoint;
}

std::vector<NamedTensor> snapshot_model(FusedClassifier<float>& model) {
  std::vector<NamedTensor> tensors;
  for (const auto* p : model.parameters()) tensors.push_back({p->name, p->value});
  for (const auto& [name, tensor] : model.state_tensors()) {
    tensors.push_back({name, *tensor});
  }
  return tensors;
}

void restore_model(FusedClassifier<float>& model, const Checkpoint& checkpoint) {
  for (auto* p : model.parameters()) {
    const Tensor* stored = checkpoint.find(p->name);
    if (!stored) {
      throw CheckpointCorruptError("checkpoint missing tensor '" + p->name + "'");
    }
    if (stored->shape() != p->value.shape()) {
      throw CheckpointCorruptError("checkpoint tensor '" + p->name +
                                   "' has shape " + stored->shape_string() +
                                   ", model expects " +
                                   p->value.shape_string());
    }
    p->value = *stored;
  }
  for (auto& [name, tensor] : model.state_tensors()) {
    const Tensor* stored = checkpoint.find(name);
    if (!stored) {
      throw CheckpointCorruptError("checkpoint missing tensor '" + name + "'");
    }
    *tensor = *stored;
  }
}

}  // namespace chexfuse
