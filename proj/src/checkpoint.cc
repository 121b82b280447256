// SPDX-License-Identifier: Apache-2.0

#include "biortd/checkpoint.h"

#include <cstring>
#include <fstream>
#include <unordered_set>

namespace biortd {

namespace {

constexpr char kMagic[8] = {'B', 'I', 'O', 'R', 'T', 'D', 'C', 'K'};
constexpr size_t kHeaderSize = 8 + 4 + 8;

using Kind = CheckpointError::Kind;

void PutLe(std::string& out, uint64_t value, int bytes) {
  for (int i = 0; i < bytes; ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
  }
}

uint64_t GetLe(const unsigned char* p, int bytes) {
  uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
  return v;
}

nlohmann::json ManifestToJson(const CheckpointManifest& m) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : m.tensors) {
    tensors.push_back({{"name", t.name},
                       {"shape", t.shape},
                       {"offset", t.offset},
                       {"nbytes", t.nbytes}});
  }
  return {{"format_version", m.format_version},
          {"encoder", EncoderConfigToJson(m.encoder)},
          {"component", m.component},
          {"tensors", tensors},
          {"has_optimizer_state", m.has_optimizer_state},
          {"step", m.step},
          {"seed", m.seed},
          {"extra", m.extra}};
}

CheckpointManifest ManifestFromJson(const nlohmann::json& j) {
  CheckpointManifest m;
  m.format_version = j.at("format_version").get<uint32_t>();
  m.encoder = EncoderConfigFromJson(j.at("encoder"));
  m.component = j.at("component").get<std::string>();
  for (const auto& t : j.at("tensors")) {
    m.tensors.push_back({t.at("name").get<std::string>(),
                         t.at("shape").get<ad::Shape>(),
                         t.at("offset").get<uint64_t>(),
                         t.at("nbytes").get<uint64_t>()});
  }
  m.has_optimizer_state = j.at("has_optimizer_state").get<bool>();
  m.step = j.at("step").get<int64_t>();
  m.seed = j.at("seed").get<uint64_t>();
  m.extra = j.value("extra", nlohmann::json::object());
  return m;
}

}  // namespace

nlohmann::json EncoderConfigToJson(const EncoderConfig& c) {
  return {{"num_layers", c.num_layers},
          {"hidden", c.hidden},
          {"ffn_inner", c.ffn_inner},
          {"heads", c.heads},
          {"head_size", c.head_size},
          {"embedding_size", c.embedding_size},
          {"vocab_size", c.vocab_size},
          {"max_positions", c.max_positions},
          {"dropout", c.dropout},
          {"attention_dropout", c.attention_dropout}};
}

EncoderConfig EncoderConfigFromJson(const nlohmann::json& j) {
  EncoderConfig c;
  c.num_layers = j.at("num_layers").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.ffn_inner = j.at("ffn_inner").get<int>();
  c.heads = j.at("heads").get<int>();
  c.head_size = j.at("head_size").get<int>();
  c.embedding_size = j.at("embedding_size").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.max_positions = j.at("max_positions").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.attention_dropout = j.at("attention_dropout").get<double>();
  return c;
}

const NamedTensor* LoadedCheckpoint::Find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void SaveCheckpoint(const std::filesystem::path& path,
                    CheckpointManifest manifest,
                    std::span<const NamedTensor> tensors) {
  manifest.tensors.clear();
  std::unordered_set<std::string> seen;
  uint64_t offset = 0;
  for (const auto& t : tensors) {
    if (!seen.insert(t.name).second) {
      throw std::invalid_argument("duplicate tensor name " + t.name);
    }
    if (ad::NumElements(t.shape) != static_cast<int64_t>(t.values.size())) {
      throw std::invalid_argument("tensor " + t.name + " has " +
                                  std::to_string(t.values.size()) +
                                  " values for shape " +
                                  ad::ShapeToString(t.shape));
    }
    const uint64_t nbytes = t.values.size() * 4;
    manifest.tensors.push_back({t.name, t.shape, offset, nbytes});
    offset += nbytes;
  }
  const std::string manifest_text = ManifestToJson(manifest).dump();

  std::string header(kMagic, sizeof(kMagic));
  PutLe(header, manifest.format_version, 4);
  PutLe(header, manifest_text.size(), 8);

  std::string payload;
  payload.reserve(offset);
  for (const auto& t : tensors) {
    for (float v : t.values) {
      uint32_t bits;
      std::memcpy(&bits, &v, 4);
      PutLe(payload, bits, 4);
    }
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(Kind::kIo, "cannot write " + path.string());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(manifest_text.data(),
            static_cast<std::streamsize>(manifest_text.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw CheckpointError(Kind::kIo, "short write to " + path.string());
}

LoadedCheckpoint LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(Kind::kIo, "cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < kHeaderSize) {
    if (bytes.size() >= 8 && std::memcmp(data, kMagic, 8) != 0) {
      throw CheckpointError(Kind::kBadMagic, path.string() + " is not a checkpoint");
    }
    throw CheckpointError(Kind::kTruncated, path.string() + ": truncated header");
  }
  if (std::memcmp(data, kMagic, 8) != 0) {
    throw CheckpointError(Kind::kBadMagic, path.string() + " is not a checkpoint");
  }
  const auto version = static_cast<uint32_t>(GetLe(data + 8, 4));
  if (version != kCheckpointFormatVersion) {
    throw CheckpointError(Kind::kVersionMismatch,
                          path.string() + ": format version " +
                              std::to_string(version) + ", expected " +
                              std::to_string(kCheckpointFormatVersion));
  }
  const uint64_t manifest_len = GetLe(data + 12, 8);
  if (bytes.size() - kHeaderSize < manifest_len) {
    throw CheckpointError(Kind::kTruncated, path.string() + ": truncated manifest");
  }
  LoadedCheckpoint loaded;
  try {
    loaded.manifest = ManifestFromJson(nlohmann::json::parse(
        bytes.begin() + kHeaderSize,
        bytes.begin() + static_cast<std::ptrdiff_t>(kHeaderSize + manifest_len)));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(Kind::kCorruptManifest,
                          path.string() + ": bad manifest: " + e.what());
  }
  if (loaded.manifest.format_version != version) {
    throw CheckpointError(Kind::kVersionMismatch,
                          path.string() + ": header and manifest versions differ");
  }
  const size_t payload_start = kHeaderSize + manifest_len;
  const size_t payload_size = bytes.size() - payload_start;
  std::unordered_set<std::string> seen;
  for (const auto& rec : loaded.manifest.tensors) {
    if (!seen.insert(rec.name).second) {
      throw CheckpointError(Kind::kCorruptManifest,
                            path.string() + ": duplicate tensor " + rec.name);
    }
    const uint64_t count = static_cast<uint64_t>(ad::NumElements(rec.shape));
    if (rec.nbytes != count * 4) {
      throw CheckpointError(Kind::kCorruptManifest,
                            path.string() + ": tensor " + rec.name +
                                " size disagrees with its shape");
    }
    if (rec.offset > payload_size || rec.nbytes > payload_size - rec.offset) {
      throw CheckpointError(Kind::kTruncated, path.string() + ": tensor " +
                                                  rec.name +
                                                  " extends past end of file");
    }
    NamedTensor t{rec.name, rec.shape, std::vector<float>(count)};
    const unsigned char* src = data + payload_start + rec.offset;
    for (uint64_t i = 0; i < count; ++i) {
      const auto bits = static_cast<uint32_t>(GetLe(src + 4 * i, 4));
      std::memcpy(&t.values[i], &bits, 4);
    }
    loaded.tensors.push_back(std::move(t));
  }
  return loaded;
}

std::vector<NamedTensor> CollectTensors(
    const ParamStore<float>& store,
    const std::function<bool(const std::string&)>& keep,
    const AdamState<float>* adam) {
  std::vector<NamedTensor> out;
  for (const auto& p : store.entries()) {
    if (!keep(p.name)) continue;
    auto values = p.tensor.data();
    out.push_back({p.name, p.tensor.shape(), {values.begin(), values.end()}});
  }
  if (adam != nullptr) {
    for (const auto& p : store.entries()) {
      if (!keep(p.name)) continue;
      auto it = adam->moments.find(p.name);
      const size_t n = static_cast<size_t>(p.tensor.numel());
      std::vector<float> m(n, 0.0f), v(n, 0.0f);
      if (it != adam->moments.end() && !it->second.m.empty()) {
        m = it->second.m;
        v = it->second.v;
      }
      out.push_back({std::string(kAdamFirstMomentPrefix) + p.name,
                     p.tensor.shape(), std::move(m)});
      out.push_back({std::string(kAdamSecondMomentPrefix) + p.name,
                     p.tensor.shape(), std::move(v)});
    }
  }
  return out;
}

void RestoreTensors(const LoadedCheckpoint& checkpoint,
                    ParamStore<float>& store,
                    const std::function<bool(const std::string&)>& select,
                    bool require_all, AdamState<float>* adam) {
  std::unordered_set<std::string> restored;
  for (const auto& t : checkpoint.tensors) {
    const bool is_m = t.name.starts_with(kAdamFirstMomentPrefix);
    const bool is_v = t.name.starts_with(kAdamSecondMomentPrefix);
    const std::string name =
        is_m ? t.name.substr(kAdamFirstMomentPrefix.size())
             : is_v ? t.name.substr(kAdamSecondMomentPrefix.size()) : t.name;
    if (!select(name)) continue;
    if (!store.Contains(name)) {
      throw CheckpointError(Kind::kUnknownTensor,
                            "checkpoint tensor " + t.name +
                                " has no counterpart in the model");
    }
    ad::Tensor<float> target = store.tensor(name);
    if (target.shape() != t.shape) {
      throw CheckpointError(Kind::kShapeMismatch,
                            "tensor " + t.name + ": checkpoint shape " +
                                ad::ShapeToString(t.shape) + " vs model " +
                                ad::ShapeToString(target.shape()));
    }
    if (is_m || is_v) {
      if (adam == nullptr) continue;
      auto& slot = adam->moments[name];
      (is_m ? slot.m : slot.v) = t.values;
      continue;
    }
    std::copy(t.values.begin(), t.values.end(), target.data().begin());
    restored.insert(name);
  }
  if (require_all) {
    for (const auto& p : store.entries()) {
      if (select(p.name) && !restored.contains(p.name)) {
        throw CheckpointError(Kind::kMissingTensor,
                              "checkpoint lacks tensor " + p.name);
      }
    }
  }
  if (adam != nullptr && checkpoint.manifest.has_optimizer_state) {
    adam->step = checkpoint.manifest.step;
  }
}

}  // namespace biortd
