// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container:
//
//   bytes 0..7    magic "BIORTDCK"
//   bytes 8..11   format version, uint32 little-endian
//   bytes 12..19  manifest length N, uint64 little-endian
//   next N bytes  manifest, UTF-8 JSON
//   remainder     tensor payload: little-endian float32, row-major, at the
//                 offsets listed in the manifest (relative to payload start)

#ifndef BIORTD_CHECKPOINT_H_
#define BIORTD_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "biortd/autodiff.h"
#include "biortd/encoder.h"
#include "biortd/optim.h"
#include "biortd/params.h"

namespace biortd {

inline constexpr uint32_t kCheckpointFormatVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind {
    kIo,
    kBadMagic,
    kVersionMismatch,
    kTruncated,
    kCorruptManifest,
    kUnknownTensor,
    kMissingTensor,
    kShapeMismatch,
    kConfigMismatch,
  };
  CheckpointError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct TensorRecord {
  std::string name;
  ad::Shape shape;
  uint64_t offset = 0;
  uint64_t nbytes = 0;
};

struct CheckpointManifest {
  uint32_t format_version = kCheckpointFormatVersion;
  EncoderConfig encoder;
  std::string component;  // "discriminator", "generator" or "task-head"
  std::vector<TensorRecord> tensors;  // filled by SaveCheckpoint
  bool has_optimizer_state = false;
  int64_t step = 0;
  uint64_t seed = 0;
  // Free-form metadata: task, label inventory, vocabulary, config hash.
  nlohmann::json extra = nlohmann::json::object();
};

struct NamedTensor {
  std::string name;
  ad::Shape shape;
  std::vector<float> values;
};

struct LoadedCheckpoint {
  CheckpointManifest manifest;
  std::vector<NamedTensor> tensors;

  const NamedTensor* Find(const std::string& name) const;
};

nlohmann::json EncoderConfigToJson(const EncoderConfig& config);
EncoderConfig EncoderConfigFromJson(const nlohmann::json& j);

// Names must be unique.
void SaveCheckpoint(const std::filesystem::path& path,
                    CheckpointManifest manifest,
                    std::span<const NamedTensor> tensors);
LoadedCheckpoint LoadCheckpoint(const std::filesystem::path& path);

inline constexpr std::string_view kAdamFirstMomentPrefix = "adam.m/";
inline constexpr std::string_view kAdamSecondMomentPrefix = "adam.v/";

// Parameters of `store` accepted by `keep`, plus their Adam moments when
// `adam` is given.
std::vector<NamedTensor> CollectTensors(
    const ParamStore<float>& store,
    const std::function<bool(const std::string&)>& keep,
    const AdamState<float>* adam = nullptr);

// Copies the checkpoint tensors whose (parameter) name passes `select` into
// `store`. A selected name missing from the store, or a shape disagreement,
// is an error. With `require_all`, selected store parameters absent from the
// checkpoint are an error too. Adam moments are restored into `adam` when
// both are present.
void RestoreTensors(const LoadedCheckpoint& checkpoint,
                    ParamStore<float>& store,
                    const std::function<bool(const std::string&)>& select,
                    bool require_all, AdamState<float>* adam = nullptr);

}  // namespace biortd

#endif  // BIORTD_CHECKPOINT_H_
