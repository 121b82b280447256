// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: a flat "key = value" text file of hyperparameters
// (learning_rate, warmup_steps, mask_percent, ...). Lines starting with '#'
// are comments. Unknown keys are rejected.

#ifndef BIORTD_CONFIG_H_
#define BIORTD_CONFIG_H_

#include <filesystem>
#include <istream>
#include <map>
#include <string>

#include <json.hpp>

#include "biortd/finetune.h"
#include "biortd/rtd.h"
#include "biortd/tasks.h"

namespace biortd {

class RunConfig {
 public:
  static RunConfig Parse(std::istream& in, const std::string& source);
  static RunConfig Load(const std::filesystem::path& path);

  // Throws ConfigError for unknown keys.
  void Set(const std::string& key, const std::string& value);
  bool Has(const std::string& key) const { return values_.contains(key); }
  const std::string& Get(const std::string& key) const { return values_.at(key); }
  const std::map<std::string, std::string>& values() const { return values_; }

  // Architecture preset "base" (default) or "desk", then every override.
  // Keys that only apply to fine-tuning are errors here.
  PretrainConfig ToPretrain() const;
  // Column defaults for the task, then every override. Pretraining-only keys
  // are errors here.
  FinetuneConfig ToFinetune(Task task) const;

 private:
  std::map<std::string, std::string> values_;
};

// Effective settings as JSON (what run manifests record).
nlohmann::json ToJson(const PretrainConfig& c);
nlohmann::json ToJson(const FinetuneConfig& c);

// 64-bit FNV-1a of the compact JSON dump, as 16 hex digits.
std::string ConfigHash(const nlohmann::json& resolved);

// Parses "1/3", "0.25", "15" and integer shorthands such as "10k" and "1M".
double ParseNumber(const std::string& key, const std::string& text);
int64_t ParseCount(const std::string& key, const std::string& text);

}  // namespace biortd

#endif  // BIORTD_CONFIG_H_
