// SPDX-License-Identifier: Apache-2.0

#include "biortd/config.h"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

namespace biortd {

namespace {

enum class Scope { kShared, kPretrain, kFinetune };

const std::map<std::string, Scope>& Keys() {
  static const std::map<std::string, Scope> keys = {
      {"learning_rate", Scope::kShared},
      {"adam_eps", Scope::kShared},
      {"adam_beta1", Scope::kShared},
      {"adam_beta2", Scope::kShared},
      {"lr_decay", Scope::kShared},
      {"attention_dropout", Scope::kShared},
      {"dropout", Scope::kShared},
      {"weight_decay", Scope::kShared},
      {"batch_size", Scope::kShared},
      {"max_seq_length", Scope::kShared},
      {"seed", Scope::kShared},
      {"preset", Scope::kPretrain},
      {"num_layers", Scope::kPretrain},
      {"hidden_size", Scope::kPretrain},
      {"ffn_inner_hidden_size", Scope::kPretrain},
      {"attention_heads", Scope::kPretrain},
      {"attention_head_size", Scope::kPretrain},
      {"embedding_size", Scope::kPretrain},
      {"vocab_size", Scope::kPretrain},
      {"max_position_embeddings", Scope::kPretrain},
      {"generator_size", Scope::kPretrain},
      {"mask_percent", Scope::kPretrain},
      {"warmup_steps", Scope::kPretrain},
      {"train_steps", Scope::kPretrain},
      {"lambda_disc", Scope::kPretrain},
      {"log_every", Scope::kPretrain},
      {"vocab_file", Scope::kPretrain},
      {"task", Scope::kFinetune},
      {"layerwise_lr_decay", Scope::kFinetune},
      {"document_stride", Scope::kFinetune},
      {"epochs", Scope::kFinetune},
      {"warmup_fraction", Scope::kFinetune},
      {"n_best", Scope::kFinetune},
      {"max_answer_tokens", Scope::kFinetune},
      {"top_k", Scope::kFinetune},
      {"label_set", Scope::kFinetune},
  };
  return keys;
}

std::string Trim(const std::string& s) {
  const size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

void CheckScope(const std::map<std::string, std::string>& values, Scope wrong,
                const std::string& command) {
  for (const auto& [key, value] : values) {
    if (Keys().at(key) == wrong) {
      throw ConfigError("setting '" + key + "' does not apply to " + command);
    }
  }
}

void CheckLinearDecay(const std::map<std::string, std::string>& values) {
  auto it = values.find("lr_decay");
  if (it != values.end() && it->second != "linear" && it->second != "Linear") {
    throw ConfigError("lr_decay: only linear decay is supported, got '" +
                      it->second + "'");
  }
}

int ToInt(const std::string& key, const std::string& text) {
  const int64_t v = ParseCount(key, text);
  if (v < INT32_MIN || v > INT32_MAX) throw ConfigError(key + ": out of range");
  return static_cast<int>(v);
}

}  // namespace

double ParseNumber(const std::string& key, const std::string& text) {
  const size_t slash = text.find('/');
  try {
    if (slash != std::string::npos) {
      const double num = std::stod(text.substr(0, slash));
      const double den = std::stod(text.substr(slash + 1));
      if (den == 0.0) throw ConfigError(key + ": division by zero in '" + text + "'");
      return num / den;
    }
    size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) {
      const std::string suffix = text.substr(used);
      if (suffix == "k" || suffix == "K") return v * 1e3;
      if (suffix == "M") return v * 1e6;
      throw ConfigError(key + ": cannot parse '" + text + "'");
    }
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError(key + ": cannot parse '" + text + "' as a number");
  }
}

int64_t ParseCount(const std::string& key, const std::string& text) {
  const double v = ParseNumber(key, text);
  if (v != std::floor(v) || std::fabs(v) > 9e15) {
    throw ConfigError(key + ": '" + text + "' is not an integer");
  }
  return static_cast<int64_t>(v);
}

RunConfig RunConfig::Parse(std::istream& in, const std::string& source) {
  RunConfig config;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = Trim(line);
    if (t.empty() || t[0] == '#') continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = Trim(t.substr(0, eq));
    if (config.Has(key)) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": '" + key +
                        "' set twice");
    }
    try {
      config.Set(key, Trim(t.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return config;
}

RunConfig RunConfig::Load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  return Parse(in, path.string());
}

void RunConfig::Set(const std::string& key, const std::string& value) {
  if (!Keys().contains(key)) throw ConfigError("unknown setting '" + key + "'");
  if (value.empty()) throw ConfigError("setting '" + key + "' has no value");
  values_[key] = value;
}

PretrainConfig RunConfig::ToPretrain() const {
  CheckScope(values_, Scope::kFinetune, "pretraining");
  CheckLinearDecay(values_);
  PretrainConfig c;
  auto get = [&](const std::string& key) -> const std::string* {
    auto it = values_.find(key);
    return it == values_.end() ? nullptr : &it->second;
  };
  if (const auto* v = get("preset")) {
    if (*v == "desk") {
      c.encoder = EncoderConfig::Desk();
      c.max_seq_length = c.encoder.max_positions;
    } else if (*v != "base") {
      throw ConfigError("preset must be base or desk, got '" + *v + "'");
    }
  }
  EncoderConfig& e = c.encoder;
  if (const auto* v = get("num_layers")) e.num_layers = ToInt("num_layers", *v);
  if (const auto* v = get("hidden_size")) e.hidden = ToInt("hidden_size", *v);
  if (const auto* v = get("ffn_inner_hidden_size")) e.ffn_inner = ToInt("ffn_inner_hidden_size", *v);
  if (const auto* v = get("attention_heads")) e.heads = ToInt("attention_heads", *v);
  if (const auto* v = get("attention_head_size")) e.head_size = ToInt("attention_head_size", *v);
  if (const auto* v = get("embedding_size")) e.embedding_size = ToInt("embedding_size", *v);
  if (const auto* v = get("vocab_size")) e.vocab_size = ToInt("vocab_size", *v);
  if (const auto* v = get("max_position_embeddings")) e.max_positions = ToInt("max_position_embeddings", *v);
  if (const auto* v = get("dropout")) e.dropout = ParseNumber("dropout", *v);
  if (const auto* v = get("attention_dropout")) e.attention_dropout = ParseNumber("attention_dropout", *v);
  if (const auto* v = get("generator_size")) c.joint.generator_size_ratio = ParseNumber("generator_size", *v);
  if (const auto* v = get("lambda_disc")) c.joint.lambda_disc = ParseNumber("lambda_disc", *v);
  if (const auto* v = get("mask_percent")) c.mask_rate = ParseNumber("mask_percent", *v) / 100.0;
  if (const auto* v = get("learning_rate")) c.learning_rate = ParseNumber("learning_rate", *v);
  if (const auto* v = get("adam_eps")) c.adam.epsilon = ParseNumber("adam_eps", *v);
  if (const auto* v = get("adam_beta1")) c.adam.beta1 = ParseNumber("adam_beta1", *v);
  if (const auto* v = get("adam_beta2")) c.adam.beta2 = ParseNumber("adam_beta2", *v);
  if (const auto* v = get("weight_decay")) c.adam.weight_decay = ParseNumber("weight_decay", *v);
  if (const auto* v = get("warmup_steps")) c.warmup_steps = ParseCount("warmup_steps", *v);
  if (const auto* v = get("train_steps")) c.train_steps = ParseCount("train_steps", *v);
  if (const auto* v = get("batch_size")) c.batch_size = ToInt("batch_size", *v);
  if (const auto* v = get("max_seq_length")) c.max_seq_length = ToInt("max_seq_length", *v);
  if (const auto* v = get("seed")) c.seed = static_cast<uint64_t>(ParseCount("seed", *v));
  if (const auto* v = get("log_every")) c.log_every = ToInt("log_every", *v);
  e.Validate();
  c.joint.Validate();
  if (c.batch_size < 1) throw ConfigError("batch_size must be positive");
  if (c.max_seq_length < 3 || c.max_seq_length > e.max_positions) {
    throw ConfigError("max_seq_length must be in [3, max_position_embeddings]");
  }
  if (!(c.mask_rate > 0.0 && c.mask_rate < 1.0)) {
    throw ConfigError("mask_percent must be in (0, 100)");
  }
  if (c.log_every < 1) throw ConfigError("log_every must be positive");
  LinearSchedule{c.learning_rate, c.warmup_steps, c.train_steps}.Validate();
  return c;
}

FinetuneConfig RunConfig::ToFinetune(Task task) const {
  CheckScope(values_, Scope::kPretrain, "fine-tuning");
  CheckLinearDecay(values_);
  if (Has("task") && ParseTask(Get("task")) != task) {
    throw ConfigError("config is for task '" + Get("task") + "', command asks for '" +
                      TaskName(task) + "'");
  }
  FinetuneConfig c = FinetuneConfig::ForTask(task);
  auto get = [&](const std::string& key) -> const std::string* {
    auto it = values_.find(key);
    return it == values_.end() ? nullptr : &it->second;
  };
  if (const auto* v = get("learning_rate")) c.learning_rate = ParseNumber("learning_rate", *v);
  if (const auto* v = get("adam_eps")) c.adam.epsilon = ParseNumber("adam_eps", *v);
  if (const auto* v = get("adam_beta1")) c.adam.beta1 = ParseNumber("adam_beta1", *v);
  if (const auto* v = get("adam_beta2")) c.adam.beta2 = ParseNumber("adam_beta2", *v);
  if (const auto* v = get("weight_decay")) c.adam.weight_decay = ParseNumber("weight_decay", *v);
  if (const auto* v = get("layerwise_lr_decay")) c.layerwise_lr_decay = ParseNumber("layerwise_lr_decay", *v);
  if (const auto* v = get("dropout")) c.dropout = ParseNumber("dropout", *v);
  if (const auto* v = get("attention_dropout")) c.attention_dropout = ParseNumber("attention_dropout", *v);
  if (const auto* v = get("batch_size")) c.batch_size = ToInt("batch_size", *v);
  if (const auto* v = get("max_seq_length")) c.max_seq_length = ToInt("max_seq_length", *v);
  if (const auto* v = get("document_stride")) c.document_stride = ToInt("document_stride", *v);
  if (const auto* v = get("epochs")) c.epochs = ToInt("epochs", *v);
  if (const auto* v = get("warmup_fraction")) c.warmup_fraction = ParseNumber("warmup_fraction", *v);
  if (const auto* v = get("n_best")) c.decode.n_best = ToInt("n_best", *v);
  if (const auto* v = get("max_answer_tokens")) c.decode.max_answer_tokens = ToInt("max_answer_tokens", *v);
  if (const auto* v = get("top_k")) c.decode.top_k = ToInt("top_k", *v);
  c.Validate();
  return c;
}

nlohmann::json ToJson(const PretrainConfig& c) {
  const EncoderConfig& e = c.encoder;
  return {{"num_layers", e.num_layers},
          {"hidden_size", e.hidden},
          {"ffn_inner_hidden_size", e.ffn_inner},
          {"attention_heads", e.heads},
          {"attention_head_size", e.head_size},
          {"embedding_size", e.embedding_size},
          {"vocab_size", e.vocab_size},
          {"max_position_embeddings", e.max_positions},
          {"generator_size", c.joint.generator_size_ratio},
          {"lambda_disc", c.joint.lambda_disc},
          {"mask_percent", c.mask_rate * 100.0},
          {"lr_decay", "linear"},
          {"warmup_steps", c.warmup_steps},
          {"learning_rate", c.learning_rate},
          {"adam_eps", c.adam.epsilon},
          {"adam_beta1", c.adam.beta1},
          {"adam_beta2", c.adam.beta2},
          {"attention_dropout", e.attention_dropout},
          {"dropout", e.dropout},
          {"weight_decay", c.adam.weight_decay},
          {"batch_size", c.batch_size},
          {"max_seq_length", c.max_seq_length},
          {"train_steps", c.train_steps},
          {"seed", c.seed},
          {"log_every", c.log_every}};
}

nlohmann::json ToJson(const FinetuneConfig& c) {
  return {{"task", TaskName(c.task)},
          {"learning_rate", c.learning_rate},
          {"adam_eps", c.adam.epsilon},
          {"adam_beta1", c.adam.beta1},
          {"adam_beta2", c.adam.beta2},
          {"layerwise_lr_decay", c.layerwise_lr_decay},
          {"lr_decay", "linear"},
          {"attention_dropout", c.attention_dropout},
          {"dropout", c.dropout},
          {"weight_decay", c.adam.weight_decay},
          {"batch_size", c.batch_size},
          {"max_seq_length", c.max_seq_length},
          {"document_stride", c.document_stride},
          {"epochs", c.epochs},
          {"warmup_fraction", c.warmup_fraction},
          {"n_best", c.decode.n_best},
          {"max_answer_tokens", c.decode.max_answer_tokens},
          {"top_k", c.decode.top_k}};
}

std::string ConfigHash(const nlohmann::json& resolved) {
  uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : resolved.dump()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

}  // namespace biortd
