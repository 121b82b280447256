// SPDX-License-Identifier: Apache-2.0

#ifndef BIORTD_ENCODER_H_
#define BIORTD_ENCODER_H_

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "biortd/autodiff.h"
#include "biortd/params.h"
#include "biortd/rng.h"
#include "biortd/tokenizer.h"

namespace biortd {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Architecture constants. Defaults are the base-size pretraining setup.
struct EncoderConfig {
  int num_layers = 12;
  int hidden = 768;
  int ffn_inner = 3072;
  int heads = 12;
  int head_size = 64;
  int embedding_size = 768;
  int vocab_size = 31090;
  int max_positions = 512;
  double dropout = 0.1;
  double attention_dropout = 0.1;

  // 4 layers, hidden 128, FFN 512, 4 heads of 32, 200-token vocabulary.
  static EncoderConfig Desk();

  void Validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

inline constexpr double kInitStddev = 0.02;
inline constexpr double kLayerNormEpsilon = 1e-12;

// Row-major [batch, length] token inputs.
struct TokenBatch {
  int64_t batch = 0;
  int64_t length = 0;
  std::vector<int32_t> ids;
  std::vector<int32_t> attention_mask;
  std::vector<int32_t> segment_ids;

  static TokenBatch FromEncodings(std::span<const Encoding> rows);
  static TokenBatch FromEncodings(std::span<const Encoding* const> rows);
};

// Truncated-normal weight with the standard init scale.
template <typename T>
ad::Tensor<T> InitWeight(ad::Shape shape, Rng& rng);

// BERT-style post-layer-norm transformer encoder. Parameters live in a
// ParamStore under "embeddings.*" (shareable) and "<prefix>.*".
template <typename T>
class Encoder {
 public:
  // Creates and registers parameters. With `share_embeddings_from`, the
  // token/position/segment embeddings and their layer norm are the very
  // tensors of that encoder and are not registered a second time.
  Encoder(const EncoderConfig& config, std::string prefix,
          ParamStore<T>& store, Rng& init_rng,
          const Encoder* share_embeddings_from = nullptr);

  // Hidden states [B, T, hidden]. `rng` drives dropout when train is set.
  ad::Tensor<T> Forward(const TokenBatch& batch, bool train, Rng* rng) const;

  const EncoderConfig& config() const { return config_; }
  const std::string& prefix() const { return prefix_; }
  ad::Tensor<T> token_embeddings() const { return token_; }

  // When enabled, Forward keeps each layer's attention probabilities.
  void set_capture_attention(bool on) { capture_attention_ = on; }
  const std::vector<ad::Tensor<T>>& captured_attention() const {
    return attention_;
  }

 private:
  struct Layer {
    ad::Tensor<T> q_w, q_b, k_w, k_b, v_w, v_b, o_w, o_b;
    ad::Tensor<T> attn_ln_g, attn_ln_b;
    ad::Tensor<T> ffn_in_w, ffn_in_b, ffn_out_w, ffn_out_b;
    ad::Tensor<T> ffn_ln_g, ffn_ln_b;
  };

  ad::Tensor<T> Attention(const Layer& layer, const ad::Tensor<T>& x,
                          const TokenBatch& batch, bool train, Rng* rng) const;

  EncoderConfig config_;
  std::string prefix_;
  ad::Tensor<T> token_, position_, segment_, emb_ln_g_, emb_ln_b_;
  ad::Tensor<T> project_w_, project_b_;  // only when embedding_size != hidden
  std::vector<Layer> layers_;
  bool capture_attention_ = false;
  mutable std::vector<ad::Tensor<T>> attention_;
};

}  // namespace biortd

#endif  // BIORTD_ENCODER_H_
