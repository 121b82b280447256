// SPDX-License-Identifier: Apache-2.0

#include "biortd/encoder.h"

#include <cmath>

namespace biortd {

EncoderConfig EncoderConfig::Desk() {
  EncoderConfig c;
  c.num_layers = 4;
  c.hidden = 128;
  c.ffn_inner = 512;
  c.heads = 4;
  c.head_size = 32;
  c.embedding_size = 128;
  c.vocab_size = 200;
  c.max_positions = 128;
  return c;
}

void EncoderConfig::Validate() const {
  if (num_layers < 1 || hidden < 1 || ffn_inner < 1 || heads < 1 ||
      head_size < 1 || embedding_size < 1 || vocab_size < 1 ||
      max_positions < 1) {
    throw ConfigError("encoder dimensions must be positive");
  }
  if (heads * head_size != hidden) {
    throw ConfigError("heads * head_size (" + std::to_string(heads) + " * " +
                      std::to_string(head_size) + ") != hidden (" +
                      std::to_string(hidden) + ")");
  }
  if (dropout < 0.0 || dropout >= 1.0 || attention_dropout < 0.0 ||
      attention_dropout >= 1.0) {
    throw ConfigError("dropout rates must lie in [0, 1)");
  }
}

TokenBatch TokenBatch::FromEncodings(std::span<const Encoding* const> rows) {
  TokenBatch b;
  b.batch = static_cast<int64_t>(rows.size());
  b.length = rows.empty() ? 0 : static_cast<int64_t>(rows.front()->size());
  for (const Encoding* e : rows) {
    if (static_cast<int64_t>(e->size()) != b.length) {
      throw std::invalid_argument("batch rows must share one length");
    }
    b.ids.insert(b.ids.end(), e->ids.begin(), e->ids.end());
    b.attention_mask.insert(b.attention_mask.end(), e->attention_mask.begin(),
                            e->attention_mask.end());
    b.segment_ids.insert(b.segment_ids.end(), e->segment_ids.begin(),
                         e->segment_ids.end());
  }
  return b;
}

TokenBatch TokenBatch::FromEncodings(std::span<const Encoding> rows) {
  std::vector<const Encoding*> ptrs;
  ptrs.reserve(rows.size());
  for (const auto& r : rows) ptrs.push_back(&r);
  return FromEncodings(std::span<const Encoding* const>(ptrs));
}

template <typename T>
ad::Tensor<T> InitWeight(ad::Shape shape, Rng& rng) {
  auto t = ad::Tensor<T>::Zeros(std::move(shape));
  for (T& v : t.data()) v = static_cast<T>(rng.TruncatedNormal(kInitStddev));
  return t;
}

template <typename T>
Encoder<T>::Encoder(const EncoderConfig& config, std::string prefix,
                    ParamStore<T>& store, Rng& init_rng,
                    const Encoder* share_embeddings_from)
    : config_(config), prefix_(std::move(prefix)) {
  config_.Validate();
  const int64_t emb = config_.embedding_size;
  const int64_t hidden = config_.hidden;
  const int64_t ffn = config_.ffn_inner;
  using Tensor = ad::Tensor<T>;
  auto zeros = [](int64_t n) { return Tensor::Zeros({n}); };
  auto ones = [](int64_t n) { return Tensor::Full({n}, T(1)); };

  if (share_embeddings_from != nullptr) {
    const Encoder& other = *share_embeddings_from;
    if (other.config_.vocab_size != config_.vocab_size ||
        other.config_.embedding_size != config_.embedding_size ||
        other.config_.max_positions != config_.max_positions) {
      throw ConfigError("shared embeddings need equal vocab, embedding and "
                        "position sizes");
    }
    token_ = other.token_;
    position_ = other.position_;
    segment_ = other.segment_;
    emb_ln_g_ = other.emb_ln_g_;
    emb_ln_b_ = other.emb_ln_b_;
  } else {
    token_ = store.Add("embeddings.token",
                       InitWeight<T>({config_.vocab_size, emb}, init_rng),
                       true, 0);
    position_ = store.Add("embeddings.position",
                          InitWeight<T>({config_.max_positions, emb}, init_rng),
                          true, 0);
    segment_ = store.Add("embeddings.segment", InitWeight<T>({2, emb}, init_rng),
                         true, 0);
    emb_ln_g_ = store.Add("embeddings.ln.gain", ones(emb), false, 0);
    emb_ln_b_ = store.Add("embeddings.ln.bias", zeros(emb), false, 0);
  }
  if (emb != hidden) {
    project_w_ = store.Add(prefix_ + ".embed_project.weight",
                           InitWeight<T>({emb, hidden}, init_rng), true, 0);
    project_b_ = store.Add(prefix_ + ".embed_project.bias", zeros(hidden),
                           false, 0);
  }
  layers_.resize(static_cast<size_t>(config_.num_layers));
  for (int i = 0; i < config_.num_layers; ++i) {
    Layer& l = layers_[static_cast<size_t>(i)];
    const std::string p = prefix_ + ".layer" + std::to_string(i) + ".";
    const int depth = i + 1;
    auto weight = [&](const std::string& name, int64_t rows, int64_t cols) {
      return store.Add(p + name, InitWeight<T>({rows, cols}, init_rng), true,
                       depth);
    };
    auto vec = [&](const std::string& name, Tensor t) {
      return store.Add(p + name, std::move(t), false, depth);
    };
    l.q_w = weight("attn.query.weight", hidden, hidden);
    l.q_b = vec("attn.query.bias", zeros(hidden));
    l.k_w = weight("attn.key.weight", hidden, hidden);
    l.k_b = vec("attn.key.bias", zeros(hidden));
    l.v_w = weight("attn.value.weight", hidden, hidden);
    l.v_b = vec("attn.value.bias", zeros(hidden));
    l.o_w = weight("attn.output.weight", hidden, hidden);
    l.o_b = vec("attn.output.bias", zeros(hidden));
    l.attn_ln_g = vec("attn.ln.gain", ones(hidden));
    l.attn_ln_b = vec("attn.ln.bias", zeros(hidden));
    l.ffn_in_w = weight("ffn.in.weight", hidden, ffn);
    l.ffn_in_b = vec("ffn.in.bias", zeros(ffn));
    l.ffn_out_w = weight("ffn.out.weight", ffn, hidden);
    l.ffn_out_b = vec("ffn.out.bias", zeros(hidden));
    l.ffn_ln_g = vec("ffn.ln.gain", ones(hidden));
    l.ffn_ln_b = vec("ffn.ln.bias", zeros(hidden));
  }
}

template <typename T>
ad::Tensor<T> Encoder<T>::Attention(const Layer& layer, const ad::Tensor<T>& x,
                                    const TokenBatch& batch, bool train,
                                    Rng* rng) const {
  const int64_t b = batch.batch;
  const int64_t t = batch.length;
  const int64_t heads = config_.heads;
  const int64_t size = config_.head_size;
  auto split = [&](const ad::Tensor<T>& w, const ad::Tensor<T>& bias) {
    return ad::SwapMiddleAxes(
        ad::Reshape(ad::Linear(x, w, bias), {b, t, heads, size}));
  };
  auto q = split(layer.q_w, layer.q_b);
  auto k = split(layer.k_w, layer.k_b);
  auto v = split(layer.v_w, layer.v_b);
  auto scores = ad::Scale(ad::MatMul(q, k, /*transpose_b=*/true),
                          static_cast<T>(1.0 / std::sqrt(double(size))));
  auto probs = ad::Softmax(ad::AddKeyMask(scores, std::span<const int32_t>(
                                                      batch.attention_mask)));
  if (capture_attention_) attention_.push_back(probs);
  probs = ad::Dropout(probs, config_.attention_dropout, rng, train);
  auto context = ad::Reshape(ad::SwapMiddleAxes(ad::MatMul(probs, v)),
                             {b * t, heads * size});
  return ad::Linear(context, layer.o_w, layer.o_b);
}

template <typename T>
ad::Tensor<T> Encoder<T>::Forward(const TokenBatch& batch, bool train,
                                  Rng* rng) const {
  const int64_t b = batch.batch;
  const int64_t t = batch.length;
  if (t > config_.max_positions) {
    throw std::invalid_argument("sequence length " + std::to_string(t) +
                                " exceeds max_positions " +
                                std::to_string(config_.max_positions));
  }
  if (static_cast<int64_t>(batch.ids.size()) != b * t ||
      batch.attention_mask.size() != batch.ids.size() ||
      batch.segment_ids.size() != batch.ids.size()) {
    throw std::invalid_argument("token batch arrays disagree with its shape");
  }
  attention_.clear();
  std::vector<int32_t> positions(batch.ids.size());
  for (int64_t r = 0; r < b; ++r) {
    for (int64_t i = 0; i < t; ++i) positions[r * t + i] = static_cast<int32_t>(i);
  }
  const ad::Shape rows = {b * t};
  auto x = ad::Add(ad::Add(ad::Embedding(token_, std::span<const int32_t>(batch.ids), rows),
                           ad::Embedding(position_, std::span<const int32_t>(positions), rows)),
                   ad::Embedding(segment_, std::span<const int32_t>(batch.segment_ids), rows));
  x = ad::LayerNorm(x, emb_ln_g_, emb_ln_b_, kLayerNormEpsilon);
  x = ad::Dropout(x, config_.dropout, rng, train);
  if (project_w_.defined()) x = ad::Linear(x, project_w_, project_b_);

  for (const Layer& layer : layers_) {
    auto attn = ad::Dropout(Attention(layer, x, batch, train, rng),
                            config_.dropout, rng, train);
    x = ad::LayerNorm(ad::Add(x, attn), layer.attn_ln_g, layer.attn_ln_b,
                      kLayerNormEpsilon);
    auto ffn = ad::Linear(
        ad::Gelu(ad::Linear(x, layer.ffn_in_w, layer.ffn_in_b)),
        layer.ffn_out_w, layer.ffn_out_b);
    ffn = ad::Dropout(ffn, config_.dropout, rng, train);
    x = ad::LayerNorm(ad::Add(x, ffn), layer.ffn_ln_g, layer.ffn_ln_b,
                      kLayerNormEpsilon);
  }
  return ad::Reshape(x, {b, t, static_cast<int64_t>(config_.hidden)});
}

template ad::Tensor<float> InitWeight<float>(ad::Shape, Rng&);
template ad::Tensor<double> InitWeight<double>(ad::Shape, Rng&);
template class Encoder<float>;
template class Encoder<double>;

}  // namespace biortd
