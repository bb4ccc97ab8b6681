// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pfd/layers.hpp"

namespace pfd {

struct BehaviorEvent {
  std::int64_t item_id = 0;
  std::int64_t category_id = 0;
  std::int64_t recency_bucket = 0;
  std::int64_t dwell_bucket = 0;

  friend bool operator==(const BehaviorEvent&, const BehaviorEvent&) = default;
};

/// Events at positions >= valid_len are padding.
struct BehaviorSequence {
  std::vector<BehaviorEvent> events;
  std::size_t valid_len = 0;

  friend bool operator==(const BehaviorSequence&, const BehaviorSequence&) = default;
};

struct AttentionConfig {
  std::size_t num_heads = 2;
  std::size_t head_dim = 8;
  std::size_t model_dim = 16;
  std::size_t layers = 1;
  std::size_t max_len = 10;
  double leaky_slope = kDefaultLeakySlope;

  std::size_t projection_dim() const { return num_heads * head_dim; }
  std::size_t ffn_dim() const { return 2 * model_dim; }
  void validate() const;
};

/// One self-attention layer over a batch of sequences stacked row-wise:
/// multi-head scaled dot-product attention, output projection, residual and
/// layer norm, then a position-wise feed-forward sublayer with residual and
/// layer norm. No positional encodings. Rows whose mask entry is 0 are
/// padding: they are never attended to and their outputs are zero.
class SelfAttentionBlock {
 public:
  SelfAttentionBlock(const std::string& name, const AttentionConfig& cfg);

  void init(Rng& rng);

  /// x: [rows x model_dim]; sequence s owns rows [offsets[s], offsets[s+1]).
  Tensor forward(const Tensor& x, std::span<const std::size_t> offsets,
                 std::span<const std::uint8_t> mask);
  Tensor backward(const Tensor& grad_out);

  std::vector<Param*> params();
  const AttentionConfig& config() const { return cfg_; }

  /// Softmax weights of the last forward: [sequence][head] -> len x len, row-major.
  const std::vector<std::vector<std::vector<double>>>& last_attention() const { return attn_; }
  /// Concatenated head outputs of the last forward, before the output projection.
  const Tensor& last_heads() const { return heads_; }

 private:
  AttentionConfig cfg_;
  DenseLayer query_, key_, value_, out_;
  LayerNorm norm1_;
  DenseLayer ffn_in_;
  LeakyRelu ffn_act_;
  DenseLayer ffn_out_;
  LayerNorm norm2_;

  // forward cache
  std::vector<std::size_t> offsets_;
  std::vector<std::uint8_t> mask_;
  Tensor q_, k_, v_, heads_;
  std::vector<std::vector<std::vector<double>>> attn_;
  bool cached_ = false;
};

/// Embeds each behavior event (item, category, recency, dwell embeddings
/// concatenated), runs the self-attention block over valid events and mean
/// pools over them. Sequences without valid events map to a learned
/// empty-history vector.
class BehaviorEncoder {
 public:
  BehaviorEncoder(const std::string& name, const AttentionConfig& cfg,
                  std::shared_ptr<EmbeddingTable> item_table,
                  std::shared_ptr<EmbeddingTable> category_table,
                  std::shared_ptr<EmbeddingTable> recency_table,
                  std::shared_ptr<EmbeddingTable> dwell_table);

  void init(Rng& rng);

  /// [batch x model_dim] pooled encodings.
  Tensor forward(std::span<const BehaviorSequence* const> batch);
  void backward(const Tensor& grad_pooled);

  /// Single-sequence convenience wrapper around forward.
  std::vector<double> encode(const BehaviorSequence& seq);

  /// Per-position outputs of the last forward, valid rows only.
  const Tensor& last_positions() const { return positions_; }

  std::size_t dim() const { return cfg_.model_dim; }
  const std::string& name() const { return name_; }
  /// Parameters owned by the encoder (block + empty-history vector); the
  /// embedding tables are reported separately via tables().
  std::vector<Param*> params();
  std::vector<std::shared_ptr<EmbeddingTable>> tables() const;

  Param empty_history;

 private:
  std::string name_;
  AttentionConfig cfg_;
  std::shared_ptr<EmbeddingTable> item_, category_, recency_, dwell_;
  SelfAttentionBlock block_;

  struct Cache {
    std::vector<std::int64_t> item_ids, category_ids, recency_ids, dwell_ids;
    std::vector<std::size_t> offsets;       // over stacked valid rows
    std::vector<std::size_t> seq_of_segment;
    std::vector<std::uint8_t> is_empty;     // per batch row
  };
  std::optional<Cache> cache_;
  Tensor positions_;
};

}  // namespace pfd
