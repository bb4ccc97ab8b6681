// SPDX-License-Identifier: Apache-2.0
#include "pfd/attention.hpp"

#include <cmath>
#include <limits>

#include "pfd/errors.hpp"

namespace pfd {

namespace {
constexpr double kMaskValue = -1e30;
}

void AttentionConfig::validate() const {
  if (num_heads == 0 || head_dim == 0 || model_dim == 0) {
    throw ConfigError("attention: heads, head_dim and model_dim must be positive");
  }
  if (layers != 1) throw ConfigError("attention: exactly one layer is supported");
  if (max_len == 0) throw ConfigError("attention: max_len must be positive");
}

SelfAttentionBlock::SelfAttentionBlock(const std::string& name, const AttentionConfig& cfg)
    : cfg_(cfg),
      query_(name + ".query", cfg.model_dim, cfg.projection_dim()),
      key_(name + ".key", cfg.model_dim, cfg.projection_dim()),
      value_(name + ".value", cfg.model_dim, cfg.projection_dim()),
      out_(name + ".out", cfg.projection_dim(), cfg.model_dim),
      norm1_(name + ".norm1", cfg.model_dim),
      ffn_in_(name + ".ffn_in", cfg.model_dim, cfg.ffn_dim()),
      ffn_act_(cfg.leaky_slope),
      ffn_out_(name + ".ffn_out", cfg.ffn_dim(), cfg.model_dim),
      norm2_(name + ".norm2", cfg.model_dim) {
  cfg_.validate();
}

void SelfAttentionBlock::init(Rng& rng) {
  query_.init(rng);
  key_.init(rng);
  value_.init(rng);
  out_.init(rng);
  ffn_in_.init(rng);
  ffn_out_.init(rng);
}

std::vector<Param*> SelfAttentionBlock::params() {
  std::vector<Param*> ps;
  for (DenseLayer* d : {&query_, &key_, &value_, &out_}) {
    for (Param* p : d->params()) ps.push_back(p);
  }
  for (Param* p : norm1_.params()) ps.push_back(p);
  for (Param* p : ffn_in_.params()) ps.push_back(p);
  for (Param* p : ffn_out_.params()) ps.push_back(p);
  for (Param* p : norm2_.params()) ps.push_back(p);
  return ps;
}

Tensor SelfAttentionBlock::forward(const Tensor& x, std::span<const std::size_t> offsets,
                                   std::span<const std::uint8_t> mask) {
  const std::size_t rows = x.rows();
  if (x.cols() != cfg_.model_dim) throw ConfigError("attention: input width mismatch");
  if (mask.size() != rows || offsets.empty() || offsets.back() != rows) {
    throw ConfigError("attention: offsets/mask do not cover the input");
  }
  const std::size_t num_seq = offsets.size() - 1;
  for (std::size_t s = 0; s < num_seq; ++s) {
    std::size_t valid = 0;
    for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) valid += mask[r] ? 1 : 0;
    if (valid == 0) throw ContractError("attention: sequence without valid events");
    if (offsets[s + 1] - offsets[s] > cfg_.max_len) {
      throw ConfigError("attention: sequence longer than max_len");
    }
  }
  offsets_.assign(offsets.begin(), offsets.end());
  mask_.assign(mask.begin(), mask.end());

  q_ = query_.forward(x);
  k_ = key_.forward(x);
  v_ = value_.forward(x);
  heads_ = Tensor::matrix(rows, cfg_.projection_dim());
  attn_.assign(num_seq, std::vector<std::vector<double>>(cfg_.num_heads));

  const std::size_t hd = cfg_.head_dim;
  const std::size_t pw = cfg_.projection_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<double> scores;
  for (std::size_t s = 0; s < num_seq; ++s) {
    const std::size_t b = offsets_[s];
    const std::size_t len = offsets_[s + 1] - b;
    for (std::size_t h = 0; h < cfg_.num_heads; ++h) {
      auto& a = attn_[s][h];
      a.assign(len * len, 0.0);
      const std::size_t ho = h * hd;
      for (std::size_t i = 0; i < len; ++i) {
        const double* qi = q_.data() + (b + i) * pw + ho;
        double mx = -std::numeric_limits<double>::infinity();
        scores.assign(len, 0.0);
        for (std::size_t j = 0; j < len; ++j) {
          const double* kj = k_.data() + (b + j) * pw + ho;
          double dot = 0.0;
          for (std::size_t c = 0; c < hd; ++c) dot += qi[c] * kj[c];
          scores[j] = mask_[b + j] ? dot * scale : kMaskValue;
          mx = std::max(mx, scores[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < len; ++j) {
          scores[j] = std::exp(scores[j] - mx);
          z += scores[j];
        }
        double* oi = heads_.data() + (b + i) * pw + ho;
        for (std::size_t j = 0; j < len; ++j) {
          const double w = scores[j] / z;
          a[i * len + j] = w;
          const double* vj = v_.data() + (b + j) * pw + ho;
          for (std::size_t c = 0; c < hd; ++c) oi[c] += w * vj[c];
        }
      }
    }
  }

  Tensor z = out_.forward(heads_);
  Tensor res1 = x;
  as_matrix(res1) += as_matrix(z);
  Tensor h1 = norm1_.forward(res1);
  Tensor f = ffn_out_.forward(ffn_act_.forward(ffn_in_.forward(h1)));
  as_matrix(f) += as_matrix(h1);
  Tensor y = norm2_.forward(f);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!mask_[r]) std::fill(y.row(r).begin(), y.row(r).end(), 0.0);
  }
  cached_ = true;
  return y;
}

Tensor SelfAttentionBlock::backward(const Tensor& grad_out) {
  if (!cached_) throw ContractError("attention backward without forward cache");
  cached_ = false;
  const std::size_t rows = grad_out.rows();
  Tensor g = grad_out;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!mask_[r]) std::fill(g.row(r).begin(), g.row(r).end(), 0.0);
  }
  Tensor g_res2 = norm2_.backward(g);
  Tensor g_h1 = ffn_in_.backward(ffn_act_.backward(ffn_out_.backward(g_res2)));
  as_matrix(g_h1) += as_matrix(g_res2);
  Tensor g_res1 = norm1_.backward(g_h1);
  Tensor g_heads = out_.backward(g_res1);

  const std::size_t hd = cfg_.head_dim;
  const std::size_t pw = cfg_.projection_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  Tensor gq = Tensor::matrix(rows, pw);
  Tensor gk = Tensor::matrix(rows, pw);
  Tensor gv = Tensor::matrix(rows, pw);
  std::vector<double> ga;
  const std::size_t num_seq = offsets_.size() - 1;
  for (std::size_t s = 0; s < num_seq; ++s) {
    const std::size_t b = offsets_[s];
    const std::size_t len = offsets_[s + 1] - b;
    for (std::size_t h = 0; h < cfg_.num_heads; ++h) {
      const auto& a = attn_[s][h];
      const std::size_t ho = h * hd;
      for (std::size_t i = 0; i < len; ++i) {
        const double* goi = g_heads.data() + (b + i) * pw + ho;
        ga.assign(len, 0.0);
        double weighted = 0.0;
        for (std::size_t j = 0; j < len; ++j) {
          const double w = a[i * len + j];
          const double* vj = v_.data() + (b + j) * pw + ho;
          double* gvj = gv.data() + (b + j) * pw + ho;
          double dot = 0.0;
          for (std::size_t c = 0; c < hd; ++c) {
            gvj[c] += w * goi[c];
            dot += goi[c] * vj[c];
          }
          ga[j] = dot;
          weighted += w * dot;
        }
        const double* qi = q_.data() + (b + i) * pw + ho;
        double* gqi = gq.data() + (b + i) * pw + ho;
        for (std::size_t j = 0; j < len; ++j) {
          const double gs = a[i * len + j] * (ga[j] - weighted) * scale;
          if (gs == 0.0) continue;
          const double* kj = k_.data() + (b + j) * pw + ho;
          double* gkj = gk.data() + (b + j) * pw + ho;
          for (std::size_t c = 0; c < hd; ++c) {
            gqi[c] += gs * kj[c];
            gkj[c] += gs * qi[c];
          }
        }
      }
    }
  }
  Tensor gx = query_.backward(gq);
  as_matrix(gx) += as_matrix(key_.backward(gk));
  as_matrix(gx) += as_matrix(value_.backward(gv));
  as_matrix(gx) += as_matrix(g_res1);
  return gx;
}

// ---------------------------------------------------------------------------

BehaviorEncoder::BehaviorEncoder(const std::string& name, const AttentionConfig& cfg,
                                 std::shared_ptr<EmbeddingTable> item_table,
                                 std::shared_ptr<EmbeddingTable> category_table,
                                 std::shared_ptr<EmbeddingTable> recency_table,
                                 std::shared_ptr<EmbeddingTable> dwell_table)
    : empty_history(name + ".empty_history", {cfg.model_dim}),
      name_(name),
      cfg_(cfg),
      item_(std::move(item_table)),
      category_(std::move(category_table)),
      recency_(std::move(recency_table)),
      dwell_(std::move(dwell_table)),
      block_(name + ".attention", cfg) {
  const std::size_t width = item_->dim() + category_->dim() + recency_->dim() + dwell_->dim();
  if (width != cfg_.model_dim) {
    throw ConfigError("behavior encoder: event embedding width " + std::to_string(width) +
                      " != model_dim " + std::to_string(cfg_.model_dim));
  }
}

void BehaviorEncoder::init(Rng& rng) {
  block_.init(rng);
  uniform_fill(empty_history.value, 0.01, rng);
}

std::vector<Param*> BehaviorEncoder::params() {
  std::vector<Param*> ps = block_.params();
  ps.push_back(&empty_history);
  return ps;
}

std::vector<std::shared_ptr<EmbeddingTable>> BehaviorEncoder::tables() const {
  return {item_, category_, recency_, dwell_};
}

Tensor BehaviorEncoder::forward(std::span<const BehaviorSequence* const> batch) {
  Cache c;
  c.offsets.push_back(0);
  c.is_empty.assign(batch.size(), 0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const BehaviorSequence& seq = *batch[i];
    if (seq.valid_len > seq.events.size()) throw ContractError("behavior: valid_len beyond events");
    if (seq.valid_len == 0) {
      c.is_empty[i] = 1;
      continue;
    }
    if (seq.valid_len > cfg_.max_len) throw ConfigError("behavior: sequence longer than max_len");
    for (std::size_t e = 0; e < seq.valid_len; ++e) {
      c.item_ids.push_back(seq.events[e].item_id);
      c.category_ids.push_back(seq.events[e].category_id);
      c.recency_ids.push_back(seq.events[e].recency_bucket);
      c.dwell_ids.push_back(seq.events[e].dwell_bucket);
    }
    c.offsets.push_back(c.item_ids.size());
    c.seq_of_segment.push_back(i);
  }

  const std::size_t n = cfg_.model_dim;
  Tensor pooled = Tensor::matrix(batch.size(), n);
  positions_ = Tensor::matrix(0, n);
  if (!c.item_ids.empty()) {
    const Tensor parts[4] = {item_->lookup(c.item_ids), category_->lookup(c.category_ids),
                             recency_->lookup(c.recency_ids), dwell_->lookup(c.dwell_ids)};
    const Tensor* ptrs[4] = {&parts[0], &parts[1], &parts[2], &parts[3]};
    Tensor x = concat_cols(ptrs);
    // Only valid events are stacked, so every row is unmasked.
    std::vector<std::uint8_t> mask(x.rows(), 1);
    positions_ = block_.forward(x, c.offsets, mask);
    for (std::size_t s = 0; s < c.seq_of_segment.size(); ++s) {
      double* out = pooled.data() + c.seq_of_segment[s] * n;
      const std::size_t b = c.offsets[s];
      const std::size_t e = c.offsets[s + 1];
      for (std::size_t r = b; r < e; ++r) {
        for (std::size_t k = 0; k < n; ++k) out[k] += positions_(r, k);
      }
      const double inv = 1.0 / static_cast<double>(e - b);
      for (std::size_t k = 0; k < n; ++k) out[k] *= inv;
    }
  }
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (c.is_empty[i]) std::copy(empty_history.value.data(), empty_history.value.data() + n, pooled.row(i).begin());
  }
  cache_ = std::move(c);
  return pooled;
}

void BehaviorEncoder::backward(const Tensor& grad_pooled) {
  if (!cache_) throw ContractError("behavior encoder backward without forward cache");
  Cache c = std::move(*cache_);
  cache_.reset();
  const std::size_t n = cfg_.model_dim;
  for (std::size_t i = 0; i < c.is_empty.size(); ++i) {
    if (!c.is_empty[i]) continue;
    for (std::size_t k = 0; k < n; ++k) empty_history.grad[k] += grad_pooled(i, k);
  }
  if (c.item_ids.empty()) return;

  Tensor g_pos = Tensor::matrix(c.item_ids.size(), n);
  for (std::size_t s = 0; s < c.seq_of_segment.size(); ++s) {
    const std::size_t b = c.offsets[s];
    const std::size_t e = c.offsets[s + 1];
    const double inv = 1.0 / static_cast<double>(e - b);
    const double* g = grad_pooled.data() + c.seq_of_segment[s] * n;
    for (std::size_t r = b; r < e; ++r) {
      for (std::size_t k = 0; k < n; ++k) g_pos(r, k) = g[k] * inv;
    }
  }
  Tensor gx = block_.backward(g_pos);
  std::size_t col = 0;
  item_->accumulate_grad(c.item_ids, gx, col);
  col += item_->dim();
  category_->accumulate_grad(c.category_ids, gx, col);
  col += category_->dim();
  recency_->accumulate_grad(c.recency_ids, gx, col);
  col += recency_->dim();
  dwell_->accumulate_grad(c.dwell_ids, gx, col);
}

std::vector<double> BehaviorEncoder::encode(const BehaviorSequence& seq) {
  const BehaviorSequence* one[1] = {&seq};
  Tensor out = forward(one);
  cache_.reset();
  return {out.values().begin(), out.values().end()};
}

}  // namespace pfd
