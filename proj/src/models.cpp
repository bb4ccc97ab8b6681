// SPDX-License-Identifier: Apache-2.0
#include "pfd/models.hpp"

#include <algorithm>
#include <set>

#include "pfd/errors.hpp"

namespace pfd {

// ---------------------------------------------------------------------------
// enums

std::string to_string(Method m) {
  switch (m) {
    case Method::Baseline: return "baseline";
    case Method::Lupi: return "lupi";
    case Method::Md: return "md";
    case Method::Pfd: return "pfd";
    case Method::PfdMd: return "pfd_md";
    case Method::Mtl: return "mtl";
  }
  return "?";
}

std::string to_string(Task t) { return t == Task::Ctr ? "ctr" : "cvr"; }

std::string to_string(SharingMode s) {
  switch (s) {
    case SharingMode::Independent: return "ind";
    case SharingMode::ShareAll: return "share";
    case SharingMode::ShareExceptUserId: return "share_star";
  }
  return "?";
}

std::string to_string(TeacherInputs t) {
  switch (t) {
    case TeacherInputs::None: return "none";
    case TeacherInputs::RegularOnly: return "regular_only";
    case TeacherInputs::PrivilegedOnly: return "privileged_only";
    case TeacherInputs::RegularPlusPrivileged: return "regular_plus_privileged";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  if (s == "baseline") return Method::Baseline;
  if (s == "lupi") return Method::Lupi;
  if (s == "md") return Method::Md;
  if (s == "pfd") return Method::Pfd;
  if (s == "pfd_md" || s == "pfd+md") return Method::PfdMd;
  if (s == "mtl") return Method::Mtl;
  throw ConfigError("unknown method '" + s + "'");
}

Task parse_task(const std::string& s) {
  if (s == "ctr") return Task::Ctr;
  if (s == "cvr") return Task::Cvr;
  throw ConfigError("unknown task '" + s + "'");
}

SharingMode parse_sharing(const std::string& s) {
  if (s == "ind" || s == "independent") return SharingMode::Independent;
  if (s == "share" || s == "share_all") return SharingMode::ShareAll;
  if (s == "share_star" || s == "share*" || s == "share_except_user_id") return SharingMode::ShareExceptUserId;
  throw ConfigError("unknown sharing mode '" + s + "'");
}

bool has_teacher(Method m) { return m != Method::Baseline && m != Method::Mtl; }

TeacherInputs teacher_inputs_of(Method m) {
  switch (m) {
    case Method::Lupi: return TeacherInputs::PrivilegedOnly;
    case Method::Md: return TeacherInputs::RegularOnly;
    case Method::Pfd:
    case Method::PfdMd: return TeacherInputs::RegularPlusPrivileged;
    default: return TeacherInputs::None;
  }
}

PrivilegedGroup privileged_group_of(Task t) {
  return t == Task::Ctr ? PrivilegedGroup::Interacted : PrivilegedGroup::PostEvent;
}

// ---------------------------------------------------------------------------
// ModelConfig

AttentionConfig ModelConfig::attention() const {
  AttentionConfig a;
  a.num_heads = num_heads;
  a.head_dim = head_dim;
  a.model_dim = embed_dim + behavior_category_dim + 2 * behavior_bucket_dim;
  a.max_len = max_len;
  a.leaky_slope = leaky_slope;
  return a;
}

void ModelConfig::validate() const {
  if (method == Method::Mtl && task == Task::Ctr) {
    throw ConfigError("mtl is only defined for the cvr task");
  }
  if (embed_dim == 0 || behavior_category_dim == 0 || behavior_bucket_dim == 0) {
    throw ConfigError("embedding dims must be positive");
  }
  if (student_hidden.empty() || teacher_hidden.empty() || tower_out == 0) {
    throw ConfigError("network widths must be non-empty");
  }
  for (const auto* dims : {&student_hidden, &tower_hidden, &teacher_hidden}) {
    if (std::find(dims->begin(), dims->end(), std::size_t{0}) != dims->end()) {
      throw ConfigError("network widths must be positive");
    }
  }
  if (mtl_shared == 0 || mtl_head == 0) throw ConfigError("mtl widths must be positive");
  if (!(scale > 0.0)) throw ConfigError("scale must be positive");
  if (!(aux_weight >= 0.0)) throw ConfigError("aux-weight must be nonnegative");
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) throw ConfigError("leaky-slope must be in (0,1)");
  if (!(bn_momentum > 0.0 && bn_momentum < 1.0)) throw ConfigError("bn-momentum must be in (0,1)");
  if (!(bn_eps > 0.0)) throw ConfigError("bn-eps must be positive");
  attention().validate();
}

std::vector<std::string> ModelConfig::keys() {
  return {"method", "task", "sharing", "embed-dim", "behavior-category-dim", "behavior-bucket-dim",
          "heads", "head-dim", "max-len", "student-hidden", "tower-hidden", "tower-out", "scale",
          "teacher-hidden", "mtl-shared", "mtl-head", "aux-weight", "leaky-slope", "bn-momentum",
          "bn-eps", "student-seed", "teacher-seed"};
}

KeyValues ModelConfig::to_key_values() const {
  KeyValues kv;
  kv.set("method", to_string(method));
  kv.set("task", to_string(task));
  kv.set("sharing", to_string(sharing));
  kv.set("embed-dim", std::to_string(embed_dim));
  kv.set("behavior-category-dim", std::to_string(behavior_category_dim));
  kv.set("behavior-bucket-dim", std::to_string(behavior_bucket_dim));
  kv.set("heads", std::to_string(num_heads));
  kv.set("head-dim", std::to_string(head_dim));
  kv.set("max-len", std::to_string(max_len));
  kv.set("student-hidden", join_sizes(student_hidden));
  kv.set("tower-hidden", join_sizes(tower_hidden));
  kv.set("tower-out", std::to_string(tower_out));
  kv.set("scale", format_double(scale));
  kv.set("teacher-hidden", join_sizes(teacher_hidden));
  kv.set("mtl-shared", std::to_string(mtl_shared));
  kv.set("mtl-head", std::to_string(mtl_head));
  kv.set("aux-weight", format_double(aux_weight));
  kv.set("leaky-slope", format_double(leaky_slope));
  kv.set("bn-momentum", format_double(bn_momentum));
  kv.set("bn-eps", format_double(bn_eps));
  kv.set("student-seed", std::to_string(student_seed));
  kv.set("teacher-seed", std::to_string(teacher_seed));
  return kv;
}

ModelConfig ModelConfig::from_key_values(const KeyValues& kv) { return from_key_values(kv, ModelConfig{}); }

ModelConfig ModelConfig::from_key_values(const KeyValues& kv, ModelConfig c) {
  if (auto v = kv.get("method")) c.method = parse_method(*v);
  if (auto v = kv.get("task")) c.task = parse_task(*v);
  if (auto v = kv.get("sharing")) c.sharing = parse_sharing(*v);
  c.embed_dim = kv.get_uint("embed-dim", c.embed_dim);
  c.behavior_category_dim = kv.get_uint("behavior-category-dim", c.behavior_category_dim);
  c.behavior_bucket_dim = kv.get_uint("behavior-bucket-dim", c.behavior_bucket_dim);
  c.num_heads = kv.get_uint("heads", c.num_heads);
  c.head_dim = kv.get_uint("head-dim", c.head_dim);
  c.max_len = kv.get_uint("max-len", c.max_len);
  c.student_hidden = kv.get_sizes("student-hidden", c.student_hidden);
  c.tower_hidden = kv.get_sizes("tower-hidden", c.tower_hidden);
  c.tower_out = kv.get_uint("tower-out", c.tower_out);
  c.scale = kv.get_double("scale", c.scale);
  c.teacher_hidden = kv.get_sizes("teacher-hidden", c.teacher_hidden);
  c.mtl_shared = kv.get_uint("mtl-shared", c.mtl_shared);
  c.mtl_head = kv.get_uint("mtl-head", c.mtl_head);
  c.aux_weight = kv.get_double("aux-weight", c.aux_weight);
  c.leaky_slope = kv.get_double("leaky-slope", c.leaky_slope);
  c.bn_momentum = kv.get_double("bn-momentum", c.bn_momentum);
  c.bn_eps = kv.get_double("bn-eps", c.bn_eps);
  c.student_seed = kv.get_uint("student-seed", c.student_seed);
  c.teacher_seed = kv.get_uint("teacher-seed", c.teacher_seed);
  return c;
}

// ---------------------------------------------------------------------------
// inputs

std::size_t InputBlock::width() const {
  std::size_t w = 0;
  for (const auto& s : slots) w += s.width;
  return w;
}

bool InputBlock::reads(std::size_t feature) const {
  return std::any_of(slots.begin(), slots.end(), [&](const InputSlot& s) {
    return s.kind == InputSlot::Kind::Feature && s.feature == feature;
  });
}

namespace {

void append_unique(std::vector<Param*>& out, Param* p) {
  if (std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
}

}  // namespace

std::vector<Param*> Components::params() const {
  std::vector<Param*> out;
  for (const auto& [f, t] : tables) append_unique(out, &t->param());
  if (encoder) {
    for (Param* p : encoder->params()) append_unique(out, p);
    for (const auto& t : encoder->tables()) append_unique(out, &t->param());
  }
  return out;
}

StepContext::EmbedEntry& StepContext::embed_entry(EmbeddingTable& table) {
  for (auto& e : embeds_) {
    if (e.table == &table) return e;
  }
  throw ContractError("step context: gradient for a table that was never looked up");
}

StepContext::EncodeEntry& StepContext::encode_entry(BehaviorEncoder& encoder) {
  for (auto& e : encodes_) {
    if (e.encoder == &encoder) return e;
  }
  throw ContractError("step context: gradient for an encoder that never ran");
}

const Tensor& StepContext::embed(EmbeddingTable& table, std::size_t feature) {
  for (auto& e : embeds_) {
    if (e.table == &table) {
      if (e.feature != feature) throw ContractError("step context: table read for two features");
      return e.value;
    }
  }
  if (feature >= batch_.ids.size() || batch_.ids[feature].size() != batch_.size) {
    throw ContractError("feature " + table.param().name + " is absent from the batch");
  }
  EmbedEntry e{&table, feature, table.lookup(batch_.ids[feature]), {}, false};
  embeds_.push_back(std::move(e));
  return embeds_.back().value;
}

void StepContext::add_embed_grad(EmbeddingTable& table, const Tensor& grad, std::size_t col) {
  EmbedEntry& e = embed_entry(table);
  const std::size_t dim = table.dim();
  if (!e.has_grad) {
    e.grad = Tensor::matrix(batch_.size, dim);
    e.has_grad = true;
  }
  for (std::size_t r = 0; r < batch_.size; ++r) {
    for (std::size_t c = 0; c < dim; ++c) e.grad(r, c) += grad(r, col + c);
  }
}

const Tensor& StepContext::encode(BehaviorEncoder& encoder) {
  for (auto& e : encodes_) {
    if (e.encoder == &encoder) return e.value;
  }
  if (batch_.behavior.size() != batch_.size) throw ContractError("behavior is absent from the batch");
  EncodeEntry e{&encoder, encoder.forward(batch_.behavior), {}, false};
  encodes_.push_back(std::move(e));
  return encodes_.back().value;
}

void StepContext::add_encode_grad(BehaviorEncoder& encoder, const Tensor& grad, std::size_t col) {
  EncodeEntry& e = encode_entry(encoder);
  const std::size_t dim = encoder.dim();
  if (!e.has_grad) {
    e.grad = Tensor::matrix(batch_.size, dim);
    e.has_grad = true;
  }
  for (std::size_t r = 0; r < batch_.size; ++r) {
    for (std::size_t c = 0; c < dim; ++c) e.grad(r, c) += grad(r, col + c);
  }
}

void StepContext::backward() {
  for (auto& e : encodes_) {
    if (e.has_grad) e.encoder->backward(e.grad);
    e.has_grad = false;
  }
  for (auto& e : embeds_) {
    if (e.has_grad) e.table->accumulate_grad(batch_.ids[e.feature], e.grad);
    e.has_grad = false;
  }
}

Tensor assemble_inputs(StepContext& ctx, const Components& comps, const InputBlock& block) {
  std::vector<const Tensor*> parts;
  parts.reserve(block.slots.size());
  for (const auto& s : block.slots) {
    if (s.kind == InputSlot::Kind::Behavior) {
      parts.push_back(&ctx.encode(*comps.encoder));
    } else {
      parts.push_back(&ctx.embed(*comps.tables.at(s.feature), s.feature));
    }
  }
  return concat_cols(parts);
}

void route_input_grad(StepContext& ctx, const Components& comps, const InputBlock& block,
                      const Tensor& grad) {
  std::size_t col = 0;
  for (const auto& s : block.slots) {
    if (s.kind == InputSlot::Kind::Behavior) {
      ctx.add_encode_grad(*comps.encoder, grad, col);
    } else {
      ctx.add_embed_grad(*comps.tables.at(s.feature), grad, col);
    }
    col += s.width;
  }
}

// ---------------------------------------------------------------------------
// networks

Mlp::Mlp(const std::string& name, std::size_t in, std::vector<std::size_t> hidden, std::size_t out,
         double slope, double bn_momentum, double bn_eps)
    : name_(name), in_(in) {
  if (in == 0) throw ConfigError(name + ": zero input width");
  std::size_t prev = in;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    dense_.emplace_back(name + ".l" + std::to_string(i), prev, hidden[i]);
    norms_.emplace_back(name + ".bn" + std::to_string(i), hidden[i], bn_momentum, bn_eps);
    acts_.emplace_back(slope);
    prev = hidden[i];
  }
  if (out > 0) dense_.emplace_back(name + ".l" + std::to_string(hidden.size()), prev, out);
}

void Mlp::init(Rng& rng) {
  for (auto& d : dense_) d.init(rng);
}

std::size_t Mlp::out_dim() const { return dense_.back().out_dim(); }

Tensor Mlp::forward(const Tensor& x) {
  Tensor h = x;
  for (std::size_t i = 0; i < dense_.size(); ++i) {
    h = dense_[i].forward(h);
    if (i < norms_.size()) h = acts_[i].forward(norms_[i].forward(h));
  }
  return h;
}

Tensor Mlp::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (std::size_t i = dense_.size(); i-- > 0;) {
    if (i < norms_.size()) g = norms_[i].backward(acts_[i].backward(g));
    g = dense_[i].backward(g);
  }
  return g;
}

void Mlp::set_mode(NormMode m) {
  for (auto& n : norms_) n.set_mode(m);
}

std::vector<Param*> Mlp::params() {
  std::vector<Param*> out;
  for (std::size_t i = 0; i < dense_.size(); ++i) {
    out.push_back(&dense_[i].weight);
    out.push_back(&dense_[i].bias);
    if (i < norms_.size()) {
      out.push_back(&norms_[i].gamma);
      out.push_back(&norms_[i].beta);
    }
  }
  return out;
}

std::vector<NamedBuffer> Mlp::buffers() {
  std::vector<NamedBuffer> out;
  for (std::size_t i = 0; i < norms_.size(); ++i) {
    out.emplace_back(name_ + ".bn" + std::to_string(i) + ".running_mean", &norms_[i].running_mean);
    out.emplace_back(name_ + ".bn" + std::to_string(i) + ".running_var", &norms_[i].running_var);
  }
  return out;
}

std::vector<Param*> Model::params() {
  std::vector<Param*> out;
  for (Param* p : net_params()) append_unique(out, p);
  for (Param* p : comps_.params()) append_unique(out, p);
  return out;
}

namespace {

std::vector<double> column(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

Tensor as_column(std::span<const double> v) {
  return Tensor({v.size(), 1}, std::vector<double>(v.begin(), v.end()));
}

}  // namespace

MlpModel::MlpModel(const std::string& name, Components comps, InputBlock block,
                   std::vector<std::size_t> hidden, const ModelConfig& cfg)
    : Model(std::move(comps), {std::move(block)}),
      net_(name, blocks_[0].width(), std::move(hidden), 1, cfg.leaky_slope, cfg.bn_momentum, cfg.bn_eps) {}

std::vector<double> MlpModel::forward(StepContext& ctx) {
  return column(net_.forward(assemble_inputs(ctx, comps_, blocks_[0])));
}

void MlpModel::backward(StepContext& ctx, std::span<const double> grad_logits) {
  route_input_grad(ctx, comps_, blocks_[0], net_.backward(as_column(grad_logits)));
}

TwoTowerModel::TwoTowerModel(const std::string& name, Components comps, InputBlock user_block,
                             InputBlock item_block, const ModelConfig& cfg)
    : Model(std::move(comps), {std::move(user_block), std::move(item_block)}),
      user_net_(name + ".user_tower", blocks_[0].width(), cfg.tower_hidden, cfg.tower_out,
                cfg.leaky_slope, cfg.bn_momentum, cfg.bn_eps),
      item_net_(name + ".item_tower", blocks_[1].width(), cfg.tower_hidden, cfg.tower_out,
                cfg.leaky_slope, cfg.bn_momentum, cfg.bn_eps),
      scale_(cfg.scale) {}

void TwoTowerModel::init(Rng& rng) {
  user_net_.init(rng);
  item_net_.init(rng);
}

Tensor TwoTowerModel::user_vectors(StepContext& ctx) {
  ++user_forwards_;
  return user_norm_.forward(user_net_.forward(assemble_inputs(ctx, comps_, blocks_[0])));
}

Tensor TwoTowerModel::item_vectors(StepContext& ctx) {
  return item_norm_.forward(item_net_.forward(assemble_inputs(ctx, comps_, blocks_[1])));
}

std::vector<double> TwoTowerModel::forward(StepContext& ctx) {
  u_ = user_vectors(ctx);
  v_ = item_vectors(ctx);
  const auto dots = (as_matrix(u_).cwiseProduct(as_matrix(v_))).rowwise().sum();
  std::vector<double> out(u_.rows());
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = scale_ * dots(static_cast<Eigen::Index>(r));
  return out;
}

void TwoTowerModel::backward(StepContext& ctx, std::span<const double> grad_logits) {
  if (u_.empty()) throw ContractError("two-tower backward without forward");
  Tensor gu(u_.shape()), gv(v_.shape());
  for (std::size_t r = 0; r < u_.rows(); ++r) {
    const double g = grad_logits[r] * scale_;
    for (std::size_t c = 0; c < u_.cols(); ++c) {
      gu(r, c) = g * v_(r, c);
      gv(r, c) = g * u_(r, c);
    }
  }
  route_input_grad(ctx, comps_, blocks_[0], user_net_.backward(user_norm_.backward(gu)));
  route_input_grad(ctx, comps_, blocks_[1], item_net_.backward(item_norm_.backward(gv)));
  u_ = Tensor();
  v_ = Tensor();
}

void TwoTowerModel::set_mode(NormMode m) {
  user_net_.set_mode(m);
  item_net_.set_mode(m);
}

std::vector<Param*> TwoTowerModel::net_params() {
  auto out = user_net_.params();
  for (Param* p : item_net_.params()) out.push_back(p);
  return out;
}

std::vector<NamedBuffer> TwoTowerModel::buffers() {
  auto out = user_net_.buffers();
  for (auto& b : item_net_.buffers()) out.push_back(b);
  return out;
}

MtlModel::MtlModel(const std::string& name, Components comps, InputBlock block,
                   std::vector<AuxLoss> aux_losses, const ModelConfig& cfg)
    : Model(std::move(comps), {std::move(block)}),
      shared_(name + ".shared", blocks_[0].width(), {cfg.mtl_shared}, 0, cfg.leaky_slope,
              cfg.bn_momentum, cfg.bn_eps),
      main_(name + ".main", cfg.mtl_shared, {cfg.mtl_head}, 1, cfg.leaky_slope, cfg.bn_momentum,
            cfg.bn_eps),
      aux_losses_(std::move(aux_losses)),
      aux_weight_(cfg.aux_weight) {
  for (std::size_t k = 0; k < aux_losses_.size(); ++k) {
    aux_.emplace_back(name + ".aux" + std::to_string(k), cfg.mtl_shared, std::vector<std::size_t>{cfg.mtl_head},
                      1, cfg.leaky_slope, cfg.bn_momentum, cfg.bn_eps);
  }
}

void MtlModel::init(Rng& rng) {
  shared_.init(rng);
  main_.init(rng);
  for (auto& a : aux_) a.init(rng);
}

MtlModel::Output MtlModel::forward_all(StepContext& ctx) {
  const Tensor h = shared_.forward(assemble_inputs(ctx, comps_, blocks_[0]));
  Output out;
  out.main = column(main_.forward(h));
  for (auto& a : aux_) out.aux.push_back(column(a.forward(h)));
  return out;
}

void MtlModel::backward_all(StepContext& ctx, std::span<const double> grad_main,
                            const std::vector<std::vector<double>>& grad_aux) {
  if (grad_aux.size() != aux_.size()) throw ContractError("mtl: aux gradient arity mismatch");
  Tensor gh = main_.backward(as_column(grad_main));
  for (std::size_t k = 0; k < aux_.size(); ++k) {
    const Tensor g = aux_[k].backward(as_column(grad_aux[k]));
    as_matrix(gh) += as_matrix(g);
  }
  route_input_grad(ctx, comps_, blocks_[0], shared_.backward(gh));
}

void MtlModel::backward(StepContext& ctx, std::span<const double> grad_logits) {
  std::vector<std::vector<double>> zeros(aux_.size(), std::vector<double>(grad_logits.size(), 0.0));
  backward_all(ctx, grad_logits, zeros);
}

void MtlModel::set_mode(NormMode m) {
  shared_.set_mode(m);
  main_.set_mode(m);
  for (auto& a : aux_) a.set_mode(m);
}

std::vector<Param*> MtlModel::net_params() {
  auto out = shared_.params();
  for (Param* p : main_.params()) out.push_back(p);
  for (auto& a : aux_) {
    for (Param* p : a.params()) out.push_back(p);
  }
  return out;
}

std::vector<NamedBuffer> MtlModel::buffers() {
  auto out = shared_.buffers();
  for (auto& b : main_.buffers()) out.push_back(b);
  for (auto& a : aux_) {
    for (auto& b : a.buffers()) out.push_back(b);
  }
  return out;
}

// ---------------------------------------------------------------------------
// graph

std::vector<Param*> ModelGraph::teacher_params() const {
  return teacher ? teacher->params() : std::vector<Param*>{};
}

std::vector<Param*> ModelGraph::all_params() const {
  auto out = student->params();
  for (Param* p : teacher_params()) append_unique(out, p);
  return out;
}

std::vector<NamedBuffer> ModelGraph::buffers() const {
  auto out = student->buffers();
  if (teacher) {
    for (auto& b : teacher->buffers()) out.push_back(b);
  }
  return out;
}

void ModelGraph::set_mode(NormMode m) const {
  student->set_mode(m);
  if (teacher) teacher->set_mode(m);
}

std::vector<std::string> ModelGraph::shared_components() const {
  std::vector<std::string> out;
  if (!teacher) return out;
  const auto& s = student->components();
  const auto& t = teacher->components();
  for (const auto& [f, table] : s.tables) {
    auto it = t.tables.find(f);
    if (it != t.tables.end() && it->second == table) out.push_back(table->param().name);
  }
  if (s.encoder && s.encoder == t.encoder) out.push_back(s.encoder->name());
  return out;
}

namespace {

struct Wiring {
  const FeatureSchema& schema;
  const ModelConfig& cfg;
  std::size_t user_id = 0;
  std::size_t item_id = 0;
  std::vector<std::size_t> behavior;  // item, category, recency, dwell

  std::size_t table_dim(std::size_t f) const {
    if (f == behavior[1]) return cfg.behavior_category_dim;
    if (f == behavior[2] || f == behavior[3]) return cfg.behavior_bucket_dim;
    return cfg.embed_dim;
  }

  std::shared_ptr<EmbeddingTable> make_table(const std::string& prefix, std::size_t f, Rng& rng) const {
    const auto& decl = schema.at(f);
    auto t = std::make_shared<EmbeddingTable>(prefix + ".emb." + decl.name, decl.vocab_size, table_dim(f));
    t->init(rng);
    return t;
  }

  /// Slots over the schema in declaration order; the behavior encoding takes
  /// the place of the behavior features.
  InputBlock block(const std::set<std::size_t>& features, bool with_behavior) const {
    InputBlock b;
    bool behavior_done = false;
    for (std::size_t f = 0; f < schema.size(); ++f) {
      if (schema.at(f).role == FeatureRole::Behavior) {
        if (with_behavior && !behavior_done) {
          b.slots.push_back({InputSlot::Kind::Behavior, 0, cfg.attention().model_dim});
          behavior_done = true;
        }
      } else if (features.contains(f)) {
        b.slots.push_back({InputSlot::Kind::Feature, f, cfg.embed_dim});
      }
    }
    return b;
  }
};

std::set<std::size_t> to_set(const std::vector<std::size_t>& v) { return {v.begin(), v.end()}; }

std::set<std::size_t> merge(std::set<std::size_t> a, const std::set<std::size_t>& b) {
  a.insert(b.begin(), b.end());
  return a;
}

}  // namespace

ModelGraph build_model(const ModelConfig& cfg, const FeatureSchema& schema) {
  cfg.validate();
  Wiring w{schema, cfg, 0, 0, {}};
  const auto users = to_set(schema.indices(FeatureRole::RegularUser));
  const auto items = to_set(schema.indices(FeatureRole::RegularItem));
  w.behavior = schema.indices(FeatureRole::Behavior);
  if (users.empty() || items.empty()) throw ConfigError("schema needs user and item features");
  if (w.behavior.size() != 4) throw ConfigError("schema needs 4 behavior features (item, category, recency, dwell)");
  w.user_id = *users.begin();
  w.item_id = *items.begin();
  const auto privileged = to_set(schema.privileged_indices(privileged_group_of(cfg.task)));

  ModelGraph g;
  g.config = cfg;
  g.schema = schema;
  g.teacher_inputs = teacher_inputs_of(cfg.method);
  if (g.teacher_inputs != TeacherInputs::None && g.teacher_inputs != TeacherInputs::RegularOnly &&
      privileged.empty()) {
    throw ConfigError("method " + to_string(cfg.method) + " needs privileged features, schema has none for " +
                      to_string(cfg.task));
  }

  const auto regular = merge(users, items);
  std::set<std::size_t> teacher_feats;
  bool teacher_behavior = false;
  switch (g.teacher_inputs) {
    case TeacherInputs::None: break;
    case TeacherInputs::PrivilegedOnly: teacher_feats = privileged; break;
    case TeacherInputs::RegularOnly:
      teacher_feats = regular;
      teacher_behavior = true;
      break;
    case TeacherInputs::RegularPlusPrivileged:
      teacher_feats = merge(regular, privileged);
      teacher_behavior = true;
      break;
  }
  const bool sharing = cfg.sharing != SharingMode::Independent;
  auto is_shared = [&](std::size_t f) {
    return sharing && teacher_feats.contains(f) && regular.contains(f) &&
           !(cfg.sharing == SharingMode::ShareExceptUserId && f == w.user_id);
  };
  const bool encoder_shared = sharing && teacher_behavior;
  const AttentionConfig att = cfg.attention();

  // Student components and network, all drawn from the student stream.
  Rng srng(derive_seed(cfg.student_seed, 0x5354));
  Components sc;
  for (std::size_t f : regular) sc.tables[f] = w.make_table(is_shared(f) ? "shared" : "student", f, srng);
  const std::string enc_prefix = encoder_shared ? "shared" : "student";
  for (std::size_t k = 1; k < 4; ++k) sc.tables[w.behavior[k]] = w.make_table(enc_prefix, w.behavior[k], srng);
  sc.encoder = std::make_shared<BehaviorEncoder>(enc_prefix + ".behavior", att, sc.tables.at(w.item_id),
                                                 sc.tables.at(w.behavior[1]), sc.tables.at(w.behavior[2]),
                                                 sc.tables.at(w.behavior[3]));
  sc.encoder->init(srng);

  if (cfg.task == Task::Ctr) {
    auto m = std::make_unique<TwoTowerModel>("student", sc, w.block(users, true), w.block(items, false), cfg);
    m->init(srng);
    g.student = std::move(m);
  } else if (cfg.method == Method::Mtl) {
    std::vector<AuxLoss> aux;
    for (std::size_t f : schema.privileged_indices(PrivilegedGroup::PostEvent)) {
      aux.push_back(schema.at(f).kind == ValueKind::Real ? AuxLoss::Mse : AuxLoss::Logistic);
    }
    if (aux.empty()) throw ConfigError("mtl needs post-event features as auxiliary targets");
    auto m = std::make_unique<MtlModel>("student", sc, w.block(regular, true), aux, cfg);
    m->init(srng);
    g.student = std::move(m);
  } else {
    auto m = std::make_unique<MlpModel>("student.net", sc, w.block(regular, true), cfg.student_hidden, cfg);
    m->init(srng);
    g.student = std::move(m);
  }

  if (g.teacher_inputs == TeacherInputs::None) return g;

  // Teacher: reuse shared student components, draw the rest from its own stream.
  Rng trng(derive_seed(cfg.teacher_seed, 0x5448));
  Components tc;
  for (std::size_t f : teacher_feats) {
    tc.tables[f] = is_shared(f) ? sc.tables.at(f) : w.make_table("teacher", f, trng);
  }
  if (teacher_behavior) {
    if (encoder_shared) {
      for (std::size_t k = 1; k < 4; ++k) tc.tables[w.behavior[k]] = sc.tables.at(w.behavior[k]);
      tc.encoder = sc.encoder;
    } else {
      for (std::size_t k = 1; k < 4; ++k) tc.tables[w.behavior[k]] = w.make_table("teacher", w.behavior[k], trng);
      tc.encoder = std::make_shared<BehaviorEncoder>("teacher.behavior", att, tc.tables.at(w.item_id),
                                                     tc.tables.at(w.behavior[1]), tc.tables.at(w.behavior[2]),
                                                     tc.tables.at(w.behavior[3]));
      tc.encoder->init(trng);
    }
  }

  const bool deep = cfg.method == Method::Md || cfg.method == Method::PfdMd;
  if (cfg.task == Task::Ctr && cfg.method == Method::Pfd) {
    // Same class as the student; privileged features join the user side.
    auto m = std::make_unique<TwoTowerModel>("teacher", tc, w.block(merge(users, privileged), true),
                                             w.block(items, false), cfg);
    m->init(trng);
    g.teacher = std::move(m);
  } else {
    auto m = std::make_unique<MlpModel>("teacher.net", tc, w.block(teacher_feats, teacher_behavior),
                                        deep ? cfg.teacher_hidden : cfg.student_hidden, cfg);
    m->init(trng);
    g.teacher = std::move(m);
  }
  return g;
}

std::vector<double> student_forward_ctr(ModelGraph& graph, const Batch& batch) {
  if (batch.has_privileged) throw ContractError("student_forward_ctr: privileged features in a serving batch");
  auto* tt = dynamic_cast<TwoTowerModel*>(graph.student.get());
  if (!tt) throw ContractError("student_forward_ctr: student is not a two-tower model");
  StepContext ctx(batch);
  return tt->forward(ctx);
}

std::vector<double> teacher_forward(ModelGraph& graph, const Batch& batch) {
  if (!graph.teacher) throw ContractError("teacher_forward: graph has no teacher");
  const bool needs_privileged = graph.teacher_inputs == TeacherInputs::PrivilegedOnly ||
                                graph.teacher_inputs == TeacherInputs::RegularPlusPrivileged;
  if (needs_privileged && !batch.has_privileged) {
    throw ContractError("teacher_forward: teacher needs privileged features the batch lacks");
  }
  StepContext ctx(batch);
  return graph.teacher->forward(ctx);
}

}  // namespace pfd
