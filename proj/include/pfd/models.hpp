// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <deque>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pfd/attention.hpp"
#include "pfd/config_file.hpp"
#include "pfd/data.hpp"
#include "pfd/features.hpp"
#include "pfd/layers.hpp"

namespace pfd {

enum class Method { Baseline, Lupi, Md, Pfd, PfdMd, Mtl };
enum class Task { Ctr, Cvr };
enum class SharingMode { Independent, ShareAll, ShareExceptUserId };
enum class TeacherInputs { None, RegularOnly, PrivilegedOnly, RegularPlusPrivileged };

std::string to_string(Method m);
std::string to_string(Task t);
std::string to_string(SharingMode s);
std::string to_string(TeacherInputs t);
Method parse_method(const std::string& s);
Task parse_task(const std::string& s);
SharingMode parse_sharing(const std::string& s);

bool has_teacher(Method m);
TeacherInputs teacher_inputs_of(Method m);
/// Privileged block a task distills from: interacted features for CTR,
/// post-event features for CVR.
PrivilegedGroup privileged_group_of(Task t);

struct ModelConfig {
  Method method = Method::Pfd;
  Task task = Task::Cvr;
  SharingMode sharing = SharingMode::ShareAll;

  std::size_t embed_dim = 8;
  std::size_t behavior_category_dim = 4;
  std::size_t behavior_bucket_dim = 2;  // recency and dwell tables
  std::size_t num_heads = 2;
  std::size_t head_dim = 8;
  std::size_t max_len = 10;

  std::vector<std::size_t> student_hidden{64, 32, 16};             // CVR student, PFD/LUPI teachers
  std::vector<std::size_t> tower_hidden{64, 32};                   // CTR towers
  std::size_t tower_out = 16;
  double scale = 5.0;
  std::vector<std::size_t> teacher_hidden{256, 128, 64, 32, 16};   // MD and PFD+MD teachers
  std::size_t mtl_shared = 64;
  std::size_t mtl_head = 32;
  double aux_weight = 0.1;

  double leaky_slope = kDefaultLeakySlope;
  double bn_momentum = 0.99;
  double bn_eps = 1e-5;
  std::uint64_t student_seed = 11;
  std::uint64_t teacher_seed = 12;

  AttentionConfig attention() const;
  void validate() const;
  KeyValues to_key_values() const;
  static ModelConfig from_key_values(const KeyValues& kv);
  static ModelConfig from_key_values(const KeyValues& kv, ModelConfig base);
  static std::vector<std::string> keys();

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// One slot of a model's input concatenation: a feature embedding or the
/// pooled behavior encoding.
struct InputSlot {
  enum class Kind { Feature, Behavior };
  Kind kind = Kind::Feature;
  std::size_t feature = 0;  // schema index for Feature slots
  std::size_t width = 0;
};

struct InputBlock {
  std::vector<InputSlot> slots;
  std::size_t width() const;
  bool reads(std::size_t feature) const;
};

/// The input components one model reads. Tables are keyed by schema index.
struct Components {
  std::map<std::size_t, std::shared_ptr<EmbeddingTable>> tables;
  std::shared_ptr<BehaviorEncoder> encoder;

  std::vector<Param*> params() const;
};

/// Per-step scratch shared by the student and teacher. Each distinct table
/// is looked up once and each distinct behavior encoder runs forward once,
/// however many models read it; gradients from all readers are summed and
/// scattered once in backward().
class StepContext {
 public:
  explicit StepContext(const Batch& batch) : batch_(batch) {}
  StepContext(const StepContext&) = delete;
  StepContext& operator=(const StepContext&) = delete;

  const Batch& batch() const { return batch_; }

  const Tensor& embed(EmbeddingTable& table, std::size_t feature);
  void add_embed_grad(EmbeddingTable& table, const Tensor& grad, std::size_t col);
  const Tensor& encode(BehaviorEncoder& encoder);
  void add_encode_grad(BehaviorEncoder& encoder, const Tensor& grad, std::size_t col);

  /// Scatters accumulated gradients into the components.
  void backward();

  std::size_t encoder_forwards() const { return encodes_.size(); }
  std::size_t table_lookups() const { return embeds_.size(); }

 private:
  struct EmbedEntry {
    EmbeddingTable* table;
    std::size_t feature;
    Tensor value;
    Tensor grad;
    bool has_grad = false;
  };
  struct EncodeEntry {
    BehaviorEncoder* encoder;
    Tensor value;
    Tensor grad;
    bool has_grad = false;
  };
  EmbedEntry& embed_entry(EmbeddingTable& table);
  EncodeEntry& encode_entry(BehaviorEncoder& encoder);

  const Batch& batch_;
  std::deque<EmbedEntry> embeds_;  // deque: returned references stay valid
  std::deque<EncodeEntry> encodes_;
};

Tensor assemble_inputs(StepContext& ctx, const Components& comps, const InputBlock& block);
void route_input_grad(StepContext& ctx, const Components& comps, const InputBlock& block,
                      const Tensor& grad);

using NamedBuffer = std::pair<std::string, Tensor*>;

/// Fully connected stack: (dense -> batch norm -> leaky relu) per hidden
/// width, then a plain dense layer to `out` (omitted when out == 0).
class Mlp {
 public:
  Mlp(const std::string& name, std::size_t in, std::vector<std::size_t> hidden, std::size_t out,
      double slope, double bn_momentum, double bn_eps);

  void init(Rng& rng);
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out);
  void set_mode(NormMode m);

  std::size_t in_dim() const { return in_; }
  std::size_t out_dim() const;
  std::vector<Param*> params();
  std::vector<NamedBuffer> buffers();
  std::vector<DenseLayer>& dense() { return dense_; }

 private:
  std::string name_;
  std::size_t in_;
  std::vector<DenseLayer> dense_;
  std::vector<BatchNorm> norms_;
  std::vector<LeakyRelu> acts_;
};

/// A network plus the input components it reads.
class Model {
 public:
  virtual ~Model() = default;
  /// One logit per batch row.
  virtual std::vector<double> forward(StepContext& ctx) = 0;
  /// Backpropagates dL/dlogit through the network into `ctx`.
  virtual void backward(StepContext& ctx, std::span<const double> grad_logits) = 0;
  virtual void set_mode(NormMode m) = 0;
  /// Network parameters only.
  virtual std::vector<Param*> net_params() = 0;
  virtual std::vector<NamedBuffer> buffers() = 0;
  virtual std::string kind() const = 0;

  /// Network and component parameters, without duplicates.
  std::vector<Param*> params();
  const Components& components() const { return comps_; }
  const std::vector<InputBlock>& blocks() const { return blocks_; }

 protected:
  Model(Components comps, std::vector<InputBlock> blocks)
      : comps_(std::move(comps)), blocks_(std::move(blocks)) {}
  Components comps_;
  std::vector<InputBlock> blocks_;
};

class MlpModel : public Model {
 public:
  MlpModel(const std::string& name, Components comps, InputBlock block,
           std::vector<std::size_t> hidden, const ModelConfig& cfg);
  void init(Rng& rng) { net_.init(rng); }

  std::vector<double> forward(StepContext& ctx) override;
  void backward(StepContext& ctx, std::span<const double> grad_logits) override;
  void set_mode(NormMode m) override { net_.set_mode(m); }
  std::vector<Param*> net_params() override { return net_.params(); }
  std::vector<NamedBuffer> buffers() override { return net_.buffers(); }
  std::string kind() const override { return "mlp"; }

  Mlp& net() { return net_; }
  std::size_t input_width() const { return blocks_[0].width(); }

 private:
  Mlp net_;
};

/// logit = scale * <l2(user_net(user inputs)), l2(item_net(item inputs))>.
class TwoTowerModel : public Model {
 public:
  TwoTowerModel(const std::string& name, Components comps, InputBlock user_block,
                InputBlock item_block, const ModelConfig& cfg);
  void init(Rng& rng);

  std::vector<double> forward(StepContext& ctx) override;
  void backward(StepContext& ctx, std::span<const double> grad_logits) override;
  void set_mode(NormMode m) override;
  std::vector<Param*> net_params() override;
  std::vector<NamedBuffer> buffers() override;
  std::string kind() const override { return "two_tower"; }

  /// Unit-norm tower outputs [batch x out_dim]; no backward cache is kept.
  Tensor user_vectors(StepContext& ctx);
  Tensor item_vectors(StepContext& ctx);

  double scale() const { return scale_; }
  std::size_t out_dim() const { return user_net_.out_dim(); }
  /// Number of user-tower forward passes run so far (one per call, any batch).
  std::size_t user_forward_count() const { return user_forwards_; }

  Mlp& user_net() { return user_net_; }
  Mlp& item_net() { return item_net_; }

 private:
  Mlp user_net_;
  Mlp item_net_;
  L2Normalize user_norm_, item_norm_;
  double scale_;
  Tensor u_, v_;
  std::size_t user_forwards_ = 0;
};

enum class AuxLoss { Mse, Logistic };

/// Hard parameter sharing: one shared hidden layer feeds the main head and
/// one auxiliary head per privileged target.
class MtlModel : public Model {
 public:
  MtlModel(const std::string& name, Components comps, InputBlock block,
           std::vector<AuxLoss> aux_losses, const ModelConfig& cfg);
  void init(Rng& rng);

  struct Output {
    std::vector<double> main;
    std::vector<std::vector<double>> aux;
  };
  Output forward_all(StepContext& ctx);
  void backward_all(StepContext& ctx, std::span<const double> grad_main,
                    const std::vector<std::vector<double>>& grad_aux);

  std::vector<double> forward(StepContext& ctx) override { return forward_all(ctx).main; }
  void backward(StepContext& ctx, std::span<const double> grad_logits) override;
  void set_mode(NormMode m) override;
  std::vector<Param*> net_params() override;
  std::vector<NamedBuffer> buffers() override;
  std::string kind() const override { return "mtl"; }

  const std::vector<AuxLoss>& aux_losses() const { return aux_losses_; }
  double aux_weight() const { return aux_weight_; }
  void set_aux_weight(double w) { aux_weight_ = w; }

 private:
  Mlp shared_;
  Mlp main_;
  std::vector<Mlp> aux_;
  std::vector<AuxLoss> aux_losses_;
  double aux_weight_;
};

/// Student, optional teacher, and the components they share.
struct ModelGraph {
  ModelConfig config;
  FeatureSchema schema;
  TeacherInputs teacher_inputs = TeacherInputs::None;
  std::unique_ptr<Model> student;
  std::unique_ptr<Model> teacher;

  std::vector<Param*> student_params() const { return student->params(); }
  std::vector<Param*> teacher_params() const;
  /// Every parameter once, student first.
  std::vector<Param*> all_params() const;
  /// Batch-norm running statistics.
  std::vector<NamedBuffer> buffers() const;
  void set_mode(NormMode m) const;
  /// Tables read by both models (same object).
  std::vector<std::string> shared_components() const;
};

ModelGraph build_model(const ModelConfig& config, const FeatureSchema& schema);

/// Student logits for a serving batch. Throws ContractError if the batch
/// carries privileged features or the student is not a two-tower model.
std::vector<double> student_forward_ctr(ModelGraph& graph, const Batch& batch);
/// Teacher logits. Throws ContractError when the teacher needs privileged
/// features the batch lacks, or there is no teacher.
std::vector<double> teacher_forward(ModelGraph& graph, const Batch& batch);

}  // namespace pfd
