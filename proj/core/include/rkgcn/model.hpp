#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rkgcn/common.hpp"
#include "rkgcn/kg_store.hpp"
#include "rkgcn/numeric.hpp"

namespace rkgcn {

/// How the user representation is produced.
enum class UserPath {
  ripple,  // aggregated from the user's ripple set (default)
  table,   // a free per-user embedding row (KGCN-style ablation)
};

/// How hop responses are fused into the user representation.
enum class Fusion {
  sum,        // o = W (sum_k O_k + v)
  recursive,  // o_k = W_k (o_{k-1} + O_k), with v added at the last hop
};

enum class LossVariant {
  bce,      // binary cross-entropy over positives and negatives
  literal,  // positives minus negatives; for inspection only, not trainable
};

enum class OptimizerKind { adam, sgd };

struct Hyperparams {
  std::size_t dim = 8;
  std::size_t hops = 2;
  std::size_t n_p = 64;
  std::size_t n_e = 8;
  std::size_t layers = 1;  // item aggregation depth; 0 disables item enhancement
  double l2 = 1e-7;
  double lr = 1e-2;
  std::size_t batch_size = 1024;
  std::size_t epochs = 20;
  std::size_t patience = 5;  // 0 disables early stopping
  double threshold = 0.5;

  void validate() const;
};

struct ModelOptions {
  UserPath user_path = UserPath::ripple;
  Fusion fusion = Fusion::sum;
  LossVariant loss = LossVariant::bce;
  OptimizerKind optimizer = OptimizerKind::adam;
  bool resample_ripple = false;  // rebuild ripple sets every epoch
};

struct ModelShape {
  std::size_t num_entities = 0;
  std::size_t num_relations = 0;
  std::size_t num_users = 0;
};

namespace tensor_names {
inline constexpr const char* kEntity = "entity_embeddings";
inline constexpr const char* kRelationMatrix = "relation_matrices";
inline constexpr const char* kRelationVector = "relation_vectors";
inline constexpr const char* kUserFusion = "user_fusion_W";
inline constexpr const char* kItemAggW = "item_agg_W";
inline constexpr const char* kItemAggB = "item_agg_b";
inline constexpr const char* kUser = "user_embeddings";
}  // namespace tensor_names

/// Learnable tensors of the model, with typed row accessors.
/// Matrices are d x d, row-major.
template <typename Real>
class ModelParams {
 public:
  ModelParams(ModelShape shape, const Hyperparams& hp, const ModelOptions& options);

  /// Adopts a loaded store after checking every tensor's shape.
  ModelParams(ParamStore<Real> store, ModelShape shape, const Hyperparams& hp, const ModelOptions& options);

  /// Xavier-uniform weights and embeddings, zero biases.
  void init(Rng& rng);

  ParamStore<Real>& store() { return store_; }
  const ParamStore<Real>& store() const { return store_; }
  const ModelShape& shape() const { return shape_; }
  std::size_t dim() const { return dim_; }
  std::size_t fusion_count() const { return fusion_count_; }
  std::size_t layers() const { return layers_; }
  bool has_user_table() const { return has_user_table_; }

  std::span<const Real> entity(EntityId e) const { return row(kEntity, static_cast<std::size_t>(e)); }
  std::span<const Real> relation_matrix(RelationId r) const { return row(kRelMat, static_cast<std::size_t>(r)); }
  std::span<const Real> relation_vector(RelationId r) const { return row(kRelVec, static_cast<std::size_t>(r)); }
  std::span<const Real> fusion(std::size_t k) const { return row(kFusion, k); }
  std::span<const Real> agg_weight(std::size_t l) const { return row(kAggW, l); }
  std::span<const Real> agg_bias(std::size_t l) const { return row(kAggB, l); }
  std::span<const Real> user(UserId u) const { return row(kUser, static_cast<std::size_t>(u)); }

  std::span<Real> entity_grad(EntityId e) { return grad_row(kEntity, static_cast<std::size_t>(e)); }
  std::span<Real> relation_matrix_grad(RelationId r) { return grad_row(kRelMat, static_cast<std::size_t>(r)); }
  std::span<Real> relation_vector_grad(RelationId r) { return grad_row(kRelVec, static_cast<std::size_t>(r)); }
  std::span<Real> fusion_grad(std::size_t k) { return grad_row(kFusion, k); }
  std::span<Real> agg_weight_grad(std::size_t l) { return grad_row(kAggW, l); }
  std::span<Real> agg_bias_grad(std::size_t l) { return grad_row(kAggB, l); }
  std::span<Real> user_grad(UserId u) { return grad_row(kUser, static_cast<std::size_t>(u)); }

  /// Mutable value rows, for tests and hand-built fixtures.
  std::span<Real> mutable_row(const char* tensor, std::size_t i) { return store_.at(tensor).row(i); }

  bool all_finite() const;

 private:
  enum Slot : std::size_t { kEntity, kRelMat, kRelVec, kFusion, kAggW, kAggB, kUser };

  std::span<const Real> row(Slot s, std::size_t i) const;
  std::span<Real> grad_row(Slot s, std::size_t i);
  void build_layout(const Hyperparams& hp, const ModelOptions& options);

  ModelShape shape_;
  std::size_t dim_ = 0;
  std::size_t fusion_count_ = 0;
  std::size_t layers_ = 0;
  bool has_user_table_ = false;
  ParamStore<Real> store_;
};

/// Attention over one ripple hop and the resulting response O.
template <typename Real>
struct HopTrace {
  std::vector<Real> projected;  // R_i h_i for each bag entry, n_p x d
  std::vector<Real> attention;  // n_p, sums to 1
  std::vector<Real> response;   // d
};

template <typename Real>
struct UserTrace {
  std::vector<HopTrace<Real>> hops;
  std::vector<std::vector<Real>> fusion_inputs;  // input to each fusion matrix
};

template <typename Real>
struct ItemTrace {
  std::size_t layers = 0;
  std::vector<std::vector<Real>> attention;                // per level: nodes x fanout
  std::vector<std::vector<std::vector<Real>>> reps;        // [iteration][level]: nodes x d
  std::vector<std::vector<std::vector<Real>>> mixed;       // [iteration][level]: self + neighbor aggregate
  std::vector<std::vector<std::vector<Real>>> activation;  // [iteration][level]: W * mixed + b
};

/// Intermediates of one example retained for the backward pass.
template <typename Real>
struct ForwardTrace {
  std::vector<Real> candidate;  // raw item embedding v
  UserTrace<Real> user;
  std::vector<Real> user_rep;
  ItemTrace<Real> item;
  std::vector<Real> item_rep;
  Real logit = 0;
  Real prediction = 0;
};

/// Inputs for one (user, item) pair. Pointers are borrowed.
struct ExampleInput {
  UserId user = 0;
  EntityId item_entity = 0;
  const RippleSet* ripple = nullptr;       // required for UserPath::ripple
  const ReceptiveField* field = nullptr;   // required when layers >= 1
};

template <typename Real>
HopTrace<Real> hop_response(const ModelParams<Real>& params, std::span<const Triple> bag,
                            std::span<const Real> candidate);

template <typename Real>
std::vector<Real> user_representation(const ModelParams<Real>& params, const RippleSet& ripple,
                                      std::span<const Real> candidate, const ModelOptions& options,
                                      UserTrace<Real>* trace = nullptr);

/// u . r, or 0 for the null relation.
template <typename Real>
Real relation_score(const ModelParams<Real>& params, std::span<const Real> user_rep, RelationId relation);

template <typename Real>
struct NeighborAggregate {
  std::vector<Real> weights;
  std::vector<Real> value;
};

template <typename Real>
NeighborAggregate<Real> neighbor_aggregate(const ModelParams<Real>& params, std::span<const Real> user_rep,
                                           const NeighborSample& sample);

/// Layered aggregation over a sampled receptive field of depth params.layers().
template <typename Real>
std::vector<Real> item_representation(const ModelParams<Real>& params, const ReceptiveField& field,
                                      std::span<const Real> user_rep, ItemTrace<Real>* trace = nullptr);

/// Samples the receptive field, then aggregates it.
template <typename Real>
std::vector<Real> item_representation(const ModelParams<Real>& params, EntityId item_entity,
                                      std::span<const Real> user_rep, const KnowledgeGraph& kg,
                                      const Hyperparams& hp, Rng& rng);

template <typename Real>
Real predict_ctr(std::span<const Real> user_rep, std::span<const Real> item_rep);

/// Full forward pass for one example.
template <typename Real>
Real forward(const ModelParams<Real>& params, const ExampleInput& input, const ModelOptions& options,
             ForwardTrace<Real>& trace);

/// Clamped cross-entropy of one prediction and d(loss)/d(logit).
struct CrossEntropy {
  double loss = 0;
  double dlogit = 0;
};
CrossEntropy cross_entropy(double prediction, int label);

/// Rows each parameter table contributes to the L2 penalty of a batch.
struct TouchedRows {
  std::vector<EntityId> entities;
  std::vector<RelationId> relation_matrices;
  std::vector<RelationId> relation_vectors;
  std::vector<UserId> users;

  void add(const ExampleInput& input, const ModelOptions& options, RelationId null_relation);
  void finalize();
};

struct LabeledInput {
  ExampleInput input;
  int label = 0;
};

struct BatchLoss {
  double loss = 0;
  double cross_entropy = 0;
  double l2 = 0;
};

/// Mean cross-entropy over the batch plus l2 * (squared norm of the dense
/// weights and of every table row the batch touches).
template <typename Real>
BatchLoss batch_loss(const ModelParams<Real>& params, std::span<const LabeledInput> batch, double l2,
                     const ModelOptions& options);

/// Same value as batch_loss; accumulates the gradient into params' buffers.
template <typename Real>
BatchLoss forward_backward(ModelParams<Real>& params, std::span<const LabeledInput> batch, double l2,
                           const ModelOptions& options);

}  // namespace rkgcn
