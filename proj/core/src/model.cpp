#include "rkgcn/model.hpp"

#include <algorithm>
#include <cmath>

namespace rkgcn {

void Hyperparams::validate() const {
  if (dim < 1) throw DataError("dim must be >= 1");
  if (hops < 1) throw DataError("hops must be >= 1");
  if (n_p < 1) throw DataError("n_p must be >= 1");
  if (n_e < 1) throw DataError("n_e must be >= 1");
  if (!(l2 >= 0)) throw DataError("l2 must be >= 0");
  if (!(lr > 0)) throw DataError("lr must be > 0");
  if (batch_size < 1) throw DataError("batch_size must be >= 1");
  if (!(threshold > 0 && threshold < 1)) throw DataError("threshold must lie in (0, 1)");
}

namespace {

template <typename Real>
Real dot(std::span<const Real> a, std::span<const Real> b) {
  Real s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// y = M x
template <typename Real>
void matvec(std::span<const Real> m, std::span<const Real> x, std::span<Real> y) {
  const std::size_t d = x.size();
  for (std::size_t p = 0; p < d; ++p) {
    Real s = 0;
    for (std::size_t c = 0; c < d; ++c) s += m[p * d + c] * x[c];
    y[p] = s;
  }
}

// y += M^T x * scale
template <typename Real>
void matvec_t_add(std::span<const Real> m, std::span<const Real> x, Real scale, std::span<Real> y) {
  const std::size_t d = x.size();
  for (std::size_t p = 0; p < d; ++p) {
    const Real xp = x[p] * scale;
    for (std::size_t c = 0; c < d; ++c) y[c] += m[p * d + c] * xp;
  }
}

// G += scale * a b^T
template <typename Real>
void outer_add(std::span<Real> g, std::span<const Real> a, std::span<const Real> b, Real scale) {
  const std::size_t d = a.size();
  for (std::size_t p = 0; p < d; ++p) {
    const Real ap = a[p] * scale;
    for (std::size_t c = 0; c < d; ++c) g[p * d + c] += ap * b[c];
  }
}

template <typename Real>
void axpy(Real alpha, std::span<const Real> x, std::span<Real> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

template <typename Real>
std::span<const Real> slice(const std::vector<Real>& v, std::size_t i, std::size_t d) {
  return {v.data() + i * d, d};
}
template <typename Real>
std::span<Real> slice(std::vector<Real>& v, std::size_t i, std::size_t d) {
  return {v.data() + i * d, d};
}

template <typename Real>
void sort_unique(std::vector<Real>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

}  // namespace

// ---------------------------------------------------------------------------
// ModelParams

template <typename Real>
void ModelParams<Real>::build_layout(const Hyperparams& hp, const ModelOptions& options) {
  dim_ = hp.dim;
  layers_ = hp.layers;
  fusion_count_ = options.fusion == Fusion::recursive ? hp.hops : 1;
  has_user_table_ = options.user_path == UserPath::table;
}

template <typename Real>
ModelParams<Real>::ModelParams(ModelShape shape, const Hyperparams& hp, const ModelOptions& options)
    : shape_(shape) {
  hp.validate();
  build_layout(hp, options);
  const std::size_t d = dim_;
  store_.add(tensor_names::kEntity, {shape.num_entities, d});
  store_.add(tensor_names::kRelationMatrix, {shape.num_relations, d, d});
  store_.add(tensor_names::kRelationVector, {shape.num_relations, d});
  store_.add(tensor_names::kUserFusion, {fusion_count_, d, d});
  store_.add(tensor_names::kItemAggW, {layers_, d, d});
  store_.add(tensor_names::kItemAggB, {layers_, d});
  store_.add(tensor_names::kUser, {has_user_table_ ? shape.num_users : 0, d});
}

template <typename Real>
ModelParams<Real>::ModelParams(ParamStore<Real> store, ModelShape shape, const Hyperparams& hp,
                               const ModelOptions& options)
    : ModelParams(shape, hp, options) {
  if (store.size() != store_.size()) throw DataError("snapshot tensor count does not match the model");
  for (std::size_t k = 0; k < store_.size(); ++k) {
    auto& want = store_.tensors()[k];
    const auto& got = store.tensors()[k];
    if (want.name != got.name || want.shape != got.shape)
      throw DataError("snapshot tensor '" + got.name + "' does not match model tensor '" + want.name + "'");
    want.value = got.value;
  }
}

template <typename Real>
void ModelParams<Real>::init(Rng& rng) {
  const std::size_t d = dim_;
  auto& tensors = store_.tensors();
  xavier_uniform<Real>(tensors[kEntity].value, shape_.num_entities, d, rng);
  xavier_uniform<Real>(tensors[kRelVec].value, shape_.num_relations, d, rng);
  xavier_uniform<Real>(tensors[kUser].value, shape_.num_users, d, rng);
  // d x d matrices: one fan per slice
  for (auto slot : {kRelMat, kFusion, kAggW}) xavier_uniform<Real>(tensors[slot].value, d, d, rng);
  std::fill(tensors[kAggB].value.begin(), tensors[kAggB].value.end(), Real(0));
  store_.zero_grad();
}

template <typename Real>
std::span<const Real> ModelParams<Real>::row(Slot s, std::size_t i) const {
  const auto& t = store_.tensors()[s];
  if (i >= t.rows()) throw DataError("row " + std::to_string(i) + " out of range for " + t.name);
  return t.row(i);
}

template <typename Real>
std::span<Real> ModelParams<Real>::grad_row(Slot s, std::size_t i) {
  auto& t = store_.tensors()[s];
  if (i >= t.rows()) throw DataError("row " + std::to_string(i) + " out of range for " + t.name);
  return t.grad_row(i);
}

template <typename Real>
bool ModelParams<Real>::all_finite() const {
  for (const auto& t : store_.tensors())
    for (auto v : t.value)
      if (!std::isfinite(v)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Forward pieces

template <typename Real>
HopTrace<Real> hop_response(const ModelParams<Real>& params, std::span<const Triple> bag,
                            std::span<const Real> candidate) {
  const std::size_t d = params.dim();
  HopTrace<Real> out;
  out.projected.assign(bag.size() * d, Real(0));
  out.attention.resize(bag.size());
  out.response.assign(d, Real(0));
  for (std::size_t i = 0; i < bag.size(); ++i) {
    auto q = slice(out.projected, i, d);
    matvec<Real>(params.relation_matrix(bag[i].relation), params.entity(bag[i].head), q);
    out.attention[i] = dot<Real>(q, candidate);
  }
  softmax<Real>(out.attention, out.attention);
  for (std::size_t i = 0; i < bag.size(); ++i)
    axpy<Real>(out.attention[i], params.entity(bag[i].tail), out.response);
  return out;
}

template <typename Real>
std::vector<Real> user_representation(const ModelParams<Real>& params, const RippleSet& ripple,
                                      std::span<const Real> candidate, const ModelOptions& options,
                                      UserTrace<Real>* trace) {
  const std::size_t d = params.dim();
  UserTrace<Real> local;
  UserTrace<Real>& t = trace ? *trace : local;
  t.hops.clear();
  t.fusion_inputs.clear();
  for (const auto& bag : ripple.hops) t.hops.push_back(hop_response<Real>(params, bag, candidate));

  std::vector<Real> out(d, Real(0));
  if (options.fusion == Fusion::sum) {
    std::vector<Real> input(candidate.begin(), candidate.end());
    for (const auto& hop : t.hops) axpy<Real>(Real(1), hop.response, input);
    matvec<Real>(params.fusion(0), input, out);
    t.fusion_inputs.push_back(std::move(input));
    return out;
  }

  if (params.fusion_count() != t.hops.size())
    throw DataError("recursive fusion needs one matrix per hop");
  std::vector<Real> prev(d, Real(0));
  for (std::size_t k = 0; k < t.hops.size(); ++k) {
    std::vector<Real> input = prev;
    axpy<Real>(Real(1), t.hops[k].response, input);
    if (k + 1 == t.hops.size()) axpy<Real>(Real(1), candidate, input);
    matvec<Real>(params.fusion(k), input, prev);
    t.fusion_inputs.push_back(std::move(input));
  }
  return prev;
}

template <typename Real>
Real relation_score(const ModelParams<Real>& params, std::span<const Real> user_rep, RelationId relation) {
  if (static_cast<std::size_t>(relation) == params.shape().num_relations) return Real(0);
  return dot<Real>(user_rep, params.relation_vector(relation));
}

template <typename Real>
NeighborAggregate<Real> neighbor_aggregate(const ModelParams<Real>& params, std::span<const Real> user_rep,
                                           const NeighborSample& sample) {
  NeighborAggregate<Real> out;
  out.weights.resize(sample.neighbors.size());
  for (std::size_t k = 0; k < sample.neighbors.size(); ++k)
    out.weights[k] = relation_score<Real>(params, user_rep, sample.neighbors[k].relation);
  softmax<Real>(out.weights, out.weights);
  out.value.assign(params.dim(), Real(0));
  for (std::size_t k = 0; k < sample.neighbors.size(); ++k)
    axpy<Real>(out.weights[k], params.entity(sample.neighbors[k].neighbor), out.value);
  return out;
}

template <typename Real>
std::vector<Real> item_representation(const ModelParams<Real>& params, const ReceptiveField& field,
                                      std::span<const Real> user_rep, ItemTrace<Real>* trace) {
  const std::size_t d = params.dim();
  const std::size_t layers = params.layers();
  if (layers == 0) {
    auto v = params.entity(field.entities.at(0).at(0));
    return {v.begin(), v.end()};
  }
  if (field.depth() < layers) throw DataError("receptive field shallower than the aggregation depth");
  const std::size_t fanout = field.fanout;

  ItemTrace<Real> local;
  ItemTrace<Real>& t = trace ? *trace : local;
  t.layers = layers;
  t.attention.assign(layers, {});
  for (std::size_t j = 0; j < layers; ++j) {
    const auto& rels = field.relations[j + 1];
    auto& w = t.attention[j];
    w.resize(rels.size());
    for (std::size_t c = 0; c < rels.size(); ++c) w[c] = relation_score<Real>(params, user_rep, rels[c]);
    for (std::size_t n = 0; n < field.entities[j].size(); ++n) {
      std::span<Real> bag(w.data() + n * fanout, fanout);
      softmax<Real>(bag, bag);
    }
  }

  t.reps.assign(layers + 1, {});
  t.mixed.assign(layers, {});
  t.activation.assign(layers, {});
  t.reps[0].resize(layers + 1);
  for (std::size_t j = 0; j <= layers; ++j) {
    auto& level = t.reps[0][j];
    level.resize(field.entities[j].size() * d);
    for (std::size_t n = 0; n < field.entities[j].size(); ++n) {
      auto e = params.entity(field.entities[j][n]);
      std::copy(e.begin(), e.end(), level.begin() + static_cast<std::ptrdiff_t>(n * d));
    }
  }

  for (std::size_t l = 0; l < layers; ++l) {
    const bool last = l + 1 == layers;
    const std::size_t levels = layers - l;  // levels updated this iteration
    t.reps[l + 1].resize(levels);
    t.mixed[l].resize(levels);
    t.activation[l].resize(levels);
    auto weight = params.agg_weight(l);
    auto bias = params.agg_bias(l);
    for (std::size_t j = 0; j < levels; ++j) {
      const std::size_t nodes = field.entities[j].size();
      auto& mixed = t.mixed[l][j];
      auto& act = t.activation[l][j];
      auto& next = t.reps[l + 1][j];
      mixed.assign(nodes * d, Real(0));
      act.assign(nodes * d, Real(0));
      next.assign(nodes * d, Real(0));
      for (std::size_t n = 0; n < nodes; ++n) {
        auto m = slice(mixed, n, d);
        auto self = slice(t.reps[l][j], n, d);
        std::copy(self.begin(), self.end(), m.begin());
        for (std::size_t k = 0; k < fanout; ++k) {
          const std::size_t c = n * fanout + k;
          axpy<Real>(t.attention[j][c], slice(t.reps[l][j + 1], c, d), m);
        }
        auto a = slice(act, n, d);
        matvec<Real>(weight, m, a);
        auto o = slice(next, n, d);
        for (std::size_t p = 0; p < d; ++p) {
          a[p] += bias[p];
          o[p] = last ? std::tanh(a[p]) : std::max(a[p], Real(0));
        }
      }
    }
  }
  return t.reps[layers][0];
}

template <typename Real>
std::vector<Real> item_representation(const ModelParams<Real>& params, EntityId item_entity,
                                      std::span<const Real> user_rep, const KnowledgeGraph& kg,
                                      const Hyperparams& hp, Rng& rng) {
  NeighborCache cache(kg, hp.n_e, rng());
  auto field = sample_receptive_field(cache, item_entity, params.layers());
  return item_representation<Real>(params, field, user_rep);
}

template <typename Real>
Real predict_ctr(std::span<const Real> user_rep, std::span<const Real> item_rep) {
  return sigmoid<Real>(dot<Real>(item_rep, user_rep));
}

template <typename Real>
Real forward(const ModelParams<Real>& params, const ExampleInput& input, const ModelOptions& options,
             ForwardTrace<Real>& trace) {
  auto v = params.entity(input.item_entity);
  trace.candidate.assign(v.begin(), v.end());
  if (options.user_path == UserPath::ripple) {
    if (!input.ripple) throw DataError("example has no ripple set");
    trace.user_rep = user_representation<Real>(params, *input.ripple, v, options, &trace.user);
  } else {
    auto u = params.user(input.user);
    trace.user_rep.assign(u.begin(), u.end());
  }
  if (params.layers() > 0) {
    if (!input.field) throw DataError("example has no receptive field");
    trace.item_rep = item_representation<Real>(params, *input.field, trace.user_rep, &trace.item);
  } else {
    trace.item_rep = trace.candidate;
  }
  trace.logit = dot<Real>(trace.item_rep, trace.user_rep);
  trace.prediction = sigmoid<Real>(trace.logit);
  return trace.prediction;
}

// ---------------------------------------------------------------------------
// Backward

namespace {

template <typename Real>
void backward_hop(ModelParams<Real>& params, std::span<const Triple> bag, const HopTrace<Real>& hop,
                  std::span<const Real> candidate, std::span<const Real> d_response, std::span<Real> d_candidate) {
  const std::size_t d = params.dim();
  const std::size_t n = bag.size();
  std::vector<Real> d_attention(n);
  Real mean = 0;
  for (std::size_t i = 0; i < n; ++i) {
    d_attention[i] = dot<Real>(params.entity(bag[i].tail), d_response);
    mean += hop.attention[i] * d_attention[i];
    axpy<Real>(hop.attention[i], d_response, params.entity_grad(bag[i].tail));
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Real d_score = hop.attention[i] * (d_attention[i] - mean);
    if (d_score == Real(0)) continue;
    axpy<Real>(d_score, slice(hop.projected, i, d), d_candidate);
    outer_add<Real>(params.relation_matrix_grad(bag[i].relation), candidate, params.entity(bag[i].head), d_score);
    matvec_t_add<Real>(params.relation_matrix(bag[i].relation), candidate, d_score, params.entity_grad(bag[i].head));
  }
}

template <typename Real>
void backward_user(ModelParams<Real>& params, const RippleSet& ripple, const ForwardTrace<Real>& trace,
                   const ModelOptions& options, std::span<const Real> d_user, std::span<Real> d_candidate) {
  const std::size_t d = params.dim();
  const std::size_t hops = trace.user.hops.size();
  std::vector<std::vector<Real>> d_response(hops, std::vector<Real>(d, Real(0)));

  if (options.fusion == Fusion::sum) {
    std::vector<Real> d_input(d, Real(0));
    matvec_t_add<Real>(params.fusion(0), d_user, Real(1), d_input);
    outer_add<Real>(params.fusion_grad(0), d_user, trace.user.fusion_inputs[0], Real(1));
    axpy<Real>(Real(1), d_input, d_candidate);
    for (auto& g : d_response) g = d_input;
  } else {
    std::vector<Real> g(d_user.begin(), d_user.end());
    for (std::size_t k = hops; k-- > 0;) {
      std::vector<Real> d_input(d, Real(0));
      matvec_t_add<Real>(params.fusion(k), g, Real(1), d_input);
      outer_add<Real>(params.fusion_grad(k), g, trace.user.fusion_inputs[k], Real(1));
      d_response[k] = d_input;
      if (k + 1 == hops) axpy<Real>(Real(1), d_input, d_candidate);
      g = std::move(d_input);
    }
  }

  for (std::size_t k = 0; k < hops; ++k)
    backward_hop<Real>(params, ripple.hops[k], trace.user.hops[k], trace.candidate, d_response[k], d_candidate);
}

template <typename Real>
void backward_item(ModelParams<Real>& params, const ReceptiveField& field, const ForwardTrace<Real>& trace,
                   std::span<const Real> d_item, std::span<Real> d_user) {
  const std::size_t d = params.dim();
  const std::size_t layers = params.layers();
  const std::size_t fanout = field.fanout;
  const auto& t = trace.item;

  // d_reps[l][j] mirrors t.reps[l][j]
  std::vector<std::vector<std::vector<Real>>> d_reps(layers + 1);
  for (std::size_t l = 0; l <= layers; ++l) {
    d_reps[l].resize(t.reps[l].size());
    for (std::size_t j = 0; j < t.reps[l].size(); ++j) d_reps[l][j].assign(t.reps[l][j].size(), Real(0));
  }
  std::copy(d_item.begin(), d_item.end(), d_reps[layers][0].begin());
  std::vector<std::vector<Real>> d_weights(layers);
  for (std::size_t j = 0; j < layers; ++j) d_weights[j].assign(t.attention[j].size(), Real(0));

  std::vector<Real> g(d);
  std::vector<Real> d_mixed(d);
  for (std::size_t l = layers; l-- > 0;) {
    const bool last = l + 1 == layers;
    const std::size_t levels = layers - l;
    auto weight = params.agg_weight(l);
    auto weight_grad = params.agg_weight_grad(l);
    auto bias_grad = params.agg_bias_grad(l);
    for (std::size_t j = 0; j < levels; ++j) {
      const std::size_t nodes = field.entities[j].size();
      for (std::size_t n = 0; n < nodes; ++n) {
        auto d_out = slice(d_reps[l + 1][j], n, d);
        auto act = slice(t.activation[l][j], n, d);
        auto out = slice(t.reps[l + 1][j], n, d);
        bool any = false;
        for (std::size_t p = 0; p < d; ++p) {
          const Real slope = last ? Real(1) - out[p] * out[p] : (act[p] > Real(0) ? Real(1) : Real(0));
          g[p] = d_out[p] * slope;
          any = any || g[p] != Real(0);
        }
        if (!any) continue;
        axpy<Real>(Real(1), g, bias_grad);
        outer_add<Real>(weight_grad, g, slice(t.mixed[l][j], n, d), Real(1));
        std::fill(d_mixed.begin(), d_mixed.end(), Real(0));
        matvec_t_add<Real>(weight, g, Real(1), d_mixed);
        axpy<Real>(Real(1), d_mixed, slice(d_reps[l][j], n, d));
        for (std::size_t k = 0; k < fanout; ++k) {
          const std::size_t c = n * fanout + k;
          axpy<Real>(t.attention[j][c], d_mixed, slice(d_reps[l][j + 1], c, d));
          d_weights[j][c] += dot<Real>(slice(t.reps[l][j + 1], c, d), d_mixed);
        }
      }
    }
  }

  // attention weights -> relation scores -> (user rep, relation vectors)
  const auto null_relation = static_cast<RelationId>(params.shape().num_relations);
  for (std::size_t j = 0; j < layers; ++j) {
    const auto& rels = field.relations[j + 1];
    for (std::size_t n = 0; n < field.entities[j].size(); ++n) {
      Real mean = 0;
      for (std::size_t k = 0; k < fanout; ++k) mean += t.attention[j][n * fanout + k] * d_weights[j][n * fanout + k];
      for (std::size_t k = 0; k < fanout; ++k) {
        const std::size_t c = n * fanout + k;
        const Real d_score = t.attention[j][c] * (d_weights[j][c] - mean);
        if (rels[c] == null_relation || d_score == Real(0)) continue;
        axpy<Real>(d_score, params.relation_vector(rels[c]), d_user);
        axpy<Real>(d_score, trace.user_rep, params.relation_vector_grad(rels[c]));
      }
    }
  }

  for (std::size_t j = 0; j <= layers; ++j)
    for (std::size_t n = 0; n < field.entities[j].size(); ++n)
      axpy<Real>(Real(1), slice(d_reps[0][j], n, d), params.entity_grad(field.entities[j][n]));
}

template <typename Real>
void backward(ModelParams<Real>& params, const ExampleInput& input, const ForwardTrace<Real>& trace,
              const ModelOptions& options, Real d_logit) {
  const std::size_t d = params.dim();
  std::vector<Real> d_user(d, Real(0));
  std::vector<Real> d_item(d, Real(0));
  axpy<Real>(d_logit, trace.item_rep, d_user);
  axpy<Real>(d_logit, trace.user_rep, d_item);

  std::vector<Real> d_candidate(d, Real(0));
  if (params.layers() > 0)
    backward_item<Real>(params, *input.field, trace, d_item, d_user);
  else
    d_candidate = d_item;

  if (options.user_path == UserPath::ripple)
    backward_user<Real>(params, *input.ripple, trace, options, d_user, d_candidate);
  else
    axpy<Real>(Real(1), d_user, params.user_grad(input.user));

  axpy<Real>(Real(1), d_candidate, params.entity_grad(input.item_entity));
}

template <typename Real>
double squared_norm(std::span<const Real> v) {
  double s = 0;
  for (auto x : v) s += static_cast<double>(x) * static_cast<double>(x);
  return s;
}

template <typename Real>
double l2_penalty(const ModelParams<Real>& params, const TouchedRows& rows) {
  double s = 0;
  for (auto e : rows.entities) s += squared_norm(params.entity(e));
  for (auto r : rows.relation_matrices) s += squared_norm(params.relation_matrix(r));
  for (auto r : rows.relation_vectors) s += squared_norm(params.relation_vector(r));
  for (auto u : rows.users) s += squared_norm(params.user(u));
  for (std::size_t k = 0; k < params.fusion_count(); ++k) s += squared_norm(params.fusion(k));
  for (std::size_t l = 0; l < params.layers(); ++l) {
    s += squared_norm(params.agg_weight(l));
    s += squared_norm(params.agg_bias(l));
  }
  return s;
}

template <typename Real>
void l2_gradient(ModelParams<Real>& params, const TouchedRows& rows, double l2) {
  const auto scale = static_cast<Real>(2.0 * l2);
  auto add = [scale](std::span<const Real> value, std::span<Real> grad) { axpy<Real>(scale, value, grad); };
  for (auto e : rows.entities) add(params.entity(e), params.entity_grad(e));
  for (auto r : rows.relation_matrices) add(params.relation_matrix(r), params.relation_matrix_grad(r));
  for (auto r : rows.relation_vectors) add(params.relation_vector(r), params.relation_vector_grad(r));
  for (auto u : rows.users) add(params.user(u), params.user_grad(u));
  for (std::size_t k = 0; k < params.fusion_count(); ++k) add(params.fusion(k), params.fusion_grad(k));
  for (std::size_t l = 0; l < params.layers(); ++l) {
    add(params.agg_weight(l), params.agg_weight_grad(l));
    add(params.agg_bias(l), params.agg_bias_grad(l));
  }
}

template <typename Real>
BatchLoss run_batch(ModelParams<Real>& params, std::span<const LabeledInput> batch, double l2,
                    const ModelOptions& options, bool with_gradient) {
  if (batch.empty()) throw DataError("empty batch");
  const double scale = 1.0 / static_cast<double>(batch.size());
  const auto null_relation = static_cast<RelationId>(params.shape().num_relations);
  TouchedRows rows;
  ForwardTrace<Real> trace;
  double total = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& ex = batch[i];
    forward<Real>(params, ex.input, options, trace);
    auto ce = cross_entropy(static_cast<double>(trace.prediction), ex.label);
    double sign = 1.0;
    if (options.loss == LossVariant::literal && ex.label == 0) sign = -1.0;
    const double contribution = sign * ce.loss;
    if (!std::isfinite(contribution) || !std::isfinite(static_cast<double>(trace.logit)))
      throw DivergenceError("non-finite loss at batch example " + std::to_string(i) + " (user " +
                            std::to_string(ex.input.user) + ", entity " + std::to_string(ex.input.item_entity) + ")");
    total += contribution;
    if (l2 > 0) rows.add(ex.input, options, null_relation);
    if (with_gradient && ce.dlogit != 0.0)
      backward<Real>(params, ex.input, trace, options, static_cast<Real>(sign * ce.dlogit * scale));
  }
  BatchLoss out;
  out.cross_entropy = total * scale;
  if (l2 > 0) {
    rows.finalize();
    out.l2 = l2 * l2_penalty(params, rows);
    if (with_gradient) l2_gradient(params, rows, l2);
  }
  out.loss = out.cross_entropy + out.l2;
  return out;
}

}  // namespace

CrossEntropy cross_entropy(double prediction, int label) {
  constexpr double kLow = 1e-7;
  constexpr double kHigh = 1.0 - 1e-7;
  const double clamped = std::clamp(prediction, kLow, kHigh);
  CrossEntropy out;
  out.loss = label == 1 ? -std::log(clamped) : -std::log(1.0 - clamped);
  const bool saturated = prediction < kLow || prediction > kHigh;
  out.dlogit = saturated ? 0.0 : prediction - static_cast<double>(label);
  return out;
}

void TouchedRows::add(const ExampleInput& input, const ModelOptions& options, RelationId null_relation) {
  entities.push_back(input.item_entity);
  if (options.user_path == UserPath::ripple && input.ripple) {
    for (const auto& bag : input.ripple->hops) {
      for (const auto& t : bag) {
        entities.push_back(t.head);
        entities.push_back(t.tail);
        relation_matrices.push_back(t.relation);
      }
    }
  } else if (options.user_path == UserPath::table) {
    users.push_back(input.user);
  }
  if (input.field) {
    const auto& f = *input.field;
    for (const auto& level : f.entities) entities.insert(entities.end(), level.begin(), level.end());
    for (const auto& level : f.relations)
      for (auto r : level)
        if (r != null_relation) relation_vectors.push_back(r);
  }
}

void TouchedRows::finalize() {
  sort_unique(entities);
  sort_unique(relation_matrices);
  sort_unique(relation_vectors);
  sort_unique(users);
}

template <typename Real>
BatchLoss batch_loss(const ModelParams<Real>& params, std::span<const LabeledInput> batch, double l2,
                     const ModelOptions& options) {
  // forward only; the const_cast never reaches a gradient write
  return run_batch<Real>(const_cast<ModelParams<Real>&>(params), batch, l2, options, false);
}

template <typename Real>
BatchLoss forward_backward(ModelParams<Real>& params, std::span<const LabeledInput> batch, double l2,
                           const ModelOptions& options) {
  return run_batch<Real>(params, batch, l2, options, true);
}

#define RKGCN_INSTANTIATE(Real)                                                                                 \
  template class ModelParams<Real>;                                                                             \
  template HopTrace<Real> hop_response<Real>(const ModelParams<Real>&, std::span<const Triple>,                 \
                                             std::span<const Real>);                                            \
  template std::vector<Real> user_representation<Real>(const ModelParams<Real>&, const RippleSet&,              \
                                                       std::span<const Real>, const ModelOptions&,              \
                                                       UserTrace<Real>*);                                       \
  template Real relation_score<Real>(const ModelParams<Real>&, std::span<const Real>, RelationId);              \
  template NeighborAggregate<Real> neighbor_aggregate<Real>(const ModelParams<Real>&, std::span<const Real>,    \
                                                            const NeighborSample&);                             \
  template std::vector<Real> item_representation<Real>(const ModelParams<Real>&, const ReceptiveField&,         \
                                                       std::span<const Real>, ItemTrace<Real>*);                \
  template std::vector<Real> item_representation<Real>(const ModelParams<Real>&, EntityId,                      \
                                                       std::span<const Real>, const KnowledgeGraph&,            \
                                                       const Hyperparams&, Rng&);                               \
  template Real predict_ctr<Real>(std::span<const Real>, std::span<const Real>);                                \
  template Real forward<Real>(const ModelParams<Real>&, const ExampleInput&, const ModelOptions&,               \
                              ForwardTrace<Real>&);                                                             \
  template BatchLoss batch_loss<Real>(const ModelParams<Real>&, std::span<const LabeledInput>, double,          \
                                      const ModelOptions&);                                                     \
  template BatchLoss forward_backward<Real>(ModelParams<Real>&, std::span<const LabeledInput>, double,          \
                                            const ModelOptions&);

RKGCN_INSTANTIATE(float)
RKGCN_INSTANTIATE(double)

#undef RKGCN_INSTANTIATE

}  // namespace rkgcn
