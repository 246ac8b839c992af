#include "psm/affine.hpp"

#include <cmath>

namespace psm::affine {

namespace {

void require_compatible(const AffinePair& p2, const AffinePair& p1) {
  if (p2.e.kind != p1.e.kind)
    throw DimensionError("affine_combine: mixed E kinds");
  if (!p2.f.same_shape(p1.f))
    throw DimensionError("affine_combine: state shapes differ");
  switch (p2.e.kind) {
    case OpKind::FullLeft:
    case OpKind::FullRight:
      if (!p2.e.mat.same_shape(p1.e.mat))
        throw DimensionError("affine_combine: E matrix shapes differ");
      break;
    case OpKind::DiagRows:
    case OpKind::DiagCols:
      if (p2.e.diag.size() != p1.e.diag.size())
        throw DimensionError("affine_combine: E diagonal lengths differ");
      break;
    case OpKind::Scalar:
      break;
  }
}

}  // namespace

Matrix affine_apply(const AffineOp& e, const Matrix& s) {
  switch (e.kind) {
    case OpKind::FullLeft:
      return matmul(e.mat, s);
    case OpKind::FullRight:
      return matmul(s, e.mat);
    case OpKind::DiagRows:
      return scale_rows(s, e.diag);
    case OpKind::DiagCols:
      return scale_cols(s, e.diag);
    case OpKind::Scalar:
      return scale(s, e.scalar);
  }
  throw Error("affine_apply: bad kind");
}

AffinePair affine_combine(const AffinePair& p2, const AffinePair& p1) {
  require_compatible(p2, p1);
  AffinePair out;
  out.e.kind = p2.e.kind;
  switch (p2.e.kind) {
    case OpKind::FullLeft:
      // (E2 o E1).s = E2 (E1 s): compose as E2 * E1.
      out.e.mat = matmul(p2.e.mat, p1.e.mat);
      break;
    case OpKind::FullRight:
      // (E2 o E1).s = (s E1) E2: compose as E1 * E2.
      out.e.mat = matmul(p1.e.mat, p2.e.mat);
      break;
    case OpKind::DiagRows:
    case OpKind::DiagCols:
      out.e.diag = hadamard(p2.e.diag, p1.e.diag);
      break;
    case OpKind::Scalar:
      out.e.scalar = p2.e.scalar * p1.e.scalar;
      break;
  }
  out.f = add(p2.f, affine_apply(p2.e, p1.f));
  return out;
}

AffinePair affine_identity(OpKind kind, std::size_t state_rows,
                           std::size_t state_cols) {
  AffinePair p;
  p.e.kind = kind;
  switch (kind) {
    case OpKind::FullLeft:
      p.e.mat = Matrix::identity(state_rows);
      break;
    case OpKind::FullRight:
      p.e.mat = Matrix::identity(state_cols);
      break;
    case OpKind::DiagRows:
      p.e.diag = Vector(state_rows);
      for (auto& x : p.e.diag.data) x = 1.0;
      break;
    case OpKind::DiagCols:
      p.e.diag = Vector(state_cols);
      for (auto& x : p.e.diag.data) x = 1.0;
      break;
    case OpKind::Scalar:
      p.e.scalar = 1.0;
      break;
  }
  p.f = Matrix(state_rows, state_cols);
  return p;
}

scan::Aggregator<AffinePair> affine_aggregator() {
  return {[](const AffinePair& a, const AffinePair& b) {
            // Scan inputs arrive oldest first; the newer element is the
            // right argument, so it supplies the outer (E2, f2) role.
            return affine_combine(b, a);
          },
          /*claims_associative=*/true};
}

std::vector<Matrix> sequential_affine(const std::vector<AffinePair>& pairs) {
  std::vector<Matrix> states;
  states.reserve(pairs.size());
  if (pairs.empty()) return states;
  Matrix s(pairs[0].f.rows, pairs[0].f.cols);
  for (const auto& p : pairs) {
    if (!p.f.same_shape(s))
      throw DimensionError("sequential_affine: state shapes differ");
    s = add(affine_apply(p.e, s), p.f);
    states.push_back(s);
  }
  return states;
}

// ---------------------------------------------------------------------------
// Layer zoo

const std::vector<std::pair<std::string, LayerKind>>& layer_kind_names() {
  static const std::vector<std::pair<std::string, LayerKind>> names = {
      {"linear-attention", LayerKind::LinearAttention},
      {"deltanet", LayerKind::DeltaNet},
      {"gated-deltanet", LayerKind::GatedDeltaNet},
      {"retnet", LayerKind::RetNet},
      {"mamba2", LayerKind::Mamba2},
      {"mlstm", LayerKind::MLstm},
      {"gated-rfa", LayerKind::GatedRfa},
      {"s4", LayerKind::S4},
      {"mamba", LayerKind::Mamba},
      {"gla", LayerKind::Gla},
  };
  return names;
}

LayerKind parse_layer_kind(const std::string& name) {
  for (const auto& [n, k] : layer_kind_names())
    if (n == name) return k;
  throw Error("unknown layer kind: " + name);
}

std::string layer_kind_name(LayerKind kind) {
  for (const auto& [n, k] : layer_kind_names())
    if (k == kind) return n;
  throw Error("unnamed layer kind");
}

bool layer_has_normalizer(LayerKind kind) {
  return kind == LayerKind::LinearAttention || kind == LayerKind::MLstm;
}

std::size_t layer_state_rows(const LayerConfig& cfg) {
  return cfg.value_dim + (layer_has_normalizer(cfg.kind) ? 1 : 0);
}

namespace {

// v k^T, optionally with an extra bottom row holding k^T scaled by
// `norm_gain` (the running-normaliser coordinate).
Matrix outer_with_normalizer(const Vector& k, const Vector& v, bool normalizer,
                             double gain, double norm_gain) {
  Matrix f(v.size() + (normalizer ? 1 : 0), k.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = 0; j < k.size(); ++j) f(i, j) = gain * v[i] * k[j];
  if (normalizer)
    for (std::size_t j = 0; j < k.size(); ++j)
      f(v.size(), j) = norm_gain * k[j];
  return f;
}

AffineOp scalar_op(double value) {
  AffineOp e;
  e.kind = OpKind::Scalar;
  e.scalar = value;
  return e;
}

}  // namespace

AffinePair linear_attention_pair(const Vector& k, const Vector& v) {
  return {scalar_op(1.0), outer_with_normalizer(k, v, true, 1.0, 1.0)};
}

AffinePair deltanet_pair(const Vector& k, const Vector& v, double beta) {
  AffinePair p;
  p.e.kind = OpKind::FullRight;
  p.e.mat = Matrix::identity(k.size());
  for (std::size_t i = 0; i < k.size(); ++i)
    for (std::size_t j = 0; j < k.size(); ++j)
      p.e.mat(i, j) -= beta * k[i] * k[j];
  p.f = outer_with_normalizer(k, v, false, beta, 0.0);
  return p;
}

AffinePair gated_deltanet_pair(const Vector& k, const Vector& v, double beta,
                               double alpha) {
  AffinePair p = deltanet_pair(k, v, beta);
  p.e.mat = scale(p.e.mat, alpha);
  return p;
}

AffinePair retnet_pair(const Vector& k, const Vector& v, double gamma) {
  return {scalar_op(gamma), outer_with_normalizer(k, v, false, 1.0, 0.0)};
}

AffinePair mamba2_pair(const Vector& k, const Vector& v, double gamma) {
  return {scalar_op(gamma), outer_with_normalizer(k, v, false, 1.0, 0.0)};
}

AffinePair mlstm_pair(const Vector& k, const Vector& v, double forget_gate,
                      double input_gate) {
  return {scalar_op(forget_gate),
          outer_with_normalizer(k, v, true, input_gate, input_gate)};
}

AffinePair gated_rfa_pair(const Vector& k, const Vector& v, double gate) {
  return {scalar_op(gate), outer_with_normalizer(k, v, false, 1.0 - gate, 0.0)};
}

AffinePair s4_pair(const Vector& v, const Vector& alpha, const Matrix& b_mat) {
  if (alpha.size() != v.size() || b_mat.rows != v.size())
    throw DimensionError("s4_pair: dimension mismatch");
  AffinePair p;
  p.e.kind = OpKind::DiagRows;
  p.e.diag = exp_neg(alpha);
  // B (.) (v 1^T): column j of f is b[:, j] (.) v.
  p.f = Matrix(b_mat.rows, b_mat.cols);
  for (std::size_t i = 0; i < b_mat.rows; ++i)
    for (std::size_t j = 0; j < b_mat.cols; ++j) p.f(i, j) = b_mat(i, j) * v[i];
  return p;
}

AffinePair mamba_pair(const Vector& k, const Vector& v, const Vector& alpha) {
  if (alpha.size() != v.size())
    throw DimensionError("mamba_pair: gate length != value length");
  AffinePair p;
  p.e.kind = OpKind::DiagRows;
  p.e.diag = exp_neg(alpha);
  p.f = outer(hadamard(alpha, v), k);
  return p;
}

AffinePair gla_pair(const Vector& k, const Vector& v, const Vector& alpha) {
  if (alpha.size() != k.size())
    throw DimensionError("gla_pair: gate length != key length");
  AffinePair p;
  p.e.kind = OpKind::DiagCols;
  p.e.diag = alpha;
  p.f = outer(v, k);
  return p;
}

namespace {

bool needs_key_projection(LayerKind kind) { return kind != LayerKind::S4; }

// Gate parameter names per kind; scalar gates are token_dim x 1 projections,
// diagonal gates project to the gated axis.
struct GateSpec {
  std::vector<WeightBundle::Entry> entries;
};

GateSpec gate_spec(const LayerConfig& cfg) {
  const std::size_t d = cfg.token_dim;
  switch (cfg.kind) {
    case LayerKind::DeltaNet:
      return {{{"w_beta", d, 1}}};
    case LayerKind::GatedDeltaNet:
      return {{{"w_beta", d, 1}, {"w_gate", d, 1}}};
    case LayerKind::Mamba2:
    case LayerKind::GatedRfa:
      return {{{"w_gate", d, 1}}};
    case LayerKind::MLstm:
      return {{{"w_gate_f", d, 1}, {"w_gate_i", d, 1}}};
    case LayerKind::S4:
    case LayerKind::Mamba:
      return {{{"w_alpha", d, cfg.value_dim}}};
    case LayerKind::Gla:
      return {{{"w_alpha", d, cfg.key_dim}}};
    case LayerKind::LinearAttention:
    case LayerKind::RetNet:
      return {};
  }
  return {};
}

Vector project(const Vector& x, const Matrix& w) {
  if (x.size() != w.rows)
    throw DimensionError("projection: token length != weight rows");
  Vector out(w.cols);
  for (std::size_t j = 0; j < w.cols; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * w(i, j);
    out[j] = acc;
  }
  return out;
}

double gate_scalar(const Vector& x, const Matrix& w) {
  return sigmoid(project(x, w)[0]);
}

Vector gate_vector(const Vector& x, const Matrix& w) {
  Vector g = project(x, w);
  for (auto& v : g.data) v = sigmoid(v);
  return g;
}

}  // namespace

std::vector<WeightBundle::Entry> layer_weight_manifest(const LayerConfig& cfg) {
  std::vector<WeightBundle::Entry> out;
  if (needs_key_projection(cfg.kind))
    out.push_back({"w_k", cfg.token_dim, cfg.key_dim});
  out.push_back({"w_v", cfg.token_dim, cfg.value_dim});
  for (auto& e : gate_spec(cfg).entries) out.push_back(e);
  if (cfg.kind == LayerKind::S4)
    out.push_back({"b_mat", cfg.value_dim, cfg.key_dim});
  return out;
}

WeightBundle make_layer_weights(const LayerConfig& cfg, std::uint64_t seed) {
  WeightBundle w;
  w.seed = seed;
  std::uint64_t i = 0;
  for (const auto& e : layer_weight_manifest(cfg)) {
    const double scl = 1.0 / std::sqrt(static_cast<double>(e.rows));
    w.add(e.name, seeded_init(e.rows, e.cols, mix_seed(seed, ++i), scl));
  }
  return w;
}

std::vector<Vector> make_layer_inputs(const LayerConfig& cfg, std::size_t n,
                                      std::uint64_t seed) {
  SplitMix64 rng(mix_seed(seed, 0x1091));
  std::vector<Vector> out(n, Vector(cfg.token_dim));
  for (auto& x : out)
    for (auto& v : x.data) v = rng.next_signed(1.0);
  return out;
}

std::vector<AffinePair> make_layer_pairs(const LayerConfig& cfg,
                                         const std::vector<Vector>& inputs,
                                         const WeightBundle& weights) {
  std::vector<AffinePair> pairs;
  pairs.reserve(inputs.size());
  for (const Vector& x : inputs) {
    const Vector v = project(x, weights.at("w_v"));
    Vector k;
    if (needs_key_projection(cfg.kind)) k = project(x, weights.at("w_k"));
    switch (cfg.kind) {
      case LayerKind::LinearAttention:
        pairs.push_back(linear_attention_pair(k, v));
        break;
      case LayerKind::DeltaNet:
        pairs.push_back(deltanet_pair(k, v, gate_scalar(x, weights.at("w_beta"))));
        break;
      case LayerKind::GatedDeltaNet:
        pairs.push_back(gated_deltanet_pair(
            k, v, gate_scalar(x, weights.at("w_beta")),
            gate_scalar(x, weights.at("w_gate"))));
        break;
      case LayerKind::RetNet:
        pairs.push_back(retnet_pair(k, v, cfg.retnet_gamma));
        break;
      case LayerKind::Mamba2:
        pairs.push_back(mamba2_pair(k, v, gate_scalar(x, weights.at("w_gate"))));
        break;
      case LayerKind::MLstm:
        pairs.push_back(mlstm_pair(k, v, gate_scalar(x, weights.at("w_gate_f")),
                                   gate_scalar(x, weights.at("w_gate_i"))));
        break;
      case LayerKind::GatedRfa:
        pairs.push_back(gated_rfa_pair(k, v, gate_scalar(x, weights.at("w_gate"))));
        break;
      case LayerKind::S4:
        pairs.push_back(s4_pair(v, gate_vector(x, weights.at("w_alpha")),
                                weights.at("b_mat")));
        break;
      case LayerKind::Mamba:
        pairs.push_back(mamba_pair(k, v, gate_vector(x, weights.at("w_alpha"))));
        break;
      case LayerKind::Gla:
        pairs.push_back(gla_pair(k, v, gate_vector(x, weights.at("w_alpha"))));
        break;
    }
  }
  return pairs;
}

std::vector<Matrix> layer_states_via_scan(const LayerConfig& cfg,
                                          const std::vector<Vector>& inputs,
                                          const WeightBundle& weights,
                                          ScanPath path) {
  const auto pairs = make_layer_pairs(cfg, inputs, weights);
  const auto agg = affine_aggregator();
  std::vector<Matrix> states;
  states.reserve(pairs.size());
  if (pairs.empty()) return states;

  if (path == ScanPath::Online) {
    const auto res = scan::scan_online(pairs, agg);
    for (const auto& p : res.emissions) states.push_back(p.f);
    return states;
  }

  // Static path: right-pad with the algebraic identity so the padded length
  // exceeds the real length; the inclusive state at t is then the exclusive
  // prefix at t+1 and padding never enters a consumed prefix.
  std::vector<AffinePair> padded = pairs;
  std::size_t target = 1;
  while (target <= pairs.size()) target *= 2;
  const AffinePair pad = affine_identity(pairs[0].e.kind, pairs[0].f.rows,
                                         pairs[0].f.cols);
  padded.resize(target, pad);
  const auto res = scan::scan_static(padded, agg);
  for (std::size_t t = 0; t < pairs.size(); ++t)
    states.push_back(res.prefixes[t + 1]->f);
  return states;
}

Matrix layer_readout(const LayerConfig& cfg, const Matrix& state) {
  if (!layer_has_normalizer(cfg.kind)) return state;
  if (state.rows != cfg.value_dim + 1)
    throw DimensionError("layer_readout: state missing normaliser row");
  Matrix out(cfg.value_dim, state.cols);
  for (std::size_t j = 0; j < state.cols; ++j) {
    double z = state(cfg.value_dim, j);
    if (std::abs(z) < 1e-9) z = z < 0 ? -1e-9 : 1e-9;
    for (std::size_t i = 0; i < cfg.value_dim; ++i) out(i, j) = state(i, j) / z;
  }
  return out;
}

// ---------------------------------------------------------------------------
// LTI dynamics

AffinePair lti_pair(const Matrix& a, const Matrix& b, const Vector& x) {
  if (a.rows != a.cols) throw DimensionError("lti_pair: A must be square");
  if (b.rows != a.rows || b.cols != x.size())
    throw DimensionError("lti_pair: B incompatible with A or input");
  AffinePair p;
  p.e.kind = OpKind::FullLeft;
  p.e.mat = a;
  Matrix xm(x.size(), 1);
  for (std::size_t i = 0; i < x.size(); ++i) xm(i, 0) = x[i];
  p.f = matmul(b, xm);
  return p;
}

AffinePair lti_prefix_closed_form(const Matrix& a, const Matrix& b,
                                  const std::vector<Vector>& xs,
                                  std::size_t steps) {
  if (a.rows != a.cols) throw DimensionError("closed form: A must be square");
  if (steps > xs.size())
    throw LengthError("closed form: more steps than inputs");

  // Explicit powers A^0..A^steps.
  std::vector<Matrix> pow;
  pow.reserve(steps + 1);
  pow.push_back(Matrix::identity(a.rows));
  for (std::size_t j = 1; j <= steps; ++j) pow.push_back(matmul(pow[j - 1], a));

  Matrix f(a.rows, 1);
  for (std::size_t k = 0; k < steps; ++k) {
    Matrix xm(xs[k].size(), 1);
    for (std::size_t i = 0; i < xs[k].size(); ++i) xm(i, 0) = xs[k][i];
    f = add(f, matmul(pow[steps - 1 - k], matmul(b, xm)));
  }

  AffinePair p;
  p.e.kind = OpKind::FullLeft;
  p.e.mat = pow[steps];
  p.f = f;
  return p;
}

}  // namespace psm::affine
