#pragma once

// Affine state recurrences s_t = E_t . s_{t-1} + f_t and the associative
// pair operator (E2,f2) (+) (E1,f1) = (E2*E1, f2 + E2.f1) that lets the
// scan engine compute every prefix state. E comes in three shapes — full
// matrix, diagonal (broadcast) vector, scalar — and a full matrix may act
// on either side of the state, which fixes the composition order.
//
// Ten recurrent layer families are provided as per-token (E_t, f_t)
// generators over projected keys/values and squashed gates, together with
// the sequential left-to-right recurrence that serves as their oracle.

#include <cstdint>
#include <string>
#include <vector>

#include "psm/matrix.hpp"
#include "psm/scan.hpp"
#include "psm/weights.hpp"

namespace psm::affine {

enum class OpKind {
  FullLeft,   // E.s = E_mat * s      (state as columns, e.g. LTI systems)
  FullRight,  // E.s = s * E_mat      (state as rows, e.g. delta-rule layers)
  DiagRows,   // row i of s scaled by diag[i]
  DiagCols,   // col j of s scaled by diag[j]
  Scalar,
};

struct AffineOp {
  OpKind kind = OpKind::Scalar;
  Matrix mat;          // FullLeft / FullRight
  Vector diag;         // DiagRows / DiagCols
  double scalar = 1.0;  // Scalar
};

struct AffinePair {
  AffineOp e;
  Matrix f;
};

// E.s for the five op shapes.
Matrix affine_apply(const AffineOp& e, const Matrix& s);

// (E2,f2) (+) (E1,f1); newer element on the left, matching how a fold of
// pairs t..0 yields (E-chain, s_t). Shapes and kinds must match.
AffinePair affine_combine(const AffinePair& p2, const AffinePair& p1);

// The algebraic identity (I, 0) for a given op shape and state shape.
AffinePair affine_identity(OpKind kind, std::size_t state_rows,
                           std::size_t state_cols);

scan::Aggregator<AffinePair> affine_aggregator();

// Ground-truth left-to-right recurrence: states s_0..s_{T-1} from s_{-1}=0.
std::vector<Matrix> sequential_affine(const std::vector<AffinePair>& pairs);

// ---------------------------------------------------------------------------
// Layer zoo

enum class LayerKind {
  LinearAttention,
  DeltaNet,
  GatedDeltaNet,
  RetNet,
  Mamba2,
  MLstm,
  GatedRfa,
  S4,
  Mamba,
  Gla,
};

// Canonical command-line spellings: linear-attention, deltanet,
// gated-deltanet, retnet, mamba2, mlstm, gated-rfa, s4, mamba, gla.
const std::vector<std::pair<std::string, LayerKind>>& layer_kind_names();
LayerKind parse_layer_kind(const std::string& name);  // Error on unknown
std::string layer_kind_name(LayerKind kind);

struct LayerConfig {
  LayerKind kind = LayerKind::LinearAttention;
  std::size_t token_dim = 8;
  std::size_t key_dim = 8;
  std::size_t value_dim = 8;
  double retnet_gamma = 0.9;  // fixed decay used by the retnet rows
};

// State shape for a layer: value_dim x key_dim, plus one extra row holding
// the running normaliser for the kinds that carry one (linear-attention,
// mlstm).
std::size_t layer_state_rows(const LayerConfig& cfg);
bool layer_has_normalizer(LayerKind kind);

// Per-token pair builders. Gates are expected in (0, 1) where the layer
// calls for one; the builders do not squash.
AffinePair linear_attention_pair(const Vector& k, const Vector& v);
AffinePair deltanet_pair(const Vector& k, const Vector& v, double beta);
AffinePair gated_deltanet_pair(const Vector& k, const Vector& v, double beta,
                               double alpha);
AffinePair retnet_pair(const Vector& k, const Vector& v, double gamma);
AffinePair mamba2_pair(const Vector& k, const Vector& v, double gamma);
AffinePair mlstm_pair(const Vector& k, const Vector& v, double forget_gate,
                      double input_gate);
AffinePair gated_rfa_pair(const Vector& k, const Vector& v, double gate);
AffinePair s4_pair(const Vector& v, const Vector& alpha, const Matrix& b_mat);
AffinePair mamba_pair(const Vector& k, const Vector& v, const Vector& alpha);
AffinePair gla_pair(const Vector& k, const Vector& v, const Vector& alpha);

// Projection/gate parameters a kind needs, and a seeded instance of them.
std::vector<WeightBundle::Entry> layer_weight_manifest(const LayerConfig& cfg);
WeightBundle make_layer_weights(const LayerConfig& cfg, std::uint64_t seed);

// Seeded token vectors sized to cfg.token_dim.
std::vector<Vector> make_layer_inputs(const LayerConfig& cfg, std::size_t n,
                                      std::uint64_t seed);

// One (E_t, f_t) per token, exactly the kind's update rule with projected
// k/v and sigmoid-squashed gates.
std::vector<AffinePair> make_layer_pairs(const LayerConfig& cfg,
                                         const std::vector<Vector>& inputs,
                                         const WeightBundle& weights);

enum class ScanPath { Static, Online };

// States through the scan engine: the f component of the inclusive pair
// prefixes. Static path pads with the algebraic identity on the right to
// reach a power of two; padding never reaches a real prefix.
std::vector<Matrix> layer_states_via_scan(const LayerConfig& cfg,
                                          const std::vector<Vector>& inputs,
                                          const WeightBundle& weights,
                                          ScanPath path);

// Readout for normaliser-carrying kinds: state rows divided per column by
// the normaliser row, guarded by |z| >= 1e-9. Other kinds return the state.
Matrix layer_readout(const LayerConfig& cfg, const Matrix& state);

// ---------------------------------------------------------------------------
// Linear time-invariant dynamics: s_{t+1} = A s_t + B x_t as pairs (A, B x).

AffinePair lti_pair(const Matrix& a, const Matrix& b, const Vector& x);

// Closed form for the fold of the first `steps` pairs: (A^steps,
// sum_{k<steps} A^{steps-1-k} B x_k), computed from explicit matrix powers
// as an independent check on the pair fold.
AffinePair lti_prefix_closed_form(const Matrix& a, const Matrix& b,
                                  const std::vector<Vector>& xs,
                                  std::size_t steps);

}  // namespace psm::affine
