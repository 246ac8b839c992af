#pragma once

// A forward-only chunked sequence model whose encoder, aggregator and
// prediction head are all causal self-attention stacks:
//
//   encode      — embed a c-token chunk, one pre-norm attention block
//   aggregate   — concatenate two c x d states, run agg_layers blocks over
//                 the 2c window, keep the second half (or apply a learned
//                 2c -> c projection over positions)
//   infer       — run inf_layers blocks over [state; embedded chunk] and
//                 read logits off the chunk's positions
//
// The aggregator is deliberately not associative; results are pinned down
// by the scan engine's fixed combine nesting. The static forward pass and
// the token-by-token streaming decode emit bit-identical logits.

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "psm/matrix.hpp"
#include "psm/pipeline.hpp"
#include "psm/scan.hpp"
#include "psm/weights.hpp"

namespace psm::tpsm {

enum class Compression {
  DropFirstHalf,     // keep positions c..2c-1 of the aggregator output
  LinearProjection,  // learned c x 2c projection over the position axis
};

Compression parse_compression(const std::string& name);
std::string compression_name(Compression c);

struct PsmConfig {
  std::size_t chunk_size = 4;
  std::size_t model_dim = 32;
  std::size_t heads = 2;
  std::size_t agg_layers = 1;
  std::size_t inf_layers = 1;
  std::size_t vocab_size = 64;
  Compression compression = Compression::DropFirstHalf;

  void validate() const;  // Error on an inconsistent configuration
};

// A chunk state is a chunk_size x model_dim block of token features.
using ChunkState = Matrix;

// Parameter names, grouped by module prefix: "embed.*", "enc.*", "agg.*",
// "inf.*", "readout.*". Layer norm gains start at one, biases at zero;
// projections are seeded uniform with 1/sqrt(fan_in) scale.
std::vector<WeightBundle::Entry> psm_weight_manifest(const PsmConfig& cfg);
WeightBundle make_psm_weights(const PsmConfig& cfg, std::uint64_t seed);

// One pre-norm block: x + attn(ln(x)) followed by x + ffn(ln(x)).
Matrix block_forward(const Matrix& x, const WeightBundle& w,
                     const std::string& prefix, std::size_t heads);

ChunkState encode_chunk(const std::vector<TokenId>& tokens,
                        const WeightBundle& w, const PsmConfig& cfg);

ChunkState agg_attention(const ChunkState& s, const ChunkState& x,
                         const WeightBundle& w, const PsmConfig& cfg);

// Logits for a full chunk given its prefix state (empty optional for the
// first chunk). Row j depends only on the state and tokens 0..j.
Matrix infer_chunk(const std::optional<ChunkState>& s,
                   const std::vector<TokenId>& tokens, const WeightBundle& w,
                   const PsmConfig& cfg);

// Same computation over a leading partial chunk (1..chunk_size tokens);
// the rows it returns match the corresponding rows of the full-chunk call
// bit for bit. This is what the streaming decoder evaluates per token.
Matrix infer_tokens(const std::optional<ChunkState>& s,
                    const std::vector<TokenId>& tokens, const WeightBundle& w,
                    const PsmConfig& cfg);

// The three hooks above wired into the generic chunk pipeline. The weight
// bundle and config must outlive the pipeline.
ChunkPipeline<ChunkState> make_attention_pipeline(const WeightBundle& w,
                                                  const PsmConfig& cfg);

// Whole-sequence logits via the static tree scan; token count must be a
// multiple of the chunk size.
Matrix psm_forward_static(const std::vector<TokenId>& tokens,
                          const WeightBundle& w, const PsmConfig& cfg);

struct DecodeResult {
  Matrix logits;          // one row per token, any token count
  scan::ScanTrace trace;  // one row per completed chunk
};

// Token-by-token decode through the binary counter. Logits are bit-identical
// to psm_forward_static on the same sequence.
DecodeResult psm_decode_stream(const std::vector<TokenId>& tokens,
                               const WeightBundle& w, const PsmConfig& cfg);

// Logits export: text CSV or raw little-endian f64, row-major n x vocab.
void write_logits_csv(std::ostream& os, const Matrix& logits);
void write_logits_bin(std::ostream& os, const Matrix& logits);

}  // namespace psm::tpsm
