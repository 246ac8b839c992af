#pragma once

// Chunked forward machinery, generic over the state type and aggregator:
// encode fixed-size chunks, scan the encodings, and predict each chunk from
// its exclusive prefix state. Two drivers share the same three hooks:
//
//   * pipeline_forward_static — encode everything, run the static tree scan
//     (right-padded to a power of two), then predict every chunk; encode and
//     predict stages may run chunk-parallel.
//   * pipeline_decode_stream — feed one token at a time, emit that token's
//     output row immediately from the current prefix state and the partial
//     chunk, and push each completed chunk through the binary counter.
//
// With deterministic hooks the two drivers emit identical bits for every
// token.

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "psm/matrix.hpp"
#include "psm/parallel.hpp"
#include "psm/scan.hpp"

namespace psm::tpsm {

using TokenId = std::uint32_t;

template <typename State>
struct ChunkPipeline {
  std::size_t chunk_size = 1;
  std::function<State(const std::vector<TokenId>&)> encode;
  scan::Aggregator<State> agg;
  // Output rows for a full or leading partial chunk given its prefix state;
  // row j must depend only on the state and tokens 0..j.
  std::function<Matrix(const std::optional<State>&, const std::vector<TokenId>&)>
      infer;
  State pad_state;  // right-padding element for the static scan
};

template <typename State>
Matrix pipeline_forward_static(const ChunkPipeline<State>& pipe,
                               const std::vector<TokenId>& tokens) {
  const std::size_t c = pipe.chunk_size;
  if (c == 0) throw LengthError("pipeline: chunk size 0");
  if (tokens.size() % c != 0)
    throw LengthError("pipeline_forward_static: token count " +
                      std::to_string(tokens.size()) +
                      " not divisible by chunk size " + std::to_string(c));
  const std::size_t r = tokens.size() / c;
  if (r == 0) throw LengthError("pipeline_forward_static: empty input");

  std::vector<std::vector<TokenId>> chunks(r);
  for (std::size_t i = 0; i < r; ++i)
    chunks[i].assign(tokens.begin() + i * c, tokens.begin() + (i + 1) * c);

  std::vector<State> encoded(r);
  parallel_for(0, r, [&](std::size_t i) { encoded[i] = pipe.encode(chunks[i]); });

  // Right-pad to a power of two; exclusive prefix i only reads chunks < i,
  // so pads never contaminate a consumed prefix.
  std::size_t padded = 1;
  while (padded < r) padded *= 2;
  encoded.resize(padded, pipe.pad_state);
  const auto scanned = scan::scan_static(encoded, pipe.agg);

  // Chunk 0 sizes the output, the rest may fill their rows in parallel.
  const Matrix first = pipe.infer(scanned.prefixes[0], chunks[0]);
  Matrix logits(r * c, first.cols);
  auto write_rows = [&](std::size_t i, const Matrix& rows) {
    for (std::size_t p = 0; p < rows.rows; ++p)
      for (std::size_t q = 0; q < rows.cols; ++q)
        logits(i * c + p, q) = rows(p, q);
  };
  write_rows(0, first);
  parallel_for(1, r, [&](std::size_t i) {
    write_rows(i, pipe.infer(scanned.prefixes[i], chunks[i]));
  });
  return logits;
}

template <typename State>
struct PipelineDecodeResult {
  Matrix logits;
  scan::ScanTrace trace;  // one row per completed chunk
};

template <typename State>
PipelineDecodeResult<State> pipeline_decode_stream(
    const ChunkPipeline<State>& pipe, const std::vector<TokenId>& tokens) {
  const std::size_t c = pipe.chunk_size;
  if (c == 0) throw LengthError("pipeline: chunk size 0");

  PipelineDecodeResult<State> out;
  scan::CounterState<State> counter;
  std::optional<State> prefix;  // state before the chunk in progress
  std::vector<TokenId> buf;
  buf.reserve(c);

  for (std::size_t t = 0; t < tokens.size(); ++t) {
    buf.push_back(tokens[t]);
    const Matrix rows = pipe.infer(prefix, buf);
    if (out.logits.empty()) out.logits = Matrix(tokens.size(), rows.cols);
    for (std::size_t q = 0; q < rows.cols; ++q)
      out.logits(t, q) = rows(rows.rows - 1, q);

    if (buf.size() == c) {
      const std::uint64_t ins0 = out.trace.insert_agg_calls;
      const std::uint64_t emi0 = out.trace.emit_agg_calls;
      counter_insert(counter, pipe.encode(buf), pipe.agg, &out.trace);
      prefix = counter_emit(counter, pipe.agg, &out.trace);
      scan::ScanTrace::Row row;
      row.insert_calls = out.trace.insert_agg_calls - ins0;
      row.emit_calls = out.trace.emit_agg_calls - emi0;
      row.occupied_roots = counter.occupied();
      out.trace.per_element.push_back(row);
      buf.clear();
    }
  }
  return out;
}

}  // namespace psm::tpsm
