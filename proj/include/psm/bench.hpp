#pragma once

// Cost accounting and the duality verification suite behind the CLI.
//
// Flops estimates are analytic counts derived from module shapes (one
// multiply-add = 2 flops); wall-clock numbers are measured but never
// asserted anywhere. The baseline column models a kv-cache decoder whose
// per-token attention cost grows with context length.

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "psm/scan.hpp"
#include "psm/tpsm.hpp"

namespace psm::bench {

// Attention block forward over a length-w window at width d:
// 8wd^2 (q/k/v/out projections) + 4w^2 d (scores and mixing) + 16wd^2 (ffn).
double block_flops(std::size_t window, std::size_t dim);

// One aggregator call: agg_layers blocks over the 2c window, plus the
// position-axis projection when that compression is configured.
double agg_call_flops(const tpsm::PsmConfig& cfg);

double encode_flops(const tpsm::PsmConfig& cfg);

// One full inference pass: inf_layers blocks over the window plus readout
// for the chunk's rows.
double infer_flops(const tpsm::PsmConfig& cfg, std::size_t window,
                   std::size_t chunk_rows);

// Steady per-token cost: a chunk's inference pass and encoding amortized
// over its chunk_size tokens. Constant for every chunk after the first
// (whose window lacks a prefix state).
double amortized_token_flops(const tpsm::PsmConfig& cfg, bool has_prefix);

// kv-cache decoder at context length t: per-token projections and ffn plus
// attention over all t cached positions, with agg_layers + inf_layers
// layers (parameter-matched to the chunked model).
double baseline_flops_per_token(const tpsm::PsmConfig& cfg, std::uint64_t t);

// psm_flops_est = amortized steady cost + aggregator calls charged at the
// boundary token where they happen.
struct BenchRow {
  std::uint64_t t = 0;  // 1-based context length
  std::uint64_t psm_agg_calls = 0;
  double psm_flops_est = 0.0;
  double baseline_kv_flops_est = 0.0;
  std::uint64_t occupied_roots = 0;
  double wall_us = 0.0;
  // Breakdown used by checks; not part of the CSV.
  std::uint64_t insert_calls = 0;
  std::uint64_t emit_calls = 0;
  double steady_flops_est = 0.0;  // psm_flops_est minus aggregator terms
};

struct BenchOptions {
  tpsm::PsmConfig cfg;
  std::size_t n_tokens = 0;  // 0 = 4096 * chunk_size
  std::uint64_t seed = 1;
  bool measure_wall = false;
};

// Runs the real streaming decode over seeded random tokens and fills one
// row per token.
std::vector<BenchRow> run_bench(const BenchOptions& opt);

// Header: t,psm_agg_calls,psm_flops_est,baseline_kv_flops_est,occupied_roots
// with a trailing psm_wall_us column only when requested (timings are not
// reproducible, so the default output is byte-stable).
void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows,
                     bool include_wall);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

LinearFit fit_linear(const std::vector<double>& xs,
                     const std::vector<double>& ys);

// ---------------------------------------------------------------------------
// Duality verification suite

struct VerifyOptions {
  std::vector<std::size_t> lengths;  // power-of-two element counts
  std::uint64_t seed = 1;
  // Swaps in a call-order-dependent operator; static and online nesting
  // then disagree, exercising the failure path end to end.
  bool inject_fault = false;
};

struct VerifyResult {
  std::string aggregator;
  std::size_t n = 0;
  bool duality_ok = false;
  bool memory_ok = false;
  bool work_ok = false;
  bool emit_ok = false;
  std::uint64_t total_insert_calls = 0;
  std::uint64_t total_emit_calls = 0;
  std::uint64_t peak_occupied_roots = 0;

  bool ok() const { return duality_ok && memory_ok && work_ok && emit_ok; }
};

// Built-in aggregators: integer addition, f64 subtraction, the affine op
// shapes, and the attention aggregator with seeded weights.
std::vector<VerifyResult> run_verify_suite(const VerifyOptions& opt);

void write_verify_report(std::ostream& os, const std::vector<VerifyResult>& rs);

}  // namespace psm::bench
