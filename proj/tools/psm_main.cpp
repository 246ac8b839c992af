// psm — verification and benchmarking front end.
//
// Subcommands:
//   verify   cross-check the streaming scan against the static tree scan
//            over the built-in aggregators
//   affine   scan-path vs sequential-recurrence error per recurrent layer
//   bench    per-token cost of the chunked attention model vs a kv-cache
//            baseline cost model
//   trace    per-element operator-call counts of the streaming scan
//
// Exit codes: 0 success, 1 verification failure, 2 usage error, 3 I/O error.
// Given the same arguments and seed, every subcommand writes byte-identical
// output (bench timing columns are opt-in via --wall for that reason).

#include <algorithm>
#include <bit>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "psm/affine.hpp"
#include "psm/bench.hpp"
#include "psm/scan.hpp"
#include "psm/tpsm.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

// Writes to `path`, or stdout when empty.
class OutputSink {
 public:
  explicit OutputSink(const std::string& path) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
      if (!*file_) throw psm::IoError("cannot open for writing: " + path);
    }
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

struct Args {
  std::size_t n = 0;
  std::size_t chunk = 4;
  std::size_t dim = 32;
  std::size_t heads = 2;
  std::size_t agg_layers = 2;
  std::size_t inf_layers = 2;
  std::size_t vocab = 64;
  std::uint64_t seed = 1;
  std::string layer;
  std::string out;
  std::string format = "csv";
  std::string compression = "drop-first-half";
  std::string logits_out;
  bool inject_fault = false;
  bool wall = false;
};

int cmd_verify(const Args& a) {
  psm::bench::VerifyOptions opt;
  if (a.n) {
    if (!std::has_single_bit(a.n)) {
      std::cerr << "verify: --n must be a power of two\n";
      return kExitUsage;
    }
    opt.lengths = {a.n};
  } else {
    opt.lengths = {16, 32, 64, 128, 256, 512, 1024};
  }
  opt.seed = a.seed;
  opt.inject_fault = a.inject_fault;

  const auto results = psm::bench::run_verify_suite(opt);
  OutputSink sink(a.out);
  psm::bench::write_verify_report(sink.stream(), results);

  bool all_ok = true;
  for (const auto& r : results) all_ok = all_ok && r.ok();
  return all_ok ? kExitOk : kExitVerifyFailure;
}

int cmd_affine(const Args& a) {
  std::vector<psm::affine::LayerKind> kinds;
  if (a.layer.empty()) {
    for (const auto& [name, kind] : psm::affine::layer_kind_names())
      kinds.push_back(kind);
  } else {
    kinds.push_back(psm::affine::parse_layer_kind(a.layer));  // Error -> usage
  }
  const std::size_t n = a.n ? a.n : 256;

  OutputSink sink(a.out);
  std::ostream& os = sink.stream();
  os << "layer,n,dim,seed,max_rel_static,max_rel_online\n";
  os.precision(17);

  constexpr double kTol = 1e-9;
  bool all_ok = true;
  for (const auto kind : kinds) {
    psm::affine::LayerConfig cfg;
    cfg.kind = kind;
    cfg.token_dim = cfg.key_dim = cfg.value_dim = a.dim;
    const auto weights = psm::affine::make_layer_weights(cfg, a.seed);
    const auto inputs = psm::affine::make_layer_inputs(cfg, n, a.seed);
    const auto expected = psm::affine::sequential_affine(
        psm::affine::make_layer_pairs(cfg, inputs, weights));

    double err_static = 0.0, err_online = 0.0;
    const auto via_static = psm::affine::layer_states_via_scan(
        cfg, inputs, weights, psm::affine::ScanPath::Static);
    const auto via_online = psm::affine::layer_states_via_scan(
        cfg, inputs, weights, psm::affine::ScanPath::Online);
    for (std::size_t t = 0; t < expected.size(); ++t) {
      err_static = std::max(err_static,
                            psm::max_rel_diff(via_static[t], expected[t]));
      err_online = std::max(err_online,
                            psm::max_rel_diff(via_online[t], expected[t]));
    }
    os << psm::affine::layer_kind_name(kind) << ',' << n << ',' << a.dim << ','
       << a.seed << ',' << err_static << ',' << err_online << '\n';
    all_ok = all_ok && err_static <= kTol && err_online <= kTol;
  }
  return all_ok ? kExitOk : kExitVerifyFailure;
}

int cmd_bench(const Args& a) {
  psm::bench::BenchOptions opt;
  opt.cfg.chunk_size = a.chunk;
  opt.cfg.model_dim = a.dim;
  opt.cfg.heads = a.heads;
  opt.cfg.agg_layers = a.agg_layers;
  opt.cfg.inf_layers = a.inf_layers;
  opt.cfg.vocab_size = a.vocab;
  opt.cfg.compression = psm::tpsm::parse_compression(a.compression);
  opt.n_tokens = a.n;
  opt.seed = a.seed;
  opt.measure_wall = a.wall;

  const auto rows = psm::bench::run_bench(opt);
  OutputSink sink(a.out);
  psm::bench::write_bench_csv(sink.stream(), rows, a.wall);

  if (!a.logits_out.empty()) {
    // Full-sequence logits for external inspection, rounded down to whole
    // chunks so the static path accepts the same stream.
    const std::size_t n_raw = a.n ? a.n : 4096 * a.chunk;
    const std::size_t n = n_raw - (n_raw % a.chunk);
    psm::SplitMix64 rng(psm::mix_seed(a.seed, 0xbe11c4));
    std::vector<psm::tpsm::TokenId> tokens(n);
    for (auto& t : tokens)
      t = static_cast<psm::tpsm::TokenId>(rng.next() % opt.cfg.vocab_size);
    const auto weights = psm::tpsm::make_psm_weights(opt.cfg, a.seed);
    const auto logits = psm::tpsm::psm_forward_static(tokens, weights, opt.cfg);
    std::ofstream lf(a.logits_out, std::ios::binary);
    if (!lf) throw psm::IoError("cannot open for writing: " + a.logits_out);
    if (a.format == "bin")
      psm::tpsm::write_logits_bin(lf, logits);
    else
      psm::tpsm::write_logits_csv(lf, logits);
  }
  return kExitOk;
}

int cmd_trace(const Args& a) {
  const std::size_t n = a.n ? a.n : 256;
  const psm::scan::Aggregator<std::int64_t> add{
      [](std::int64_t x, std::int64_t y) { return x + y; }, true};
  std::vector<std::int64_t> xs(n);
  psm::SplitMix64 rng(a.seed);
  for (auto& x : xs) x = static_cast<std::int64_t>(rng.next() % 1000);
  const auto res = psm::scan::scan_online(xs, add);

  OutputSink sink(a.out);
  std::ostream& os = sink.stream();
  psm::scan::write_trace_csv(os, res.trace);
  os << "total," << res.trace.insert_agg_calls << ','
     << res.trace.emit_agg_calls << ',' << res.trace.peak_occupied_roots
     << '\n';

  const std::uint64_t expected = n - psm::scan::popcount_u64(n);
  if (res.trace.insert_agg_calls != expected) {
    std::cerr << "trace: insert total " << res.trace.insert_agg_calls
              << " != n - popcount(n) = " << expected << '\n';
    return kExitVerifyFailure;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prefix-scan sequence model toolkit"};
  app.require_subcommand(1);

  Args args;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--n", args.n, "element/token count (subcommand default)");
    cmd->add_option("--seed", args.seed, "rng seed");
    cmd->add_option("--out", args.out, "output path (default stdout)");
  };

  auto* verify = app.add_subcommand("verify", "static vs streaming duality");
  add_common(verify);
  verify->add_flag("--inject-fault", args.inject_fault,
                   "add a call-order-dependent operator (test hook)");

  auto* affine = app.add_subcommand("affine", "layer scan vs sequential");
  add_common(affine);
  affine->add_option("--dim", args.dim, "token/key/value dimension")
      ->default_val(8);
  affine->add_option("--layer", args.layer,
                     "layer kind (default: all ten kinds)");

  auto* bench = app.add_subcommand("bench", "per-token cost audit");
  add_common(bench);
  bench->add_option("--chunk", args.chunk, "chunk size");
  bench->add_option("--dim", args.dim, "model dimension");
  bench->add_option("--heads", args.heads, "attention heads");
  bench->add_option("--agg-layers", args.agg_layers, "aggregator depth");
  bench->add_option("--inf-layers", args.inf_layers, "inference depth");
  bench->add_option("--vocab", args.vocab, "vocabulary size");
  bench->add_option("--compression", args.compression,
                    "drop-first-half | linear-projection");
  bench->add_option("--format", args.format, "csv | bin (for --logits-out)");
  bench->add_option("--logits-out", args.logits_out,
                    "also write full-run logits to this path");
  bench->add_flag("--wall", args.wall,
                  "append measured per-token wall time (not reproducible)");

  auto* trace = app.add_subcommand("trace", "streaming scan cost trace");
  add_common(trace);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (verify->parsed()) return cmd_verify(args);
    if (affine->parsed()) return cmd_affine(args);
    if (bench->parsed()) return cmd_bench(args);
    if (trace->parsed()) return cmd_trace(args);
  } catch (const psm::IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const psm::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
