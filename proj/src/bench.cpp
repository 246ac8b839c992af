#include "psm/bench.hpp"

#include <atomic>
#include <chrono>
#include <memory>

#include "psm/affine.hpp"

namespace psm::bench {

double block_flops(std::size_t window, std::size_t dim) {
  const double w = static_cast<double>(window);
  const double d = static_cast<double>(dim);
  return 24.0 * w * d * d + 4.0 * w * w * d;
}

double agg_call_flops(const tpsm::PsmConfig& cfg) {
  const double blocks = static_cast<double>(cfg.agg_layers) *
                        block_flops(2 * cfg.chunk_size, cfg.model_dim);
  double comp = 0.0;
  if (cfg.compression == tpsm::Compression::LinearProjection)
    comp = 2.0 * static_cast<double>(cfg.chunk_size) *
           static_cast<double>(2 * cfg.chunk_size) *
           static_cast<double>(cfg.model_dim);
  return blocks + comp;
}

double encode_flops(const tpsm::PsmConfig& cfg) {
  return block_flops(cfg.chunk_size, cfg.model_dim);
}

double infer_flops(const tpsm::PsmConfig& cfg, std::size_t window,
                   std::size_t chunk_rows) {
  return static_cast<double>(cfg.inf_layers) *
             block_flops(window, cfg.model_dim) +
         2.0 * static_cast<double>(chunk_rows) *
             static_cast<double>(cfg.model_dim) *
             static_cast<double>(cfg.vocab_size);
}

double baseline_flops_per_token(const tpsm::PsmConfig& cfg, std::uint64_t t) {
  const double d = static_cast<double>(cfg.model_dim);
  const double layers =
      static_cast<double>(cfg.agg_layers + cfg.inf_layers);
  return layers * (24.0 * d * d + 4.0 * static_cast<double>(t) * d) +
         2.0 * d * static_cast<double>(cfg.vocab_size);
}

double amortized_token_flops(const tpsm::PsmConfig& cfg, bool has_prefix) {
  const std::size_t window =
      has_prefix ? 2 * cfg.chunk_size : cfg.chunk_size;
  return (infer_flops(cfg, window, cfg.chunk_size) + encode_flops(cfg)) /
         static_cast<double>(cfg.chunk_size);
}

std::vector<BenchRow> run_bench(const BenchOptions& opt) {
  const tpsm::PsmConfig& cfg = opt.cfg;
  cfg.validate();
  const std::size_t c = cfg.chunk_size;
  const std::size_t n = opt.n_tokens ? opt.n_tokens : 4096 * c;

  SplitMix64 rng(mix_seed(opt.seed, 0xbe11c4));
  std::vector<tpsm::TokenId> tokens(n);
  for (auto& t : tokens)
    t = static_cast<tpsm::TokenId>(rng.next() % cfg.vocab_size);

  const WeightBundle weights = tpsm::make_psm_weights(cfg, opt.seed);
  const auto agg = scan::Aggregator<Matrix>{
      [&](const Matrix& a, const Matrix& b) {
        return tpsm::agg_attention(a, b, weights, cfg);
      },
      false};

  std::vector<BenchRow> rows;
  rows.reserve(n);
  scan::CounterState<Matrix> counter;
  scan::ScanTrace trace;
  std::optional<Matrix> prefix;
  std::vector<tpsm::TokenId> buf;
  buf.reserve(c);

  using clock = std::chrono::steady_clock;
  for (std::size_t t = 0; t < n; ++t) {
    const auto start = opt.measure_wall ? clock::now() : clock::time_point{};
    buf.push_back(tokens[t]);
    const Matrix logits = tpsm::infer_tokens(prefix, buf, weights, cfg);
    (void)logits;

    BenchRow row;
    row.t = t + 1;
    row.steady_flops_est = amortized_token_flops(cfg, prefix.has_value());
    row.psm_flops_est = row.steady_flops_est;

    if (buf.size() == c) {
      const std::uint64_t ins0 = trace.insert_agg_calls;
      const std::uint64_t emi0 = trace.emit_agg_calls;
      counter_insert(counter, tpsm::encode_chunk(buf, weights, cfg), agg,
                     &trace);
      prefix = counter_emit(counter, agg, &trace);
      buf.clear();
      row.insert_calls = trace.insert_agg_calls - ins0;
      row.emit_calls = trace.emit_agg_calls - emi0;
      row.psm_flops_est +=
          static_cast<double>(row.insert_calls + row.emit_calls) *
          agg_call_flops(cfg);
    }
    row.psm_agg_calls = row.insert_calls + row.emit_calls;
    row.occupied_roots = counter.occupied();
    row.baseline_kv_flops_est = baseline_flops_per_token(cfg, row.t);
    if (opt.measure_wall) {
      const auto stop = clock::now();
      row.wall_us =
          std::chrono::duration<double, std::micro>(stop - start).count();
    }
    rows.push_back(row);
  }
  return rows;
}

void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows,
                     bool include_wall) {
  os << "t,psm_agg_calls,psm_flops_est,baseline_kv_flops_est,occupied_roots";
  if (include_wall) os << ",psm_wall_us";
  os << '\n';
  os.precision(17);
  for (const auto& r : rows) {
    os << r.t << ',' << r.psm_agg_calls << ',' << r.psm_flops_est << ','
       << r.baseline_kv_flops_est << ',' << r.occupied_roots;
    if (include_wall) os << ',' << r.wall_us;
    os << '\n';
  }
}

LinearFit fit_linear(const std::vector<double>& xs,
                     const std::vector<double>& ys) {
  const std::size_t n = xs.size();
  if (n < 2 || ys.size() != n) throw Error("fit_linear: need >= 2 points");
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += xs[i];
    sy += ys[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0, ss_tot = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double pred = fit.slope * xs[i] + fit.intercept;
    ss_res += (ys[i] - pred) * (ys[i] - pred);
    ss_tot += (ys[i] - my) * (ys[i] - my);
  }
  fit.r2 = ss_tot == 0.0 ? 1.0 : 1.0 - ss_res / ss_tot;
  return fit;
}

// ---------------------------------------------------------------------------
// Verification suite

namespace {

using affine::AffinePair;
using affine::OpKind;

VerifyResult summarise(const std::string& name, const scan::DualityReport& rep) {
  VerifyResult r;
  r.aggregator = name;
  r.n = rep.n;
  r.duality_ok = rep.all_equal;
  r.memory_ok = rep.memory_bound_ok;
  r.work_ok = rep.work_identity_ok;
  r.emit_ok = rep.emit_bound_ok;
  r.total_insert_calls = rep.total_insert_calls;
  r.total_emit_calls = rep.total_emit_calls;
  r.peak_occupied_roots = rep.peak_occupied_roots;
  return r;
}

std::vector<std::int64_t> random_ints(std::size_t n, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<std::int64_t> xs(n);
  for (auto& x : xs)
    x = static_cast<std::int64_t>(rng.next() % (1ull << 40)) - (1ll << 39);
  return xs;
}

std::vector<double> random_doubles(std::size_t n, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<double> xs(n);
  for (auto& x : xs) x = rng.next_signed(10.0);
  return xs;
}

bool pair_bits_equal(const AffinePair& a, const AffinePair& b) {
  if (a.e.kind != b.e.kind) return false;
  if (!bitwise_equal(a.e.scalar, b.e.scalar)) return false;
  if (a.e.diag.size() != b.e.diag.size()) return false;
  for (std::size_t i = 0; i < a.e.diag.size(); ++i)
    if (!bitwise_equal(a.e.diag[i], b.e.diag[i])) return false;
  return bitwise_equal(a.e.mat, b.e.mat) && bitwise_equal(a.f, b.f);
}

std::vector<AffinePair> random_pairs(OpKind kind, std::size_t n,
                                     std::uint64_t seed) {
  SplitMix64 rng(seed);
  const std::size_t rows = 3, cols = 2;
  std::vector<AffinePair> ps;
  ps.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    AffinePair p;
    p.e.kind = kind;
    switch (kind) {
      case OpKind::FullLeft:
        p.e.mat = Matrix(rows, rows);
        for (auto& x : p.e.mat.data) x = rng.next_signed(0.55);
        break;
      case OpKind::FullRight:
        p.e.mat = Matrix(cols, cols);
        for (auto& x : p.e.mat.data) x = rng.next_signed(0.65);
        break;
      case OpKind::DiagRows:
        p.e.diag = Vector(rows);
        for (auto& x : p.e.diag.data) x = 0.2 + 0.8 * rng.next_unit();
        break;
      case OpKind::DiagCols:
        p.e.diag = Vector(cols);
        for (auto& x : p.e.diag.data) x = 0.2 + 0.8 * rng.next_unit();
        break;
      case OpKind::Scalar:
        p.e.scalar = 0.2 + 0.8 * rng.next_unit();
        break;
    }
    p.f = Matrix(rows, cols);
    for (auto& x : p.f.data) x = rng.next_signed(1.0);
    ps.push_back(std::move(p));
  }
  return ps;
}

std::vector<Matrix> random_states(std::size_t n, std::size_t rows,
                                  std::size_t cols, std::uint64_t seed) {
  std::vector<Matrix> xs;
  xs.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    xs.push_back(seeded_init(rows, cols, mix_seed(seed, i + 1), 0.5));
  return xs;
}

}  // namespace

std::vector<VerifyResult> run_verify_suite(const VerifyOptions& opt) {
  std::vector<VerifyResult> out;
  const auto int_eq = [](std::int64_t a, std::int64_t b) { return a == b; };
  const auto dbl_eq = [](double a, double b) { return bitwise_equal(a, b); };
  const auto mat_eq = [](const Matrix& a, const Matrix& b) {
    return bitwise_equal(a, b);
  };

  const scan::Aggregator<std::int64_t> add_agg{
      [](std::int64_t a, std::int64_t b) { return a + b; }, true};
  const scan::Aggregator<double> sub_agg{
      [](double a, double b) { return a - b; }, false};
  const auto affine_agg = affine::affine_aggregator();

  const tpsm::PsmConfig attn_cfg{.chunk_size = 2,
                                 .model_dim = 8,
                                 .heads = 2,
                                 .agg_layers = 1,
                                 .inf_layers = 1,
                                 .vocab_size = 16,
                                 .compression = tpsm::Compression::DropFirstHalf};
  const WeightBundle attn_weights = tpsm::make_psm_weights(attn_cfg, opt.seed);
  const scan::Aggregator<Matrix> attn_agg{
      [&](const Matrix& a, const Matrix& b) {
        return tpsm::agg_attention(a, b, attn_weights, attn_cfg);
      },
      false};

  for (std::size_t n : opt.lengths) {
    const std::uint64_t seed = mix_seed(opt.seed, n);
    out.push_back(summarise(
        "int-add", verify_duality(random_ints(n, seed), add_agg, int_eq)));
    out.push_back(summarise(
        "f64-sub", verify_duality(random_doubles(n, seed), sub_agg, dbl_eq)));
    for (auto [kind, name] :
         {std::pair{OpKind::Scalar, "affine-scalar"},
          std::pair{OpKind::DiagRows, "affine-diag-rows"},
          std::pair{OpKind::DiagCols, "affine-diag-cols"},
          std::pair{OpKind::FullLeft, "affine-full-left"},
          std::pair{OpKind::FullRight, "affine-full-right"}}) {
      out.push_back(summarise(
          name, verify_duality(random_pairs(kind, n, seed), affine_agg,
                               pair_bits_equal)));
    }
    out.push_back(summarise(
        "tpsm-attention",
        verify_duality(
            random_states(n, attn_cfg.chunk_size, attn_cfg.model_dim, seed),
            attn_agg, mat_eq)));

    if (opt.inject_fault) {
      // Atomic so a threaded static scan stays well-defined; the point of
      // the hook is that call order differs between the two scan forms.
      auto counter = std::make_shared<std::atomic<std::int64_t>>(0);
      const scan::Aggregator<std::int64_t> fault_agg{
          [counter](std::int64_t a, std::int64_t b) {
            return a + b + counter->fetch_add(1);
          },
          false};
      out.push_back(summarise(
          "fault-injected",
          verify_duality(random_ints(n, seed), fault_agg, int_eq)));
    }
  }
  return out;
}

void write_verify_report(std::ostream& os,
                         const std::vector<VerifyResult>& rs) {
  os << "aggregator,n,duality,memory,work,emit,insert_calls,emit_calls,"
        "peak_roots\n";
  for (const auto& r : rs) {
    os << r.aggregator << ',' << r.n << ',' << (r.duality_ok ? "ok" : "FAIL")
       << ',' << (r.memory_ok ? "ok" : "FAIL") << ','
       << (r.work_ok ? "ok" : "FAIL") << ',' << (r.emit_ok ? "ok" : "FAIL")
       << ',' << r.total_insert_calls << ',' << r.total_emit_calls << ','
       << r.peak_occupied_roots << '\n';
  }
}

}  // namespace psm::bench
