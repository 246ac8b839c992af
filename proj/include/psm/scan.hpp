#pragma once

// Generic prefix-scan engine over an arbitrary binary operator with an
// engine-managed identity. Two evaluation orders are provided:
//
//   * scan_static — upsweep/downsweep over a complete binary tree in heap
//     layout; nodes within a level are independent and may run in parallel.
//   * scan_online — streaming evaluation that keeps one mini-tree root per
//     set bit of the element count (a binary counter) and re-derives the
//     running prefix after every element by folding the occupied roots from
//     most- to least-significant slot.
//
// Both orders evaluate the operator with exactly the same nesting, so for
// any deterministic operator — associative or not — the online emission at
// element t is bit-identical to the static exclusive prefix at index t+1.
//
// The identity is structural: combines touching it short-circuit and are
// never forwarded to the operator, and never counted as operator calls.

#include <atomic>
#include <bit>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "psm/errors.hpp"
#include "psm/parallel.hpp"

namespace psm::scan {

template <typename T>
struct Aggregator {
  std::function<T(const T&, const T&)> combine;
  // Advisory only: callers may use it to pick extra checks (e.g. comparing
  // scan output against a sequential left fold). The engine never branches
  // on it.
  bool claims_associative = false;
};

// Instrumentation for a streaming run. Counts are operator calls only;
// short-circuited identity combines do not appear.
struct ScanTrace {
  struct Row {
    std::uint64_t insert_calls = 0;  // carry merges for this element
    std::uint64_t emit_calls = 0;    // root-fold combines for this element
    std::uint64_t occupied_roots = 0;
  };

  std::uint64_t insert_agg_calls = 0;
  std::uint64_t emit_agg_calls = 0;
  std::uint64_t peak_occupied_roots = 0;
  std::vector<Row> per_element;
};

inline void write_trace_csv(std::ostream& os, const ScanTrace& trace) {
  os << "t,insert_calls,emit_calls,occupied_roots\n";
  for (std::size_t t = 0; t < trace.per_element.size(); ++t) {
    const auto& r = trace.per_element[t];
    os << t << ',' << r.insert_calls << ',' << r.emit_calls << ','
       << r.occupied_roots << '\n';
  }
}

// Binary-counter state: slot k, when occupied, holds the aggregate of the
// most recent 2^k elements, and 2^k divides the element count.
template <typename T>
struct CounterState {
  std::vector<std::optional<T>> roots;
  std::uint64_t elements_seen = 0;

  std::size_t occupied() const {
    std::size_t n = 0;
    for (const auto& r : roots) n += r.has_value() ? 1 : 0;
    return n;
  }
};

inline constexpr std::size_t kMaxCounterSlot = 63;

template <typename T>
void counter_insert(CounterState<T>& st, T x, const Aggregator<T>& agg,
                    ScanTrace* trace = nullptr) {
  T carry = std::move(x);
  std::size_t k = 0;
  while (k < st.roots.size() && st.roots[k].has_value()) {
    carry = agg.combine(*st.roots[k], carry);
    st.roots[k].reset();
    if (trace) ++trace->insert_agg_calls;
    ++k;
    if (k > kMaxCounterSlot)
      throw OverflowError("counter slot index beyond 63");
  }
  if (k >= st.roots.size()) st.roots.resize(k + 1);
  st.roots[k] = std::move(carry);
  ++st.elements_seen;
  if (trace) {
    const std::uint64_t occ = st.occupied();
    if (occ > trace->peak_occupied_roots) trace->peak_occupied_roots = occ;
  }
}

// Fold occupied roots MSB -> LSB, seeded with the identity; the fold result
// therefore starts as the most significant root and performs one operator
// call per further occupied slot.
template <typename T>
T counter_emit(const CounterState<T>& st, const Aggregator<T>& agg,
               ScanTrace* trace = nullptr) {
  if (st.elements_seen == 0)
    throw EmptyError("counter_emit: no elements inserted");
  const T* acc = nullptr;
  T folded;
  for (std::size_t k = st.roots.size(); k-- > 0;) {
    if (!st.roots[k].has_value()) continue;
    if (acc == nullptr) {
      acc = &*st.roots[k];
    } else {
      folded = agg.combine(*acc, *st.roots[k]);
      acc = &folded;
      if (trace) ++trace->emit_agg_calls;
    }
  }
  return *acc;
}

template <typename T>
struct StaticScanResult {
  // prefixes[0] is the identity; prefixes[i] aggregates xs[0..i-1] with the
  // fixed tree nesting.
  std::vector<std::optional<T>> prefixes;
  T total;  // root of the tree: aggregate of the whole input
  std::uint64_t agg_calls = 0;
};

// Upsweep/downsweep scan. Requires |xs| to be a power of two; callers own
// any padding policy. Levels run through parallel_for; results are
// bit-identical to serial execution.
template <typename T>
StaticScanResult<T> scan_static(const std::vector<T>& xs,
                                const Aggregator<T>& agg) {
  const std::size_t n = xs.size();
  if (n == 0 || !std::has_single_bit(n))
    throw LengthError("scan_static: length " + std::to_string(n) +
                      " is not a power of two");

  std::vector<T> tree(2 * n);  // heap layout, nodes 1..2n-1
  for (std::size_t i = 0; i < n; ++i) tree[n + i] = xs[i];

  std::atomic<std::uint64_t> calls{0};
  // Upsweep: combine children bottom-up.
  for (std::size_t level = n / 2; level >= 1; level /= 2) {
    parallel_for(level, 2 * level, [&](std::size_t v) {
      tree[v] = agg.combine(tree[2 * v], tree[2 * v + 1]);
      calls.fetch_add(1, std::memory_order_relaxed);
    });
  }

  // Downsweep: each node passes its prefix to the left child and
  // prefix+left-subtree to the right child. The root prefix is the identity,
  // which propagates down the left spine without operator calls.
  std::vector<std::optional<T>> prefix(2 * n);
  prefix[1] = std::nullopt;
  for (std::size_t level = 1; level < n; level *= 2) {
    parallel_for(level, 2 * level, [&](std::size_t v) {
      prefix[2 * v] = prefix[v];
      if (prefix[v].has_value()) {
        prefix[2 * v + 1] = agg.combine(*prefix[v], tree[2 * v]);
        calls.fetch_add(1, std::memory_order_relaxed);
      } else {
        prefix[2 * v + 1] = tree[2 * v];
      }
    });
  }

  StaticScanResult<T> out;
  out.prefixes.assign(prefix.begin() + n, prefix.end());
  out.total = tree[1];
  out.agg_calls = calls.load();
  return out;
}

template <typename T>
struct OnlineScanResult {
  std::vector<T> emissions;  // emissions[t] aggregates xs[0..t]
  ScanTrace trace;
};

// Insert-then-emit per element, any length.
template <typename T>
OnlineScanResult<T> scan_online(const std::vector<T>& xs,
                                const Aggregator<T>& agg) {
  OnlineScanResult<T> out;
  out.emissions.reserve(xs.size());
  CounterState<T> st;
  for (const T& x : xs) {
    const std::uint64_t ins0 = out.trace.insert_agg_calls;
    const std::uint64_t emi0 = out.trace.emit_agg_calls;
    counter_insert(st, x, agg, &out.trace);
    out.emissions.push_back(counter_emit(st, agg, &out.trace));
    ScanTrace::Row row;
    row.insert_calls = out.trace.insert_agg_calls - ins0;
    row.emit_calls = out.trace.emit_agg_calls - emi0;
    row.occupied_roots = st.occupied();
    out.trace.per_element.push_back(row);
  }
  return out;
}

inline std::uint64_t popcount_u64(std::uint64_t v) {
  return static_cast<std::uint64_t>(std::popcount(v));
}

// ceil(log2(v)) for v >= 1.
inline std::uint64_t ceil_log2(std::uint64_t v) {
  return v <= 1 ? 0 : static_cast<std::uint64_t>(std::bit_width(v - 1));
}

// floor(log2(v)) for v >= 1.
inline std::uint64_t floor_log2(std::uint64_t v) {
  return static_cast<std::uint64_t>(std::bit_width(v)) - 1;
}

struct DualityReport {
  std::size_t n = 0;
  std::vector<bool> index_equal;  // per element: emission t vs static prefix t+1
  bool all_equal = false;
  // Occupied roots equal popcount(t+1) everywhere and stay within
  // ceil(log2(t+1)) for t+1 >= 2 (a single root is unavoidable at t+1 = 1).
  bool memory_bound_ok = false;
  // Total carry merges over n inserts equal n - popcount(n).
  bool work_identity_ok = false;
  // Per-element emit combines stay within floor(log2(t+1)).
  bool emit_bound_ok = false;
  std::uint64_t total_insert_calls = 0;
  std::uint64_t total_emit_calls = 0;
  std::uint64_t peak_occupied_roots = 0;
  std::uint64_t static_agg_calls = 0;

  bool ok() const {
    return all_equal && memory_bound_ok && work_identity_ok && emit_bound_ok;
  }
};

// Runs both scans on the same input and cross-checks them element by
// element with the caller-supplied bit-level equality. Mismatches are
// report content, not errors.
template <typename T, typename Eq>
DualityReport verify_duality(const std::vector<T>& xs, const Aggregator<T>& agg,
                             Eq&& bit_equal) {
  const auto stat = scan_static(xs, agg);
  const auto onl = scan_online(xs, agg);
  const std::size_t n = xs.size();

  DualityReport rep;
  rep.n = n;
  rep.index_equal.resize(n);
  bool all = true;
  for (std::size_t t = 0; t < n; ++t) {
    // Emission t covers xs[0..t]; for t < n-1 that is the static exclusive
    // prefix at t+1, and for t = n-1 it is the tree total.
    const T& expect = (t + 1 < n) ? *stat.prefixes[t + 1] : stat.total;
    const bool eq = bit_equal(onl.emissions[t], expect);
    rep.index_equal[t] = eq;
    all = all && eq;
  }
  rep.all_equal = all;

  bool mem_ok = true;
  bool emit_ok = true;
  for (std::size_t t = 0; t < n; ++t) {
    const std::uint64_t count = t + 1;
    const auto& row = onl.trace.per_element[t];
    if (row.occupied_roots != popcount_u64(count)) mem_ok = false;
    if (count >= 2 && row.occupied_roots > ceil_log2(count)) mem_ok = false;
    if (row.emit_calls > floor_log2(count)) emit_ok = false;
  }
  rep.memory_bound_ok = mem_ok;
  rep.emit_bound_ok = emit_ok;
  rep.work_identity_ok =
      onl.trace.insert_agg_calls == n - popcount_u64(n);
  rep.total_insert_calls = onl.trace.insert_agg_calls;
  rep.total_emit_calls = onl.trace.emit_agg_calls;
  rep.peak_occupied_roots = onl.trace.peak_occupied_roots;
  rep.static_agg_calls = stat.agg_calls;
  return rep;
}

}  // namespace psm::scan
