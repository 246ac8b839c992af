#include <doctest.h>

#include <cstdint>
#include <sstream>

#include "psm/matrix.hpp"
#include "psm/scan.hpp"

using namespace psm;
using namespace psm::scan;

namespace {

const Aggregator<std::int64_t> int_add{
    [](std::int64_t a, std::int64_t b) { return a + b; }, true};
const Aggregator<double> f64_sub{[](double a, double b) { return a - b; },
                                 false};
const Aggregator<std::int64_t> left_proj{
    [](std::int64_t a, std::int64_t) { return a; }, false};

// Independent oracle for a complete block: combine the two halves,
// recursively — the nesting both scan forms are specified to produce.
template <typename T>
T tree_fold(const std::vector<T>& xs, std::size_t lo, std::size_t hi,
            const Aggregator<T>& agg) {
  if (hi - lo == 1) return xs[lo];
  const std::size_t mid = lo + (hi - lo) / 2;
  return agg.combine(tree_fold(xs, lo, mid, agg),
                     tree_fold(xs, mid, hi, agg));
}

std::vector<double> random_doubles(std::size_t n, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<double> xs(n);
  for (auto& x : xs) x = rng.next_signed(5.0);
  return xs;
}

}  // namespace

TEST_CASE("static scan: prefix sums") {
  const auto res = scan_static<std::int64_t>({1, 2, 3, 4}, int_add);
  REQUIRE(res.prefixes.size() == 4);
  CHECK_FALSE(res.prefixes[0].has_value());
  CHECK(*res.prefixes[1] == 1);
  CHECK(*res.prefixes[2] == 3);
  CHECK(*res.prefixes[3] == 6);
  CHECK(res.total == 10);
}

TEST_CASE("static scan: subtraction uses the fixed tree nesting") {
  const auto res = scan_static<double>({5, 3, 2, 1}, f64_sub);
  CHECK_FALSE(res.prefixes[0].has_value());
  CHECK(*res.prefixes[1] == 5);
  CHECK(*res.prefixes[2] == 2);  // 5 - 3
  CHECK(*res.prefixes[3] == 0);  // (5 - 3) - 2
  CHECK(res.total == 1);         // (5 - 3) - (2 - 1)
}

TEST_CASE("static scan: constant-left projection keeps the head") {
  const auto res = scan_static<std::int64_t>({7, 9, 4, 2}, left_proj);
  CHECK_FALSE(res.prefixes[0].has_value());
  CHECK(*res.prefixes[1] == 7);
  CHECK(*res.prefixes[2] == 7);
  CHECK(*res.prefixes[3] == 7);

  // Every prefix matches a direct evaluation of its block decomposition.
  const std::vector<std::int64_t> xs = {7, 9, 4, 2};
  for (std::size_t i = 1; i < 4; ++i) {
    // exclusive prefix i = MSB->LSB fold over the power-of-two blocks of i
    std::int64_t acc = 0;
    bool first = true;
    std::size_t lo = 0;
    for (std::size_t bit = 2; bit >= 1; bit /= 2) {
      if ((i & bit) == 0) continue;
      const std::int64_t block = tree_fold(xs, lo, lo + bit, left_proj);
      acc = first ? block : left_proj.combine(acc, block);
      first = false;
      lo += bit;
      if (bit == 1) break;
    }
    CHECK(acc == *res.prefixes[i]);
  }
}

TEST_CASE("static scan rejects non-power-of-two lengths") {
  CHECK_THROWS_AS(scan_static<std::int64_t>({1, 2, 3}, int_add), LengthError);
  CHECK_THROWS_AS(scan_static<std::int64_t>({}, int_add), LengthError);
}

TEST_CASE("static scan of one element") {
  const auto res = scan_static<std::int64_t>({42}, int_add);
  REQUIRE(res.prefixes.size() == 1);
  CHECK_FALSE(res.prefixes[0].has_value());
  CHECK(res.total == 42);
  CHECK(res.agg_calls == 0);
}

TEST_CASE("counter insert and emit") {
  CounterState<std::int64_t> st;
  ScanTrace trace;

  SUBCASE("first element occupies slot zero with no merges") {
    counter_insert(st, std::int64_t{5}, int_add, &trace);
    CHECK(st.roots[0].has_value());
    CHECK(*st.roots[0] == 5);
    CHECK(trace.insert_agg_calls == 0);
    CHECK(st.occupied() == 1);
    CHECK(counter_emit(st, int_add, &trace) == 5);
    CHECK(trace.emit_agg_calls == 0);
  }

  SUBCASE("second element carries into slot one") {
    counter_insert(st, std::int64_t{5}, int_add, &trace);
    counter_insert(st, std::int64_t{7}, int_add, &trace);
    CHECK_FALSE(st.roots[0].has_value());
    REQUIRE(st.roots.size() >= 2);
    CHECK(*st.roots[1] == 12);
    CHECK(trace.insert_agg_calls == 1);
  }

  SUBCASE("eight inserts merge n - popcount(n) times") {
    for (std::int64_t v = 1; v <= 8; ++v)
      counter_insert(st, v, int_add, &trace);
    CHECK(trace.insert_agg_calls == 7);
    CHECK(st.occupied() == 1);  // popcount(8)
  }

  SUBCASE("emit from an empty counter is an error") {
    CHECK_THROWS_AS(counter_emit(st, int_add), EmptyError);
  }
}

TEST_CASE("counter emit matches static prefixes for subtraction") {
  CounterState<double> st;
  counter_insert(st, 5.0, f64_sub);
  counter_insert(st, 3.0, f64_sub);
  CHECK(counter_emit(st, f64_sub) == 2.0);  // static index 2
  counter_insert(st, 2.0, f64_sub);
  CHECK(counter_emit(st, f64_sub) == 0.0);  // agg(2, 2), static index 3
}

TEST_CASE("online scan") {
  SUBCASE("addition emits inclusive prefixes") {
    const auto res = scan_online<std::int64_t>({1, 2, 3, 4}, int_add);
    CHECK(res.emissions == std::vector<std::int64_t>{1, 3, 6, 10});
  }
  SUBCASE("subtraction reproduces the tree nesting") {
    const auto res = scan_online<double>({5, 3, 2, 1}, f64_sub);
    CHECK(res.emissions == std::vector<double>{5, 2, 0, 1});
  }
  SUBCASE("single element") {
    const auto res = scan_online<double>({3.5}, f64_sub);
    CHECK(res.emissions == std::vector<double>{3.5});
    CHECK(res.trace.insert_agg_calls == 0);
    CHECK(res.trace.emit_agg_calls == 0);
  }
}

TEST_CASE("block invariant: occupied roots replay as complete-block folds") {
  const auto xs = random_doubles(97, 1234);  // deliberately not a power of two
  CounterState<double> st;
  std::vector<double> seen;
  for (double x : xs) {
    counter_insert(st, x, f64_sub);
    seen.push_back(x);
    const std::uint64_t count = seen.size();
    std::size_t covered = 0;
    std::size_t previous_len = 0;
    for (std::size_t k = 0; k < st.roots.size(); ++k) {
      if (!st.roots[k].has_value()) continue;
      const std::size_t len = std::size_t{1} << k;
      // Occupied roots partition the prefix into aligned power-of-two
      // blocks with strictly increasing sizes from the newest end; each
      // root is the complete-tree fold of its own block. The newest block
      // ends at the element count itself, so 2^k divides the count for the
      // lowest occupied slot.
      const std::size_t hi = seen.size() - covered;
      CHECK(hi % len == 0);
      CHECK(len > previous_len);
      previous_len = len;
      const double expect = tree_fold(seen, hi - len, hi, f64_sub);
      CHECK(bitwise_equal(*st.roots[k], expect));
      covered += len;
    }
    CHECK(covered == count);
    CHECK(st.occupied() == popcount_u64(count));
  }
}

TEST_CASE("duality report: associative, non-associative, adversarial") {
  SUBCASE("addition, random length 64") {
    SplitMix64 rng(9);
    std::vector<std::int64_t> xs(64);
    for (auto& x : xs) x = static_cast<std::int64_t>(rng.next() % 1000);
    const auto rep = verify_duality(xs, int_add,
                                    [](std::int64_t a, std::int64_t b) { return a == b; });
    CHECK(rep.ok());
  }
  SUBCASE("subtraction, length 16") {
    const auto rep = verify_duality(random_doubles(16, 77), f64_sub,
                                    [](double a, double b) { return bitwise_equal(a, b); });
    CHECK(rep.ok());
    CHECK(rep.total_insert_calls == 16 - 1);  // popcount(16) == 1
  }
  SUBCASE("hash-combining operator, length 128") {
    const Aggregator<std::uint64_t> mix{
        [](std::uint64_t a, std::uint64_t b) {
          std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
          z *= 0xff51afd7ed558ccdull;
          return z ^ (z >> 33);
        },
        false};
    SplitMix64 rng(5);
    std::vector<std::uint64_t> xs(128);
    for (auto& x : xs) x = rng.next();
    const auto rep = verify_duality(xs, mix,
                                    [](std::uint64_t a, std::uint64_t b) { return a == b; });
    CHECK(rep.ok());
  }
}

TEST_CASE("associative aggregator agrees with a sequential left fold") {
  const auto xs = random_doubles(256, 4242);
  const Aggregator<double> add{[](double a, double b) { return a + b; }, true};
  const auto onl = scan_online(xs, add);
  double acc = 0.0;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    acc += xs[t];
    CHECK(std::abs(onl.emissions[t] - acc) <=
          1e-9 * std::max(1.0, std::abs(acc)));
  }
}

TEST_CASE("work and memory accounting") {
  const auto xs = random_doubles(1000, 31);
  const auto res = scan_online(xs, f64_sub);
  std::uint64_t running_inserts = 0;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    const std::uint64_t count = t + 1;
    const auto& row = res.trace.per_element[t];
    running_inserts += row.insert_calls;
    CHECK(running_inserts == count - popcount_u64(count));
    CHECK(row.occupied_roots == popcount_u64(count));
    if (count >= 2) CHECK(row.occupied_roots <= ceil_log2(count));
    CHECK(row.emit_calls == popcount_u64(count) - 1);
    CHECK(row.emit_calls <= floor_log2(count));
  }
  CHECK(res.trace.insert_agg_calls == 1000 - popcount_u64(1000));
}

TEST_CASE("trace csv format") {
  const auto res = scan_online<std::int64_t>({1, 2, 3}, int_add);
  std::ostringstream os;
  write_trace_csv(os, res.trace);
  CHECK(os.str() ==
        "t,insert_calls,emit_calls,occupied_roots\n"
        "0,0,0,1\n"
        "1,1,0,1\n"
        "2,0,1,2\n");
}

TEST_CASE("counter slot overflow guard") {
  // Slot indexes are capped at 63; reaching slot 64 would need 2^64
  // elements, so only the guard itself is exercised here.
  CounterState<std::int64_t> st;
  st.roots.assign(64, std::int64_t{1});
  st.elements_seen = 1;  // irrelevant to the carry chain
  CHECK_THROWS_AS(counter_insert(st, std::int64_t{1}, int_add), OverflowError);
}

TEST_CASE("right padding never reaches a consumed prefix") {
  // Exclusive prefix i reads only elements < i, so prefixes at real indexes
  // are independent of the pad values appended to reach a power of two —
  // the fact the chunked forward pass relies on when it pads with null
  // states.
  const auto real = random_doubles(11, 55);
  for (std::uint64_t pad_seed : {1u, 2u, 3u}) {
    std::vector<double> a = real, b = real;
    SplitMix64 rng(pad_seed);
    while (a.size() < 16) {
      a.push_back(0.0);
      b.push_back(rng.next_signed(100.0));
    }
    const auto ra = scan_static(a, f64_sub);
    const auto rb = scan_static(b, f64_sub);
    for (std::size_t i = 1; i <= real.size(); ++i)
      CHECK(bitwise_equal(*ra.prefixes[i], *rb.prefixes[i]));
  }
}

TEST_CASE("static scan is bitwise stable under thread limits") {
  const auto xs = random_doubles(128, 90);
  set_thread_limit(1);
  const auto serial = scan_static(xs, f64_sub);
  set_thread_limit(4);
  const auto parallel = scan_static(xs, f64_sub);
  set_thread_limit(1);
  REQUIRE(serial.prefixes.size() == parallel.prefixes.size());
  for (std::size_t i = 1; i < serial.prefixes.size(); ++i)
    CHECK(bitwise_equal(*serial.prefixes[i], *parallel.prefixes[i]));
  CHECK(bitwise_equal(serial.total, parallel.total));
}
