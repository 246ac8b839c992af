#include "psm/matrix.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <string>

namespace psm {

namespace {

[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " +
                       std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                       " and " + std::to_string(b.rows) + "x" +
                       std::to_string(b.cols));
}

}  // namespace

Matrix Matrix::filled(std::size_t r, std::size_t c, double value) {
  Matrix m(r, c);
  for (double& x : m.data) x = value;
  return m;
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) shape_error("matmul", a, b);
  Matrix out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < b.cols; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) acc += a(i, k) * b(k, j);
      out(i, j) = acc;
    }
  }
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols, m.rows);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) out(j, i) = m(i, j);
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) shape_error("add", a, b);
  Matrix out(a.rows, a.cols);
  for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] + b.data[i];
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) shape_error("hadamard", a, b);
  Matrix out(a.rows, a.cols);
  for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] * b.data[i];
  return out;
}

Matrix scale(const Matrix& m, double s) {
  Matrix out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.data.size(); ++i) out.data[i] = m.data[i] * s;
  return out;
}

Matrix exp_neg(const Matrix& m) {
  Matrix out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.data.size(); ++i) out.data[i] = std::exp(-m.data[i]);
  return out;
}

Vector hadamard(const Vector& a, const Vector& b) {
  if (a.size() != b.size())
    throw DimensionError("hadamard: vector lengths differ");
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

Vector exp_neg(const Vector& v) {
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::exp(-v[i]);
  return out;
}

Matrix outer(const Vector& u, const Vector& v) {
  Matrix out(u.size(), v.size());
  for (std::size_t i = 0; i < u.size(); ++i)
    for (std::size_t j = 0; j < v.size(); ++j) out(i, j) = u[i] * v[j];
  return out;
}

Matrix scale_rows(const Matrix& m, const Vector& gains) {
  if (gains.size() != m.rows)
    throw DimensionError("scale_rows: gain length != row count");
  Matrix out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) out(i, j) = m(i, j) * gains[i];
  return out;
}

Matrix scale_cols(const Matrix& m, const Vector& gains) {
  if (gains.size() != m.cols)
    throw DimensionError("scale_cols: gain length != column count");
  Matrix out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) out(i, j) = m(i, j) * gains[j];
  return out;
}

Matrix softmax_rows(const Matrix& m, bool causal) {
  Matrix out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.rows; ++i) {
    const std::size_t limit = causal ? std::min(i + 1, m.cols) : m.cols;
    if (limit == 0)
      throw DimensionError("softmax_rows: row " + std::to_string(i) +
                           " has no unmasked position");
    double mx = m(i, 0);
    for (std::size_t j = 1; j < limit; ++j) mx = std::max(mx, m(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < limit; ++j) {
      out(i, j) = std::exp(m(i, j) - mx);
      sum += out(i, j);
    }
    for (std::size_t j = 0; j < limit; ++j) out(i, j) /= sum;
    // entries past the causal limit stay exactly 0
  }
  return out;
}

Matrix causal_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                        std::size_t head_dim) {
  if (q.cols != head_dim || k.cols != head_dim)
    throw DimensionError("causal_attention: q/k column count != head_dim");
  if (k.rows != v.rows) shape_error("causal_attention k/v", k, v);
  if (q.rows > k.rows)
    throw DimensionError("causal_attention: more queries than keys");
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  Matrix out(q.rows, v.cols);
  std::vector<double> probs(q.rows);
  for (std::size_t i = 0; i < q.rows; ++i) {
    const std::size_t limit = i + 1;  // keys visible to query i
    double mx = 0.0;
    for (std::size_t j = 0; j < limit; ++j) {
      double dot = 0.0;
      for (std::size_t d = 0; d < head_dim; ++d) dot += q(i, d) * k(j, d);
      probs[j] = dot * inv_scale;
      mx = (j == 0) ? probs[j] : std::max(mx, probs[j]);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < limit; ++j) {
      probs[j] = std::exp(probs[j] - mx);
      sum += probs[j];
    }
    for (std::size_t j = 0; j < limit; ++j) probs[j] /= sum;
    for (std::size_t c = 0; c < v.cols; ++c) {
      double acc = 0.0;
      for (std::size_t j = 0; j < limit; ++j) acc += probs[j] * v(j, c);
      out(i, c) = acc;
    }
  }
  return out;
}

Matrix seeded_init(std::size_t rows, std::size_t cols, std::uint64_t seed,
                   double scl) {
  SplitMix64 rng(seed);
  Matrix m(rows, cols);
  for (double& x : m.data) x = rng.next_signed(scl);
  return m;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  SplitMix64 rng(seed ^ (salt * 0xd1b54a32d192ed03ull));
  return rng.next();
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

bool bitwise_equal(double a, double b) {
  return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) return false;
  if (a.data.empty()) return true;
  return std::memcmp(a.data.data(), b.data.data(),
                     a.data.size() * sizeof(double)) == 0;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) shape_error("max_abs_diff", a, b);
  double mx = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    mx = std::max(mx, std::abs(a.data[i] - b.data[i]));
  return mx;
}

double max_rel_diff(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) shape_error("max_rel_diff", a, b);
  double mx = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double x = a.data[i], y = b.data[i];
    const double denom = std::max({std::abs(x), std::abs(y), 1.0});
    mx = std::max(mx, std::abs(x - y) / denom);
  }
  return mx;
}

bool all_finite(const Matrix& m) {
  for (double x : m.data)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace psm
