#pragma once

// Dense f64 matrices and vectors with deterministic, fixed-order arithmetic.
// Every reduction accumulates left to right, so identical operand order
// produces identical bits. No BLAS, no platform RNG, no internal threading.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "psm/errors.hpp"

namespace psm {

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major, size == rows * cols

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  static Matrix filled(std::size_t r, std::size_t c, double value);
  static Matrix identity(std::size_t n);

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
  bool empty() const { return data.empty(); }
};

struct Vector {
  std::vector<double> data;

  Vector() = default;
  explicit Vector(std::size_t n) : data(n, 0.0) {}

  std::size_t size() const { return data.size(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
};

// Product with a fixed k-ascending accumulation per output entry.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);

// Pointwise kinds: add, hadamard, scale, exp_neg (e^(-x) per entry).
Matrix add(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& m, double s);
Matrix exp_neg(const Matrix& m);
Vector hadamard(const Vector& a, const Vector& b);
Vector exp_neg(const Vector& v);

Matrix outer(const Vector& u, const Vector& v);          // u v^T
Matrix scale_rows(const Matrix& m, const Vector& gains);  // row i *= gains[i]
Matrix scale_cols(const Matrix& m, const Vector& gains);  // col j *= gains[j]

// Row softmax with max-subtraction. With `causal`, entry (i,j) for j > i is
// exactly 0 and the max/sum run over j <= i only. A row with no unmasked
// position is a precondition violation.
Matrix softmax_rows(const Matrix& m, bool causal = false);

// softmax(q k^T / sqrt(head_dim)) v, masked so output row i reads only rows
// <= i of k and v. Masked positions are skipped, never multiplied by zero,
// so evaluating a leading sub-window reproduces the same leading rows bit
// for bit.
Matrix causal_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                        std::size_t head_dim);

// SplitMix64: the one generator used anywhere in this project. Integer-only
// state transitions, so streams are identical across platforms.
struct SplitMix64 {
  std::uint64_t state;

  explicit SplitMix64(std::uint64_t seed) : state(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53 significant bits.
  double next_unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform in [-scale, scale).
  double next_signed(double scl) { return scl * (2.0 * next_unit() - 1.0); }
};

// Deterministic fill: same (rows, cols, seed, scale) gives identical bits.
Matrix seeded_init(std::size_t rows, std::size_t cols, std::uint64_t seed,
                   double scl);

// Derive a stream seed from a base seed and a salt (weight index, layer id).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

double sigmoid(double x);

bool bitwise_equal(double a, double b);
bool bitwise_equal(const Matrix& a, const Matrix& b);
double max_abs_diff(const Matrix& a, const Matrix& b);
// |x - y| / max(|x|, |y|, 1): relative for large values, absolute near zero.
double max_rel_diff(const Matrix& a, const Matrix& b);
bool all_finite(const Matrix& m);

}  // namespace psm
