#pragma once
// Symmetric fixed-point quantization, the exact integer matmul the optical
// model is validated against, and the nonlinearities that stay electronic.

#include <cstdint>
#include <vector>

#include "lightvit/tensor.hpp"

namespace lightvit {

inline constexpr int kMinBits = 2;
inline constexpr int kMaxBits = 16;  // codes are stored as int16

/// Largest representable code magnitude for a symmetric b-bit range.
/// The most negative two's-complement code is never produced.
constexpr int32_t code_limit(int bits) { return (1 << (bits - 1)) - 1; }

/// Integer codes plus a single power-agnostic scale: value = code * scale.
struct QuantTensor {
  Shape shape;
  std::vector<int16_t> codes;
  double scale = 1.0;
  int bits = 8;

  int64_t numel() const { return static_cast<int64_t>(codes.size()); }
  int32_t limit() const { return code_limit(bits); }
  int64_t rows() const;
  int64_t cols() const;
  int16_t at(int64_t r, int64_t c) const;

  QuantTensor transposed() const;
  Tensor dequantize() const;
};

/// Wide integer accumulators produced by exact code-domain matmuls.
/// int64 storage covers every dot product the simulator can produce
/// (2*bits + log2(K) <= 63 for bits <= 16 and K well beyond 2^30).
struct AccumTensor {
  Shape shape;
  std::vector<int64_t> values;
  double scale = 1.0;  // product of the operand scales

  int64_t numel() const { return static_cast<int64_t>(values.size()); }
  int64_t rows() const;
  int64_t cols() const;
  int64_t at(int64_t r, int64_t c) const;
  Tensor dequantize() const;
};

// ===== quantize / dequantize =====

/// Symmetric per-tensor quantization. scale = max|x| / code_limit(bits);
/// an all-zero input gets scale 1. Rounding is half away from zero and the
/// resulting codes always sit inside the symmetric range.
QuantTensor quantize_symmetric(const Tensor& x, int bits);

Tensor dequantize(const QuantTensor& t);

// ===== exact integer kernels =====

/// Plain exact integer matmul over codes; result scale is the product of
/// the operand scales. This is the arithmetic the optical path must match
/// bit for bit when noise is off and the converters are ideal.
AccumTensor matmul_exact(const QuantTensor& a, const QuantTensor& b);

/// Re-quantizes w / sqrt(d_k) at the same bit width; the returned scale
/// absorbs the division. d_k == 1 returns the input unchanged.
QuantTensor fold_scale(const QuantTensor& w, int d_k);

// ===== electronic nonlinearities (real arithmetic) =====

/// Numerically stable row softmax (max subtraction on both sides).
Tensor softmax_rows(const Tensor& x);

enum class GeluKind { TanhApprox, Erf };

Tensor gelu(const Tensor& x, GeluKind kind = GeluKind::TanhApprox);
double gelu_scalar(double x, GeluKind kind);

/// Row-wise layernorm with population variance and affine (gamma, beta).
Tensor layernorm(const Tensor& x, const std::vector<double>& gamma,
                 const std::vector<double>& beta, double eps = 1e-10);

}  // namespace lightvit
