#include "lightvit/quant.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lightvit {

namespace {

void check_bits(int bits) {
  if (bits < kMinBits || bits > kMaxBits)
    throw std::invalid_argument("bit width " + std::to_string(bits) + " outside [" +
                                std::to_string(kMinBits) + ", " + std::to_string(kMaxBits) + "]");
}

int64_t matrix_rows(const Shape& s, const char* what) {
  if (s.size() != 2) throw std::logic_error(std::string(what) + ": not 2-d, shape " + shape_str(s));
  return s[0];
}

}  // namespace

int64_t QuantTensor::rows() const { return matrix_rows(shape, "QuantTensor::rows"); }
int64_t QuantTensor::cols() const {
  matrix_rows(shape, "QuantTensor::cols");
  return shape[1];
}

int16_t QuantTensor::at(int64_t r, int64_t c) const {
  return codes[static_cast<size_t>(r * cols() + c)];
}

QuantTensor QuantTensor::transposed() const {
  QuantTensor out;
  out.shape = {cols(), rows()};
  out.codes.resize(codes.size());
  out.scale = scale;
  out.bits = bits;
  const int64_t r = rows(), c = cols();
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out.codes[static_cast<size_t>(j * r + i)] = codes[static_cast<size_t>(i * c + j)];
  return out;
}

Tensor QuantTensor::dequantize() const { return lightvit::dequantize(*this); }

int64_t AccumTensor::rows() const { return matrix_rows(shape, "AccumTensor::rows"); }
int64_t AccumTensor::cols() const {
  matrix_rows(shape, "AccumTensor::cols");
  return shape[1];
}

int64_t AccumTensor::at(int64_t r, int64_t c) const {
  return values[static_cast<size_t>(r * cols() + c)];
}

Tensor AccumTensor::dequantize() const {
  Tensor out(shape);
  for (size_t i = 0; i < values.size(); ++i) out.data[i] = static_cast<double>(values[i]) * scale;
  return out;
}

QuantTensor quantize_symmetric(const Tensor& x, int bits) {
  check_bits(bits);
  const int32_t limit = code_limit(bits);
  QuantTensor out;
  out.shape = x.shape;
  out.bits = bits;
  out.codes.resize(x.data.size());

  const double m = x.max_abs();
  out.scale = (m == 0.0) ? 1.0 : m / static_cast<double>(limit);
  const double inv = 1.0 / out.scale;
  for (size_t i = 0; i < x.data.size(); ++i) {
    // std::round is half away from zero, which is the convention here.
    double q = std::round(x.data[i] * inv);
    if (q > limit) q = limit;
    if (q < -limit) q = -limit;
    out.codes[i] = static_cast<int16_t>(q);
  }
  return out;
}

Tensor dequantize(const QuantTensor& t) {
  Tensor out(t.shape);
  for (size_t i = 0; i < t.codes.size(); ++i) out.data[i] = static_cast<double>(t.codes[i]) * t.scale;
  return out;
}

AccumTensor matmul_exact(const QuantTensor& a, const QuantTensor& b) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul_exact: inner dims differ, " + shape_str(a.shape) + " vs " +
                                shape_str(b.shape));
  const int64_t n = a.rows(), k = a.cols(), m = b.cols();
  AccumTensor out;
  out.shape = {n, m};
  out.values.assign(static_cast<size_t>(n * m), 0);
  out.scale = a.scale * b.scale;
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t p = 0; p < k; ++p) {
      const int64_t av = a.codes[static_cast<size_t>(i * k + p)];
      if (av == 0) continue;
      const int16_t* brow = b.codes.data() + p * m;
      int64_t* orow = out.values.data() + i * m;
      for (int64_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

QuantTensor fold_scale(const QuantTensor& w, int d_k) {
  if (d_k < 1) throw std::invalid_argument("fold_scale: d_k must be >= 1");
  if (d_k == 1) return w;
  Tensor folded = w.dequantize();
  const double inv = 1.0 / std::sqrt(static_cast<double>(d_k));
  for (double& v : folded.data) v *= inv;
  return quantize_symmetric(folded, w.bits);
}

Tensor softmax_rows(const Tensor& x) {
  const int64_t n = x.rows(), m = x.cols();
  if (m < 1) throw std::invalid_argument("softmax_rows: empty rows");
  Tensor out = Tensor::matrix(n, m);
  for (int64_t i = 0; i < n; ++i) {
    double mx = x.at(i, 0);
    for (int64_t j = 1; j < m; ++j) mx = std::max(mx, x.at(i, j));
    double sum = 0.0;
    for (int64_t j = 0; j < m; ++j) {
      const double e = std::exp(x.at(i, j) - mx);
      out.at(i, j) = e;
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (int64_t j = 0; j < m; ++j) out.at(i, j) *= inv;
  }
  return out;
}

double gelu_scalar(double x, GeluKind kind) {
  if (kind == GeluKind::Erf) return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
  constexpr double k0 = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double k1 = 0.044715;
  return 0.5 * x * (1.0 + std::tanh(k0 * (x + k1 * x * x * x)));
}

Tensor gelu(const Tensor& x, GeluKind kind) {
  Tensor out = x;
  for (double& v : out.data) v = gelu_scalar(v, kind);
  return out;
}

Tensor layernorm(const Tensor& x, const std::vector<double>& gamma,
                 const std::vector<double>& beta, double eps) {
  const int64_t n = x.rows(), m = x.cols();
  if (static_cast<int64_t>(gamma.size()) != m || static_cast<int64_t>(beta.size()) != m)
    throw std::invalid_argument("layernorm: affine size mismatch with " + shape_str(x.shape));
  Tensor out = Tensor::matrix(n, m);
  for (int64_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (int64_t j = 0; j < m; ++j) mean += x.at(i, j);
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (int64_t j = 0; j < m; ++j) {
      const double d = x.at(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(m);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (int64_t j = 0; j < m; ++j)
      out.at(i, j) = (x.at(i, j) - mean) * inv * gamma[static_cast<size_t>(j)] + beta[static_cast<size_t>(j)];
  }
  return out;
}

}  // namespace lightvit
