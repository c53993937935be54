#include "lightvit/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace lightvit {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) {
    if (d < 0) throw std::invalid_argument("negative dimension in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)) {
  data.assign(static_cast<size_t>(shape_numel(shape)), fill);
}

Tensor Tensor::matrix(int64_t rows, int64_t cols, double fill) {
  return Tensor(Shape{rows, cols}, fill);
}

Tensor Tensor::row(std::vector<double> values) {
  Tensor t;
  t.shape = {1, static_cast<int64_t>(values.size())};
  t.data = std::move(values);
  return t;
}

int64_t Tensor::rows() const {
  if (!is_matrix()) throw std::logic_error("rows(): tensor is not 2-d, shape " + shape_str(shape));
  return shape[0];
}

int64_t Tensor::cols() const {
  if (!is_matrix()) throw std::logic_error("cols(): tensor is not 2-d, shape " + shape_str(shape));
  return shape[1];
}

double& Tensor::at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols() + c)]; }
double Tensor::at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols() + c)]; }

Tensor Tensor::transposed() const {
  Tensor out = Tensor::matrix(cols(), rows());
  for (int64_t r = 0; r < rows(); ++r)
    for (int64_t c = 0; c < cols(); ++c) out.at(c, r) = at(r, c);
  return out;
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (double v : data) m = std::max(m, std::fabs(v));
  return m;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: inner dims differ, " + shape_str(a.shape) + " vs " +
                                shape_str(b.shape));
  const int64_t n = a.rows(), k = a.cols(), m = b.cols();
  Tensor out = Tensor::matrix(n, m);
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t p = 0; p < k; ++p) {
      const double av = a.at(i, p);
      if (av == 0.0) continue;
      const double* brow = b.data.data() + p * m;
      double* orow = out.data.data() + i * m;
      for (int64_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape)
    throw std::invalid_argument("add: shape mismatch " + shape_str(a.shape) + " vs " +
                                shape_str(b.shape));
  Tensor out = a;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

Tensor scale(const Tensor& a, double k) {
  Tensor out = a;
  for (double& v : out.data) v *= k;
  return out;
}

Tensor vstack(const Tensor& top, const Tensor& rest) {
  if (top.cols() != rest.cols())
    throw std::invalid_argument("vstack: column mismatch " + shape_str(top.shape) + " vs " +
                                shape_str(rest.shape));
  Tensor out = Tensor::matrix(top.rows() + rest.rows(), top.cols());
  std::copy(top.data.begin(), top.data.end(), out.data.begin());
  std::copy(rest.data.begin(), rest.data.end(), out.data.begin() + top.data.size());
  return out;
}

}  // namespace lightvit
