#pragma once
// Dense row-major real tensors and the handful of double-precision helpers
// used by the electronic side of the simulator.

#include <cstdint>
#include <string>
#include <vector>

namespace lightvit {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0);
  static Tensor matrix(int64_t rows, int64_t cols, double fill = 0.0);
  static Tensor row(std::vector<double> values);

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  bool is_matrix() const { return shape.size() == 2; }
  int64_t rows() const;
  int64_t cols() const;

  double& at(int64_t r, int64_t c);
  double at(int64_t r, int64_t c) const;

  Tensor transposed() const;
  double max_abs() const;
};

// ===== real-arithmetic helpers (electronic unit) =====

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double k);

// Appends `row` (1 x d) on top of `rest` (n x d).
Tensor vstack(const Tensor& top, const Tensor& rest);

}  // namespace lightvit
