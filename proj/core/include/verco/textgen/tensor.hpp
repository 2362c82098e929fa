#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

namespace verco::textgen {

using Scalar = double;

// Dense row-major matrix. Vectors are 1xN or Nx1 matrices.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<Scalar> data;

  Tensor() = default;
  Tensor(int r, int c, Scalar fill = 0.0) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  Scalar& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  Scalar operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  Scalar* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
  const Scalar* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }
  std::span<const Scalar> row_span(int r) const { return {row(r), static_cast<std::size_t>(cols)}; }

  void fill(Scalar v) { std::fill(data.begin(), data.end(), v); }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

namespace kernels {

// y[T x d] (+)= x[T x k] * w[d x k]^T
void matmul_nt(const Tensor& x, const Tensor& w, Tensor& y, bool accumulate);
// dx[T x k] += dy[T x d] * w[d x k]
void matmul_nn_acc(const Tensor& dy, const Tensor& w, Tensor& dx);
// dw[d x k] += dy[T x d]^T * x[T x k]
void matmul_tn_acc(const Tensor& dy, const Tensor& x, Tensor& dw);

Scalar dot(const Scalar* a, const Scalar* b, int n);
void axpy(Scalar alpha, const Scalar* x, Scalar* y, int n);

}  // namespace kernels

}  // namespace verco::textgen
