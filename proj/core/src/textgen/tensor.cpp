#include "verco/textgen/tensor.hpp"

#include <vector>

namespace verco::textgen::kernels {

Scalar dot(const Scalar* a, const Scalar* b, int n) {
  Scalar s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

void axpy(Scalar alpha, const Scalar* x, Scalar* y, int n) {
  for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void matmul_nt(const Tensor& x, const Tensor& w, Tensor& y, bool accumulate) {
  const int t_rows = x.rows, k = x.cols, d = w.rows;
  if (!accumulate) y = Tensor(t_rows, d);
  // Row-times-transpose as a sum of scaled rows of w^T; the inner loop is an
  // axpy over contiguous memory, which vectorizes without reassociation.
  thread_local std::vector<Scalar> wt;
  wt.resize(static_cast<std::size_t>(k) * d);
  for (int i = 0; i < d; ++i) {
    const Scalar* wr = w.row(i);
    for (int j = 0; j < k; ++j) wt[static_cast<std::size_t>(j) * d + i] = wr[j];
  }
  for (int t = 0; t < t_rows; ++t) {
    const Scalar* xr = x.row(t);
    Scalar* yr = y.row(t);
    for (int j = 0; j < k; ++j) {
      if (xr[j] != 0.0) axpy(xr[j], wt.data() + static_cast<std::size_t>(j) * d, yr, d);
    }
  }
}

void matmul_nn_acc(const Tensor& dy, const Tensor& w, Tensor& dx) {
  const int t_rows = dy.rows, d = dy.cols, k = w.cols;
  for (int t = 0; t < t_rows; ++t) {
    const Scalar* g = dy.row(t);
    Scalar* out = dx.row(t);
    for (int i = 0; i < d; ++i) {
      if (g[i] != 0.0) axpy(g[i], w.row(i), out, k);
    }
  }
}

void matmul_tn_acc(const Tensor& dy, const Tensor& x, Tensor& dw) {
  const int t_rows = dy.rows, d = dy.cols, k = x.cols;
  for (int t = 0; t < t_rows; ++t) {
    const Scalar* g = dy.row(t);
    const Scalar* xr = x.row(t);
    for (int i = 0; i < d; ++i) {
      if (g[i] != 0.0) axpy(g[i], xr, dw.row(i), k);
    }
  }
}

}  // namespace verco::textgen::kernels
