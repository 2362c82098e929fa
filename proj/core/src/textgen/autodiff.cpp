#include "verco/textgen/autodiff.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_set>

#include "verco/common/error.hpp"

namespace verco::textgen::ad {

namespace {

thread_local bool g_grad_enabled = true;

using NodePtr = std::shared_ptr<Node>;

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value())) throw UsageError(std::string(op) + ": shape mismatch");
}

// Builds an op result. The closure is kept only when a parent needs a
// gradient and recording is enabled.
Var make_result(Tensor value, std::vector<NodePtr> parents, std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || p->requires_grad;
    if (needs) {
      node->requires_grad = true;
      node->parents = std::move(parents);
      node->backward_fn = std::move(fn);
    }
  }
  return Var(std::move(node));
}

bool wants(const NodePtr& p) { return p->requires_grad; }

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.empty()) grad = Tensor(value.rows, value.cols);
  return grad;
}

Scalar Var::item() const {
  if (value().size() != 1) throw UsageError("item() on a non-scalar variable");
  return value().data[0];
}

Var parameter(Tensor value, bool trainable) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = trainable;
  return Var(std::move(node));
}

Var constant(Tensor value) { return parameter(std::move(value), false); }

Var scalar(Scalar v) { return constant(Tensor(1, 1, v)); }

bool grad_enabled() { return g_grad_enabled; }
NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void backward(const Var& loss) {
  if (!loss) throw UsageError("backward on an empty variable");
  if (loss.value().size() != 1) throw UsageError("backward needs a scalar loss");
  Node* root = loss.node();
  if (!root->requires_grad || (root->parents.empty() && !root->backward_fn)) {
    throw UsageError("backward on a scalar with no graph to trainable parameters");
  }
  // Iterative post-order DFS for a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !visited.contains(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->grad_buffer().data[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  // Interior gradients are not needed once propagated.
  for (Node* n : order) {
    if (n->backward_fn) n->grad = Tensor();
  }
}

// ---------------------------------------------------------------------------

Var matmul_nt(const Var& x, const Var& w) {
  if (x.cols() != w.cols()) throw UsageError("matmul_nt: inner dimensions differ");
  Tensor y;
  kernels::matmul_nt(x.value(), w.value(), y, false);
  auto xs = x.shared(), ws = w.shared();
  return make_result(std::move(y), {xs, ws}, [xs, ws](Node& self) {
    if (wants(xs)) kernels::matmul_nn_acc(self.grad, ws->value, xs->grad_buffer());
    if (wants(ws)) kernels::matmul_tn_acc(self.grad, xs->value, ws->grad_buffer());
  });
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += b.value().data[i];
  auto as = a.shared(), bs = b.shared();
  return make_result(std::move(y), {as, bs}, [as, bs](Node& self) {
    for (const auto& p : {as, bs}) {
      if (!wants(p)) continue;
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += self.grad.data[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] -= b.value().data[i];
  auto as = a.shared(), bs = b.shared();
  return make_result(std::move(y), {as, bs}, [as, bs](Node& self) {
    if (wants(as)) {
      auto& g = as->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += self.grad.data[i];
    }
    if (wants(bs)) {
      auto& g = bs->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] -= self.grad.data[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] *= b.value().data[i];
  auto as = a.shared(), bs = b.shared();
  return make_result(std::move(y), {as, bs}, [as, bs](Node& self) {
    if (wants(as)) {
      auto& g = as->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += self.grad.data[i] * bs->value.data[i];
    }
    if (wants(bs)) {
      auto& g = bs->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += self.grad.data[i] * as->value.data[i];
    }
  });
}

Var add_row(const Var& x, const Var& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) throw UsageError("add_row: bias must be 1 x cols");
  Tensor y = x.value();
  for (int r = 0; r < y.rows; ++r) {
    for (int c = 0; c < y.cols; ++c) y(r, c) += bias.value()(0, c);
  }
  auto xs = x.shared(), bs = bias.shared();
  return make_result(std::move(y), {xs, bs}, [xs, bs](Node& self) {
    if (wants(xs)) {
      auto& g = xs->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += self.grad.data[i];
    }
    if (wants(bs)) {
      auto& g = bs->grad_buffer();
      for (int r = 0; r < self.grad.rows; ++r) {
        for (int c = 0; c < self.grad.cols; ++c) g(0, c) += self.grad(r, c);
      }
    }
  });
}

Var scale(const Var& a, Scalar s) {
  Tensor y = a.value();
  for (auto& v : y.data) v *= s;
  auto as = a.shared();
  return make_result(std::move(y), {as}, [as, s](Node& self) {
    auto& g = as->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += s * self.grad.data[i];
  });
}

Var add_scalar(const Var& a, Scalar s) {
  Tensor y = a.value();
  for (auto& v : y.data) v += s;
  auto as = a.shared();
  return make_result(std::move(y), {as}, [as](Node& self) {
    auto& g = as->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += self.grad.data[i];
  });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var exp(const Var& a) {
  Tensor y = a.value();
  for (auto& v : y.data) v = std::exp(v);
  auto as = a.shared();
  return make_result(std::move(y), {as}, [as](Node& self) {
    auto& g = as->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += self.grad.data[i] * self.value.data[i];
  });
}

Var square(const Var& a) {
  Tensor y = a.value();
  for (auto& v : y.data) v = v * v;
  auto as = a.shared();
  return make_result(std::move(y), {as}, [as](Node& self) {
    auto& g = as->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += 2.0 * as->value.data[i] * self.grad.data[i];
  });
}

namespace {
constexpr Scalar kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr Scalar kGeluA = 0.044715;
}  // namespace

Var gelu(const Var& a) {
  Tensor y = a.value();
  for (auto& v : y.data) {
    const Scalar x = v;
    v = 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
  }
  auto as = a.shared();
  return make_result(std::move(y), {as}, [as](Node& self) {
    auto& g = as->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const Scalar x = as->value.data[i];
      const Scalar u = kGeluC * (x + kGeluA * x * x * x);
      const Scalar t = std::tanh(u);
      const Scalar du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
      const Scalar d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
      g.data[i] += d * self.grad.data[i];
    }
  });
}

Var clamp(const Var& a, Scalar lo, Scalar hi) {
  Tensor y = a.value();
  for (auto& v : y.data) v = std::min(std::max(v, lo), hi);
  auto as = a.shared();
  return make_result(std::move(y), {as}, [as, lo, hi](Node& self) {
    auto& g = as->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const Scalar x = as->value.data[i];
      if (x >= lo && x <= hi) g.data[i] += self.grad.data[i];
    }
  });
}

namespace {
Var select_elementwise(const Var& a, const Var& b, bool take_min) {
  check_same_shape(a, b, take_min ? "minimum" : "maximum");
  Tensor y = a.value();
  std::vector<std::uint8_t> from_a(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const Scalar av = a.value().data[i], bv = b.value().data[i];
    const bool pick_a = take_min ? av <= bv : av >= bv;
    from_a[i] = pick_a ? 1 : 0;
    y.data[i] = pick_a ? av : bv;
  }
  auto as = a.shared(), bs = b.shared();
  return make_result(std::move(y), {as, bs}, [as, bs, from_a = std::move(from_a)](Node& self) {
    for (std::size_t i = 0; i < from_a.size(); ++i) {
      const auto& target = from_a[i] ? as : bs;
      if (wants(target)) target->grad_buffer().data[i] += self.grad.data[i];
    }
  });
}
}  // namespace

Var minimum(const Var& a, const Var& b) { return select_elementwise(a, b, true); }
Var maximum(const Var& a, const Var& b) { return select_elementwise(a, b, false); }

Var sum(const Var& a) {
  Scalar s = 0.0;
  for (Scalar v : a.value().data) s += v;
  auto as = a.shared();
  return make_result(Tensor(1, 1, s), {as}, [as](Node& self) {
    auto& g = as->grad_buffer();
    const Scalar d = self.grad.data[0];
    for (auto& v : g.data) v += d;
  });
}

Var mean(const Var& a) {
  if (a.value().size() == 0) throw UsageError("mean of an empty variable");
  return scale(sum(a), 1.0 / static_cast<Scalar>(a.value().size()));
}

Var gather_rows(const Var& x, std::span<const int> rows) {
  Tensor y(static_cast<int>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= x.rows()) throw UsageError("gather_rows: row index out of range");
    std::copy_n(x.value().row(rows[i]), x.cols(), y.row(static_cast<int>(i)));
  }
  auto xs = x.shared();
  std::vector<int> idx(rows.begin(), rows.end());
  return make_result(std::move(y), {xs}, [xs, idx = std::move(idx)](Node& self) {
    auto& g = xs->grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      kernels::axpy(1.0, self.grad.row(static_cast<int>(i)), g.row(idx[i]), g.cols);
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw UsageError("concat_rows of nothing");
  const int cols = parts[0].cols();
  int rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw UsageError("concat_rows: column mismatch");
    rows += p.rows();
  }
  Tensor y(rows, cols);
  std::vector<NodePtr> parents;
  int at = 0;
  for (const Var& p : parts) {
    std::copy(p.value().data.begin(), p.value().data.end(), y.row(at));
    at += p.rows();
    parents.push_back(p.shared());
  }
  auto ps = parents;
  return make_result(std::move(y), std::move(parents), [ps](Node& self) {
    std::size_t offset = 0;
    for (const auto& p : ps) {
      const std::size_t n = p->value.size();
      if (wants(p)) {
        auto& g = p->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) g.data[i] += self.grad.data[offset + i];
      }
      offset += n;
    }
  });
}

Var segment_sum(const Var& x, std::span<const int> segment, int num_segments) {
  if (x.cols() != 1 || static_cast<std::size_t>(x.rows()) != segment.size()) {
    throw UsageError("segment_sum expects an n x 1 input with one segment id per row");
  }
  Tensor y(num_segments, 1);
  for (std::size_t i = 0; i < segment.size(); ++i) {
    if (segment[i] < 0 || segment[i] >= num_segments) throw UsageError("segment id out of range");
    y.data[static_cast<std::size_t>(segment[i])] += x.value().data[i];
  }
  auto xs = x.shared();
  std::vector<int> seg(segment.begin(), segment.end());
  return make_result(std::move(y), {xs}, [xs, seg = std::move(seg)](Node& self) {
    auto& g = xs->grad_buffer();
    for (std::size_t i = 0; i < seg.size(); ++i) g.data[i] += self.grad.data[static_cast<std::size_t>(seg[i])];
  });
}

Var detach(const Var& x) { return constant(x.value()); }

Var embedding(const Var& table, std::span<const int> ids) {
  return gather_rows(table, ids);
}

Var rms_norm(const Var& x, const Var& gain, Scalar eps) {
  if (gain.rows() != 1 || gain.cols() != x.cols()) throw UsageError("rms_norm: gain must be 1 x cols");
  const int t_rows = x.rows(), d = x.cols();
  Tensor y(t_rows, d);
  std::vector<Scalar> inv_rms(static_cast<std::size_t>(t_rows));
  for (int t = 0; t < t_rows; ++t) {
    const Scalar* xr = x.value().row(t);
    const Scalar ms = kernels::dot(xr, xr, d) / d;
    const Scalar inv = 1.0 / std::sqrt(ms + eps);
    inv_rms[static_cast<std::size_t>(t)] = inv;
    for (int c = 0; c < d; ++c) y(t, c) = xr[c] * inv * gain.value()(0, c);
  }
  auto xs = x.shared(), gs = gain.shared();
  return make_result(std::move(y), {xs, gs}, [xs, gs, inv_rms = std::move(inv_rms)](Node& self) {
    const int rows = self.value.rows, d = self.value.cols;
    for (int t = 0; t < rows; ++t) {
      const Scalar inv = inv_rms[static_cast<std::size_t>(t)];
      const Scalar* xr = xs->value.row(t);
      const Scalar* dy = self.grad.row(t);
      if (wants(gs)) {
        auto& gg = gs->grad_buffer();
        for (int c = 0; c < d; ++c) gg(0, c) += dy[c] * xr[c] * inv;
      }
      if (wants(xs)) {
        // xhat = x * inv; dxhat = dy * g; dx = inv * (dxhat - xhat * mean(dxhat * xhat))
        Scalar m = 0.0;
        for (int c = 0; c < d; ++c) m += dy[c] * gs->value(0, c) * xr[c] * inv;
        m /= d;
        Scalar* dx = xs->grad_buffer().row(t);
        for (int c = 0; c < d; ++c) dx[c] += inv * (dy[c] * gs->value(0, c) - xr[c] * inv * m);
      }
    }
  });
}

namespace {
// cos/sin tables for rope: [T x d/2], pair p of head h uses frequency index
// p within the head.
void rope_tables(std::span<const int> positions, int d, int n_heads, std::vector<Scalar>& cs, std::vector<Scalar>& sn) {
  const int dh = d / n_heads;
  const int half = dh / 2;
  cs.assign(positions.size() * static_cast<std::size_t>(half), 0.0);
  sn.assign(cs.size(), 0.0);
  for (std::size_t t = 0; t < positions.size(); ++t) {
    for (int p = 0; p < half; ++p) {
      const Scalar freq = std::pow(10000.0, -2.0 * p / dh);
      const Scalar angle = positions[t] * freq;
      cs[t * half + p] = std::cos(angle);
      sn[t * half + p] = std::sin(angle);
    }
  }
}
}  // namespace

Var rope(const Var& x, std::span<const int> positions, int n_heads) {
  const int t_rows = x.rows(), d = x.cols();
  if (static_cast<std::size_t>(t_rows) != positions.size()) throw UsageError("rope: one position per row");
  if (d % n_heads != 0 || (d / n_heads) % 2 != 0) throw UsageError("rope: head dim must be even");
  const int dh = d / n_heads, half = dh / 2;
  std::vector<Scalar> cs, sn;
  rope_tables(positions, d, n_heads, cs, sn);
  Tensor y(t_rows, d);
  for (int t = 0; t < t_rows; ++t) {
    const Scalar* xr = x.value().row(t);
    Scalar* yr = y.row(t);
    for (int h = 0; h < n_heads; ++h) {
      for (int p = 0; p < half; ++p) {
        const int i0 = h * dh + 2 * p;
        const Scalar c = cs[static_cast<std::size_t>(t * half + p)], s = sn[static_cast<std::size_t>(t * half + p)];
        yr[i0] = xr[i0] * c - xr[i0 + 1] * s;
        yr[i0 + 1] = xr[i0] * s + xr[i0 + 1] * c;
      }
    }
  }
  auto xs = x.shared();
  return make_result(std::move(y), {xs}, [xs, n_heads, cs = std::move(cs), sn = std::move(sn)](Node& self) {
    const int rows = self.value.rows, d = self.value.cols, dh = d / n_heads, half = dh / 2;
    auto& g = xs->grad_buffer();
    for (int t = 0; t < rows; ++t) {
      const Scalar* dy = self.grad.row(t);
      Scalar* dx = g.row(t);
      for (int h = 0; h < n_heads; ++h) {
        for (int p = 0; p < half; ++p) {
          const int i0 = h * dh + 2 * p;
          const Scalar c = cs[static_cast<std::size_t>(t * half + p)], s = sn[static_cast<std::size_t>(t * half + p)];
          dx[i0] += dy[i0] * c + dy[i0 + 1] * s;
          dx[i0 + 1] += -dy[i0] * s + dy[i0 + 1] * c;
        }
      }
    }
  });
}

Var attention(const Var& q, const Var& k, const Var& v, int n_heads, std::shared_ptr<const AttentionMask> mask) {
  const int t_rows = q.rows(), d = q.cols();
  if (!q.value().same_shape(k.value()) || !q.value().same_shape(v.value())) {
    throw UsageError("attention: q, k, v shapes differ");
  }
  if (d % n_heads != 0) throw UsageError("attention: d_model not divisible by heads");
  if (mask && !mask->causal_only() && mask->size != t_rows) throw UsageError("attention: mask size mismatch");
  const int dh = d / n_heads;
  const Scalar inv_sqrt = 1.0 / std::sqrt(static_cast<Scalar>(dh));

  auto allowed = [&mask](int i, int j) { return !mask || mask->permits(i, j); };

  // probs[h][i][j] for j <= i, stored densely per head.
  std::vector<Scalar> probs(static_cast<std::size_t>(n_heads) * t_rows * t_rows, 0.0);
  Tensor out(t_rows, d);
  std::vector<Scalar> scores(static_cast<std::size_t>(t_rows));
  for (int h = 0; h < n_heads; ++h) {
    const int off = h * dh;
    for (int i = 0; i < t_rows; ++i) {
      const Scalar* qi = q.value().row(i) + off;
      Scalar mx = -std::numeric_limits<Scalar>::infinity();
      for (int j = 0; j <= i; ++j) {
        if (!allowed(i, j)) continue;
        scores[static_cast<std::size_t>(j)] = kernels::dot(qi, k.value().row(j) + off, dh) * inv_sqrt;
        mx = std::max(mx, scores[static_cast<std::size_t>(j)]);
      }
      Scalar z = 0.0;
      Scalar* pi = probs.data() + (static_cast<std::size_t>(h) * t_rows + i) * t_rows;
      for (int j = 0; j <= i; ++j) {
        if (!allowed(i, j)) continue;
        pi[j] = std::exp(scores[static_cast<std::size_t>(j)] - mx);
        z += pi[j];
      }
      Scalar* oi = out.row(i) + off;
      for (int j = 0; j <= i; ++j) {
        if (!allowed(i, j)) continue;
        pi[j] /= z;
        kernels::axpy(pi[j], v.value().row(j) + off, oi, dh);
      }
    }
  }

  auto qs = q.shared(), ks = k.shared(), vs = v.shared();
  return make_result(std::move(out), {qs, ks, vs},
                     [qs, ks, vs, n_heads, mask, probs = std::move(probs), inv_sqrt](Node& self) {
    const int rows = self.value.rows, d = self.value.cols, dh = d / n_heads;
    auto allowed = [&mask](int i, int j) { return !mask || mask->permits(i, j); };
    Tensor* dq = wants(qs) ? &qs->grad_buffer() : nullptr;
    Tensor* dk = wants(ks) ? &ks->grad_buffer() : nullptr;
    Tensor* dv = wants(vs) ? &vs->grad_buffer() : nullptr;
    std::vector<Scalar> dp(static_cast<std::size_t>(rows));
    for (int h = 0; h < n_heads; ++h) {
      const int off = h * dh;
      for (int i = 0; i < rows; ++i) {
        const Scalar* pi = probs.data() + (static_cast<std::size_t>(h) * rows + i) * rows;
        const Scalar* doi = self.grad.row(i) + off;
        Scalar weighted = 0.0;
        for (int j = 0; j <= i; ++j) {
          if (!allowed(i, j)) continue;
          dp[static_cast<std::size_t>(j)] = kernels::dot(doi, vs->value.row(j) + off, dh);
          weighted += pi[j] * dp[static_cast<std::size_t>(j)];
          if (dv) kernels::axpy(pi[j], doi, dv->row(j) + off, dh);
        }
        for (int j = 0; j <= i; ++j) {
          if (!allowed(i, j)) continue;
          const Scalar ds = pi[j] * (dp[static_cast<std::size_t>(j)] - weighted) * inv_sqrt;
          if (ds == 0.0) continue;
          if (dq) kernels::axpy(ds, ks->value.row(j) + off, dq->row(i) + off, dh);
          if (dk) kernels::axpy(ds, qs->value.row(i) + off, dk->row(j) + off, dh);
        }
      }
    }
  });
}

Var log_softmax_pick(const Var& x, std::span<const int> cols) {
  if (static_cast<std::size_t>(x.rows()) != cols.size()) throw UsageError("log_softmax_pick: one column per row");
  const int n = x.rows(), vocab = x.cols();
  Tensor y(n, 1);
  std::vector<Scalar> lse(static_cast<std::size_t>(n));
  for (int r = 0; r < n; ++r) {
    if (cols[static_cast<std::size_t>(r)] < 0 || cols[static_cast<std::size_t>(r)] >= vocab) {
      throw UsageError("log_softmax_pick: column out of range");
    }
    const Scalar* xr = x.value().row(r);
    Scalar mx = xr[0];
    for (int c = 1; c < vocab; ++c) mx = std::max(mx, xr[c]);
    Scalar z = 0.0;
    for (int c = 0; c < vocab; ++c) z += std::exp(xr[c] - mx);
    lse[static_cast<std::size_t>(r)] = mx + std::log(z);
    y.data[static_cast<std::size_t>(r)] = xr[cols[static_cast<std::size_t>(r)]] - lse[static_cast<std::size_t>(r)];
  }
  auto xs = x.shared();
  std::vector<int> picked(cols.begin(), cols.end());
  return make_result(std::move(y), {xs}, [xs, picked = std::move(picked), lse = std::move(lse)](Node& self) {
    auto& g = xs->grad_buffer();
    for (int r = 0; r < g.rows; ++r) {
      const Scalar d = self.grad.data[static_cast<std::size_t>(r)];
      if (d == 0.0) continue;
      const Scalar* xr = xs->value.row(r);
      Scalar* gr = g.row(r);
      for (int c = 0; c < g.cols; ++c) gr[c] -= d * std::exp(xr[c] - lse[static_cast<std::size_t>(r)]);
      gr[picked[static_cast<std::size_t>(r)]] += d;
    }
  });
}

Var log_softmax_vector(const Var& x) {
  const auto& xv = x.value().data;
  if (xv.empty()) throw UsageError("log_softmax_vector of nothing");
  Scalar mx = xv[0];
  for (Scalar v : xv) mx = std::max(mx, v);
  Scalar z = 0.0;
  for (Scalar v : xv) z += std::exp(v - mx);
  const Scalar lse = mx + std::log(z);
  Tensor y = x.value();
  for (auto& v : y.data) v -= lse;
  auto xs = x.shared();
  return make_result(std::move(y), {xs}, [xs](Node& self) {
    auto& g = xs->grad_buffer();
    Scalar total = 0.0;
    for (Scalar d : self.grad.data) total += d;
    for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += self.grad.data[i] - std::exp(self.value.data[i]) * total;
  });
}

}  // namespace verco::textgen::ad
