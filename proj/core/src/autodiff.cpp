#include "geomae/autodiff.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace geomae {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

MatMap mat_view(Tensor& t, Index rows, Index cols) {
  return MatMap(t.v.data(), rows, cols);
}

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->val = std::move(value);
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) n->backprop = std::move(backprop);
  return n;
}

// Rows-of-D view: every tensor whose last axis is D is a [N, D] matrix.
Index lead_rows(const Tensor& t) { return t.numel() / t.shape.back(); }

const double kInvSqrt2 = 0.70710678118654752440;
const double kInvSqrt2Pi = 0.39894228040143267794;

Tensor permute_tensor(const Tensor& a, const std::vector<int>& perm) {
  const int r = a.rank();
  Shape out_shape(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) out_shape[i] = a.shape[static_cast<std::size_t>(perm[i])];
  Tensor out(out_shape);
  std::vector<Index> in_strides(static_cast<std::size_t>(r), 1);
  for (int i = r - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * a.shape[i + 1];
  std::vector<Index> out_strides_in_input(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) out_strides_in_input[i] = in_strides[static_cast<std::size_t>(perm[i])];
  std::vector<Index> idx(static_cast<std::size_t>(r), 0);
  const Index n = a.numel();
  Index src = 0;
  for (Index flat = 0; flat < n; ++flat) {
    out.v[static_cast<std::size_t>(flat)] = a.v[static_cast<std::size_t>(src)];
    for (int ax = r - 1; ax >= 0; --ax) {
      idx[ax]++;
      src += out_strides_in_input[ax];
      if (idx[ax] < out_shape[ax]) break;
      src -= out_strides_in_input[ax] * out_shape[ax];
      idx[ax] = 0;
    }
  }
  return out;
}

std::vector<int> inverse_perm(const std::vector<int>& perm) {
  std::vector<int> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
  return inv;
}

}  // namespace

Var make_var(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->val = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

Var constant(Tensor value) { return make_var(std::move(value), false); }

Var scalar_var(double x, bool requires_grad) {
  return make_var(Tensor::scalar(x), requires_grad);
}

void backward(const Var& loss) {
  GEOMAE_CHECK(loss->val.numel() == 1, "backward: loss must be a scalar");
  // Reverse topological order by iterative DFS; child is emitted after all
  // of its parents have been scheduled, then the list is walked backwards.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.get(), 0);
  seen.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order) {
    n->ensure_grad();
    std::fill(n->grad.v.begin(), n->grad.v.end(), 0.0);
  }
  loss->grad.v[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop) n->backprop(*n);
  }
}

// ---------------------------------------------------------------------------
// elementwise

Var add(const Var& a, const Var& b) {
  GEOMAE_CHECK(a->val.same_shape(b->val), "add: shape mismatch");
  Tensor out = a->val;
  for (Index i = 0; i < out.numel(); ++i) out[i] += b->val[i];
  return make_node(std::move(out), {a, b}, [](Node& n) {
    for (int k = 0; k < 2; ++k) {
      Node& p = *n.parents[k];
      if (!p.requires_grad) continue;
      Tensor& g = p.ensure_grad();
      for (Index i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  GEOMAE_CHECK(a->val.same_shape(b->val), "sub: shape mismatch");
  Tensor out = a->val;
  for (Index i = 0; i < out.numel(); ++i) out[i] -= b->val[i];
  return make_node(std::move(out), {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad) {
      Tensor& g = n.parents[0]->ensure_grad();
      for (Index i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
    }
    if (n.parents[1]->requires_grad) {
      Tensor& g = n.parents[1]->ensure_grad();
      for (Index i = 0; i < g.numel(); ++i) g[i] -= n.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  GEOMAE_CHECK(a->val.same_shape(b->val), "mul: shape mismatch");
  Tensor out = a->val;
  for (Index i = 0; i < out.numel(); ++i) out[i] *= b->val[i];
  return make_node(std::move(out), {a, b}, [](Node& n) {
    const Tensor& av = n.parents[0]->val;
    const Tensor& bv = n.parents[1]->val;
    if (n.parents[0]->requires_grad) {
      Tensor& g = n.parents[0]->ensure_grad();
      for (Index i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * bv[i];
    }
    if (n.parents[1]->requires_grad) {
      Tensor& g = n.parents[1]->ensure_grad();
      for (Index i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * av[i];
    }
  });
}

Var scale(const Var& a, double c) {
  Tensor out = a->val;
  for (double& x : out.v) x *= c;
  return make_node(std::move(out), {a}, [c](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    for (Index i = 0; i < g.numel(); ++i) g[i] += c * n.grad[i];
  });
}

Var add_const(const Var& a, const Tensor& c) {
  GEOMAE_CHECK(a->val.same_shape(c), "add_const: shape mismatch");
  Tensor out = a->val;
  for (Index i = 0; i < out.numel(); ++i) out[i] += c[i];
  return make_node(std::move(out), {a}, [](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    for (Index i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
  });
}

Var add_const_rows(const Var& a, const Tensor& rows) {
  const Index d = a->val.shape.back();
  GEOMAE_CHECK(rows.rank() == 2 && rows.shape[1] == d, "add_const_rows: row table mismatch");
  const Index r = rows.shape[0];
  const Index n_rows = lead_rows(a->val);
  GEOMAE_CHECK(n_rows % r == 0, "add_const_rows: rows do not tile input");
  Tensor out = a->val;
  for (Index i = 0; i < n_rows; ++i) {
    const Index src = i % r;
    for (Index j = 0; j < d; ++j) out[i * d + j] += rows.at(src, j);
  }
  return make_node(std::move(out), {a}, [](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    for (Index i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
  });
}

Var add_scaled_const_rows(const Var& a, const Var& s, const Tensor& rows,
                          const std::vector<std::uint8_t>& active) {
  GEOMAE_CHECK(s->val.numel() == 1, "add_scaled_const_rows: scale must be scalar");
  const Index d = a->val.shape.back();
  GEOMAE_CHECK(rows.rank() == 2 && rows.shape[1] == d, "add_scaled_const_rows: row table mismatch");
  const Index r = rows.shape[0];
  const Index n_rows = lead_rows(a->val);
  GEOMAE_CHECK(n_rows % r == 0, "add_scaled_const_rows: rows do not tile input");
  GEOMAE_CHECK(active.empty() || static_cast<Index>(active.size()) == n_rows,
               "add_scaled_const_rows: active mask length mismatch");
  const double sv = s->val[0];
  Tensor out = a->val;
  for (Index i = 0; i < n_rows; ++i) {
    if (!active.empty() && !active[static_cast<std::size_t>(i)]) continue;
    const Index src = i % r;
    for (Index j = 0; j < d; ++j) out[i * d + j] += sv * rows.at(src, j);
  }
  Tensor rows_copy = rows;
  return make_node(std::move(out), {a, s},
                   [rows_copy = std::move(rows_copy), active](Node& n) {
    const Index d = rows_copy.shape[1];
    const Index r = rows_copy.shape[0];
    const Index n_rows = lead_rows(n.val);
    if (n.parents[0]->requires_grad) {
      Tensor& g = n.parents[0]->ensure_grad();
      for (Index i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
    }
    if (n.parents[1]->requires_grad) {
      double acc = 0.0;
      for (Index i = 0; i < n_rows; ++i) {
        if (!active.empty() && !active[static_cast<std::size_t>(i)]) continue;
        const Index src = i % r;
        for (Index j = 0; j < d; ++j) acc += n.grad[i * d + j] * rows_copy.at(src, j);
      }
      n.parents[1]->ensure_grad()[0] += acc;
    }
  });
}

Var gelu(const Var& a) {
  Tensor out = a->val;
  for (double& x : out.v) x = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  return make_node(std::move(out), {a}, [](Node& n) {
    const Tensor& x = n.parents[0]->val;
    Tensor& g = n.parents[0]->ensure_grad();
    for (Index i = 0; i < g.numel(); ++i) {
      const double xi = x[i];
      const double cdf = 0.5 * (1.0 + std::erf(xi * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * xi * xi);
      g[i] += n.grad[i] * (cdf + xi * pdf);
    }
  });
}

Var relu(const Var& a) {
  Tensor out = a->val;
  for (double& x : out.v) x = x > 0.0 ? x : 0.0;
  return make_node(std::move(out), {a}, [](Node& n) {
    const Tensor& x = n.parents[0]->val;
    Tensor& g = n.parents[0]->ensure_grad();
    for (Index i = 0; i < g.numel(); ++i)
      if (x[i] > 0.0) g[i] += n.grad[i];
  });
}

// ---------------------------------------------------------------------------
// shape

Var reshape(const Var& a, Shape s) {
  GEOMAE_CHECK(numel_of(s) == a->val.numel(), "reshape: element count mismatch");
  Tensor out = a->val;
  out.shape = std::move(s);
  return make_node(std::move(out), {a}, [](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    for (Index i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
  });
}

Var permute(const Var& a, const std::vector<int>& perm) {
  GEOMAE_CHECK(static_cast<int>(perm.size()) == a->val.rank(), "permute: rank mismatch");
  Tensor out = permute_tensor(a->val, perm);
  return make_node(std::move(out), {a}, [perm](Node& n) {
    Tensor back = permute_tensor(n.grad, inverse_perm(perm));
    Tensor& g = n.parents[0]->ensure_grad();
    for (Index i = 0; i < g.numel(); ++i) g[i] += back[i];
  });
}

Var transpose_last2(const Var& a) {
  std::vector<int> perm(static_cast<std::size_t>(a->val.rank()));
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
  std::swap(perm[perm.size() - 1], perm[perm.size() - 2]);
  return permute(a, perm);
}

Var slice_lastdim(const Var& a, Index offset, Index size) {
  const Index d = a->val.shape.back();
  GEOMAE_CHECK(offset >= 0 && offset + size <= d, "slice_lastdim: out of range");
  const Index rows = lead_rows(a->val);
  Shape s = a->val.shape;
  s.back() = size;
  Tensor out(s);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < size; ++j) out[i * size + j] = a->val[i * d + offset + j];
  return make_node(std::move(out), {a}, [offset, size, d](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    const Index rows = lead_rows(n.val);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < size; ++j) g[i * d + offset + j] += n.grad[i * size + j];
  });
}

Var slice_rows(const Var& a, Index axis1_offset, Index axis1_size) {
  GEOMAE_CHECK(a->val.rank() == 3, "slice_rows expects [B,L,D]");
  const Index b = a->val.shape[0], l = a->val.shape[1], d = a->val.shape[2];
  GEOMAE_CHECK(axis1_offset >= 0 && axis1_offset + axis1_size <= l, "slice_rows: out of range");
  Tensor out({b, axis1_size, d});
  for (Index bi = 0; bi < b; ++bi)
    for (Index li = 0; li < axis1_size; ++li)
      for (Index di = 0; di < d; ++di) out.at(bi, li, di) = a->val.at(bi, axis1_offset + li, di);
  return make_node(std::move(out), {a}, [axis1_offset](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    const Index b = n.val.shape[0], k = n.val.shape[1], d = n.val.shape[2];
    for (Index bi = 0; bi < b; ++bi)
      for (Index li = 0; li < k; ++li)
        for (Index di = 0; di < d; ++di) g.at(bi, axis1_offset + li, di) += n.grad.at(bi, li, di);
  });
}

Var concat(const std::vector<Var>& xs, int axis) {
  GEOMAE_CHECK(!xs.empty(), "concat: empty input");
  const int r = xs[0]->val.rank();
  GEOMAE_CHECK(axis >= 0 && axis < r, "concat: bad axis");
  Shape out_shape = xs[0]->val.shape;
  Index axis_total = 0;
  for (const auto& x : xs) {
    GEOMAE_CHECK(x->val.rank() == r, "concat: rank mismatch");
    for (int i = 0; i < r; ++i)
      if (i != axis)
        GEOMAE_CHECK(x->val.shape[i] == out_shape[static_cast<std::size_t>(i)], "concat: shape mismatch");
    axis_total += x->val.shape[static_cast<std::size_t>(axis)];
  }
  out_shape[static_cast<std::size_t>(axis)] = axis_total;

  Index outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= out_shape[static_cast<std::size_t>(i)];
  for (int i = axis + 1; i < r; ++i) inner *= out_shape[static_cast<std::size_t>(i)];

  Tensor out(out_shape);
  Index off = 0;
  for (const auto& x : xs) {
    const Index ax = x->val.shape[static_cast<std::size_t>(axis)];
    for (Index o = 0; o < outer; ++o)
      for (Index a2 = 0; a2 < ax; ++a2)
        for (Index in = 0; in < inner; ++in)
          out[(o * axis_total + off + a2) * inner + in] = x->val[(o * ax + a2) * inner + in];
    off += ax;
  }
  std::vector<Var> parents = xs;
  return make_node(std::move(out), std::move(parents), [axis, outer, inner, axis_total](Node& n) {
    Index off = 0;
    for (auto& p : n.parents) {
      const Index ax = p->val.shape[static_cast<std::size_t>(axis)];
      if (p->requires_grad) {
        Tensor& g = p->ensure_grad();
        for (Index o = 0; o < outer; ++o)
          for (Index a2 = 0; a2 < ax; ++a2)
            for (Index in = 0; in < inner; ++in)
              g[(o * ax + a2) * inner + in] += n.grad[(o * axis_total + off + a2) * inner + in];
      }
      off += ax;
    }
  });
}

Var mean_axis1(const Var& a) {
  GEOMAE_CHECK(a->val.rank() == 3, "mean_axis1 expects [B,L,D]");
  const Index b = a->val.shape[0], l = a->val.shape[1], d = a->val.shape[2];
  GEOMAE_CHECK(l > 0, "mean_axis1: empty axis");
  Tensor out({b, d});
  for (Index bi = 0; bi < b; ++bi)
    for (Index li = 0; li < l; ++li)
      for (Index di = 0; di < d; ++di) out.at(bi, di) += a->val.at(bi, li, di);
  for (double& x : out.v) x /= static_cast<double>(l);
  return make_node(std::move(out), {a}, [l](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    const Index b = n.val.shape[0], d = n.val.shape[1];
    const double inv = 1.0 / static_cast<double>(l);
    for (Index bi = 0; bi < b; ++bi)
      for (Index li = 0; li < l; ++li)
        for (Index di = 0; di < d; ++di) g.at(bi, li, di) += n.grad.at(bi, di) * inv;
  });
}

// ---------------------------------------------------------------------------
// linear algebra

Var matmul(const Var& a, const Var& b) {
  GEOMAE_CHECK(a->val.rank() == 2 && b->val.rank() == 2, "matmul expects rank-2");
  const Index m = a->val.shape[0], k = a->val.shape[1], n2 = b->val.shape[1];
  GEOMAE_CHECK(b->val.shape[0] == k, "matmul: inner dim mismatch");
  Tensor out({m, n2});
  mat_view(out, m, n2) = mat_view(a->val, m, k) * mat_view(b->val, k, n2);
  return make_node(std::move(out), {a, b}, [m, k, n2](Node& n) {
    ConstMatMap dy(n.grad.v.data(), m, n2);
    if (n.parents[0]->requires_grad) {
      Tensor& g = n.parents[0]->ensure_grad();
      mat_view(g, m, k) += dy * mat_view(n.parents[1]->val, k, n2).transpose();
    }
    if (n.parents[1]->requires_grad) {
      Tensor& g = n.parents[1]->ensure_grad();
      mat_view(g, k, n2) += mat_view(n.parents[0]->val, m, k).transpose() * dy;
    }
  });
}

Var bmm(const Var& a, const Var& b) {
  const int r = a->val.rank();
  GEOMAE_CHECK(r >= 2 && b->val.rank() == r, "bmm: rank mismatch");
  for (int i = 0; i < r - 2; ++i)
    GEOMAE_CHECK(a->val.shape[i] == b->val.shape[i], "bmm: batch dims mismatch");
  const Index m = a->val.shape[r - 2], k = a->val.shape[r - 1], n2 = b->val.shape[r - 1];
  GEOMAE_CHECK(b->val.shape[r - 2] == k, "bmm: inner dim mismatch");
  Index batch = 1;
  for (int i = 0; i < r - 2; ++i) batch *= a->val.shape[i];
  Shape out_shape(a->val.shape.begin(), a->val.shape.end() - 2);
  out_shape.push_back(m);
  out_shape.push_back(n2);
  Tensor out(out_shape);
  for (Index bi = 0; bi < batch; ++bi) {
    ConstMatMap av(a->val.v.data() + bi * m * k, m, k);
    ConstMatMap bv(b->val.v.data() + bi * k * n2, k, n2);
    MatMap ov(out.v.data() + bi * m * n2, m, n2);
    ov = av * bv;
  }
  return make_node(std::move(out), {a, b}, [batch, m, k, n2](Node& n) {
    for (Index bi = 0; bi < batch; ++bi) {
      ConstMatMap dy(n.grad.v.data() + bi * m * n2, m, n2);
      if (n.parents[0]->requires_grad) {
        Tensor& g = n.parents[0]->ensure_grad();
        MatMap ga(g.v.data() + bi * m * k, m, k);
        ConstMatMap bv(n.parents[1]->val.v.data() + bi * k * n2, k, n2);
        ga += dy * bv.transpose();
      }
      if (n.parents[1]->requires_grad) {
        Tensor& g = n.parents[1]->ensure_grad();
        MatMap gb(g.v.data() + bi * k * n2, k, n2);
        ConstMatMap av(n.parents[0]->val.v.data() + bi * m * k, m, k);
        gb += av.transpose() * dy;
      }
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  GEOMAE_CHECK(w->val.rank() == 2, "linear: weight must be [out,in]");
  const Index in_dim = w->val.shape[1], out_dim = w->val.shape[0];
  GEOMAE_CHECK(x->val.shape.back() == in_dim, "linear: input dim mismatch");
  GEOMAE_CHECK(b->val.numel() == out_dim, "linear: bias dim mismatch");
  const Index rows = lead_rows(x->val);
  Shape out_shape = x->val.shape;
  out_shape.back() = out_dim;
  Tensor out(out_shape);
  {
    MatMap y = mat_view(out, rows, out_dim);
    y = mat_view(x->val, rows, in_dim) * mat_view(w->val, out_dim, in_dim).transpose();
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < out_dim; ++j) out[i * out_dim + j] += b->val[j];
  }
  return make_node(std::move(out), {x, w, b}, [rows, in_dim, out_dim](Node& n) {
    ConstMatMap dy(n.grad.v.data(), rows, out_dim);
    if (n.parents[0]->requires_grad) {
      Tensor& g = n.parents[0]->ensure_grad();
      mat_view(g, rows, in_dim) += dy * mat_view(n.parents[1]->val, out_dim, in_dim);
    }
    if (n.parents[1]->requires_grad) {
      Tensor& g = n.parents[1]->ensure_grad();
      mat_view(g, out_dim, in_dim) += dy.transpose() * mat_view(n.parents[0]->val, rows, in_dim);
    }
    if (n.parents[2]->requires_grad) {
      Tensor& g = n.parents[2]->ensure_grad();
      for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < out_dim; ++j) g[j] += n.grad[i * out_dim + j];
    }
  });
}

// ---------------------------------------------------------------------------
// normalization

Var softmax_lastdim(const Var& a) {
  const Index d = a->val.shape.back();
  const Index rows = lead_rows(a->val);
  Tensor out = a->val;
  for (Index i = 0; i < rows; ++i) {
    double mx = out[i * d];
    for (Index j = 1; j < d; ++j) mx = std::max(mx, out[i * d + j]);
    double sum = 0.0;
    for (Index j = 0; j < d; ++j) {
      out[i * d + j] = std::exp(out[i * d + j] - mx);
      sum += out[i * d + j];
    }
    for (Index j = 0; j < d; ++j) out[i * d + j] /= sum;
  }
  return make_node(std::move(out), {a}, [d, rows](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    for (Index i = 0; i < rows; ++i) {
      double dot = 0.0;
      for (Index j = 0; j < d; ++j) dot += n.grad[i * d + j] * n.val[i * d + j];
      for (Index j = 0; j < d; ++j)
        g[i * d + j] += n.val[i * d + j] * (n.grad[i * d + j] - dot);
    }
  });
}

Var layernorm_lastdim(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Index d = x->val.shape.back();
  GEOMAE_CHECK(gamma->val.numel() == d && beta->val.numel() == d, "layernorm: affine dim mismatch");
  const Index rows = lead_rows(x->val);
  Tensor out(x->val.shape);
  Tensor xhat(x->val.shape);
  std::vector<double> inv_std(static_cast<std::size_t>(rows));
  for (Index i = 0; i < rows; ++i) {
    double mean = 0.0;
    for (Index j = 0; j < d; ++j) mean += x->val[i * d + j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (Index j = 0; j < d; ++j) {
      const double c = x->val[i * d + j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(i)] = inv;
    for (Index j = 0; j < d; ++j) {
      const double h = (x->val[i * d + j] - mean) * inv;
      xhat[i * d + j] = h;
      out[i * d + j] = gamma->val[j] * h + beta->val[j];
    }
  }
  return make_node(std::move(out), {x, gamma, beta},
                   [d, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& n) {
    const Var& gamma = n.parents[1];
    if (n.parents[1]->requires_grad) {
      Tensor& gg = n.parents[1]->ensure_grad();
      for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < d; ++j) gg[j] += n.grad[i * d + j] * xhat[i * d + j];
    }
    if (n.parents[2]->requires_grad) {
      Tensor& gb = n.parents[2]->ensure_grad();
      for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < d; ++j) gb[j] += n.grad[i * d + j];
    }
    if (n.parents[0]->requires_grad) {
      Tensor& gx = n.parents[0]->ensure_grad();
      for (Index i = 0; i < rows; ++i) {
        double mean_dh = 0.0, mean_dh_h = 0.0;
        for (Index j = 0; j < d; ++j) {
          const double dh = n.grad[i * d + j] * gamma->val[j];
          mean_dh += dh;
          mean_dh_h += dh * xhat[i * d + j];
        }
        mean_dh /= static_cast<double>(d);
        mean_dh_h /= static_cast<double>(d);
        const double inv = inv_std[static_cast<std::size_t>(i)];
        for (Index j = 0; j < d; ++j) {
          const double dh = n.grad[i * d + j] * gamma->val[j];
          gx[i * d + j] += inv * (dh - mean_dh - xhat[i * d + j] * mean_dh_h);
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// token selection

Var gather_tokens(const Var& a, const std::vector<std::vector<Index>>& idx) {
  GEOMAE_CHECK(a->val.rank() == 3, "gather_tokens expects [B,L,D]");
  const Index b = a->val.shape[0], l = a->val.shape[1], d = a->val.shape[2];
  GEOMAE_CHECK(static_cast<Index>(idx.size()) == b, "gather_tokens: batch mismatch");
  const Index k = static_cast<Index>(idx[0].size());
  Tensor out({b, k, d});
  for (Index bi = 0; bi < b; ++bi) {
    GEOMAE_CHECK(static_cast<Index>(idx[bi].size()) == k, "gather_tokens: ragged index");
    for (Index ki = 0; ki < k; ++ki) {
      const Index src = idx[bi][static_cast<std::size_t>(ki)];
      GEOMAE_CHECK(src >= 0 && src < l, "gather_tokens: index out of range");
      for (Index di = 0; di < d; ++di) out.at(bi, ki, di) = a->val.at(bi, src, di);
    }
  }
  return make_node(std::move(out), {a}, [idx](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    const Index b = n.val.shape[0], k = n.val.shape[1], d = n.val.shape[2];
    for (Index bi = 0; bi < b; ++bi)
      for (Index ki = 0; ki < k; ++ki) {
        const Index src = idx[bi][static_cast<std::size_t>(ki)];
        for (Index di = 0; di < d; ++di) g.at(bi, src, di) += n.grad.at(bi, ki, di);
      }
  });
}

Var restore_tokens(const Var& visible, const Var& mask_token,
                   const std::vector<std::vector<Index>>& restore, Index keep) {
  GEOMAE_CHECK(visible->val.rank() == 3, "restore_tokens expects [B,K,D]");
  const Index b = visible->val.shape[0], k = visible->val.shape[1], d = visible->val.shape[2];
  GEOMAE_CHECK(k == keep, "restore_tokens: keep count mismatch");
  GEOMAE_CHECK(mask_token->val.numel() == d, "restore_tokens: mask token dim mismatch");
  GEOMAE_CHECK(static_cast<Index>(restore.size()) == b, "restore_tokens: batch mismatch");
  const Index l = static_cast<Index>(restore[0].size());
  Tensor out({b, l, d});
  for (Index bi = 0; bi < b; ++bi)
    for (Index li = 0; li < l; ++li) {
      const Index r = restore[bi][static_cast<std::size_t>(li)];
      if (r < keep)
        for (Index di = 0; di < d; ++di) out.at(bi, li, di) = visible->val.at(bi, r, di);
      else
        for (Index di = 0; di < d; ++di) out.at(bi, li, di) = mask_token->val[di];
    }
  return make_node(std::move(out), {visible, mask_token}, [restore, keep](Node& n) {
    const Index b = n.val.shape[0], l = n.val.shape[1], d = n.val.shape[2];
    Tensor* gv = n.parents[0]->requires_grad ? &n.parents[0]->ensure_grad() : nullptr;
    Tensor* gm = n.parents[1]->requires_grad ? &n.parents[1]->ensure_grad() : nullptr;
    for (Index bi = 0; bi < b; ++bi)
      for (Index li = 0; li < l; ++li) {
        const Index r = restore[bi][static_cast<std::size_t>(li)];
        if (r < keep) {
          if (gv)
            for (Index di = 0; di < d; ++di) gv->at(bi, r, di) += n.grad.at(bi, li, di);
        } else if (gm) {
          for (Index di = 0; di < d; ++di) (*gm)[di] += n.grad.at(bi, li, di);
        }
      }
  });
}

// ---------------------------------------------------------------------------
// spatial

Var conv2d(const Var& x, const Var& w, const Var& b, Index stride, Index pad) {
  GEOMAE_CHECK(x->val.rank() == 4 && w->val.rank() == 4, "conv2d expects [B,C,H,W] and [O,C,kh,kw]");
  const Index bs = x->val.shape[0], ci = x->val.shape[1], h = x->val.shape[2], wd = x->val.shape[3];
  const Index co = w->val.shape[0], kh = w->val.shape[2], kw = w->val.shape[3];
  GEOMAE_CHECK(w->val.shape[1] == ci, "conv2d: channel mismatch");
  GEOMAE_CHECK(b->val.numel() == co, "conv2d: bias mismatch");
  const Index oh = (h + 2 * pad - kh) / stride + 1;
  const Index ow = (wd + 2 * pad - kw) / stride + 1;
  GEOMAE_CHECK(oh > 0 && ow > 0, "conv2d: output collapses to zero");
  Tensor out({bs, co, oh, ow});
  for (Index bi = 0; bi < bs; ++bi)
    for (Index oc = 0; oc < co; ++oc)
      for (Index oy = 0; oy < oh; ++oy)
        for (Index ox = 0; ox < ow; ++ox) {
          double acc = b->val[oc];
          for (Index ic = 0; ic < ci; ++ic)
            for (Index ky = 0; ky < kh; ++ky) {
              const Index iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= h) continue;
              for (Index kx = 0; kx < kw; ++kx) {
                const Index ix = ox * stride - pad + kx;
                if (ix < 0 || ix >= wd) continue;
                acc += x->val.at(bi, ic, iy, ix) * w->val.at(oc, ic, ky, kx);
              }
            }
          out.at(bi, oc, oy, ox) = acc;
        }
  return make_node(std::move(out), {x, w, b}, [stride, pad](Node& n) {
    const Tensor& xv = n.parents[0]->val;
    const Tensor& wv = n.parents[1]->val;
    const Index bs = xv.shape[0], ci = xv.shape[1], h = xv.shape[2], wd = xv.shape[3];
    const Index co = wv.shape[0], kh = wv.shape[2], kw = wv.shape[3];
    const Index oh = n.val.shape[2], ow = n.val.shape[3];
    Tensor* gx = n.parents[0]->requires_grad ? &n.parents[0]->ensure_grad() : nullptr;
    Tensor* gw = n.parents[1]->requires_grad ? &n.parents[1]->ensure_grad() : nullptr;
    Tensor* gb = n.parents[2]->requires_grad ? &n.parents[2]->ensure_grad() : nullptr;
    for (Index bi = 0; bi < bs; ++bi)
      for (Index oc = 0; oc < co; ++oc)
        for (Index oy = 0; oy < oh; ++oy)
          for (Index ox = 0; ox < ow; ++ox) {
            const double dy = n.grad.at(bi, oc, oy, ox);
            if (dy == 0.0) continue;
            if (gb) (*gb)[oc] += dy;
            for (Index ic = 0; ic < ci; ++ic)
              for (Index ky = 0; ky < kh; ++ky) {
                const Index iy = oy * stride - pad + ky;
                if (iy < 0 || iy >= h) continue;
                for (Index kx = 0; kx < kw; ++kx) {
                  const Index ix = ox * stride - pad + kx;
                  if (ix < 0 || ix >= wd) continue;
                  if (gw) gw->at(oc, ic, ky, kx) += dy * xv.at(bi, ic, iy, ix);
                  if (gx) gx->at(bi, ic, iy, ix) += dy * wv.at(oc, ic, ky, kx);
                }
              }
          }
  });
}

Var conv_transpose2d(const Var& x, const Var& w, const Var& b, Index stride) {
  GEOMAE_CHECK(x->val.rank() == 4 && w->val.rank() == 4,
               "conv_transpose2d expects [B,C,H,W] and [C,O,kh,kw]");
  const Index bs = x->val.shape[0], ci = x->val.shape[1], h = x->val.shape[2], wd = x->val.shape[3];
  const Index co = w->val.shape[1], kh = w->val.shape[2], kw = w->val.shape[3];
  GEOMAE_CHECK(w->val.shape[0] == ci, "conv_transpose2d: channel mismatch");
  GEOMAE_CHECK(b->val.numel() == co, "conv_transpose2d: bias mismatch");
  const Index oh = (h - 1) * stride + kh;
  const Index ow = (wd - 1) * stride + kw;
  Tensor out({bs, co, oh, ow});
  for (Index bi = 0; bi < bs; ++bi)
    for (Index oc = 0; oc < co; ++oc)
      for (Index oy = 0; oy < oh; ++oy)
        for (Index ox = 0; ox < ow; ++ox) out.at(bi, oc, oy, ox) = b->val[oc];
  for (Index bi = 0; bi < bs; ++bi)
    for (Index ic = 0; ic < ci; ++ic)
      for (Index iy = 0; iy < h; ++iy)
        for (Index ix = 0; ix < wd; ++ix) {
          const double xv = x->val.at(bi, ic, iy, ix);
          for (Index oc = 0; oc < co; ++oc)
            for (Index ky = 0; ky < kh; ++ky)
              for (Index kx = 0; kx < kw; ++kx)
                out.at(bi, oc, iy * stride + ky, ix * stride + kx) += xv * w->val.at(ic, oc, ky, kx);
        }
  return make_node(std::move(out), {x, w, b}, [stride](Node& n) {
    const Tensor& xv = n.parents[0]->val;
    const Tensor& wv = n.parents[1]->val;
    const Index bs = xv.shape[0], ci = xv.shape[1], h = xv.shape[2], wd = xv.shape[3];
    const Index co = wv.shape[1], kh = wv.shape[2], kw = wv.shape[3];
    Tensor* gx = n.parents[0]->requires_grad ? &n.parents[0]->ensure_grad() : nullptr;
    Tensor* gw = n.parents[1]->requires_grad ? &n.parents[1]->ensure_grad() : nullptr;
    Tensor* gb = n.parents[2]->requires_grad ? &n.parents[2]->ensure_grad() : nullptr;
    if (gb) {
      const Index oh = n.val.shape[2], ow = n.val.shape[3];
      for (Index bi = 0; bi < bs; ++bi)
        for (Index oc = 0; oc < co; ++oc)
          for (Index oy = 0; oy < oh; ++oy)
            for (Index ox = 0; ox < ow; ++ox) (*gb)[oc] += n.grad.at(bi, oc, oy, ox);
    }
    for (Index bi = 0; bi < bs; ++bi)
      for (Index ic = 0; ic < ci; ++ic)
        for (Index iy = 0; iy < h; ++iy)
          for (Index ix = 0; ix < wd; ++ix) {
            const double xval = xv.at(bi, ic, iy, ix);
            double acc = 0.0;
            for (Index oc = 0; oc < co; ++oc)
              for (Index ky = 0; ky < kh; ++ky)
                for (Index kx = 0; kx < kw; ++kx) {
                  const double dy = n.grad.at(bi, oc, iy * stride + ky, ix * stride + kx);
                  if (gw) gw->at(ic, oc, ky, kx) += dy * xval;
                  acc += dy * wv.at(ic, oc, ky, kx);
                }
            if (gx) gx->at(bi, ic, iy, ix) += acc;
          }
  });
}

Var upsample_nearest2(const Var& x) {
  GEOMAE_CHECK(x->val.rank() == 4, "upsample_nearest2 expects [B,C,H,W]");
  const Index bs = x->val.shape[0], c = x->val.shape[1], h = x->val.shape[2], w = x->val.shape[3];
  Tensor out({bs, c, 2 * h, 2 * w});
  for (Index bi = 0; bi < bs; ++bi)
    for (Index ci = 0; ci < c; ++ci)
      for (Index y = 0; y < h; ++y)
        for (Index xx = 0; xx < w; ++xx) {
          const double v = x->val.at(bi, ci, y, xx);
          out.at(bi, ci, 2 * y, 2 * xx) = v;
          out.at(bi, ci, 2 * y, 2 * xx + 1) = v;
          out.at(bi, ci, 2 * y + 1, 2 * xx) = v;
          out.at(bi, ci, 2 * y + 1, 2 * xx + 1) = v;
        }
  return make_node(std::move(out), {x}, [](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    const Index bs = g.shape[0], c = g.shape[1], h = g.shape[2], w = g.shape[3];
    for (Index bi = 0; bi < bs; ++bi)
      for (Index ci = 0; ci < c; ++ci)
        for (Index y = 0; y < h; ++y)
          for (Index xx = 0; xx < w; ++xx)
            g.at(bi, ci, y, xx) += n.grad.at(bi, ci, 2 * y, 2 * xx) +
                                   n.grad.at(bi, ci, 2 * y, 2 * xx + 1) +
                                   n.grad.at(bi, ci, 2 * y + 1, 2 * xx) +
                                   n.grad.at(bi, ci, 2 * y + 1, 2 * xx + 1);
  });
}

namespace {
struct BilinearTap {
  Index lo, hi;
  double w_hi;  // weight of hi sample; lo gets 1 - w_hi
};
// align_corners=false sampling: src = (dst + 0.5) * in/out - 0.5, clamped.
std::vector<BilinearTap> bilinear_taps(Index in, Index out) {
  std::vector<BilinearTap> taps(static_cast<std::size_t>(out));
  const double s = static_cast<double>(in) / static_cast<double>(out);
  for (Index i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * s - 0.5;
    if (src < 0.0) src = 0.0;
    Index lo = static_cast<Index>(std::floor(src));
    double frac = src - static_cast<double>(lo);
    Index hi = lo + 1;
    if (hi >= in) {
      hi = in - 1;
      if (lo >= in) lo = in - 1;
      if (lo == hi) frac = 0.0;
    }
    taps[static_cast<std::size_t>(i)] = {lo, hi, frac};
  }
  return taps;
}
}  // namespace

Var resize_bilinear(const Var& x, Index out_h, Index out_w) {
  GEOMAE_CHECK(x->val.rank() == 4, "resize_bilinear expects [B,C,H,W]");
  GEOMAE_CHECK(out_h > 0 && out_w > 0, "resize_bilinear: bad target size");
  const Index bs = x->val.shape[0], c = x->val.shape[1], h = x->val.shape[2], w = x->val.shape[3];
  const auto ty = bilinear_taps(h, out_h);
  const auto tx = bilinear_taps(w, out_w);
  Tensor out({bs, c, out_h, out_w});
  for (Index bi = 0; bi < bs; ++bi)
    for (Index ci = 0; ci < c; ++ci)
      for (Index oy = 0; oy < out_h; ++oy) {
        const auto& a = ty[static_cast<std::size_t>(oy)];
        for (Index ox = 0; ox < out_w; ++ox) {
          const auto& b2 = tx[static_cast<std::size_t>(ox)];
          out.at(bi, ci, oy, ox) =
              (1 - a.w_hi) * ((1 - b2.w_hi) * x->val.at(bi, ci, a.lo, b2.lo) +
                              b2.w_hi * x->val.at(bi, ci, a.lo, b2.hi)) +
              a.w_hi * ((1 - b2.w_hi) * x->val.at(bi, ci, a.hi, b2.lo) +
                        b2.w_hi * x->val.at(bi, ci, a.hi, b2.hi));
        }
      }
  return make_node(std::move(out), {x}, [ty, tx](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    const Index bs = g.shape[0], c = g.shape[1];
    const Index out_h = n.val.shape[2], out_w = n.val.shape[3];
    for (Index bi = 0; bi < bs; ++bi)
      for (Index ci = 0; ci < c; ++ci)
        for (Index oy = 0; oy < out_h; ++oy) {
          const auto& a = ty[static_cast<std::size_t>(oy)];
          for (Index ox = 0; ox < out_w; ++ox) {
            const auto& b2 = tx[static_cast<std::size_t>(ox)];
            const double dy = n.grad.at(bi, ci, oy, ox);
            g.at(bi, ci, a.lo, b2.lo) += (1 - a.w_hi) * (1 - b2.w_hi) * dy;
            g.at(bi, ci, a.lo, b2.hi) += (1 - a.w_hi) * b2.w_hi * dy;
            g.at(bi, ci, a.hi, b2.lo) += a.w_hi * (1 - b2.w_hi) * dy;
            g.at(bi, ci, a.hi, b2.hi) += a.w_hi * b2.w_hi * dy;
          }
        }
  });
}

// ---------------------------------------------------------------------------
// reductions and losses

Var sum_all(const Var& a) {
  double s = 0.0;
  for (double x : a->val.v) s += x;
  return make_node(Tensor::scalar(s), {a}, [](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    for (double& x : g.v) x += n.grad[0];
  });
}

Var mean_all(const Var& a) {
  const double inv = 1.0 / static_cast<double>(a->val.numel());
  double s = 0.0;
  for (double x : a->val.v) s += x;
  return make_node(Tensor::scalar(s * inv), {a}, [inv](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    for (double& x : g.v) x += n.grad[0] * inv;
  });
}

Var masked_token_mse(const Var& pred, const Tensor& target,
                     const std::vector<std::vector<std::uint8_t>>& mask, bool norm_pix) {
  GEOMAE_CHECK(pred->val.rank() == 3, "masked_token_mse expects [B,L,P]");
  GEOMAE_CHECK(pred->val.same_shape(target), "masked_token_mse: target shape mismatch");
  const Index b = pred->val.shape[0], l = pred->val.shape[1], p = pred->val.shape[2];
  GEOMAE_CHECK(static_cast<Index>(mask.size()) == b, "masked_token_mse: mask batch mismatch");

  // Standardized target (or plain copy); computed once, reused in backward.
  auto norm_target = std::make_shared<Tensor>(target);
  if (norm_pix) {
    for (Index bi = 0; bi < b; ++bi)
      for (Index li = 0; li < l; ++li) {
        double mean = 0.0;
        for (Index pi = 0; pi < p; ++pi) mean += norm_target->at(bi, li, pi);
        mean /= static_cast<double>(p);
        double var = 0.0;
        for (Index pi = 0; pi < p; ++pi) {
          const double c = norm_target->at(bi, li, pi) - mean;
          var += c * c;
        }
        var /= static_cast<double>(p);
        const double inv = 1.0 / std::sqrt(var + 1e-6);
        for (Index pi = 0; pi < p; ++pi)
          norm_target->at(bi, li, pi) = (norm_target->at(bi, li, pi) - mean) * inv;
      }
  }

  Index n_masked = 0;
  double loss = 0.0;
  for (Index bi = 0; bi < b; ++bi) {
    GEOMAE_CHECK(static_cast<Index>(mask[bi].size()) == l, "masked_token_mse: mask length mismatch");
    Index masked_here = 0;
    for (Index li = 0; li < l; ++li) {
      if (!mask[bi][static_cast<std::size_t>(li)]) continue;
      ++masked_here;
      double tok = 0.0;
      for (Index pi = 0; pi < p; ++pi) {
        const double dlt = pred->val.at(bi, li, pi) - norm_target->at(bi, li, pi);
        tok += dlt * dlt;
      }
      loss += tok / static_cast<double>(p);
    }
    GEOMAE_CHECK(masked_here > 0, "masked_token_mse: a sample has zero masked tokens");
    n_masked += masked_here;
  }
  loss /= static_cast<double>(n_masked);

  return make_node(Tensor::scalar(loss), {pred}, [mask, norm_target, n_masked](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    const Index b = g.shape[0], l = g.shape[1], p = g.shape[2];
    const double c = 2.0 * n.grad[0] / (static_cast<double>(p) * static_cast<double>(n_masked));
    const Tensor& pv = n.parents[0]->val;
    for (Index bi = 0; bi < b; ++bi)
      for (Index li = 0; li < l; ++li) {
        if (!mask[bi][static_cast<std::size_t>(li)]) continue;
        for (Index pi = 0; pi < p; ++pi)
          g.at(bi, li, pi) += c * (pv.at(bi, li, pi) - norm_target->at(bi, li, pi));
      }
  });
}

Var weighted_cross_entropy(const Var& logits, const std::vector<Index>& labels,
                           const std::vector<double>& class_weights) {
  GEOMAE_CHECK(logits->val.rank() == 2, "weighted_cross_entropy expects [N,K]");
  const Index n = logits->val.shape[0], k = logits->val.shape[1];
  GEOMAE_CHECK(static_cast<Index>(labels.size()) == n, "weighted_cross_entropy: label count mismatch");
  GEOMAE_CHECK(static_cast<Index>(class_weights.size()) == k, "weighted_cross_entropy: weight count mismatch");
  for (double w : class_weights) GEOMAE_CHECK(w > 0.0, "weighted_cross_entropy: weights must be positive");
  double weight_sum = 0.0, loss = 0.0;
  for (Index i = 0; i < n; ++i) {
    const Index y = labels[static_cast<std::size_t>(i)];
    GEOMAE_CHECK(y >= 0 && y < k, "weighted_cross_entropy: label out of range");
    double mx = logits->val.at(i, 0);
    for (Index j = 1; j < k; ++j) mx = std::max(mx, logits->val.at(i, j));
    double se = 0.0;
    for (Index j = 0; j < k; ++j) se += std::exp(logits->val.at(i, j) - mx);
    const double lse = mx + std::log(se);
    const double w = class_weights[static_cast<std::size_t>(y)];
    loss += w * (lse - logits->val.at(i, y));
    weight_sum += w;
  }
  loss /= weight_sum;
  return make_node(Tensor::scalar(loss), {logits}, [labels, class_weights, weight_sum](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    const Index nn = g.shape[0], k = g.shape[1];
    const Tensor& lv = n.parents[0]->val;
    for (Index i = 0; i < nn; ++i) {
      const Index y = labels[static_cast<std::size_t>(i)];
      const double w = class_weights[static_cast<std::size_t>(y)];
      double mx = lv.at(i, 0);
      for (Index j = 1; j < k; ++j) mx = std::max(mx, lv.at(i, j));
      double se = 0.0;
      for (Index j = 0; j < k; ++j) se += std::exp(lv.at(i, j) - mx);
      for (Index j = 0; j < k; ++j) {
        const double sm = std::exp(lv.at(i, j) - mx) / se;
        g.at(i, j) += n.grad[0] * w * (sm - (j == y ? 1.0 : 0.0)) / weight_sum;
      }
    }
  });
}

Var mse_to_const(const Var& pred, const Tensor& target) {
  GEOMAE_CHECK(pred->val.same_shape(target), "mse_to_const: shape mismatch");
  const Index n = pred->val.numel();
  double loss = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double d = pred->val[i] - target[i];
    loss += d * d;
  }
  loss /= static_cast<double>(n);
  Tensor tgt = target;
  return make_node(Tensor::scalar(loss), {pred}, [tgt = std::move(tgt)](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    const double c = 2.0 * n.grad[0] / static_cast<double>(g.numel());
    for (Index i = 0; i < g.numel(); ++i) g[i] += c * (n.parents[0]->val[i] - tgt[i]);
  });
}

}  // namespace geomae
