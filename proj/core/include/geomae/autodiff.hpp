#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "geomae/tensor.hpp"

namespace geomae {

// Reverse-mode autodiff over Tensor values. A forward pass builds a DAG of
// Nodes; backward(loss) zeroes all reachable gradients, seeds d(loss)=1 and
// propagates in reverse topological order. Everything runs in double
// precision and single-threaded, so repeated runs are bit-identical.

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor val;
  Tensor grad;  // allocated on demand, same shape as val
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backprop;  // accumulates into parents' grads

  Tensor& ensure_grad() {
    if (grad.shape != val.shape) grad = Tensor::zeros(val.shape);
    return grad;
  }
};

Var make_var(Tensor value, bool requires_grad = false);
Var constant(Tensor value);
Var scalar_var(double x, bool requires_grad = false);

/// Runs reverse-mode accumulation from a scalar loss node.
void backward(const Var& loss);

// ---- elementwise ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var add_const(const Var& a, const Tensor& c);
/// a[..., i, :] + rows[i, :] for trailing matrix-like layout; rows is a
/// constant [R, D] table broadcast over leading axes.
Var add_const_rows(const Var& a, const Tensor& rows);
/// a + s * rows with learned scalar s ([1]) and constant rows broadcast as
/// in add_const_rows. When `active` is non-empty it flags which leading rows
/// of `a` receive the term; inactive rows are copied through untouched.
Var add_scaled_const_rows(const Var& a, const Var& s, const Tensor& rows,
                          const std::vector<std::uint8_t>& active = {});
Var gelu(const Var& a);
Var relu(const Var& a);

// ---- shape ----
Var reshape(const Var& a, Shape s);
Var permute(const Var& a, const std::vector<int>& perm);
Var transpose_last2(const Var& a);
Var slice_lastdim(const Var& a, Index offset, Index size);
Var slice_rows(const Var& a, Index axis1_offset, Index axis1_size);  // rank-3 [B,L,D]
Var concat(const std::vector<Var>& xs, int axis);
Var mean_axis1(const Var& a);  // [B,L,D] -> [B,D]

// ---- linear algebra ----
Var matmul(const Var& a, const Var& b);           // [M,K]x[K,N]
Var bmm(const Var& a, const Var& b);              // [...,M,K]x[...,K,N]
Var linear(const Var& x, const Var& w, const Var& b);  // x[N,K], w[O,K], b[O]

// ---- normalization / attention pieces ----
Var softmax_lastdim(const Var& a);
Var layernorm_lastdim(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-6);

// ---- token selection (masking) ----
/// Picks rows idx[b][k] from a [B,L,D] tensor per batch element -> [B,K,D].
Var gather_tokens(const Var& a, const std::vector<std::vector<Index>>& idx);
/// Inverse of gather: place visible tokens back at their original slots and
/// fill masked slots with a learned token. restore[b][l] < keep identifies a
/// visible slot and gives its row in `visible`.
Var restore_tokens(const Var& visible, const Var& mask_token,
                   const std::vector<std::vector<Index>>& restore, Index keep);

// ---- spatial ----
Var conv2d(const Var& x, const Var& w, const Var& b, Index stride, Index pad);
Var conv_transpose2d(const Var& x, const Var& w, const Var& b, Index stride);
Var upsample_nearest2(const Var& x);
Var resize_bilinear(const Var& x, Index out_h, Index out_w);

// ---- reductions / losses ----
Var sum_all(const Var& a);
Var mean_all(const Var& a);
/// Mean over masked tokens of the per-token mean squared error against a
/// constant target. If norm_pix, each target token is standardized to zero
/// mean and unit variance (eps 1e-6) before the difference.
Var masked_token_mse(const Var& pred, const Tensor& target,
                     const std::vector<std::vector<std::uint8_t>>& mask, bool norm_pix);
/// Sum_i w[y_i] * (-log softmax(logits_i)[y_i]) / Sum_i w[y_i].
Var weighted_cross_entropy(const Var& logits, const std::vector<Index>& labels,
                           const std::vector<double>& class_weights);
Var mse_to_const(const Var& pred, const Tensor& target);

}  // namespace geomae
