#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "diffrecon/tensor.hpp"

namespace diffrecon::ad {

/// Reverse-mode automatic differentiation over Tensor, define-by-run.
/// Graphs are built by the free functions below and discarded after
/// backward(); parameter leaves (make_param) persist across steps and
/// accumulate gradients until zero_grad().
struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor val;
  Tensor grad;                       // same shape as val, zero-initialized
  std::vector<Var> parents;
  std::function<void(Node&)> back;   // scatters this->grad into parents
  bool requires_grad = false;

  explicit Node(Tensor v, bool req = false)
      : val(std::move(v)), grad(val.shape()), requires_grad(req) {}
};

Var make_const(Tensor v);
Var make_param(Tensor v);

/// Accumulates d(root)/d(leaf) into every reachable grad. root must be a
/// scalar (numel 1) unless seed is supplied.
void backward(const Var& root);
void backward(const Var& root, const Tensor& seed);

// ---- elementwise ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
Var relu(const Var& a);
Var square(const Var& a);
Var sqrt_elem(const Var& a);

// ---- matrix ops (rank-2 operands) ----
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var linear(const Var& x, const Var& w, const Var& b);  // xW + b (b broadcast over rows)
Var softmax_rows(const Var& x);                        // rank 1 treated as one row
Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);

// ---- shape ----
Var reshape(const Var& a, std::vector<int> shape);
Var slice_rows(const Var& a, int r0, int r1);
Var slice_cols(const Var& a, int c0, int c1);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var pad_rows(const Var& a, int rows);                  // zero-pad to `rows` rows

// ---- reductions ----
Var sum_all(const Var& a);
Var mean_all(const Var& a);
Var row_mean(const Var& a);   // [m,n] -> [m]
Var col_mean(const Var& a);   // [m,n] -> [n]
Var mse(const Var& a, const Var& b);
Var index_elem(const Var& a, std::int64_t i);          // -> scalar
Var scale_by(const Var& x, const Var& s);              // s scalar Var

// ---- 2-D map ops, layout [C,H,W] ----
Var conv2d_same(const Var& x, const Var& k, const Var& b);  // k: [Co,Ci,kh,kw], b: [Co]
Var avg_pool2(const Var& x);
Var upsample_nearest(const Var& x, int factor = 2);
Var upsample_bilinear(const Var& x, int factor = 2);
Var concat_channels(const std::vector<Var>& parts);
Var add_channel_bias(const Var& x, const Var& v);           // v: [C]

// ---- period folding, layout [t,d] <-> [d,p,cols] ----
Var fold2d(const Var& x, int period);          // zero-pads t up to period*cols
Var unfold2d(const Var& y, int t_orig);        // inverse of fold2d, truncated

}  // namespace diffrecon::ad
