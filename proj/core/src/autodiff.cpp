#include "diffrecon/autodiff.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace diffrecon::ad {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

ECMap as_mat(const Tensor& t) {
  if (t.rank() != 2) throw std::invalid_argument("expected rank-2 tensor, got " + Tensor::shape_str(t.shape()));
  return ECMap(t.data(), t.dim(0), t.dim(1));
}
EMap as_mat(Tensor& t) {
  if (t.rank() != 2) throw std::invalid_argument("expected rank-2 tensor, got " + Tensor::shape_str(t.shape()));
  return EMap(t.data(), t.dim(0), t.dim(1));
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a->val.same_shape(b->val))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                Tensor::shape_str(a->val.shape()) + " vs " +
                                Tensor::shape_str(b->val.shape()));
}

Var make_node(Tensor val, std::vector<Var> parents, std::function<void(Node&)> back) {
  bool req = false;
  for (const auto& p : parents) req = req || p->requires_grad;
  auto n = std::make_shared<Node>(std::move(val), req);
  if (req) {
    n->parents = std::move(parents);
    n->back = std::move(back);
  }
  return n;
}

}  // namespace

Var make_const(Tensor v) { return std::make_shared<Node>(std::move(v), false); }
Var make_param(Tensor v) { return std::make_shared<Node>(std::move(v), true); }

void backward(const Var& root, const Tensor& seed) {
  if (!root->val.same_shape(seed)) throw std::invalid_argument("backward: seed shape mismatch");
  // Topological order by iterative DFS postorder; the graph is a DAG so
  // visited-at-push postorder yields parents before children in `order`.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  struct Frame {
    Node* node;
    std::size_t next;
  };
  std::vector<Frame> stack;
  auto push = [&](Node* n) {
    if (n->requires_grad && !visited.count(n)) {
      visited.insert(n);
      stack.push_back({n, 0});
    }
  };
  push(root.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.node->parents.size()) {
      push(f.node->parents[f.next++].get());
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }
  for (std::int64_t i = 0; i < root->grad.numel(); ++i) root->grad[i] += seed[i];
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->back) (*it)->back(**it);
}

void backward(const Var& root) {
  if (root->val.numel() != 1) throw std::invalid_argument("backward: root must be scalar");
  backward(root, Tensor::scalar(1.0));
}

// ---------------- elementwise ----------------

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out = a->val;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += b->val[i];
  return make_node(std::move(out), {a, b}, [a, b](Node& n) {
    for (std::int64_t i = 0; i < n.grad.numel(); ++i) {
      a->grad[i] += n.grad[i];
      b->grad[i] += n.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a->val;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] -= b->val[i];
  return make_node(std::move(out), {a, b}, [a, b](Node& n) {
    for (std::int64_t i = 0; i < n.grad.numel(); ++i) {
      a->grad[i] += n.grad[i];
      b->grad[i] -= n.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out = a->val;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= b->val[i];
  return make_node(std::move(out), {a, b}, [a, b](Node& n) {
    for (std::int64_t i = 0; i < n.grad.numel(); ++i) {
      a->grad[i] += n.grad[i] * b->val[i];
      b->grad[i] += n.grad[i] * a->val[i];
    }
  });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var scale(const Var& a, double c) {
  Tensor out = a->val;
  for (auto& v : out.vec()) v *= c;
  return make_node(std::move(out), {a}, [a, c](Node& n) {
    for (std::int64_t i = 0; i < n.grad.numel(); ++i) a->grad[i] += n.grad[i] * c;
  });
}

Var add_scalar(const Var& a, double c) {
  Tensor out = a->val;
  for (auto& v : out.vec()) v += c;
  return make_node(std::move(out), {a}, [a](Node& n) {
    for (std::int64_t i = 0; i < n.grad.numel(); ++i) a->grad[i] += n.grad[i];
  });
}

Var relu(const Var& a) {
  Tensor out = a->val;
  for (auto& v : out.vec()) v = v > 0.0 ? v : 0.0;
  return make_node(std::move(out), {a}, [a](Node& n) {
    for (std::int64_t i = 0; i < n.grad.numel(); ++i)
      if (a->val[i] > 0.0) a->grad[i] += n.grad[i];
  });
}

Var square(const Var& a) { return mul(a, a); }

Var sqrt_elem(const Var& a) {
  Tensor out = a->val;
  for (auto& v : out.vec()) v = std::sqrt(v);
  Tensor vals = out;
  return make_node(std::move(out), {a}, [a, vals](Node& n) {
    for (std::int64_t i = 0; i < n.grad.numel(); ++i)
      a->grad[i] += n.grad[i] * 0.5 / (vals[i] > 0 ? vals[i] : 1e-300);
  });
}

// ---------------- matrix ----------------

Var matmul(const Var& a, const Var& b) {
  if (a->val.rank() != 2 || b->val.rank() != 2 || a->val.dim(1) != b->val.dim(0))
    throw std::invalid_argument("matmul: incompatible shapes " +
                                Tensor::shape_str(a->val.shape()) + " x " +
                                Tensor::shape_str(b->val.shape()));
  Tensor out({a->val.dim(0), b->val.dim(1)});
  as_mat(out) = as_mat(a->val) * as_mat(b->val);
  return make_node(std::move(out), {a, b}, [a, b](Node& n) {
    as_mat(a->grad) += as_mat(n.grad) * as_mat(b->val).transpose();
    as_mat(b->grad) += as_mat(a->val).transpose() * as_mat(n.grad);
  });
}

Var transpose(const Var& a) {
  Tensor out({a->val.dim(1), a->val.dim(0)});
  as_mat(out) = as_mat(a->val).transpose();
  return make_node(std::move(out), {a}, [a](Node& n) {
    as_mat(a->grad) += as_mat(n.grad).transpose();
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  Var y = matmul(x, w);
  if (b->val.rank() != 1 || b->val.dim(0) != y->val.dim(1))
    throw std::invalid_argument("linear: bias shape mismatch");
  Tensor out = y->val;
  int m = out.dim(0), d = out.dim(1);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < d; ++j) out.at2(i, j) += b->val[j];
  return make_node(std::move(out), {y, b}, [y, b, m, d](Node& n) {
    for (std::int64_t i = 0; i < n.grad.numel(); ++i) y->grad[i] += n.grad[i];
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < d; ++j) b->grad[j] += n.grad.at2(i, j);
  });
}

Var softmax_rows(const Var& x) {
  bool was_vec = x->val.rank() == 1;
  int m = was_vec ? 1 : x->val.dim(0);
  int d = was_vec ? x->val.dim(0) : x->val.dim(1);
  Tensor out = x->val;
  for (int i = 0; i < m; ++i) {
    double mx = -1e300;
    for (int j = 0; j < d; ++j) mx = std::max(mx, x->val[i * static_cast<std::int64_t>(d) + j]);
    double sum = 0.0;
    for (int j = 0; j < d; ++j) {
      double e = std::exp(x->val[i * static_cast<std::int64_t>(d) + j] - mx);
      out[i * static_cast<std::int64_t>(d) + j] = e;
      sum += e;
    }
    for (int j = 0; j < d; ++j) out[i * static_cast<std::int64_t>(d) + j] /= sum;
  }
  Tensor vals = out;
  return make_node(std::move(out), {x}, [x, vals, m, d](Node& n) {
    for (int i = 0; i < m; ++i) {
      double dot = 0.0;
      for (int j = 0; j < d; ++j)
        dot += n.grad[i * static_cast<std::int64_t>(d) + j] * vals[i * static_cast<std::int64_t>(d) + j];
      for (int j = 0; j < d; ++j) {
        std::int64_t idx = i * static_cast<std::int64_t>(d) + j;
        x->grad[idx] += vals[idx] * (n.grad[idx] - dot);
      }
    }
  });
}

Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps) {
  int m = x->val.dim(0), d = x->val.dim(1);
  if (gain->val.numel() != d || bias->val.numel() != d)
    throw std::invalid_argument("layer_norm_rows: gain/bias size mismatch");
  Tensor xhat({m, d});
  Tensor inv_std({m});
  Tensor out({m, d});
  for (int i = 0; i < m; ++i) {
    double mu = 0.0;
    for (int j = 0; j < d; ++j) mu += x->val.at2(i, j);
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      double c = x->val.at2(i, j) - mu;
      var += c * c;
    }
    var /= d;
    double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (int j = 0; j < d; ++j) {
      xhat.at2(i, j) = (x->val.at2(i, j) - mu) * is;
      out.at2(i, j) = gain->val[j] * xhat.at2(i, j) + bias->val[j];
    }
  }
  return make_node(std::move(out), {x, gain, bias},
                   [x, gain, bias, xhat, inv_std, m, d](Node& n) {
    for (int i = 0; i < m; ++i) {
      double sum_g = 0.0, sum_gx = 0.0;
      for (int j = 0; j < d; ++j) {
        double gj = n.grad.at2(i, j) * gain->val[j];
        sum_g += gj;
        sum_gx += gj * xhat.at2(i, j);
        gain->grad[j] += n.grad.at2(i, j) * xhat.at2(i, j);
        bias->grad[j] += n.grad.at2(i, j);
      }
      for (int j = 0; j < d; ++j) {
        double gj = n.grad.at2(i, j) * gain->val[j];
        x->grad.at2(i, j) +=
            inv_std[i] * (gj - sum_g / d - xhat.at2(i, j) * sum_gx / d);
      }
    }
  });
}

// ---------------- shape ----------------

Var reshape(const Var& a, std::vector<int> shape) {
  Tensor out = a->val.reshaped(std::move(shape));
  return make_node(std::move(out), {a}, [a](Node& n) {
    for (std::int64_t i = 0; i < n.grad.numel(); ++i) a->grad[i] += n.grad[i];
  });
}

Var slice_rows(const Var& a, int r0, int r1) {
  int d = a->val.dim(1);
  Tensor out({r1 - r0, d});
  for (int i = r0; i < r1; ++i)
    for (int j = 0; j < d; ++j) out.at2(i - r0, j) = a->val.at2(i, j);
  return make_node(std::move(out), {a}, [a, r0, r1, d](Node& n) {
    for (int i = r0; i < r1; ++i)
      for (int j = 0; j < d; ++j) a->grad.at2(i, j) += n.grad.at2(i - r0, j);
  });
}

Var slice_cols(const Var& a, int c0, int c1) {
  int m = a->val.dim(0);
  Tensor out({m, c1 - c0});
  for (int i = 0; i < m; ++i)
    for (int j = c0; j < c1; ++j) out.at2(i, j - c0) = a->val.at2(i, j);
  return make_node(std::move(out), {a}, [a, c0, c1, m](Node& n) {
    for (int i = 0; i < m; ++i)
      for (int j = c0; j < c1; ++j) a->grad.at2(i, j) += n.grad.at2(i, j - c0);
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
  int d = parts[0]->val.dim(1);
  int rows = 0;
  for (const auto& p : parts) rows += p->val.dim(0);
  Tensor out({rows, d});
  int at = 0;
  for (const auto& p : parts) {
    for (int i = 0; i < p->val.dim(0); ++i)
      for (int j = 0; j < d; ++j) out.at2(at + i, j) = p->val.at2(i, j);
    at += p->val.dim(0);
  }
  return make_node(std::move(out), parts, [parts, d](Node& n) {
    int at = 0;
    for (const auto& p : parts) {
      for (int i = 0; i < p->val.dim(0); ++i)
        for (int j = 0; j < d; ++j) p->grad.at2(i, j) += n.grad.at2(at + i, j);
      at += p->val.dim(0);
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  int m = parts[0]->val.dim(0);
  int cols = 0;
  for (const auto& p : parts) cols += p->val.dim(1);
  Tensor out({m, cols});
  int at = 0;
  for (const auto& p : parts) {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < p->val.dim(1); ++j) out.at2(i, at + j) = p->val.at2(i, j);
    at += p->val.dim(1);
  }
  return make_node(std::move(out), parts, [parts, m](Node& n) {
    int at = 0;
    for (const auto& p : parts) {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < p->val.dim(1); ++j) p->grad.at2(i, j) += n.grad.at2(i, at + j);
      at += p->val.dim(1);
    }
  });
}

Var pad_rows(const Var& a, int rows) {
  int m = a->val.dim(0), d = a->val.dim(1);
  if (rows < m) throw std::invalid_argument("pad_rows: target smaller than input");
  Tensor out({rows, d});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < d; ++j) out.at2(i, j) = a->val.at2(i, j);
  return make_node(std::move(out), {a}, [a, m, d](Node& n) {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < d; ++j) a->grad.at2(i, j) += n.grad.at2(i, j);
  });
}

// ---------------- reductions ----------------

Var sum_all(const Var& a) {
  double s = 0.0;
  for (double v : a->val.vec()) s += v;
  return make_node(Tensor::scalar(s), {a}, [a](Node& n) {
    for (std::int64_t i = 0; i < a->grad.numel(); ++i) a->grad[i] += n.grad[0];
  });
}

Var mean_all(const Var& a) { return scale(sum_all(a), 1.0 / static_cast<double>(a->val.numel())); }

Var row_mean(const Var& a) {
  int m = a->val.dim(0), d = a->val.dim(1);
  Tensor out({m});
  for (int i = 0; i < m; ++i) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += a->val.at2(i, j);
    out[i] = s / d;
  }
  return make_node(std::move(out), {a}, [a, m, d](Node& n) {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < d; ++j) a->grad.at2(i, j) += n.grad[i] / d;
  });
}

Var col_mean(const Var& a) {
  int m = a->val.dim(0), d = a->val.dim(1);
  Tensor out({d});
  for (int j = 0; j < d; ++j) {
    double s = 0.0;
    for (int i = 0; i < m; ++i) s += a->val.at2(i, j);
    out[j] = s / m;
  }
  return make_node(std::move(out), {a}, [a, m, d](Node& n) {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < d; ++j) a->grad.at2(i, j) += n.grad[j] / m;
  });
}

Var mse(const Var& a, const Var& b) { return mean_all(square(sub(a, b))); }

Var index_elem(const Var& a, std::int64_t i) {
  return make_node(Tensor::scalar(a->val[i]), {a}, [a, i](Node& n) {
    a->grad[i] += n.grad[0];
  });
}

Var scale_by(const Var& x, const Var& s) {
  if (s->val.numel() != 1) throw std::invalid_argument("scale_by: s must be scalar");
  Tensor out = x->val;
  double c = s->val[0];
  for (auto& v : out.vec()) v *= c;
  return make_node(std::move(out), {x, s}, [x, s, c](Node& n) {
    double ds = 0.0;
    for (std::int64_t i = 0; i < n.grad.numel(); ++i) {
      x->grad[i] += n.grad[i] * c;
      ds += n.grad[i] * x->val[i];
    }
    s->grad[0] += ds;
  });
}

// ---------------- 2-D map ops ----------------

Var conv2d_same(const Var& x, const Var& k, const Var& b) {
  int ci = x->val.dim(0), h = x->val.dim(1), w = x->val.dim(2);
  int co = k->val.dim(0), kci = k->val.dim(1), kh = k->val.dim(2), kw = k->val.dim(3);
  if (kci != ci) throw std::invalid_argument("conv2d_same: channel mismatch");
  if (b->val.numel() != co) throw std::invalid_argument("conv2d_same: bias mismatch");
  int ph = kh / 2, pw = kw / 2;
  Tensor out({co, h, w});
  const double* xd = x->val.data();
  const double* kd = k->val.data();
  for (int oc = 0; oc < co; ++oc) {
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        double acc = b->val[oc];
        for (int ic = 0; ic < ci; ++ic)
          for (int dr = 0; dr < kh; ++dr) {
            int rr = r + dr - ph;
            if (rr < 0 || rr >= h) continue;
            for (int dc = 0; dc < kw; ++dc) {
              int cc = c + dc - pw;
              if (cc < 0 || cc >= w) continue;
              acc += xd[(static_cast<std::size_t>(ic) * h + rr) * w + cc] *
                     kd[((static_cast<std::size_t>(oc) * ci + ic) * kh + dr) * kw + dc];
            }
          }
        out.at3(oc, r, c) = acc;
      }
  }
  return make_node(std::move(out), {x, k, b}, [x, k, b, ci, h, w, co, kh, kw, ph, pw](Node& n) {
    const double* xd = x->val.data();
    const double* kd = k->val.data();
    double* xg = x->grad.data();
    double* kg = k->grad.data();
    for (int oc = 0; oc < co; ++oc)
      for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
          double g = n.grad.at3(oc, r, c);
          if (g == 0.0) continue;
          b->grad[oc] += g;
          for (int ic = 0; ic < ci; ++ic)
            for (int dr = 0; dr < kh; ++dr) {
              int rr = r + dr - ph;
              if (rr < 0 || rr >= h) continue;
              for (int dc = 0; dc < kw; ++dc) {
                int cc = c + dc - pw;
                if (cc < 0 || cc >= w) continue;
                std::size_t xi = (static_cast<std::size_t>(ic) * h + rr) * w + cc;
                std::size_t kidx = ((static_cast<std::size_t>(oc) * ci + ic) * kh + dr) * kw + dc;
                xg[xi] += g * kd[kidx];
                kg[kidx] += g * xd[xi];
              }
            }
        }
  });
}

Var avg_pool2(const Var& x) {
  int c = x->val.dim(0), h = x->val.dim(1), w = x->val.dim(2);
  if (h % 2 || w % 2) throw std::invalid_argument("avg_pool2: odd spatial size");
  Tensor out({c, h / 2, w / 2});
  for (int ch = 0; ch < c; ++ch)
    for (int r = 0; r < h / 2; ++r)
      for (int cc = 0; cc < w / 2; ++cc)
        out.at3(ch, r, cc) = 0.25 * (x->val.at3(ch, 2 * r, 2 * cc) + x->val.at3(ch, 2 * r, 2 * cc + 1) +
                                     x->val.at3(ch, 2 * r + 1, 2 * cc) + x->val.at3(ch, 2 * r + 1, 2 * cc + 1));
  return make_node(std::move(out), {x}, [x, c, h, w](Node& n) {
    for (int ch = 0; ch < c; ++ch)
      for (int r = 0; r < h / 2; ++r)
        for (int cc = 0; cc < w / 2; ++cc) {
          double g = 0.25 * n.grad.at3(ch, r, cc);
          x->grad.at3(ch, 2 * r, 2 * cc) += g;
          x->grad.at3(ch, 2 * r, 2 * cc + 1) += g;
          x->grad.at3(ch, 2 * r + 1, 2 * cc) += g;
          x->grad.at3(ch, 2 * r + 1, 2 * cc + 1) += g;
        }
  });
}

Var upsample_nearest(const Var& x, int factor) {
  if (factor < 1) throw std::invalid_argument("upsample_nearest: factor must be >= 1");
  int c = x->val.dim(0), h = x->val.dim(1), w = x->val.dim(2);
  Tensor out({c, factor * h, factor * w});
  for (int ch = 0; ch < c; ++ch)
    for (int r = 0; r < factor * h; ++r)
      for (int cc = 0; cc < factor * w; ++cc)
        out.at3(ch, r, cc) = x->val.at3(ch, r / factor, cc / factor);
  return make_node(std::move(out), {x}, [x, c, h, w, factor](Node& n) {
    for (int ch = 0; ch < c; ++ch)
      for (int r = 0; r < factor * h; ++r)
        for (int cc = 0; cc < factor * w; ++cc)
          x->grad.at3(ch, r / factor, cc / factor) += n.grad.at3(ch, r, cc);
  });
}

Var upsample_bilinear(const Var& x, int factor) {
  if (factor < 1) throw std::invalid_argument("upsample_bilinear: factor must be >= 1");
  const int c = x->val.dim(0), h = x->val.dim(1), w = x->val.dim(2);
  const int fh = factor * h, fw = factor * w;
  // Per-axis taps: output index -> two clamped source indices and a weight.
  struct Tap { int lo, hi; double t; };
  auto taps = [factor](int out, int n) {
    double pos = (out + 0.5) / factor - 0.5;
    int lo = static_cast<int>(std::floor(pos));
    Tap tp{std::clamp(lo, 0, n - 1), std::clamp(lo + 1, 0, n - 1), pos - lo};
    return tp;
  };
  std::vector<Tap> row_taps(fh), col_taps(fw);
  for (int r = 0; r < fh; ++r) row_taps[r] = taps(r, h);
  for (int cc = 0; cc < fw; ++cc) col_taps[cc] = taps(cc, w);
  Tensor out({c, fh, fw});
  for (int ch = 0; ch < c; ++ch)
    for (int r = 0; r < fh; ++r) {
      const Tap& tr = row_taps[r];
      for (int cc = 0; cc < fw; ++cc) {
        const Tap& tc = col_taps[cc];
        out.at3(ch, r, cc) =
            (1 - tr.t) * ((1 - tc.t) * x->val.at3(ch, tr.lo, tc.lo) +
                          tc.t * x->val.at3(ch, tr.lo, tc.hi)) +
            tr.t * ((1 - tc.t) * x->val.at3(ch, tr.hi, tc.lo) +
                    tc.t * x->val.at3(ch, tr.hi, tc.hi));
      }
    }
  return make_node(std::move(out), {x}, [x, c, fh, fw, row_taps, col_taps](Node& n) {
    for (int ch = 0; ch < c; ++ch)
      for (int r = 0; r < fh; ++r) {
        const Tap& tr = row_taps[r];
        for (int cc = 0; cc < fw; ++cc) {
          const Tap& tc = col_taps[cc];
          double g = n.grad.at3(ch, r, cc);
          x->grad.at3(ch, tr.lo, tc.lo) += (1 - tr.t) * (1 - tc.t) * g;
          x->grad.at3(ch, tr.lo, tc.hi) += (1 - tr.t) * tc.t * g;
          x->grad.at3(ch, tr.hi, tc.lo) += tr.t * (1 - tc.t) * g;
          x->grad.at3(ch, tr.hi, tc.hi) += tr.t * tc.t * g;
        }
      }
  });
}

Var concat_channels(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels: empty");
  int h = parts[0]->val.dim(1), w = parts[0]->val.dim(2);
  int c = 0;
  for (const auto& p : parts) {
    if (p->val.dim(1) != h || p->val.dim(2) != w)
      throw std::invalid_argument("concat_channels: spatial mismatch");
    c += p->val.dim(0);
  }
  Tensor out({c, h, w});
  std::int64_t at = 0;
  for (const auto& p : parts) {
    for (std::int64_t i = 0; i < p->val.numel(); ++i) out[at + i] = p->val[i];
    at += p->val.numel();
  }
  return make_node(std::move(out), parts, [parts](Node& n) {
    std::int64_t at = 0;
    for (const auto& p : parts) {
      for (std::int64_t i = 0; i < p->val.numel(); ++i) p->grad[i] += n.grad[at + i];
      at += p->val.numel();
    }
  });
}

Var add_channel_bias(const Var& x, const Var& v) {
  int c = x->val.dim(0), h = x->val.dim(1), w = x->val.dim(2);
  if (v->val.numel() != c) throw std::invalid_argument("add_channel_bias: size mismatch");
  Tensor out = x->val;
  for (int ch = 0; ch < c; ++ch)
    for (int r = 0; r < h; ++r)
      for (int cc = 0; cc < w; ++cc) out.at3(ch, r, cc) += v->val[ch];
  return make_node(std::move(out), {x, v}, [x, v, c, h, w](Node& n) {
    for (int ch = 0; ch < c; ++ch)
      for (int r = 0; r < h; ++r)
        for (int cc = 0; cc < w; ++cc) {
          x->grad.at3(ch, r, cc) += n.grad.at3(ch, r, cc);
          v->grad[ch] += n.grad.at3(ch, r, cc);
        }
  });
}

// ---------------- period folding ----------------

// Rows index intraperiod phase, columns index the period number: entry
// (c, r, j) of the output holds x[j*period + r][c], zero past the series end.
Var fold2d(const Var& x, int period) {
  int t = x->val.dim(0), d = x->val.dim(1);
  if (period < 1) throw std::invalid_argument("fold2d: period must be >= 1");
  int cols = (t + period - 1) / period;
  Tensor out({d, period, cols});
  for (int c = 0; c < d; ++c)
    for (int r = 0; r < period; ++r)
      for (int j = 0; j < cols; ++j) {
        int n = j * period + r;
        out.at3(c, r, j) = n < t ? x->val.at2(n, c) : 0.0;
      }
  return make_node(std::move(out), {x}, [x, t, d, period, cols](Node& n) {
    for (int c = 0; c < d; ++c)
      for (int r = 0; r < period; ++r)
        for (int j = 0; j < cols; ++j) {
          int idx = j * period + r;
          if (idx < t) x->grad.at2(idx, c) += n.grad.at3(c, r, j);
        }
  });
}

Var unfold2d(const Var& y, int t_orig) {
  int d = y->val.dim(0), period = y->val.dim(1), cols = y->val.dim(2);
  if (t_orig > period * cols) throw std::invalid_argument("unfold2d: t exceeds folded capacity");
  Tensor out({t_orig, d});
  for (int c = 0; c < d; ++c)
    for (int r = 0; r < period; ++r)
      for (int j = 0; j < cols; ++j) {
        int n = j * period + r;
        if (n < t_orig) out.at2(n, c) = y->val.at3(c, r, j);
      }
  return make_node(std::move(out), {y}, [y, t_orig, d, period, cols](Node& n) {
    for (int c = 0; c < d; ++c)
      for (int r = 0; r < period; ++r)
        for (int j = 0; j < cols; ++j) {
          int idx = j * period + r;
          if (idx < t_orig) y->grad.at3(c, r, j) += n.grad.at2(idx, c);
        }
  });
}

}  // namespace diffrecon::ad
