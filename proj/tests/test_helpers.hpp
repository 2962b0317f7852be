#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "doctest.h"

#include "diffrecon/autodiff.hpp"
#include "diffrecon/tensor.hpp"

namespace diffrecon::testutil {

/// Central finite-difference check of d(build())/d(leaf) for every given
/// leaf, at 64-bit precision. build() must construct a fresh scalar graph
/// from the leaves' current values on every call.
inline void check_gradients(const std::function<ad::Var()>& build,
                            const std::vector<ad::Var>& leaves, double h = 1e-5,
                            double rel_tol = 1e-4) {
  for (const auto& leaf : leaves) leaf->grad.fill(0.0);
  ad::Var root = build();
  REQUIRE(root->val.numel() == 1);
  ad::backward(root);

  for (std::size_t li = 0; li < leaves.size(); ++li) {
    const ad::Var& leaf = leaves[li];
    for (std::int64_t i = 0; i < leaf->val.numel(); ++i) {
      double saved = leaf->val[i];
      leaf->val[i] = saved + h;
      double up = build()->val[0];
      leaf->val[i] = saved - h;
      double dn = build()->val[0];
      leaf->val[i] = saved;
      double fd = (up - dn) / (2.0 * h);
      double an = leaf->grad[i];
      double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
      INFO("leaf ", li, " element ", i, " analytic ", an, " fd ", fd);
      CHECK(std::abs(an - fd) / denom < rel_tol);
    }
  }
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.same_shape(b));
  double m = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace diffrecon::testutil
