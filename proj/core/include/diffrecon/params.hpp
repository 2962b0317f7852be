#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "diffrecon/autodiff.hpp"
#include "diffrecon/rng.hpp"

namespace diffrecon {

/// Ordered registry of named trainable tensors. Names are stable and are
/// the checkpoint serialization keys.
class ParamStore {
 public:
  ad::Var create(const std::string& name, std::vector<int> shape, Rng& rng, double stddev);
  ad::Var create_zeros(const std::string& name, std::vector<int> shape);
  ad::Var create_full(const std::string& name, std::vector<int> shape, double value);

  ad::Var get(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) > 0; }

  const std::vector<std::pair<std::string, ad::Var>>& entries() const { return entries_; }
  std::int64_t count() const;  // total scalar parameters
  void zero_grad();

 private:
  ad::Var insert(const std::string& name, Tensor t);
  std::vector<std::pair<std::string, ad::Var>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Fully connected layer y = xW + b with fan-in scaled Gaussian init.
struct Affine {
  ad::Var w, b;
  static Affine create(ParamStore& store, const std::string& name, int in, int out, Rng& rng);
  ad::Var operator()(const ad::Var& x) const { return ad::linear(x, w, b); }
};

/// Adam with bias correction; state keyed by parameter name.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamStore& store);

 private:
  struct State {
    Tensor m, v;
  };
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::unordered_map<std::string, State> state_;
};

}  // namespace diffrecon
