#include "diffrecon/params.hpp"

#include <cmath>
#include <stdexcept>

namespace diffrecon {

ad::Var ParamStore::insert(const std::string& name, Tensor t) {
  if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate name " + name);
  ad::Var v = ad::make_param(std::move(t));
  index_[name] = entries_.size();
  entries_.emplace_back(name, v);
  return v;
}

ad::Var ParamStore::create(const std::string& name, std::vector<int> shape, Rng& rng, double stddev) {
  return insert(name, rng.gauss_tensor(std::move(shape), stddev));
}

ad::Var ParamStore::create_zeros(const std::string& name, std::vector<int> shape) {
  return insert(name, Tensor(std::move(shape)));
}

ad::Var ParamStore::create_full(const std::string& name, std::vector<int> shape, double value) {
  return insert(name, Tensor::full(std::move(shape), value));
}

ad::Var ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("ParamStore: unknown name " + name);
  return entries_[it->second].second;
}

std::int64_t ParamStore::count() const {
  std::int64_t n = 0;
  for (const auto& [name, v] : entries_) n += v->val.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, v] : entries_) v->grad.fill(0.0);
}

Affine Affine::create(ParamStore& store, const std::string& name, int in, int out, Rng& rng) {
  Affine a;
  a.w = store.create(name + ".w", {in, out}, rng, 1.0 / std::sqrt(static_cast<double>(in)));
  a.b = store.create_zeros(name + ".b", {out});
  return a;
}

void AdamOptimizer::step(ParamStore& store) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& [name, p] : store.entries()) {
    State& st = state_[name];
    if (st.m.numel() == 0) {
      st.m = Tensor(p->val.shape());
      st.v = Tensor(p->val.shape());
    }
    for (std::int64_t i = 0; i < p->val.numel(); ++i) {
      double g = p->grad[i];
      st.m[i] = beta1_ * st.m[i] + (1.0 - beta1_) * g;
      st.v[i] = beta2_ * st.v[i] + (1.0 - beta2_) * g * g;
      double mhat = st.m[i] / bc1;
      double vhat = st.v[i] / bc2;
      p->val[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

}  // namespace diffrecon
