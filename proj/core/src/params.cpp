#include "exost/params.hpp"

#include <cmath>
#include <stdexcept>

namespace exost {

void init_uniform(DTensor& t, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.values) v = dist(rng);
  t.grad.assign(t.values.size(), 0.0);
}

std::size_t parameter_count(const ParamStore& params) {
  std::size_t total = 0;
  for (const auto& [name, t] : params) total += t.size();
  return total;
}

ad::Var ParamBinder::operator()(const std::string& name) {
  if (auto it = bound_.find(name); it != bound_.end()) return it->second;
  ad::Var v;
  if (mutable_) {
    auto it = mutable_->find(name);
    if (it == mutable_->end()) throw std::out_of_range("unknown parameter '" + name + "'");
    v = tape_.param(it->second);
  } else {
    auto it = params_->find(name);
    if (it == params_->end()) throw std::out_of_range("unknown parameter '" + name + "'");
    v = tape_.constant(it->second);
  }
  bound_.emplace(name, v);
  return v;
}

}  // namespace exost
