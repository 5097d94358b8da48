#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>

#include "exost/tensor.hpp"

namespace exost {

/// Named trainable tensors. Ordered by name so iteration (initialization,
/// optimizer state, archives) is deterministic.
using ParamStore = std::map<std::string, DTensor>;

/// Fills `t` uniformly in ±sqrt(1/fan_in).
void init_uniform(DTensor& t, std::size_t fan_in, std::mt19937_64& rng);

std::size_t parameter_count(const ParamStore& params);

/// Binds parameters onto a tape, once per name. A mutable store yields
/// tracked leaves; a const store yields constants.
class ParamBinder {
 public:
  ParamBinder(ad::Tape& tape, ParamStore& params) : tape_(tape), mutable_(&params), params_(&params) {}
  ParamBinder(ad::Tape& tape, const ParamStore& params) : tape_(tape), params_(&params) {}

  ad::Var operator()(const std::string& name);
  bool contains(const std::string& name) const { return params_->contains(name); }
  ad::Tape& tape() const { return tape_; }

 private:
  ad::Tape& tape_;
  ParamStore* mutable_ = nullptr;
  const ParamStore* params_;
  std::map<std::string, ad::Var> bound_;
};

/// Dropout mode and randomness for one forward pass.
struct ForwardContext {
  bool train = false;
  std::mt19937_64* rng = nullptr;
};

}  // namespace exost
