#pragma once

#include <map>
#include <string>

#include "verco/textgen/model.hpp"

namespace verco::textgen {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam over a fixed, named parameter list. Parameters without a gradient
// this step are left alone (their moments do not decay either).
class Adam {
 public:
  Adam(NamedParameters params, AdamConfig config);

  void step();
  void zero_grad();
  const NamedParameters& parameters() const { return params_; }
  long long steps() const { return t_; }
  AdamConfig& config() { return config_; }

  // Moments as "<prefix>m.<name>" / "<prefix>v.<name>", plus the step count.
  void export_state(const std::string& prefix, std::map<std::string, Tensor>& tensors,
                    std::map<std::string, std::string>& attributes) const;
  void import_state(const std::string& prefix, const std::map<std::string, Tensor>& tensors,
                    const std::map<std::string, std::string>& attributes);

 private:
  NamedParameters params_;
  AdamConfig config_;
  std::vector<Tensor> m_, v_;
  long long t_ = 0;
};

// Scales gradients so their joint L2 norm is at most max_norm; returns the
// norm before scaling.
double clip_grad_norm(const NamedParameters& params, double max_norm);
double grad_norm(const NamedParameters& params);

}  // namespace verco::textgen
