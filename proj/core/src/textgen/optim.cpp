#include "verco/textgen/optim.hpp"

#include <cmath>

#include "verco/common/error.hpp"

namespace verco::textgen {

Adam::Adam(NamedParameters params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (const auto& [name, p] : params_) {
    if (!p.requires_grad()) throw UsageError("Adam given non-trainable parameter " + name);
    m_.emplace_back(p.rows(), p.cols());
    v_.emplace_back(p.rows(), p.cols());
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ad::Var p = params_[i].second;
    if (!p.has_grad()) continue;
    const auto& g = p.grad().data;
    auto& w = p.mutable_value().data;
    auto& m = m_[i].data;
    auto& v = v_[i].data;
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g[j];
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g[j] * g[j];
      w[j] -= config_.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + config_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& [name, p] : params_) {
    ad::Var v = p;
    v.zero_grad();
  }
}

void Adam::export_state(const std::string& prefix, std::map<std::string, Tensor>& tensors,
                        std::map<std::string, std::string>& attributes) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    tensors[prefix + "m." + params_[i].first] = m_[i];
    tensors[prefix + "v." + params_[i].first] = v_[i];
  }
  attributes[prefix + "t"] = std::to_string(t_);
}

void Adam::import_state(const std::string& prefix, const std::map<std::string, Tensor>& tensors,
                        const std::map<std::string, std::string>& attributes) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto m = tensors.find(prefix + "m." + params_[i].first);
    auto v = tensors.find(prefix + "v." + params_[i].first);
    if (m == tensors.end() || v == tensors.end()) throw FormatError("optimizer state lacks " + params_[i].first);
    if (!m->second.same_shape(m_[i]) || !v->second.same_shape(v_[i])) {
      throw FormatError("optimizer state shape mismatch for " + params_[i].first);
    }
    m_[i] = m->second;
    v_[i] = v->second;
  }
  auto t = attributes.find(prefix + "t");
  if (t == attributes.end()) throw FormatError("optimizer state lacks the step count");
  t_ = std::stoll(t->second);
}

double grad_norm(const NamedParameters& params) {
  double s = 0.0;
  for (const auto& [name, p] : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad().data) s += g * g;
  }
  return std::sqrt(s);
}

double clip_grad_norm(const NamedParameters& params, double max_norm) {
  const double norm = grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const double k = max_norm / norm;
    for (const auto& [name, p] : params) {
      if (!p.has_grad()) continue;
      for (double& g : p.node()->grad.data) g *= k;
    }
  }
  return norm;
}

}  // namespace verco::textgen
