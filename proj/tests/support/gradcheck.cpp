#include "support/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace verco::testing {

GradCheckResult gradient_check(const std::function<textgen::ad::Var()>& loss_fn, const textgen::NamedParameters& params,
                               int probes, double h, std::uint64_t seed) {
  for (auto [name, p] : params) p.zero_grad();
  textgen::ad::backward(loss_fn());
  std::vector<textgen::Tensor> analytic;
  for (const auto& [name, p] : params) {
    analytic.push_back(p.has_grad() ? p.grad() : textgen::Tensor(p.rows(), p.cols()));
  }
  std::mt19937_64 rng(seed);
  GradCheckResult out;
  for (int k = 0; k < probes; ++k) {
    const std::size_t which = std::uniform_int_distribution<std::size_t>(0, params.size() - 1)(rng);
    textgen::ad::Var p = params[which].second;
    const std::size_t idx = std::uniform_int_distribution<std::size_t>(0, p.value().size() - 1)(rng);
    double& w = p.mutable_value().data[idx];
    const double saved = w;
    double up, down;
    {
      textgen::ad::NoGradGuard g;
      w = saved + h;
      up = loss_fn().item();
      w = saved - h;
      down = loss_fn().item();
    }
    w = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic[which].data[idx];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
    out.max_relative_error = std::max(out.max_relative_error, std::abs(a - numeric) / denom);
    out.max_abs_analytic = std::max(out.max_abs_analytic, std::abs(a));
    ++out.probes;
  }
  for (auto [name, p] : params) p.zero_grad();
  return out;
}

}  // namespace verco::testing
