#include "lsds/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace lsds {

double grad_check_params(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                         double eps) {
  if (!(eps > 0.0)) throw ContractError("grad_check: eps must be positive");
  for (Tensor& p : params) {
    if (!p.requires_grad()) throw ContractError("grad_check: parameter without grad");
    p.zero_grad();
  }
  Tensor y = loss();
  if (y.size() != 1) throw ContractError("grad_check: function is not scalar-valued");
  backward(y);

  std::vector<std::vector<double>> analytic;
  for (const Tensor& p : params) analytic.push_back(std::vector<double>(p.grad().begin(), p.grad().end()));

  double worst = 0.0;
  NoGradGuard no_grad;
  for (std::size_t s = 0; s < params.size(); ++s) {
    std::span<double> x = params[s].mutable_data();
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double orig = x[k];
      x[k] = orig + eps;
      const double up = loss().item();
      x[k] = orig - eps;
      const double down = loss().item();
      x[k] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[s].empty() ? 0.0 : analytic[s][k];
      worst = std::max(worst, std::fabs(a - numeric) / std::max(1.0, std::fabs(numeric)));
    }
  }
  return worst;
}

double grad_check(const ScalarFn& f, const Tensor& point, double eps) {
  Tensor x = Tensor::from(point.shape(), point.to_vector(), true);
  return grad_check_params([&] { return f(x); }, {x}, eps);
}

}  // namespace lsds
