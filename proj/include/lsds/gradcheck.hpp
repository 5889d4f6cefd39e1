#pragma once

#include <functional>
#include <vector>

#include "lsds/tensor.hpp"

namespace lsds {

using ScalarFn = std::function<Tensor(const Tensor&)>;

// Max over coordinates of |analytic - central difference| / max(1, |central|)
// for f at `point`. f must return a scalar tensor.
double grad_check(const ScalarFn& f, const Tensor& point, double eps = 1e-5);

// Same measure, taken over every coordinate of every tensor in `params`
// (perturbed in place and restored). `loss` must read the tensors afresh on
// every call.
double grad_check_params(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                         double eps = 1e-5);

}  // namespace lsds
