#pragma once

// Central finite differences against the reverse-mode gradients.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ceb/tensor.hpp"

namespace ceb {

struct FdReport {
  double max_relative_error = 0.0;
  std::string worst;  // name of the worst tensor
};

/// For each tensor, ||analytic - numeric|| / max(||analytic||, ||numeric||)
/// over all its entries; tensors whose gradients both vanish count as 0.
/// `loss` must rebuild the graph from the current parameter values.
inline FdReport fd_check(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                         const std::vector<std::string>& names, double h = 1e-6) {
  for (auto& p : params) p.zero_grad();
  loss().backward();
  FdReport rep;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto analytic = params[t].grad();
    auto values = params[t].mutable_data();
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double orig = values[i];
      values[i] = orig + h;
      const double up = loss().item();
      values[i] = orig - h;
      const double down = loss().item();
      values[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
    }
    const double denom = std::sqrt(std::max(a2, n2));
    const double rel = denom < 1e-10 ? 0.0 : std::sqrt(diff2) / denom;
    if (rel >= rep.max_relative_error) {
      rep.max_relative_error = rel;
      rep.worst = t < names.size() ? names[t] : std::to_string(t);
    }
  }
  return rep;
}

}  // namespace ceb
