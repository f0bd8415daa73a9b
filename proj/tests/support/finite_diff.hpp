#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "reftrack/nn.hpp"
#include "reftrack/tensor.hpp"

namespace reftrack::testing {

struct FdReport {
  double worst_rel = 0.0;
  int checked = 0;
};

/// Central finite-difference check of d(loss)/d(leaf) against autodiff.
/// `loss_fn` must rebuild the graph from the current leaf values on every
/// call. Checks up to `max_indices` coordinates per leaf (all if <= 0).
inline FdReport check_gradients(const std::function<Tensor()>& loss_fn,
                                std::vector<Tensor> leaves, double h = 1e-5,
                                int max_indices = 0, Rng* index_rng = nullptr) {
  Tensor loss = loss_fn();
  for (Tensor& t : leaves) {
    t.grad();
    t.zero_grad();
  }
  backward(loss);

  FdReport report;
  for (Tensor& leaf : leaves) {
    const double* analytic = leaf.grad();
    if (!analytic) {
      throw std::logic_error("check_gradients: leaf does not require grad");
    }
    std::vector<std::size_t> indices;
    const std::size_t n = leaf.numel();
    if (max_indices > 0 && n > static_cast<std::size_t>(max_indices) && index_rng) {
      for (int i = 0; i < max_indices; ++i) {
        indices.push_back(static_cast<std::size_t>(
            index_rng->uniform_int(0, static_cast<int>(n) - 1)));
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) indices.push_back(i);
    }
    for (std::size_t idx : indices) {
      double* x = leaf.data();
      const double keep = x[idx];
      x[idx] = keep + h;
      const double up = loss_fn().value();
      x[idx] = keep - h;
      const double down = loss_fn().value();
      x[idx] = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double rel = std::abs(analytic[idx] - numeric) /
                         std::max({1.0, std::abs(analytic[idx]), std::abs(numeric)});
      report.worst_rel = std::max(report.worst_rel, rel);
      ++report.checked;
    }
  }
  return report;
}

}  // namespace reftrack::testing
