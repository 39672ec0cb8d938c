#pragma once

#include <cstdint>
#include <vector>

#include "hcmgan/tensor.hpp"

namespace hcmgan {

struct AdamHyper {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction over a fixed list of parameters.
///
/// `step()` requires every parameter to carry a gradient, applies the update
/// and clears the gradients.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamHyper hyper);

  void step();
  void zero_grad();

  std::uint64_t steps() const { return t_; }
  const AdamHyper& hyper() const { return hyper_; }
  const std::vector<Tensor>& params() const { return params_; }
  const std::vector<double>& first_moment(std::size_t i) const { return m_[i]; }
  const std::vector<double>& second_moment(std::size_t i) const { return v_[i]; }

 private:
  std::vector<Tensor> params_;
  AdamHyper hyper_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::uint64_t t_ = 0;
};

}  // namespace hcmgan
