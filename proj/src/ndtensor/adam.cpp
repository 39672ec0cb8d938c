#include "hcmgan/adam.hpp"

#include <cmath>
#include <string>

#include "hcmgan/errors.hpp"

namespace hcmgan {

Adam::Adam(std::vector<Tensor> params, AdamHyper hyper) : params_(std::move(params)), hyper_(hyper) {
  if (!(hyper_.lr > 0.0)) throw ContractError("Adam: learning rate must be positive");
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    if (!p.requires_grad()) throw ContractError("Adam: parameter does not require grad");
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) {
      throw ContractError("Adam: parameter " + std::to_string(i) + " " +
                          shape_str(params_[i].shape()) + " has no gradient");
    }
  }
  ++t_;
  const double b1 = hyper_.beta1, b2 = hyper_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    auto g = p.grad();
    auto w = p.mutable_values();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      w[j] -= hyper_.lr * mhat / (std::sqrt(vhat) + hyper_.eps);
    }
  }
  zero_grad();
}

void Adam::zero_grad() {
  for (auto& p : params_) p.clear_grad();
}

}  // namespace hcmgan
