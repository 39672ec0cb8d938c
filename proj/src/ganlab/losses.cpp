#include "hcmgan/losses.hpp"

#include <algorithm>
#include <cmath>

#include "hcmgan/errors.hpp"
#include "hcmgan/ops.hpp"

namespace hcmgan::gan {

double NoiseSchedule::variance(int epoch) const {
  if (initial_variance < 0.0) throw ContractError("noise variance must be nonnegative");
  if (total_epochs <= 0) return 0.0;
  const double frac = 1.0 - static_cast<double>(epoch) / static_cast<double>(total_epochs);
  return initial_variance * std::max(0.0, frac);
}

Tensor apply_instance_noise(Tape& tape, const Tensor& x, const NoiseSchedule& schedule, Rng& rng) {
  const double var = schedule.current_variance();
  if (var == 0.0) return x;
  std::normal_distribution<double> n(0.0, std::sqrt(var));
  std::vector<double> noise(x.size());
  for (auto& v : noise) v = n(rng);
  return ops::add_constant(tape, x, noise);
}

Tensor discriminator_loss_from_probs(Tape& tape, const Tensor& d_real, std::span<const Tensor> d_fakes) {
  Tensor loss = ops::bce_loss(tape, d_real, 1.0);
  for (const auto& f : d_fakes) loss = ops::add(tape, loss, ops::bce_loss(tape, f, 0.0));
  return loss;
}

Tensor generator_adversarial_from_probs(Tape& tape, const Tensor& d_fake) {
  return ops::bce_loss(tape, d_fake, 1.0);
}

Tensor classification_from_probs(Tape& tape, const Tensor& c_probs, int label) {
  const std::vector<int> labels(c_probs.dim(0), label);
  return ops::categorical_ce(tape, c_probs, labels);
}

Tensor loss_discriminator(Tape& tape, const SharedTrunkBundle& bundle, const Tensor& x_real,
                          std::span<const Tensor> x_fakes) {
  if (x_real.dim(0) == 0 || x_fakes.empty()) throw ContractError("loss_discriminator: empty batch");
  auto d_real = bundle.disc_forward(tape, x_real, ParamMode::Train);
  std::vector<Tensor> d_fakes;
  d_fakes.reserve(x_fakes.size());
  for (const auto& f : x_fakes) d_fakes.push_back(bundle.disc_forward(tape, f, ParamMode::Train));
  return discriminator_loss_from_probs(tape, d_real, d_fakes);
}

Tensor generator_adversarial_term(Tape& tape, const SharedTrunkBundle& bundle, const Tensor& x_disc) {
  return generator_adversarial_from_probs(tape, bundle.disc_forward(tape, x_disc, ParamMode::Frozen));
}

Tensor classification_term(Tape& tape, const SharedTrunkBundle& bundle, const Tensor& x, int label,
                           ParamMode mode) {
  return classification_from_probs(tape, bundle.cls_forward(tape, x, mode), label);
}

Tensor loss_generator(Tape& tape, const SharedTrunkBundle& bundle, std::span<const FakeBatch> fakes,
                      double lambda) {
  if (lambda < 0.0) throw ContractError("loss_generator: lambda must be nonnegative");
  if (fakes.empty()) throw ContractError("loss_generator: no generated batches");
  Tensor total;
  for (const auto& f : fakes) {
    if (f.for_discriminator().shape() != f.x.shape()) throw ShapeError("loss_generator: disc_view shape mismatch");
    Tensor term = generator_adversarial_term(tape, bundle, f.for_discriminator());
    if (lambda > 0.0) {
      auto cls = classification_term(tape, bundle, f.x, f.label, ParamMode::Frozen);
      term = ops::add(tape, term, ops::scale(tape, cls, lambda));
    }
    total = total.defined() ? ops::add(tape, total, term) : term;
  }
  return total;
}

Tensor loss_classifier(Tape& tape, const SharedTrunkBundle& bundle, std::span<const FakeBatch> fakes) {
  if (fakes.empty()) throw ContractError("loss_classifier: no generated batches");
  std::vector<Tensor> xs;
  std::vector<int> labels;
  for (const auto& f : fakes) {
    if (f.label < 0 || f.label > 1) throw ContractError("loss_classifier: label must be 0 or 1");
    xs.push_back(f.x);
    labels.insert(labels.end(), f.x.dim(0), f.label);
  }
  auto all = xs.size() == 1 ? xs.front() : ops::concat_rows(tape, xs);
  return ops::categorical_ce(tape, bundle.cls_forward(tape, all, ParamMode::Train), labels);
}

}  // namespace hcmgan::gan
