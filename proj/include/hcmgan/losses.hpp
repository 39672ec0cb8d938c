#pragma once

#include <span>
#include <vector>

#include "hcmgan/networks.hpp"
#include "hcmgan/rng.hpp"
#include "hcmgan/tensor.hpp"

namespace hcmgan::gan {

/// Gaussian instance noise whose variance decays linearly to zero:
/// variance(e) = initial · max(0, 1 - e / total_epochs).
struct NoiseSchedule {
  double initial_variance = 1.0;
  int total_epochs = 1;
  int current_epoch = 0;

  double variance(int epoch) const;
  double current_variance() const { return variance(current_epoch); }
};

// x + N(0, variance(current_epoch)); returns x itself at zero variance.
Tensor apply_instance_noise(Tape& tape, const Tensor& x, const NoiseSchedule& schedule, Rng& rng);

/// A generated batch tagged with the index of the generator it came from.
/// `disc_view` is what the discriminator sees (usually x plus instance
/// noise); when undefined the discriminator sees x.
struct FakeBatch {
  Tensor x;
  int label = 0;
  Tensor disc_view;

  const Tensor& for_discriminator() const { return disc_view.defined() ? disc_view : x; }
};

// Loss assembly on already-computed probabilities.
Tensor discriminator_loss_from_probs(Tape& tape, const Tensor& d_real, std::span<const Tensor> d_fakes);
Tensor generator_adversarial_from_probs(Tape& tape, const Tensor& d_fake);
Tensor classification_from_probs(Tape& tape, const Tensor& c_probs, int label);

// bce(D(real), 1) + Σ bce(D(fake), 0). Updates trunk + discriminator head.
Tensor loss_discriminator(Tape& tape, const SharedTrunkBundle& bundle, const Tensor& x_real,
                          std::span<const Tensor> x_fakes);

// Σ over generators of bce(D(x̂), 1) + λ · CE(C(x̂), origin). The bundle is
// read frozen, so only generator parameters receive gradients.
Tensor loss_generator(Tape& tape, const SharedTrunkBundle& bundle, std::span<const FakeBatch> fakes,
                      double lambda);

// Cross-entropy of C over all generated samples (concatenated) against
// their generator of origin. Only the classifier head receives gradients.
Tensor loss_classifier(Tape& tape, const SharedTrunkBundle& bundle, std::span<const FakeBatch> fakes);

Tensor generator_adversarial_term(Tape& tape, const SharedTrunkBundle& bundle, const Tensor& x_disc);
Tensor classification_term(Tape& tape, const SharedTrunkBundle& bundle, const Tensor& x, int label,
                           ParamMode mode);

}  // namespace hcmgan::gan
