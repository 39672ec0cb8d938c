#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "hcmgan/adam.hpp"
#include "hcmgan/losses.hpp"
#include "hcmgan/networks.hpp"
#include "hcmgan/rng.hpp"
#include "hcmgan/tensor.hpp"

namespace hcmgan::split {

/// Soft cluster membership: masses[i] is the probability mass example i
/// holds in this node.
struct MembershipVector {
  std::vector<double> masses;
  int node_id = 0;

  double total_mass() const;
  std::size_t size() const { return masses.size(); }
  void validate() const;  // ContractError unless every mass is in [0, 1]
};

class SampleDistribution {
 public:
  explicit SampleDistribution(std::vector<double> probs);

  const std::vector<double>& probs() const { return probs_; }
  std::size_t size() const { return probs_.size(); }
  std::size_t draw(Rng& rng) const;

 private:
  std::vector<double> probs_;
  std::vector<double> cumulative_;
};

SampleDistribution normalize_membership(const MembershipVector& s);
std::vector<std::size_t> sample_batch(const SampleDistribution& d, std::size_t n, Rng& rng);

struct SplitConfig {
  double lambda = 1.0;
  int refinements = 0;
  int epochs = 10;
  std::size_t batch_real = 100;
  std::size_t batch_per_generator = 100;
  double lr_gen = 2e-4;
  double lr_disc = 1e-4;
  double lr_cls = 2e-5;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double leaky_slope = 0.2;
  double noise_variance = 1.0;
  std::uint64_t seed = 0;
  gan::NetworkSpec network;

  void validate() const;  // ConfigError on out-of-range values
  gan::NetworkSpec network_spec() const;
};

// Minibatch updates per epoch for a node holding `total_mass`.
std::size_t updates_per_epoch(double total_mass, std::size_t batch_real);

struct LossRecord {
  std::size_t step = 0;
  double loss_d = 0;
  double loss_g = 0;
  double loss_c = 0;
};

/// Aborts training on non-finite losses or a discriminator that has won
/// outright for too long.
class DivergenceGuard {
 public:
  static constexpr double kCollapseThreshold = 1e-6;
  static constexpr int kCollapseSteps = 50;

  void observe(const LossRecord& r);

 private:
  int low_d_run_ = 0;
};

struct SplitOutcome {
  MembershipVector left;
  MembershipVector right;
  std::vector<LossRecord> losses;
  std::vector<std::uint8_t> checkpoint;
};

// s_l = C(x)[0] · s_k, s_m = s_k - s_l over every example.
SplitOutcome raw_split(const Tensor& x, const MembershipVector& s_k, const SplitConfig& cfg);

/// One GAN of a refinement group. `label` is the classifier column this
/// group owns (0 for l, 1 for m).
struct RefinementGroup {
  RefinementGroup(const gan::NetworkSpec& spec, const SplitConfig& cfg, int label, Rng& rng);

  gan::GeneratorNet gen;
  gan::SharedTrunkBundle bundle;
  Adam opt_gen;
  Adam opt_disc;
  Adam opt_cls;
  int label;
};

// Gradient norms taken just before each optimiser step, for auditing
// which parameters a group update actually touches.
struct GroupStepReport {
  LossRecord losses;
  double grad_norm_gen = 0;
  double grad_norm_trunk = 0;
  double grad_norm_disc_head = 0;
  double grad_norm_cls_head = 0;
  double grad_norm_external = 0;
};

// bce(D_int(x_int_disc), 1) + λ [CE(C_int(x_int), l) + CE(C_ext(x_int), l)
// + CE(C_int(x_ext), 1 - l)], with both bundles read frozen.
Tensor refinement_generator_loss(Tape& tape, const gan::SharedTrunkBundle& internal, const gan::SharedTrunkBundle& external,
                                 const Tensor& x_int, const Tensor& x_int_disc, const Tensor& x_ext, int label,
                                 double lambda);

/// One D, one C and one G update for a refinement group. `x_int` must have
/// been produced by `internal.gen` on `gen_tape`; `x_ext` is the other
/// group's batch, used as plain data. The external classifier is read only.
GroupStepReport train_refinement_group(RefinementGroup& internal, const Tensor& x_real, Tape& gen_tape,
                                       const Tensor& x_int, const gan::SharedTrunkBundle& external,
                                       const Tensor& x_ext, const SplitConfig& cfg,
                                       const gan::NoiseSchedule& noise, Rng& rng);

// s_l' = (c_l + c_m)/2 · (s_l + s_m) and s_m' = (s_l + s_m) - s_l', where c_l
// and c_m are the two classifiers' probabilities for the l column.
std::pair<MembershipVector, MembershipVector> reestimate(std::span<const double> c_l, std::span<const double> c_m,
                                                         const MembershipVector& s_l, const MembershipVector& s_m);

// Averaged classifier estimate of the l column over both groups, times the
// parent mass s_l + s_m.
SplitOutcome refinement(const Tensor& x, const MembershipVector& s_l, const MembershipVector& s_m,
                        const SplitConfig& cfg);

// C(x)[·, column] for every row of x, evaluated in chunks.
std::vector<double> classify_all(const gan::SharedTrunkBundle& bundle, const Tensor& x, int column);

}  // namespace hcmgan::split
