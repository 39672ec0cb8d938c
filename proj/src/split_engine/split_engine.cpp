#include "hcmgan/split_engine.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <tuple>

#include "hcmgan/checkpoint.hpp"
#include "hcmgan/errors.hpp"
#include "hcmgan/ops.hpp"

namespace hcmgan::split {

namespace {

constexpr std::size_t kInferenceChunk = 512;

double grad_norm(const std::vector<Tensor>& params) {
  double s = 0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) s += g * g;
  }
  return std::sqrt(s);
}

Tensor real_batch(const Tensor& x, const SampleDistribution& dist, std::size_t n, Rng& rng) {
  const auto rows = sample_batch(dist, n, rng);
  return ops::gather_rows(x, rows);
}

gan::NetworkSpec spec_for(const SplitConfig& cfg, const Tensor& x) {
  if (x.rank() != 2 || x.dim(0) == 0) throw ShapeError("split: data must be a non-empty [N x D] matrix");
  auto spec = cfg.network_spec();
  if (spec.profile == gan::Profile::Mlp) spec.data_dim = x.dim(1);
  if (spec.data_dim != x.dim(1))
    throw ShapeError("split: data width " + std::to_string(x.dim(1)) + " does not match network input " +
                     std::to_string(spec.data_dim));
  spec.validate();
  return spec;
}

void check_sizes(const Tensor& x, const MembershipVector& s) {
  if (s.size() != x.dim(0))
    throw ShapeError("split: membership has " + std::to_string(s.size()) + " entries for " +
                     std::to_string(x.dim(0)) + " examples");
}

AdamHyper hyper(double lr, const SplitConfig& cfg) { return AdamHyper{lr, cfg.beta1, cfg.beta2, 1e-8}; }

}  // namespace

double MembershipVector::total_mass() const {
  double s = 0;
  for (double m : masses) s += m;
  return s;
}

void MembershipVector::validate() const {
  for (std::size_t i = 0; i < masses.size(); ++i) {
    if (!(masses[i] >= 0.0 && masses[i] <= 1.0)) {
      std::ostringstream os;
      os << "membership[" << i << "] = " << masses[i] << " outside [0, 1]";
      throw ContractError(os.str());
    }
  }
}

SampleDistribution::SampleDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
  cumulative_.resize(probs_.size());
  double acc = 0;
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    acc += probs_[i];
    cumulative_[i] = acc;
  }
}

std::size_t SampleDistribution::draw(Rng& rng) const {
  if (cumulative_.empty()) throw ContractError("draw from an empty distribution");
  std::uniform_real_distribution<double> u(0.0, cumulative_.back());
  // upper_bound skips zero-width bins, so zero-mass entries are never returned.
  for (;;) {
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u(rng));
    if (it != cumulative_.end()) return static_cast<std::size_t>(it - cumulative_.begin());
  }
}

SampleDistribution normalize_membership(const MembershipVector& s) {
  const double total = s.total_mass();
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw DegenerateNodeError("node " + std::to_string(s.node_id) + " has no probability mass");
  }
  std::vector<double> p(s.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = s.masses[i] / total;
  return SampleDistribution(std::move(p));
}

std::vector<std::size_t> sample_batch(const SampleDistribution& d, std::size_t n, Rng& rng) {
  if (n == 0) throw ContractError("sample_batch: n must be at least 1");
  std::vector<std::size_t> out(n);
  for (auto& i : out) i = d.draw(rng);
  return out;
}

void SplitConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("split config: " + what); };
  if (!(lambda >= 0.0)) fail("lambda must be >= 0");
  if (refinements < 0) fail("refinements must be >= 0");
  if (epochs < 0) fail("epochs must be >= 0");
  if (batch_real == 0 || batch_per_generator == 0) fail("batch sizes must be >= 1");
  if (!(lr_gen > 0.0 && lr_disc > 0.0 && lr_cls > 0.0)) fail("learning rates must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) fail("adam betas must be in [0, 1)");
  if (!(noise_variance >= 0.0)) fail("noise variance must be >= 0");
  if (!(leaky_slope >= 0.0)) fail("leaky slope must be >= 0");
}

gan::NetworkSpec SplitConfig::network_spec() const {
  auto spec = network;
  spec.leaky_slope = leaky_slope;
  return spec;
}

std::size_t updates_per_epoch(double total_mass, std::size_t batch_real) {
  const double n = std::round(total_mass / static_cast<double>(batch_real));
  return n < 1.0 ? 1 : static_cast<std::size_t>(n);
}

void DivergenceGuard::observe(const LossRecord& r) {
  if (!std::isfinite(r.loss_d) || !std::isfinite(r.loss_g) || !std::isfinite(r.loss_c)) {
    std::ostringstream os;
    os << "non-finite loss at step " << r.step << " (d=" << r.loss_d << ", g=" << r.loss_g << ", c=" << r.loss_c
       << ")";
    throw DivergenceError(os.str());
  }
  low_d_run_ = r.loss_d < kCollapseThreshold ? low_d_run_ + 1 : 0;
  if (low_d_run_ >= kCollapseSteps) {
    throw DivergenceError("discriminator loss below 1e-6 for " + std::to_string(kCollapseSteps) +
                          " consecutive steps (last step " + std::to_string(r.step) + ")");
  }
}

std::vector<double> classify_all(const gan::SharedTrunkBundle& bundle, const Tensor& x, int column) {
  const std::size_t n = x.dim(0);
  std::vector<double> out(n);
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < n; start += kInferenceChunk) {
    const std::size_t end = std::min(n, start + kInferenceChunk);
    rows.resize(end - start);
    for (std::size_t i = start; i < end; ++i) rows[i - start] = i;
    Tape tape;
    const auto p = bundle.cls_forward(tape, ops::gather_rows(x, rows), gan::ParamMode::Frozen);
    for (std::size_t i = start; i < end; ++i) out[i] = p.at(i - start, static_cast<std::size_t>(column));
  }
  return out;
}

SplitOutcome raw_split(const Tensor& x, const MembershipVector& s_k, const SplitConfig& cfg) {
  cfg.validate();
  check_sizes(x, s_k);
  s_k.validate();
  const auto dist = normalize_membership(s_k);
  const auto spec = spec_for(cfg, x);

  Rng rng(cfg.seed);
  gan::GeneratorNet g_alpha(spec, rng);
  gan::GeneratorNet g_beta(spec, rng);
  gan::SharedTrunkBundle bundle(spec, rng);

  auto gen_params = g_alpha.parameters();
  for (const auto& p : g_beta.parameters()) gen_params.push_back(p);
  Adam opt_gen(gen_params, hyper(cfg.lr_gen, cfg));
  Adam opt_disc(bundle.discriminator_parameters(), hyper(cfg.lr_disc, cfg));
  Adam opt_cls(bundle.classifier_parameters(), hyper(cfg.lr_cls, cfg));

  SplitOutcome out;
  DivergenceGuard guard;
  gan::NoiseSchedule noise{cfg.noise_variance, std::max(cfg.epochs, 1), 0};
  const std::size_t per_epoch = updates_per_epoch(s_k.total_mass(), cfg.batch_real);
  const std::size_t nb = cfg.batch_per_generator;
  std::size_t step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    noise.current_epoch = epoch;
    for (std::size_t it = 0; it < per_epoch; ++it, ++step) {
      const auto x_real = real_batch(x, dist, cfg.batch_real, rng);
      Tape gen_tape;
      const auto xa = g_alpha.forward(gen_tape, gan::sample_latent(nb, spec.latent_dim, rng));
      const auto xb = g_beta.forward(gen_tape, gan::sample_latent(nb, spec.latent_dim, rng));

      LossRecord rec;
      rec.step = step;
      {
        Tape tape;
        const std::vector<Tensor> fakes{gan::apply_instance_noise(tape, xa.detached(), noise, rng),
                                        gan::apply_instance_noise(tape, xb.detached(), noise, rng)};
        const auto loss = gan::loss_discriminator(tape, bundle, gan::apply_instance_noise(tape, x_real, noise, rng),
                                                  fakes);
        rec.loss_d = loss.item();
        tape.backward(loss);
        opt_disc.step();
      }
      {
        Tape tape;
        const std::vector<gan::FakeBatch> fakes{{xa.detached(), 0, {}}, {xb.detached(), 1, {}}};
        const auto loss = gan::loss_classifier(tape, bundle, fakes);
        rec.loss_c = loss.item();
        tape.backward(loss);
        opt_cls.step();
      }
      {
        const std::vector<gan::FakeBatch> fakes{{xa, 0, gan::apply_instance_noise(gen_tape, xa, noise, rng)},
                                                {xb, 1, gan::apply_instance_noise(gen_tape, xb, noise, rng)}};
        const auto loss = gan::loss_generator(gen_tape, bundle, fakes, cfg.lambda);
        rec.loss_g = loss.item();
        gen_tape.backward(loss);
        opt_gen.step();
      }
      guard.observe(rec);
      out.losses.push_back(rec);
    }
  }

  const auto p_alpha = classify_all(bundle, x, 0);
  out.left.node_id = s_k.node_id;
  out.right.node_id = s_k.node_id;
  out.left.masses.resize(s_k.size());
  out.right.masses.resize(s_k.size());
  for (std::size_t i = 0; i < s_k.size(); ++i) {
    out.left.masses[i] = p_alpha[i] * s_k.masses[i];
    out.right.masses[i] = s_k.masses[i] - out.left.masses[i];
  }

  auto all = gen_params;
  for (const auto& p : bundle.parameters()) all.push_back(p);
  out.checkpoint = gan::save_parameters(spec.profile, all);
  return out;
}

RefinementGroup::RefinementGroup(const gan::NetworkSpec& spec, const SplitConfig& cfg, int label_, Rng& rng)
    : gen(spec, rng),
      bundle(spec, rng),
      opt_gen(gen.parameters(), hyper(cfg.lr_gen, cfg)),
      opt_disc(bundle.discriminator_parameters(), hyper(cfg.lr_disc, cfg)),
      opt_cls(bundle.classifier_parameters(), hyper(cfg.lr_cls, cfg)),
      label(label_) {
  if (label != 0 && label != 1) throw ContractError("refinement group label must be 0 or 1");
}

Tensor refinement_generator_loss(Tape& tape, const gan::SharedTrunkBundle& internal, const gan::SharedTrunkBundle& external,
                                 const Tensor& x_int, const Tensor& x_int_disc, const Tensor& x_ext, int label,
                                 double lambda) {
  using gan::ParamMode;
  if (!(lambda >= 0.0)) throw ContractError("lambda must be >= 0");
  auto loss = gan::generator_adversarial_term(tape, internal, x_int_disc);
  if (lambda == 0.0) return loss;
  // The last term is constant in this generator; it completes the objective
  // but contributes no gradient.
  auto cls = gan::classification_term(tape, internal, x_int, label, ParamMode::Frozen);
  cls = ops::add(tape, cls, gan::classification_term(tape, external, x_int, label, ParamMode::Frozen));
  cls = ops::add(tape, cls, gan::classification_term(tape, internal, x_ext.detached(), 1 - label, ParamMode::Frozen));
  return ops::add(tape, loss, ops::scale(tape, cls, lambda));
}

GroupStepReport train_refinement_group(RefinementGroup& internal, const Tensor& x_real, Tape& gen_tape,
                                       const Tensor& x_int, const gan::SharedTrunkBundle& external,
                                       const Tensor& x_ext, const SplitConfig& cfg,
                                       const gan::NoiseSchedule& noise, Rng& rng) {
  if (&internal.bundle == &external) throw ContractError("refinement: internal and external bundles coincide");
  const int l_int = internal.label;
  const int l_ext = 1 - l_int;
  auto& bundle = internal.bundle;
  GroupStepReport rep;

  {
    Tape tape;
    const std::vector<Tensor> fakes{gan::apply_instance_noise(tape, x_int.detached(), noise, rng)};
    const auto loss =
        gan::loss_discriminator(tape, bundle, gan::apply_instance_noise(tape, x_real, noise, rng), fakes);
    rep.losses.loss_d = loss.item();
    tape.backward(loss);
    rep.grad_norm_trunk = grad_norm(bundle.trunk_parameters());
    rep.grad_norm_disc_head = grad_norm(bundle.disc_head_parameters());
    internal.opt_disc.step();
  }
  {
    Tape tape;
    const std::vector<gan::FakeBatch> fakes{{x_int.detached(), l_int, {}}, {x_ext.detached(), l_ext, {}}};
    const auto loss = gan::loss_classifier(tape, bundle, fakes);
    rep.losses.loss_c = loss.item();
    tape.backward(loss);
    rep.grad_norm_cls_head = grad_norm(bundle.cls_head_parameters());
    internal.opt_cls.step();
  }
  {
    auto& tape = gen_tape;
    const auto loss = refinement_generator_loss(tape, bundle, external, x_int,
                                                gan::apply_instance_noise(tape, x_int, noise, rng), x_ext, l_int,
                                                cfg.lambda);
    rep.losses.loss_g = loss.item();
    tape.backward(loss);
    rep.grad_norm_gen = grad_norm(internal.gen.parameters());
    internal.opt_gen.step();
  }
  rep.grad_norm_external = grad_norm(external.parameters());
  return rep;
}

std::pair<MembershipVector, MembershipVector> reestimate(std::span<const double> c_l, std::span<const double> c_m,
                                                         const MembershipVector& s_l, const MembershipVector& s_m) {
  const std::size_t n = s_l.size();
  if (s_m.size() != n || c_l.size() != n || c_m.size() != n) throw ShapeError("reestimate: length mismatch");
  MembershipVector l{std::vector<double>(n), s_l.node_id};
  MembershipVector m{std::vector<double>(n), s_m.node_id};
  for (std::size_t i = 0; i < n; ++i) {
    const double parent = s_l.masses[i] + s_m.masses[i];
    l.masses[i] = 0.5 * (c_l[i] + c_m[i]) * parent;
    m.masses[i] = parent - l.masses[i];
  }
  return {std::move(l), std::move(m)};
}

SplitOutcome refinement(const Tensor& x, const MembershipVector& s_l, const MembershipVector& s_m,
                        const SplitConfig& cfg) {
  cfg.validate();
  check_sizes(x, s_l);
  check_sizes(x, s_m);
  for (std::size_t i = 0; i < s_l.size(); ++i) {
    if (!(s_l.masses[i] >= 0.0) || !(s_m.masses[i] >= 0.0))
      throw ContractError("refinement: membership masses must be nonnegative");
  }
  if (!(s_l.total_mass() > 0.0) || !(s_m.total_mass() > 0.0))
    throw DegenerateNodeError("refinement of node " + std::to_string(s_l.node_id) +
                              ": one side of the split holds no mass");
  const auto dist_l = normalize_membership(s_l);
  const auto dist_m = normalize_membership(s_m);
  const auto spec = spec_for(cfg, x);

  Rng rng(cfg.seed);
  RefinementGroup group_l(spec, cfg, 0, rng);
  RefinementGroup group_m(spec, cfg, 1, rng);

  SplitOutcome out;
  DivergenceGuard guard;
  gan::NoiseSchedule noise{cfg.noise_variance, std::max(cfg.epochs, 1), 0};
  // Both groups train once per iteration, so the epoch length follows the
  // parent node's mass.
  const std::size_t per_epoch = updates_per_epoch(s_l.total_mass() + s_m.total_mass(), cfg.batch_real);
  const std::size_t nb = cfg.batch_per_generator;
  std::size_t step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    noise.current_epoch = epoch;
    for (std::size_t it = 0; it < per_epoch; ++it, ++step) {
      Tape tape_l;
      Tape tape_m;
      const auto xl = group_l.gen.forward(tape_l, gan::sample_latent(nb, spec.latent_dim, rng));
      const auto xm = group_m.gen.forward(tape_m, gan::sample_latent(nb, spec.latent_dim, rng));

      const auto real_l = real_batch(x, dist_l, cfg.batch_real, rng);
      const auto rl = train_refinement_group(group_l, real_l, tape_l, xl, group_m.bundle, xm, cfg, noise, rng);
      const auto real_m = real_batch(x, dist_m, cfg.batch_real, rng);
      const auto rm = train_refinement_group(group_m, real_m, tape_m, xm, group_l.bundle, xl, cfg, noise, rng);

      LossRecord rec;
      rec.step = step;
      rec.loss_d = 0.5 * (rl.losses.loss_d + rm.losses.loss_d);
      rec.loss_g = 0.5 * (rl.losses.loss_g + rm.losses.loss_g);
      rec.loss_c = 0.5 * (rl.losses.loss_c + rm.losses.loss_c);
      guard.observe(rec);
      out.losses.push_back(rec);
    }
  }

  const auto cl = classify_all(group_l.bundle, x, 0);
  const auto cm = classify_all(group_m.bundle, x, 0);
  std::tie(out.left, out.right) = reestimate(cl, cm, s_l, s_m);

  auto all = group_l.gen.parameters();
  for (const auto& p : group_l.bundle.parameters()) all.push_back(p);
  for (const auto& p : group_m.gen.parameters()) all.push_back(p);
  for (const auto& p : group_m.bundle.parameters()) all.push_back(p);
  out.checkpoint = gan::save_parameters(spec.profile, all);
  return out;
}

}  // namespace hcmgan::split
