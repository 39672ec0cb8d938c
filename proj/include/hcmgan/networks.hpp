#pragma once

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "hcmgan/rng.hpp"
#include "hcmgan/tensor.hpp"

namespace hcmgan::gan {

enum class Profile { Mlp, Conv };

std::string profile_name(Profile p);
Profile parse_profile(const std::string& name);

// Train: parameters receive gradients. Frozen: parameters are read through
// detached views, so gradients still reach the inputs but never the weights.
enum class ParamMode { Train, Frozen };

/// Layer sizes for both network profiles.
///
/// The mlp profile is the default desk-scale stack:
///   generator  latent -> gen_hidden... -> data_dim (tanh)
///   trunk      data_dim -> trunk_hidden... (each LN + leaky ReLU)
/// The conv profile follows the image architecture (5x5/stride 2 convolutions
/// with LN in the trunk, 4x4/stride 2 transposed convolutions in the
/// generator) and needs image_h and image_w divisible by 4.
struct NetworkSpec {
  Profile profile = Profile::Mlp;
  std::size_t data_dim = 2;
  std::size_t image_h = 0;
  std::size_t image_w = 0;
  std::size_t latent_dim = 100;
  double leaky_slope = 0.2;
  std::vector<std::size_t> gen_hidden{256, 256};
  std::vector<std::size_t> trunk_hidden{256, 128};
  std::size_t conv_gen_channels = 128;
  std::size_t conv_gen_mid_channels = 64;
  std::vector<std::size_t> conv_trunk_channels{128, 256, 512};

  void validate() const;
};

struct Dense {
  Tensor w;
  Tensor b;
};
struct LayerNorm {
  Tensor gain;
  Tensor bias;
};
struct Conv {
  Tensor k;
  Tensor b;
  std::size_t stride;
  std::size_t pad;
};
struct ConvTranspose {
  Tensor k;
  Tensor b;
  std::size_t stride;
  std::size_t pad;
};
struct Activation {
  enum class Kind { Relu, LeakyRelu, Tanh, Sigmoid, Softmax } kind;
  double slope = 0.0;
};
// Per-sample shape; the batch dimension is kept.
struct Reshape {
  Shape sample_shape;
};

using Layer = std::variant<Dense, LayerNorm, Conv, ConvTranspose, Activation, Reshape>;

class Sequential {
 public:
  void add(Layer layer) { layers_.push_back(std::move(layer)); }
  Tensor forward(Tape& tape, const Tensor& x, ParamMode mode) const;
  std::vector<Tensor> parameters() const;
  std::size_t depth() const { return layers_.size(); }

 private:
  std::vector<Layer> layers_;
};

Dense make_dense(std::size_t fan_in, std::size_t fan_out, Rng& rng);

/// Generator: z ~ Uniform[0,1]^latent_dim to a sample in (-1, 1)^data_dim.
class GeneratorNet {
 public:
  GeneratorNet(const NetworkSpec& spec, Rng& rng);

  Tensor forward(Tape& tape, const Tensor& z, ParamMode mode = ParamMode::Train) const;
  std::vector<Tensor> parameters() const { return net_.parameters(); }
  std::size_t latent_dim() const { return spec_.latent_dim; }
  const NetworkSpec& spec() const { return spec_; }

 private:
  NetworkSpec spec_;
  Sequential net_;
};

Tensor sample_latent(std::size_t batch, std::size_t latent_dim, Rng& rng);

/// Discriminator and classifier over one shared feature trunk.
///
/// Head index convention for the classifier: column 0 is the alpha / l
/// generator, column 1 is the beta / m generator. The classifier reads the
/// trunk through detached views, so only discriminator losses write trunk
/// gradients.
class SharedTrunkBundle {
 public:
  SharedTrunkBundle(const NetworkSpec& spec, Rng& rng);

  // D(x) in (0,1), shape [B×1].
  Tensor disc_forward(Tape& tape, const Tensor& x, ParamMode mode = ParamMode::Train) const;
  // C(x), shape [B×2], rows sum to one.
  Tensor cls_forward(Tape& tape, const Tensor& x, ParamMode mode = ParamMode::Train) const;

  std::vector<Tensor> trunk_parameters() const { return trunk_.parameters(); }
  std::vector<Tensor> disc_head_parameters() const { return {disc_head_.w, disc_head_.b}; }
  std::vector<Tensor> cls_head_parameters() const { return {cls_head_.w, cls_head_.b}; }
  // What the discriminator optimiser updates: trunk + discriminator head.
  std::vector<Tensor> discriminator_parameters() const;
  // What the classifier optimiser updates: the classifier head only.
  std::vector<Tensor> classifier_parameters() const { return cls_head_parameters(); }
  std::vector<Tensor> parameters() const;

  const NetworkSpec& spec() const { return spec_; }

 private:
  Tensor features(Tape& tape, const Tensor& x, ParamMode mode) const;

  NetworkSpec spec_;
  Sequential trunk_;
  std::size_t feature_dim_ = 0;
  Dense disc_head_;
  Dense cls_head_;
};

}  // namespace hcmgan::gan
