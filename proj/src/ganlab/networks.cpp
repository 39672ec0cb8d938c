#include "hcmgan/networks.hpp"

#include <cmath>

#include "hcmgan/errors.hpp"
#include "hcmgan/ops.hpp"

namespace hcmgan::gan {
namespace {

Tensor view(const Tensor& p, ParamMode mode) { return mode == ParamMode::Train ? p : p.detached(); }

Tensor uniform_init(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = u(rng);
  return Tensor(std::move(shape), std::move(v), true);
}

LayerNorm make_layer_norm(std::size_t width) {
  return LayerNorm{Tensor(Shape{width}, std::vector<double>(width, 1.0), true), Tensor::zeros({width}, true)};
}

Conv make_conv(std::size_t in_c, std::size_t out_c, std::size_t k, std::size_t stride, std::size_t pad, Rng& rng) {
  const std::size_t fan_in = in_c * k * k;
  return Conv{uniform_init({out_c, in_c, k, k}, fan_in, rng), uniform_init({out_c}, fan_in, rng), stride, pad};
}

ConvTranspose make_conv_transpose(std::size_t in_c, std::size_t out_c, std::size_t k, std::size_t stride,
                                  std::size_t pad, Rng& rng) {
  const std::size_t fan_in = out_c * k * k;
  return ConvTranspose{uniform_init({in_c, out_c, k, k}, fan_in, rng), uniform_init({out_c}, fan_in, rng), stride,
                       pad};
}

std::size_t conv_out(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

std::string profile_name(Profile p) { return p == Profile::Mlp ? "mlp" : "conv"; }

Profile parse_profile(const std::string& name) {
  if (name == "mlp") return Profile::Mlp;
  if (name == "conv") return Profile::Conv;
  throw ConfigError("unknown network profile '" + name + "' (expected mlp or conv)");
}

void NetworkSpec::validate() const {
  if (data_dim == 0) throw ConfigError("data_dim must be positive");
  if (latent_dim == 0) throw ConfigError("latent_dim must be positive");
  if (profile == Profile::Mlp) {
    if (trunk_hidden.empty()) throw ConfigError("mlp trunk needs at least one hidden layer");
  } else {
    if (image_h * image_w != data_dim) throw ConfigError("conv profile: image_h*image_w must equal data_dim");
    if (image_h % 4 != 0 || image_w % 4 != 0) throw ConfigError("conv profile: image sides must be divisible by 4");
    if (conv_trunk_channels.empty()) throw ConfigError("conv trunk needs at least one layer");
  }
}

Tensor Sequential::forward(Tape& tape, const Tensor& input, ParamMode mode) const {
  Tensor x = input;
  for (const auto& layer : layers_) {
    x = std::visit(
        Overloaded{
            [&](const Dense& d) { return ops::affine(tape, x, view(d.w, mode), view(d.b, mode)); },
            [&](const LayerNorm& n) {
              if (x.rank() == 2) return ops::layer_norm(tape, x, view(n.gain, mode), view(n.bias, mode));
              const Shape shape = x.shape();
              auto flat = ops::reshape(tape, x, {shape[0], x.size() / shape[0]});
              auto y = ops::layer_norm(tape, flat, view(n.gain, mode), view(n.bias, mode));
              return ops::reshape(tape, y, shape);
            },
            [&](const Conv& c) {
              return ops::add_channel_bias(tape, ops::conv2d(tape, x, view(c.k, mode), c.stride, c.pad),
                                           view(c.b, mode));
            },
            [&](const ConvTranspose& c) {
              return ops::add_channel_bias(tape, ops::conv_transpose2d(tape, x, view(c.k, mode), c.stride, c.pad),
                                           view(c.b, mode));
            },
            [&](const Activation& a) {
              switch (a.kind) {
                case Activation::Kind::Relu: return ops::relu(tape, x);
                case Activation::Kind::LeakyRelu: return ops::leaky_relu(tape, x, a.slope);
                case Activation::Kind::Tanh: return ops::tanh(tape, x);
                case Activation::Kind::Sigmoid: return ops::sigmoid(tape, x);
                case Activation::Kind::Softmax: return ops::softmax(tape, x, x.rank() - 1);
              }
              throw ContractError("unknown activation");
            },
            [&](const Reshape& r) {
              Shape s{x.dim(0)};
              s.insert(s.end(), r.sample_shape.begin(), r.sample_shape.end());
              return ops::reshape(tape, x, std::move(s));
            },
        },
        layer);
  }
  return x;
}

std::vector<Tensor> Sequential::parameters() const {
  std::vector<Tensor> out;
  for (const auto& layer : layers_) {
    std::visit(Overloaded{
                   [&](const Dense& d) { out.insert(out.end(), {d.w, d.b}); },
                   [&](const LayerNorm& n) { out.insert(out.end(), {n.gain, n.bias}); },
                   [&](const Conv& c) { out.insert(out.end(), {c.k, c.b}); },
                   [&](const ConvTranspose& c) { out.insert(out.end(), {c.k, c.b}); },
                   [](const Activation&) {},
                   [](const Reshape&) {},
               },
               layer);
  }
  return out;
}

Dense make_dense(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  return Dense{uniform_init({fan_in, fan_out}, fan_in, rng), uniform_init({fan_out}, fan_in, rng)};
}

GeneratorNet::GeneratorNet(const NetworkSpec& spec, Rng& rng) : spec_(spec) {
  spec_.validate();
  using K = Activation::Kind;
  if (spec_.profile == Profile::Mlp) {
    std::size_t width = spec_.latent_dim;
    for (auto h : spec_.gen_hidden) {
      net_.add(make_dense(width, h, rng));
      net_.add(Activation{K::Relu});
      width = h;
    }
    net_.add(make_dense(width, spec_.data_dim, rng));
    net_.add(Activation{K::Tanh});
  } else {
    const std::size_t h4 = spec_.image_h / 4, w4 = spec_.image_w / 4;
    const std::size_t c0 = spec_.conv_gen_channels, c1 = spec_.conv_gen_mid_channels;
    net_.add(make_dense(spec_.latent_dim, h4 * w4 * c0, rng));
    net_.add(Activation{K::Relu});
    net_.add(Reshape{{c0, h4, w4}});
    net_.add(make_conv_transpose(c0, c1, 4, 2, 1, rng));
    net_.add(Activation{K::Relu});
    net_.add(make_conv_transpose(c1, 1, 4, 2, 1, rng));
    net_.add(Activation{K::Tanh});
    net_.add(Reshape{{spec_.data_dim}});
  }
}

Tensor GeneratorNet::forward(Tape& tape, const Tensor& z, ParamMode mode) const {
  if (z.rank() != 2 || z.dim(1) != spec_.latent_dim) {
    throw ShapeError("generator expects latent [B×" + std::to_string(spec_.latent_dim) + "], got " +
                     shape_str(z.shape()));
  }
  return net_.forward(tape, z, mode);
}

Tensor sample_latent(std::size_t batch, std::size_t latent_dim, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(batch * latent_dim);
  for (auto& x : v) x = u(rng);
  return Tensor({batch, latent_dim}, std::move(v));
}

SharedTrunkBundle::SharedTrunkBundle(const NetworkSpec& spec, Rng& rng) : spec_(spec) {
  spec_.validate();
  const Activation leaky{Activation::Kind::LeakyRelu, spec_.leaky_slope};
  if (spec_.profile == Profile::Mlp) {
    std::size_t width = spec_.data_dim;
    for (auto h : spec_.trunk_hidden) {
      trunk_.add(make_dense(width, h, rng));
      trunk_.add(make_layer_norm(h));
      trunk_.add(leaky);
      width = h;
    }
    feature_dim_ = width;
  } else {
    trunk_.add(Reshape{{1, spec_.image_h, spec_.image_w}});
    std::size_t ch = 1, h = spec_.image_h, w = spec_.image_w;
    for (auto out_c : spec_.conv_trunk_channels) {
      trunk_.add(make_conv(ch, out_c, 5, 2, 2, rng));
      h = conv_out(h, 5, 2, 2);
      w = conv_out(w, 5, 2, 2);
      trunk_.add(make_layer_norm(out_c * h * w));
      trunk_.add(leaky);
      ch = out_c;
    }
    feature_dim_ = ch * h * w;
    trunk_.add(Reshape{{feature_dim_}});
  }
  disc_head_ = make_dense(feature_dim_, 1, rng);
  // Zero-initialised so an untrained classifier is exactly uniform; the
  // weight gradient f^T (p - y) is still nonzero, so it trains normally.
  cls_head_ = Dense{Tensor::zeros({feature_dim_, 2}, true), Tensor::zeros({2}, true)};
}

Tensor SharedTrunkBundle::features(Tape& tape, const Tensor& x, ParamMode mode) const {
  if (x.rank() != 2 || x.dim(1) != spec_.data_dim) {
    throw ShapeError("bundle expects input [B×" + std::to_string(spec_.data_dim) + "], got " +
                     shape_str(x.shape()));
  }
  return trunk_.forward(tape, x, mode);
}

Tensor SharedTrunkBundle::disc_forward(Tape& tape, const Tensor& x, ParamMode mode) const {
  auto f = features(tape, x, mode);
  return ops::sigmoid(tape, ops::affine(tape, f, view(disc_head_.w, mode), view(disc_head_.b, mode)));
}

Tensor SharedTrunkBundle::cls_forward(Tape& tape, const Tensor& x, ParamMode mode) const {
  auto f = features(tape, x, ParamMode::Frozen);
  return ops::softmax(tape, ops::affine(tape, f, view(cls_head_.w, mode), view(cls_head_.b, mode)), 1);
}

std::vector<Tensor> SharedTrunkBundle::discriminator_parameters() const {
  auto p = trunk_parameters();
  p.push_back(disc_head_.w);
  p.push_back(disc_head_.b);
  return p;
}

std::vector<Tensor> SharedTrunkBundle::parameters() const {
  auto p = discriminator_parameters();
  p.push_back(cls_head_.w);
  p.push_back(cls_head_.b);
  return p;
}

}  // namespace hcmgan::gan
