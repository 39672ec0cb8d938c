#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hcmgan/tensor.hpp"

// Differentiable operations. Each op computes its value eagerly and, when
// any input requires a gradient, records a backward rule on the tape.
namespace hcmgan::ops {

inline constexpr double kLogClamp = 1e-7;
inline constexpr double kLayerNormEps = 1e-5;

// a[M×K] · b[K×P]
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
// x[B×Fin] · w[Fin×Fout] + b[Fout] broadcast over rows
Tensor affine(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double factor);
// x + c where c carries no gradient (used for instance noise).
Tensor add_constant(Tape& tape, const Tensor& x, std::span<const double> c);
Tensor sum(Tape& tape, const Tensor& a);
Tensor mean(Tape& tape, const Tensor& a);

Tensor leaky_relu(Tape& tape, const Tensor& x, double slope);
Tensor relu(Tape& tape, const Tensor& x);
Tensor tanh(Tape& tape, const Tensor& x);
Tensor sigmoid(Tape& tape, const Tensor& x);
// Softmax along `axis`, stabilised by subtracting the slice maximum.
Tensor softmax(Tape& tape, const Tensor& x, std::size_t axis);

// Per-row normalisation of x[B×F] followed by gain and bias.
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = kLayerNormEps);

// Mean binary cross-entropy. p is clamped to [1e-7, 1-1e-7] before the log;
// the clamp passes no gradient where it is active.
Tensor bce_loss(Tape& tape, const Tensor& p, std::span<const double> targets);
Tensor bce_loss(Tape& tape, const Tensor& p, double target);

// Mean of -log probs[i, label_i] over rows of probs[B×K]. Rows must sum to
// 1 within 1e-6.
Tensor categorical_ce(Tape& tape, const Tensor& probs, std::span<const int> labels);

Tensor concat_rows(Tape& tape, std::span<const Tensor> parts);
Tensor reshape(Tape& tape, const Tensor& x, Shape shape);

// x[B×C×H×W] cross-correlated with k[O×C×kh×kw].
Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& k, std::size_t stride,
              std::size_t pad = 0);
// Adjoint of conv2d with respect to its input: x[B×O×H×W], k[O×C×kh×kw].
// Output spatial size is (H-1)·stride - 2·pad + kh + output_pad.
Tensor conv_transpose2d(Tape& tape, const Tensor& x, const Tensor& k, std::size_t stride,
                        std::size_t pad = 0, std::size_t output_pad = 0);
// x[B×C×H×W] + b[C]
Tensor add_channel_bias(Tape& tape, const Tensor& x, const Tensor& b);

// Rows of a rank-2 tensor, no gradient.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);

}  // namespace hcmgan::ops
