#pragma once

#include <vector>

#include "diffcore/tape.hpp"

// Differentiable primitives. Every function records itself on the tape when
// any input requires a gradient; otherwise it only computes the value.
namespace whdspot::diff {

enum class BinaryOp { add, sub, mul, div };
enum class Activation { relu, sigmoid, softplus, log1p };
enum class Reduction { sum, mean, min };
enum class Mode { train, eval };

// Shapes must match, or `b` must hold a single element (broadcast).
Variable elementwise(Tape& tape, BinaryOp op, const Variable& a, const Variable& b);
Variable elementwise(Tape& tape, BinaryOp op, const Variable& a, double b);

inline Variable add(Tape& t, const Variable& a, const Variable& b) { return elementwise(t, BinaryOp::add, a, b); }
inline Variable sub(Tape& t, const Variable& a, const Variable& b) { return elementwise(t, BinaryOp::sub, a, b); }
inline Variable mul(Tape& t, const Variable& a, const Variable& b) { return elementwise(t, BinaryOp::mul, a, b); }
inline Variable div(Tape& t, const Variable& a, const Variable& b) { return elementwise(t, BinaryOp::div, a, b); }
inline Variable add(Tape& t, const Variable& a, double b) { return elementwise(t, BinaryOp::add, a, b); }
inline Variable mul(Tape& t, const Variable& a, double b) { return elementwise(t, BinaryOp::mul, a, b); }

// x[N,Fin] * weight[Fin,Fout] + bias[Fout]
Variable linear(Tape& tape, const Variable& x, const Variable& weight, const Variable& bias);

// Cross-correlation (the kernel is not flipped) with zero padding.
// x[N,C,H,W], kernel[K,C,kh,kw] -> [N,K,(H+2p-kh)/s+1,(W+2p-kw)/s+1]
Variable conv2d(Tape& tape, const Variable& x, const Variable& kernel, int stride, int padding);

// Adds bias[C] along axis 1 of x[N,C,...].
Variable bias_add(Tape& tape, const Variable& x, const Variable& bias);

// Windows that run past an odd edge are padded with -inf, so the output is
// ceil((H-window)/stride)+1 (at least 1). Gradient goes to the window argmax,
// ties resolved to the lowest linear index.
Variable maxpool2d(Tape& tape, const Variable& x, int window = 2, int stride = 2);

Variable upsample_nearest(Tape& tape, const Variable& x, int factor);

struct BatchNormStats {
  Tensor running_mean;
  Tensor running_var;
  explicit BatchNormStats(std::int64_t channels = 0)
      : running_mean(Shape{channels}, 0.0), running_var(Shape{channels}, 1.0) {}
};

// Per-channel normalization of x[N,C,H,W] (or x[N,C]). Train mode uses batch
// statistics and updates `stats` (unbiased variance); eval mode reads them.
Variable batchnorm2d(Tape& tape, const Variable& x, const Variable& gamma, const Variable& beta, Mode mode,
                     BatchNormStats& stats, double momentum = 0.1, double eps = 1e-5);

Variable activation(Tape& tape, Activation kind, const Variable& x);
inline Variable relu(Tape& t, const Variable& x) { return activation(t, Activation::relu, x); }
inline Variable sigmoid(Tape& t, const Variable& x) { return activation(t, Activation::sigmoid, x); }
inline Variable softplus(Tape& t, const Variable& x) { return activation(t, Activation::softplus, x); }
inline Variable log1p(Tape& t, const Variable& x) { return activation(t, Activation::log1p, x); }

// Concatenates along axis 1; every other dimension must agree.
Variable concat_channels(Tape& tape, const Variable& a, const Variable& b);

Variable reshape(Tape& tape, const Variable& x, Shape shape);

// Reduces over `axes` (all axes when empty). Reduced axes are dropped; a full
// reduction yields shape {1}. Min routes its gradient to the lowest-index argmin.
Variable reduce(Tape& tape, Reduction kind, const Variable& x, std::vector<int> axes = {});
inline Variable sum(Tape& t, const Variable& x) { return reduce(t, Reduction::sum, x); }
inline Variable mean(Tape& t, const Variable& x) { return reduce(t, Reduction::mean, x); }

// Row-wise softmax of x[N,K], K >= 2.
Variable softmax(Tape& tape, const Variable& x);

double sigmoid_value(double s);
double softplus_value(double s);

}  // namespace whdspot::diff
