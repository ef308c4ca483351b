#include "diffcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "common/error.hpp"
#include "diffcore/gemm.hpp"

namespace whdspot::diff {

namespace {

const char* op_name(BinaryOp op) {
  switch (op) {
    case BinaryOp::add: return "add";
    case BinaryOp::sub: return "sub";
    case BinaryOp::mul: return "mul";
    case BinaryOp::div: return "div";
  }
  return "?";
}

// C (+)= A*B with the tape's compute precision.
void matmul(Precision precision, std::int64_t m, std::int64_t n, std::int64_t k, const double* a, const double* b,
            double* c, bool accumulate) {
  if (precision == Precision::f64) {
    gemm<double>(m, n, k, a, b, c, accumulate);
    return;
  }
  std::vector<float> af(a, a + m * k), bf(b, b + k * n), cf(static_cast<std::size_t>(m * n));
  gemm<float>(m, n, k, af.data(), bf.data(), cf.data(), false);
  for (std::int64_t i = 0; i < m * n; ++i) c[i] = accumulate ? c[i] + cf[i] : cf[i];
}

void require_rank(const Variable& x, std::size_t rank, const char* op) {
  require(x.shape().size() == rank, std::string(op) + ": expected rank " + std::to_string(rank) + " input, got " +
                                        to_string(x.shape()));
}

// Row-major strides for `shape`.
std::vector<std::int64_t> strides_of(const Shape& shape) {
  std::vector<std::int64_t> s(shape.size(), 1);
  for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i) s[i] = s[i + 1] * shape[i + 1];
  return s;
}

void im2col(const double* x, std::int64_t channels, std::int64_t h, std::int64_t w, std::int64_t kh, std::int64_t kw,
            int stride, int pad, std::int64_t ho, std::int64_t wo, double* cols) {
  for (std::int64_t c = 0; c < channels; ++c)
    for (std::int64_t ki = 0; ki < kh; ++ki)
      for (std::int64_t kj = 0; kj < kw; ++kj) {
        double* row = cols + ((c * kh + ki) * kw + kj) * ho * wo;
        for (std::int64_t oi = 0; oi < ho; ++oi) {
          const std::int64_t ii = oi * stride - pad + ki;
          double* dst = row + oi * wo;
          if (ii < 0 || ii >= h) {
            std::fill(dst, dst + wo, 0.0);
            continue;
          }
          const double* src = x + (c * h + ii) * w;
          for (std::int64_t oj = 0; oj < wo; ++oj) {
            const std::int64_t jj = oj * stride - pad + kj;
            dst[oj] = (jj >= 0 && jj < w) ? src[jj] : 0.0;
          }
        }
      }
}

void col2im_add(const double* cols, std::int64_t channels, std::int64_t h, std::int64_t w, std::int64_t kh,
                std::int64_t kw, int stride, int pad, std::int64_t ho, std::int64_t wo, double* x) {
  for (std::int64_t c = 0; c < channels; ++c)
    for (std::int64_t ki = 0; ki < kh; ++ki)
      for (std::int64_t kj = 0; kj < kw; ++kj) {
        const double* row = cols + ((c * kh + ki) * kw + kj) * ho * wo;
        for (std::int64_t oi = 0; oi < ho; ++oi) {
          const std::int64_t ii = oi * stride - pad + ki;
          if (ii < 0 || ii >= h) continue;
          double* dst = x + (c * h + ii) * w;
          for (std::int64_t oj = 0; oj < wo; ++oj) {
            const std::int64_t jj = oj * stride - pad + kj;
            if (jj >= 0 && jj < w) dst[jj] += row[oi * wo + oj];
          }
        }
      }
}

}  // namespace

double sigmoid_value(double s) {
  if (s >= 0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

double softplus_value(double s) {
  if (s > 0) return s + std::log1p(std::exp(-s));
  return std::log1p(std::exp(s));
}

Variable elementwise(Tape& tape, BinaryOp op, const Variable& a, const Variable& b) {
  const bool broadcast = b.size() == 1 && a.shape() != b.shape();
  require(broadcast || a.shape() == b.shape(), std::string(op_name(op)) + ": shape mismatch " + to_string(a.shape()) +
                                                   " vs " + to_string(b.shape()));
  const auto av = a.value().data();
  const auto bv = b.value().data();
  if (op == BinaryOp::div)
    for (double d : bv)
      if (d == 0.0) fail(ErrorKind::Numeric, "div: division by zero");

  Tensor out(a.shape());
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) {
    const double y = bv[broadcast ? 0 : i];
    switch (op) {
      case BinaryOp::add: ov[i] = av[i] + y; break;
      case BinaryOp::sub: ov[i] = av[i] - y; break;
      case BinaryOp::mul: ov[i] = av[i] * y; break;
      case BinaryOp::div: ov[i] = av[i] / y; break;
    }
  }
  return tape.emit(op_name(op), {a, b}, std::move(out), [a, b, op, broadcast](const Tensor& g) mutable {
    const auto gv = g.data();
    const auto av = a.value().data();
    const auto bv = b.value().data();
    if (a.requires_grad()) {
      auto ga = a.grad().data();
      for (std::size_t i = 0; i < gv.size(); ++i) {
        const double y = bv[broadcast ? 0 : i];
        switch (op) {
          case BinaryOp::add:
          case BinaryOp::sub: ga[i] += gv[i]; break;
          case BinaryOp::mul: ga[i] += gv[i] * y; break;
          case BinaryOp::div: ga[i] += gv[i] / y; break;
        }
      }
    }
    if (b.requires_grad()) {
      auto gb = b.grad().data();
      for (std::size_t i = 0; i < gv.size(); ++i) {
        const std::size_t j = broadcast ? 0 : i;
        switch (op) {
          case BinaryOp::add: gb[j] += gv[i]; break;
          case BinaryOp::sub: gb[j] -= gv[i]; break;
          case BinaryOp::mul: gb[j] += gv[i] * av[i]; break;
          case BinaryOp::div: gb[j] -= gv[i] * av[i] / (bv[j] * bv[j]); break;
        }
      }
    }
  });
}

Variable elementwise(Tape& tape, BinaryOp op, const Variable& a, double b) {
  return elementwise(tape, op, a, Variable(Tensor::scalar(b)));
}

Variable linear(Tape& tape, const Variable& x, const Variable& weight, const Variable& bias) {
  require_rank(x, 2, "linear");
  require_rank(weight, 2, "linear");
  const std::int64_t n = x.shape()[0], fin = x.shape()[1], fout = weight.shape()[1];
  require(weight.shape()[0] == fin, "linear: input features " + std::to_string(fin) + " do not match weight " +
                                        to_string(weight.shape()));
  require(bias.shape() == Shape{fout}, "linear: bias shape " + to_string(bias.shape()) + " should be [" +
                                           std::to_string(fout) + "]");
  Tensor out(Shape{n, fout});
  matmul(tape.precision(), n, fout, fin, x.value().ptr(), weight.value().ptr(), out.ptr(), false);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < fout; ++j) out[i * fout + j] += bias.value()[j];

  const Precision prec = tape.precision();
  return tape.emit("linear", {x, weight, bias}, std::move(out),
                   [x, weight, bias, n, fin, fout, prec](const Tensor& g) mutable {
                     if (x.requires_grad()) {
                       std::vector<double> wt(fin * fout);
                       transpose(fin, fout, weight.value().ptr(), wt.data());
                       matmul(prec, n, fin, fout, g.ptr(), wt.data(), x.grad().ptr(), true);
                     }
                     if (weight.requires_grad()) {
                       std::vector<double> xt(n * fin);
                       transpose(n, fin, x.value().ptr(), xt.data());
                       matmul(prec, fin, fout, n, xt.data(), g.ptr(), weight.grad().ptr(), true);
                     }
                     if (bias.requires_grad()) {
                       auto gb = bias.grad().data();
                       for (std::int64_t i = 0; i < n; ++i)
                         for (std::int64_t j = 0; j < fout; ++j) gb[j] += g[i * fout + j];
                     }
                   });
}

Variable conv2d(Tape& tape, const Variable& x, const Variable& kernel, int stride, int padding) {
  require_rank(x, 4, "conv2d");
  require_rank(kernel, 4, "conv2d");
  require(stride >= 1, "conv2d: stride must be >= 1");
  require(padding >= 0, "conv2d: padding must be >= 0");
  const auto& xs = x.shape();
  const auto& ks = kernel.shape();
  const std::int64_t n = xs[0], c = xs[1], h = xs[2], w = xs[3];
  const std::int64_t k = ks[0], kh = ks[2], kw = ks[3];
  require(ks[1] == c, "conv2d: kernel expects " + std::to_string(ks[1]) + " channels, input has " + std::to_string(c));
  require(kh <= h + 2 * padding && kw <= w + 2 * padding,
          "conv2d: kernel " + to_string(ks) + " larger than padded input " + to_string(xs));
  const std::int64_t ho = (h + 2 * padding - kh) / stride + 1;
  const std::int64_t wo = (w + 2 * padding - kw) / stride + 1;
  const std::int64_t patch = c * kh * kw, pixels = ho * wo;

  Tensor out(Shape{n, k, ho, wo});
  std::vector<double> cols(patch * pixels);
  for (std::int64_t i = 0; i < n; ++i) {
    im2col(x.value().ptr() + i * c * h * w, c, h, w, kh, kw, stride, padding, ho, wo, cols.data());
    matmul(tape.precision(), k, pixels, patch, kernel.value().ptr(), cols.data(), out.ptr() + i * k * pixels, false);
  }

  const Precision prec = tape.precision();
  return tape.emit("conv2d", {x, kernel}, std::move(out),
                   [=, x = x, kernel = kernel](const Tensor& g) mutable {
                     std::vector<double> cols(patch * pixels), colst, kt, dcols;
                     if (kernel.requires_grad()) colst.resize(patch * pixels);
                     if (x.requires_grad()) {
                       kt.resize(k * patch);
                       transpose(k, patch, kernel.value().ptr(), kt.data());
                       dcols.resize(patch * pixels);
                     }
                     for (std::int64_t i = 0; i < n; ++i) {
                       const double* gi = g.ptr() + i * k * pixels;
                       if (kernel.requires_grad()) {
                         im2col(x.value().ptr() + i * c * h * w, c, h, w, kh, kw, stride, padding, ho, wo,
                                cols.data());
                         transpose(patch, pixels, cols.data(), colst.data());
                         matmul(prec, k, patch, pixels, gi, colst.data(), kernel.grad().ptr(), true);
                       }
                       if (x.requires_grad()) {
                         matmul(prec, patch, pixels, k, kt.data(), gi, dcols.data(), false);
                         col2im_add(dcols.data(), c, h, w, kh, kw, stride, padding, ho, wo,
                                    x.grad().ptr() + i * c * h * w);
                       }
                     }
                   });
}

Variable bias_add(Tape& tape, const Variable& x, const Variable& bias) {
  require(x.shape().size() >= 2, "bias_add: input needs a channel axis");
  const std::int64_t n = x.shape()[0], c = x.shape()[1];
  require(bias.shape() == Shape{c}, "bias_add: bias shape " + to_string(bias.shape()) + " for " +
                                        std::to_string(c) + " channels");
  const std::int64_t inner = static_cast<std::int64_t>(x.size()) / std::max<std::int64_t>(n * c, 1);
  Tensor out = x.value();
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t ch = 0; ch < c; ++ch) {
      double* p = out.ptr() + (i * c + ch) * inner;
      for (std::int64_t j = 0; j < inner; ++j) p[j] += bias.value()[ch];
    }
  return tape.emit("bias_add", {x, bias}, std::move(out), [x, bias, n, c, inner](const Tensor& g) mutable {
    accumulate(x, g);
    if (bias.requires_grad()) {
      auto gb = bias.grad().data();
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t ch = 0; ch < c; ++ch) {
          const double* p = g.ptr() + (i * c + ch) * inner;
          double s = 0.0;
          for (std::int64_t j = 0; j < inner; ++j) s += p[j];
          gb[ch] += s;
        }
    }
  });
}

Variable maxpool2d(Tape& tape, const Variable& x, int window, int stride) {
  require_rank(x, 4, "maxpool2d");
  require(window >= 1 && stride >= 1, "maxpool2d: window and stride must be >= 1");
  const auto& xs = x.shape();
  const std::int64_t n = xs[0], c = xs[1], h = xs[2], w = xs[3];
  require(h >= 1 && w >= 1, "maxpool2d: empty spatial extent " + to_string(xs));
  auto out_dim = [&](std::int64_t d) {
    if (d <= window) return std::int64_t{1};
    return (d - window + stride - 1) / stride + 1;
  };
  const std::int64_t ho = out_dim(h), wo = out_dim(w);
  Tensor out(Shape{n, c, ho, wo});
  std::vector<std::int64_t> argmax(out.size());
  for (std::int64_t plane = 0; plane < n * c; ++plane) {
    const double* src = x.value().ptr() + plane * h * w;
    for (std::int64_t oi = 0; oi < ho; ++oi)
      for (std::int64_t oj = 0; oj < wo; ++oj) {
        double best = -std::numeric_limits<double>::infinity();
        std::int64_t best_idx = -1;
        for (std::int64_t di = 0; di < window; ++di) {
          const std::int64_t ii = oi * stride + di;
          if (ii >= h) break;
          for (std::int64_t dj = 0; dj < window; ++dj) {
            const std::int64_t jj = oj * stride + dj;
            if (jj >= w) break;
            const double v = src[ii * w + jj];
            if (best_idx < 0 || v > best) {
              best = v;
              best_idx = ii * w + jj;
            }
          }
        }
        const std::int64_t o = (plane * ho + oi) * wo + oj;
        out[o] = best;
        argmax[o] = plane * h * w + best_idx;
      }
  }
  return tape.emit("maxpool2d", {x}, std::move(out), [x, argmax = std::move(argmax)](const Tensor& g) mutable {
    if (!x.requires_grad()) return;
    auto gx = x.grad().data();
    for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += g[o];
  });
}

Variable upsample_nearest(Tape& tape, const Variable& x, int factor) {
  require_rank(x, 4, "upsample_nearest");
  require(factor >= 1, "upsample_nearest: factor must be >= 1, got " + std::to_string(factor));
  const auto& xs = x.shape();
  const std::int64_t planes = xs[0] * xs[1], h = xs[2], w = xs[3], ho = h * factor, wo = w * factor;
  Tensor out(Shape{xs[0], xs[1], ho, wo});
  for (std::int64_t p = 0; p < planes; ++p) {
    const double* src = x.value().ptr() + p * h * w;
    double* dst = out.ptr() + p * ho * wo;
    for (std::int64_t i = 0; i < ho; ++i)
      for (std::int64_t j = 0; j < wo; ++j) dst[i * wo + j] = src[(i / factor) * w + j / factor];
  }
  return tape.emit("upsample_nearest", {x}, std::move(out), [=, x = x](const Tensor& g) mutable {
    if (!x.requires_grad()) return;
    for (std::int64_t p = 0; p < planes; ++p) {
      double* dst = x.grad().ptr() + p * h * w;
      const double* src = g.ptr() + p * ho * wo;
      for (std::int64_t i = 0; i < ho; ++i)
        for (std::int64_t j = 0; j < wo; ++j) dst[(i / factor) * w + j / factor] += src[i * wo + j];
    }
  });
}

Variable batchnorm2d(Tape& tape, const Variable& x, const Variable& gamma, const Variable& beta, Mode mode,
                     BatchNormStats& stats, double momentum, double eps) {
  require(x.shape().size() == 4 || x.shape().size() == 2, "batchnorm2d: expected [N,C,H,W] or [N,C], got " +
                                                               to_string(x.shape()));
  require(eps > 0, "batchnorm2d: eps must be positive");
  const std::int64_t n = x.shape()[0], c = x.shape()[1];
  const std::int64_t inner = x.shape().size() == 4 ? x.shape()[2] * x.shape()[3] : 1;
  const std::int64_t count = n * inner;
  require(gamma.shape() == Shape{c} && beta.shape() == Shape{c}, "batchnorm2d: gamma/beta must have shape [" +
                                                                     std::to_string(c) + "]");
  require(stats.running_mean.shape() == Shape{c} && stats.running_var.shape() == Shape{c},
          "batchnorm2d: running statistics have the wrong channel count");
  if (mode == Mode::train)
    require(count > 1, "batchnorm2d: a channel has a single element in train mode; variance gradient is undefined");

  auto at = [&](std::int64_t i, std::int64_t ch) { return (i * c + ch) * inner; };
  std::vector<double> mu(c), inv_std(c);
  for (std::int64_t ch = 0; ch < c; ++ch) {
    if (mode == Mode::train) {
      double s = 0.0;
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < inner; ++j) s += x.value()[at(i, ch) + j];
      const double m = s / static_cast<double>(count);
      double v = 0.0;
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < inner; ++j) {
          const double d = x.value()[at(i, ch) + j] - m;
          v += d * d;
        }
      mu[ch] = m;
      inv_std[ch] = 1.0 / std::sqrt(v / static_cast<double>(count) + eps);
      stats.running_mean[ch] = (1.0 - momentum) * stats.running_mean[ch] + momentum * m;
      stats.running_var[ch] =
          (1.0 - momentum) * stats.running_var[ch] + momentum * v / static_cast<double>(count - 1);
    } else {
      mu[ch] = stats.running_mean[ch];
      inv_std[ch] = 1.0 / std::sqrt(stats.running_var[ch] + eps);
    }
  }
  Tensor xhat(x.shape());
  Tensor out(x.shape());
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t j = 0; j < inner; ++j) {
        const std::int64_t idx = at(i, ch) + j;
        xhat[idx] = (x.value()[idx] - mu[ch]) * inv_std[ch];
        out[idx] = gamma.value()[ch] * xhat[idx] + beta.value()[ch];
      }
  const bool train = mode == Mode::train;
  return tape.emit("batchnorm2d", {x, gamma, beta}, std::move(out),
                   [=, x = x, gamma = gamma, beta = beta, xhat = std::move(xhat),
                    inv_std = std::move(inv_std)](const Tensor& g) mutable {
                     auto at = [c, inner](std::int64_t i, std::int64_t ch) { return (i * c + ch) * inner; };
                     const double m = static_cast<double>(count);
                     for (std::int64_t ch = 0; ch < c; ++ch) {
                       double sum_g = 0.0, sum_gx = 0.0;
                       for (std::int64_t i = 0; i < n; ++i)
                         for (std::int64_t j = 0; j < inner; ++j) {
                           const std::int64_t idx = at(i, ch) + j;
                           sum_g += g[idx];
                           sum_gx += g[idx] * xhat[idx];
                         }
                       if (gamma.requires_grad()) gamma.grad()[ch] += sum_gx;
                       if (beta.requires_grad()) beta.grad()[ch] += sum_g;
                       if (!x.requires_grad()) continue;
                       const double scale = gamma.value()[ch] * inv_std[ch];
                       auto gx = x.grad().data();
                       for (std::int64_t i = 0; i < n; ++i)
                         for (std::int64_t j = 0; j < inner; ++j) {
                           const std::int64_t idx = at(i, ch) + j;
                           if (train)
                             gx[idx] += scale * (g[idx] - sum_g / m - xhat[idx] * sum_gx / m);
                           else
                             gx[idx] += scale * g[idx];
                         }
                     }
                   });
}

Variable activation(Tape& tape, Activation kind, const Variable& x) {
  Tensor out(x.shape());
  const auto xv = x.value().data();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    switch (kind) {
      case Activation::relu: out[i] = xv[i] > 0.0 ? xv[i] : 0.0; break;
      case Activation::sigmoid: out[i] = sigmoid_value(xv[i]); break;
      case Activation::softplus: out[i] = softplus_value(xv[i]); break;
      case Activation::log1p:
        if (!(xv[i] > -1.0)) fail(ErrorKind::Numeric, "log1p: argument " + std::to_string(xv[i]) + " <= -1");
        out[i] = std::log1p(xv[i]);
        break;
    }
  }
  static constexpr const char* kNames[] = {"relu", "sigmoid", "softplus", "log1p"};
  const char* name = kNames[static_cast<int>(kind)];
  Tensor saved = kind == Activation::sigmoid ? out : Tensor();
  return tape.emit(name, {x}, std::move(out), [x, kind, saved = std::move(saved)](const Tensor& g) mutable {
    if (!x.requires_grad()) return;
    auto gx = x.grad().data();
    const auto xv = x.value().data();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      switch (kind) {
        case Activation::relu: gx[i] += xv[i] > 0.0 ? g[i] : 0.0; break;
        case Activation::sigmoid: gx[i] += g[i] * saved[i] * (1.0 - saved[i]); break;
        case Activation::softplus: gx[i] += g[i] * sigmoid_value(xv[i]); break;
        case Activation::log1p: gx[i] += g[i] / (1.0 + xv[i]); break;
      }
    }
  });
}

Variable concat_channels(Tape& tape, const Variable& a, const Variable& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  require(as.size() >= 2 && as.size() == bs.size(), "concat_channels: rank mismatch " + to_string(as) + " vs " +
                                                        to_string(bs));
  for (std::size_t d = 0; d < as.size(); ++d)
    if (d != 1)
      require(as[d] == bs[d], "concat_channels: non-channel dimensions differ " + to_string(as) + " vs " +
                                  to_string(bs));
  const std::int64_t n = as[0];
  const std::int64_t inner = numel(Shape(as.begin() + 2, as.end()));
  const std::int64_t ca = as[1] * inner, cb = bs[1] * inner;
  Shape os = as;
  os[1] = as[1] + bs[1];
  Tensor out(os);
  for (std::int64_t i = 0; i < n; ++i) {
    std::copy_n(a.value().ptr() + i * ca, ca, out.ptr() + i * (ca + cb));
    std::copy_n(b.value().ptr() + i * cb, cb, out.ptr() + i * (ca + cb) + ca);
  }
  return tape.emit("concat_channels", {a, b}, std::move(out), [a, b, n, ca, cb](const Tensor& g) mutable {
    for (std::int64_t i = 0; i < n; ++i) {
      const double* src = g.ptr() + i * (ca + cb);
      if (a.requires_grad()) {
        double* ga = a.grad().ptr() + i * ca;
        for (std::int64_t j = 0; j < ca; ++j) ga[j] += src[j];
      }
      if (b.requires_grad()) {
        double* gb = b.grad().ptr() + i * cb;
        for (std::int64_t j = 0; j < cb; ++j) gb[j] += src[ca + j];
      }
    }
  });
}

Variable reshape(Tape& tape, const Variable& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return tape.emit("reshape", {x}, std::move(out), [x](const Tensor& g) mutable {
    if (!x.requires_grad()) return;
    auto gx = x.grad().data();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
  });
}

Variable reduce(Tape& tape, Reduction kind, const Variable& x, std::vector<int> axes) {
  const Shape& xs = x.shape();
  const int rank = static_cast<int>(xs.size());
  if (axes.empty()) {
    axes.resize(rank);
    std::iota(axes.begin(), axes.end(), 0);
  }
  std::vector<bool> reduced(rank, false);
  for (int a : axes) {
    require(a >= 0 && a < rank, "reduce: axis " + std::to_string(a) + " out of range for " + to_string(xs));
    reduced[a] = true;
  }
  require(x.size() > 0, "reduce: empty reduction over " + to_string(xs));
  Shape os;
  std::int64_t group = 1;
  for (int d = 0; d < rank; ++d) {
    if (reduced[d])
      group *= xs[d];
    else
      os.push_back(xs[d]);
  }
  if (os.empty()) os = {1};

  // Output slot for every input element.
  std::vector<std::int64_t> slot(x.size());
  {
    const auto in_strides = strides_of(xs);
    std::vector<std::int64_t> out_strides(rank, 0);
    std::int64_t s = 1;
    for (int d = rank - 1; d >= 0; --d)
      if (!reduced[d]) {
        out_strides[d] = s;
        s *= xs[d];
      }
    for (std::size_t i = 0; i < slot.size(); ++i) {
      std::int64_t rem = static_cast<std::int64_t>(i), o = 0;
      for (int d = 0; d < rank; ++d) {
        o += (rem / in_strides[d]) * out_strides[d];
        rem %= in_strides[d];
      }
      slot[i] = o;
    }
  }

  Tensor out(os, kind == Reduction::min ? std::numeric_limits<double>::infinity() : 0.0);
  std::vector<std::int64_t> argmin;
  if (kind == Reduction::min) argmin.assign(out.size(), -1);
  const auto xv = x.value().data();
  for (std::size_t i = 0; i < slot.size(); ++i) {
    const auto o = slot[i];
    if (kind == Reduction::min) {
      if (argmin[o] < 0 || xv[i] < out[o]) {
        out[o] = xv[i];
        argmin[o] = static_cast<std::int64_t>(i);
      }
    } else {
      out[o] += xv[i];
    }
  }
  if (kind == Reduction::mean)
    for (auto& v : out.data()) v /= static_cast<double>(group);

  const char* name = kind == Reduction::sum ? "sum" : kind == Reduction::mean ? "mean" : "min";
  return tape.emit(name, {x}, std::move(out),
                   [x, kind, group, slot = std::move(slot), argmin = std::move(argmin)](const Tensor& g) mutable {
                     if (!x.requires_grad()) return;
                     auto gx = x.grad().data();
                     if (kind == Reduction::min) {
                       for (std::size_t o = 0; o < argmin.size(); ++o) gx[argmin[o]] += g[o];
                       return;
                     }
                     const double scale = kind == Reduction::mean ? 1.0 / static_cast<double>(group) : 1.0;
                     for (std::size_t i = 0; i < slot.size(); ++i) gx[i] += g[slot[i]] * scale;
                   });
}

Variable softmax(Tape& tape, const Variable& x) {
  require_rank(x, 2, "softmax");
  const std::int64_t n = x.shape()[0], k = x.shape()[1];
  require(k >= 2, "softmax: needs at least two classes");
  Tensor out(x.shape());
  for (std::int64_t i = 0; i < n; ++i) {
    const double* row = x.value().ptr() + i * k;
    double* dst = out.ptr() + i * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::int64_t j = 0; j < k; ++j) z += dst[j] = std::exp(row[j] - mx);
    for (std::int64_t j = 0; j < k; ++j) dst[j] /= z;
  }
  Tensor saved = out;
  return tape.emit("softmax", {x}, std::move(out), [x, n, k, saved = std::move(saved)](const Tensor& g) mutable {
    if (!x.requires_grad()) return;
    auto gx = x.grad().data();
    for (std::int64_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::int64_t j = 0; j < k; ++j) dot += g[i * k + j] * saved[i * k + j];
      for (std::int64_t j = 0; j < k; ++j) gx[i * k + j] += saved[i * k + j] * (g[i * k + j] - dot);
    }
  });
}

}  // namespace whdspot::diff
