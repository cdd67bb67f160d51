#include "projsynth/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <random>

#include "projsynth/error.hpp"

namespace projsynth {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
using NodePtr = std::shared_ptr<detail::Node<T>>;

void require_rank4(const Shape& s, const char* what) {
  if (s.size() != 4) throw DimensionError(std::string(what) + " must be N x C x H x W, got " + shape_to_string(s));
}

struct ConvDims {
  std::size_t channels, height, width;  // image being unfolded
  std::size_t kh, kw;
  int stride, pad;
  std::size_t out_h, out_w;  // sliding positions
};

// col has (channels*kh*kw) rows and (out_h*out_w) columns.
template <typename T>
void im2col(const T* img, const ConvDims& d, T* col) {
  const std::size_t positions = d.out_h * d.out_w;
  for (std::size_t c = 0; c < d.channels; ++c)
    for (std::size_t ky = 0; ky < d.kh; ++ky)
      for (std::size_t kx = 0; kx < d.kw; ++kx) {
        T* row = col + ((c * d.kh + ky) * d.kw + kx) * positions;
        const T* plane = img + c * d.height * d.width;
        for (std::size_t oy = 0; oy < d.out_h; ++oy) {
          const long iy = long(oy) * d.stride - d.pad + long(ky);
          T* dst = row + oy * d.out_w;
          if (iy < 0 || iy >= long(d.height)) {
            std::fill(dst, dst + d.out_w, T(0));
            continue;
          }
          const T* src = plane + std::size_t(iy) * d.width;
          for (std::size_t ox = 0; ox < d.out_w; ++ox) {
            const long ix = long(ox) * d.stride - d.pad + long(kx);
            dst[ox] = (ix < 0 || ix >= long(d.width)) ? T(0) : src[ix];
          }
        }
      }
}

// Adjoint of im2col: scatters columns back, accumulating into img.
template <typename T>
void col2im_add(const T* col, const ConvDims& d, T* img) {
  const std::size_t positions = d.out_h * d.out_w;
  for (std::size_t c = 0; c < d.channels; ++c)
    for (std::size_t ky = 0; ky < d.kh; ++ky)
      for (std::size_t kx = 0; kx < d.kw; ++kx) {
        const T* row = col + ((c * d.kh + ky) * d.kw + kx) * positions;
        T* plane = img + c * d.height * d.width;
        for (std::size_t oy = 0; oy < d.out_h; ++oy) {
          const long iy = long(oy) * d.stride - d.pad + long(ky);
          if (iy < 0 || iy >= long(d.height)) continue;
          const T* src = row + oy * d.out_w;
          T* dst = plane + std::size_t(iy) * d.width;
          for (std::size_t ox = 0; ox < d.out_w; ++ox) {
            const long ix = long(ox) * d.stride - d.pad + long(kx);
            if (ix >= 0 && ix < long(d.width)) dst[ix] += src[ox];
          }
        }
      }
}

void check_conv_params(std::size_t kh, std::size_t kw, int stride, int pad) {
  if (kh < 1 || kw < 1) throw ParameterError("kernel extents must be >= 1");
  if (stride < 1) throw ParameterError("stride must be >= 1");
  if (pad < 0) throw ParameterError("padding must be >= 0");
}

template <typename T>
void check_bias(const Tensor<T>& bias, std::size_t channels) {
  if (bias.defined() && bias.numel() != channels)
    throw DimensionError("bias length " + std::to_string(bias.numel()) + " does not match " +
                         std::to_string(channels) + " output channels");
}

template <typename T>
std::vector<NodePtr<T>> collect(std::initializer_list<const Tensor<T>*> ts) {
  std::vector<NodePtr<T>> out;
  for (auto* t : ts)
    if (t->defined()) out.push_back(t->node());
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// conv2d

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias, int stride, int pad) {
  require_rank4(input.shape(), "conv2d input");
  require_rank4(kernel.shape(), "conv2d kernel");
  const std::size_t n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  check_conv_params(kh, kw, stride, pad);
  if (kernel.dim(1) != cin)
    throw DimensionError("conv2d: input has " + std::to_string(cin) + " channels but kernel expects " +
                         std::to_string(kernel.dim(1)));
  if (h + 2 * std::size_t(pad) < kh || w + 2 * std::size_t(pad) < kw)
    throw DimensionError("conv2d: padded input smaller than kernel");
  check_bias(bias, cout);

  const ConvDims d{cin, h, w, kh, kw, stride, pad, (h + 2 * pad - kh) / stride + 1, (w + 2 * pad - kw) / stride + 1};
  const std::size_t k = cin * kh * kw, positions = d.out_h * d.out_w;

  std::vector<T> out(n * cout * positions);
  std::vector<T> col(k * positions);
  ConstMatMap<T> wmat(kernel.data().data(), cout, k);
  for (std::size_t b = 0; b < n; ++b) {
    im2col(input.data().data() + b * cin * h * w, d, col.data());
    MatMap<T> omat(out.data() + b * cout * positions, cout, positions);
    omat.noalias() = wmat * ConstMatMap<T>(col.data(), k, positions);
    if (bias.defined())
      for (std::size_t c = 0; c < cout; ++c) omat.row(c).array() += bias.data()[c];
  }

  auto in_node = input.node(), k_node = kernel.node();
  auto b_node = bias.defined() ? bias.node() : nullptr;
  return detail::make_result<T>(
      {n, cout, d.out_h, d.out_w}, std::move(out), collect<T>({&input, &kernel, &bias}),
      [=](detail::Node<T>& self) {
        std::vector<T> colbuf(k * positions);
        ConstMatMap<T> wm(k_node->value.data(), cout, k);
        for (std::size_t b = 0; b < n; ++b) {
          ConstMatMap<T> g(self.grad.data() + b * cout * positions, cout, positions);
          if (k_node->requires_grad) {
            im2col(in_node->value.data() + b * cin * h * w, d, colbuf.data());
            MatMap<T>(k_node->grad_buffer().data(), cout, k).noalias() +=
                g * ConstMatMap<T>(colbuf.data(), k, positions).transpose();
          }
          if (in_node->requires_grad) {
            MatMap<T>(colbuf.data(), k, positions).noalias() = wm.transpose() * g;
            col2im_add(colbuf.data(), d, in_node->grad_buffer().data() + b * cin * h * w);
          }
          if (b_node && b_node->requires_grad) {
            auto& bg = b_node->grad_buffer();
            const T* gp = self.grad.data() + b * cout * positions;
            for (std::size_t c = 0; c < cout; ++c) {
              T acc = 0;
              for (std::size_t q = 0; q < positions; ++q) acc += gp[c * positions + q];
              bg[c] += acc;
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// conv2d_transpose

template <typename T>
Tensor<T> conv2d_transpose(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias, int stride,
                           int pad, int out_pad) {
  require_rank4(input.shape(), "conv2d_transpose input");
  require_rank4(kernel.shape(), "conv2d_transpose kernel");
  const std::size_t n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  check_conv_params(kh, kw, stride, pad);
  if (out_pad < 0 || out_pad >= stride)
    throw ParameterError("conv2d_transpose: out_pad must satisfy 0 <= out_pad < stride");
  if (kernel.dim(0) != cin)
    throw DimensionError("conv2d_transpose: input has " + std::to_string(cin) + " channels but kernel expects " +
                         std::to_string(kernel.dim(0)));
  const long oh = long(h - 1) * stride - 2L * pad + long(kh) + out_pad;
  const long ow = long(w - 1) * stride - 2L * pad + long(kw) + out_pad;
  if (oh < 1 || ow < 1) throw DimensionError("conv2d_transpose: non-positive output extent");
  check_bias(bias, cout);

  // The output plays the role of conv2d's input; the input holds conv2d's output positions.
  const ConvDims d{cout, std::size_t(oh), std::size_t(ow), kh, kw, stride, pad, h, w};
  const std::size_t k = cout * kh * kw, positions = h * w, out_plane = std::size_t(oh * ow);

  std::vector<T> out(n * cout * out_plane, T(0));
  std::vector<T> col(k * positions);
  ConstMatMap<T> wmat(kernel.data().data(), cin, k);
  for (std::size_t b = 0; b < n; ++b) {
    MatMap<T>(col.data(), k, positions).noalias() =
        wmat.transpose() * ConstMatMap<T>(input.data().data() + b * cin * positions, cin, positions);
    T* ob = out.data() + b * cout * out_plane;
    col2im_add(col.data(), d, ob);
    if (bias.defined())
      for (std::size_t c = 0; c < cout; ++c)
        for (std::size_t i = 0; i < out_plane; ++i) ob[c * out_plane + i] += bias.data()[c];
  }

  auto in_node = input.node(), k_node = kernel.node();
  auto b_node = bias.defined() ? bias.node() : nullptr;
  return detail::make_result<T>(
      {n, cout, std::size_t(oh), std::size_t(ow)}, std::move(out), collect<T>({&input, &kernel, &bias}),
      [=](detail::Node<T>& self) {
        std::vector<T> colbuf(k * positions);
        ConstMatMap<T> wm(k_node->value.data(), cin, k);
        for (std::size_t b = 0; b < n; ++b) {
          const T* g = self.grad.data() + b * cout * out_plane;
          im2col(g, d, colbuf.data());
          ConstMatMap<T> gcol(colbuf.data(), k, positions);
          if (in_node->requires_grad)
            MatMap<T>(in_node->grad_buffer().data() + b * cin * positions, cin, positions).noalias() += wm * gcol;
          if (k_node->requires_grad)
            MatMap<T>(k_node->grad_buffer().data(), cin, k).noalias() +=
                ConstMatMap<T>(in_node->value.data() + b * cin * positions, cin, positions) * gcol.transpose();
          if (b_node && b_node->requires_grad) {
            auto& bg = b_node->grad_buffer();
            for (std::size_t c = 0; c < cout; ++c)
              for (std::size_t i = 0; i < out_plane; ++i) bg[c] += g[c * out_plane + i];
          }
        }
      });
}

// ---------------------------------------------------------------------------
// resize_bilinear

namespace {

struct Tap {
  std::size_t i0, i1;
  double frac;
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  for (std::size_t o = 0; o < out; ++o) {
    const double src = out == 1 ? 0.5 * double(in - 1) : double(o) * double(in - 1) / double(out - 1);
    std::size_t i0 = std::min(std::size_t(std::floor(src)), in - 1);
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - double(i0)};
  }
  return taps;
}

}  // namespace

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& input, std::size_t out_h, std::size_t out_w) {
  require_rank4(input.shape(), "resize_bilinear input");
  if (out_h < 1 || out_w < 1) throw ParameterError("resize_bilinear: target extents must be >= 1");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const auto ty = bilinear_taps(h, out_h), tx = bilinear_taps(w, out_w);

  std::vector<T> out(n * c * out_h * out_w);
  const T* src = input.data().data();
  for (std::size_t p = 0; p < n * c; ++p) {
    const T* plane = src + p * h * w;
    T* dst = out.data() + p * out_h * out_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const T fy = T(ty[oy].frac);
      const T* r0 = plane + ty[oy].i0 * w;
      const T* r1 = plane + ty[oy].i1 * w;
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const T fx = T(tx[ox].frac);
        // Difference form keeps constant regions exact.
        const T top = r0[tx[ox].i0] + fx * (r0[tx[ox].i1] - r0[tx[ox].i0]);
        const T bot = r1[tx[ox].i0] + fx * (r1[tx[ox].i1] - r1[tx[ox].i0]);
        dst[oy * out_w + ox] = top + fy * (bot - top);
      }
    }
  }

  auto in_node = input.node();
  return detail::make_result<T>({n, c, out_h, out_w}, std::move(out), {in_node}, [=](detail::Node<T>& self) {
    auto& g = in_node->grad_buffer();
    for (std::size_t p = 0; p < n * c; ++p) {
      T* gp = g.data() + p * h * w;
      const T* go = self.grad.data() + p * out_h * out_w;
      for (std::size_t oy = 0; oy < out_h; ++oy) {
        const T fy = T(ty[oy].frac);
        for (std::size_t ox = 0; ox < out_w; ++ox) {
          const T fx = T(tx[ox].frac);
          const T v = go[oy * out_w + ox];
          gp[ty[oy].i0 * w + tx[ox].i0] += v * (1 - fx) * (1 - fy);
          gp[ty[oy].i0 * w + tx[ox].i1] += v * fx * (1 - fy);
          gp[ty[oy].i1 * w + tx[ox].i0] += v * (1 - fx) * fy;
          gp[ty[oy].i1 * w + tx[ox].i1] += v * fx * fy;
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// channel concat / slice

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank4(a.shape(), "concat_channels lhs");
  require_rank4(b.shape(), "concat_channels rhs");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw DimensionError("concat_channels: " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), plane = a.dim(2) * a.dim(3);
  std::vector<T> out(n * (ca + cb) * plane);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.data().data() + i * ca * plane, ca * plane, out.data() + i * (ca + cb) * plane);
    std::copy_n(b.data().data() + i * cb * plane, cb * plane, out.data() + (i * (ca + cb) + ca) * plane);
  }
  auto an = a.node(), bn = b.node();
  return detail::make_result<T>({n, ca + cb, a.dim(2), a.dim(3)}, std::move(out), {an, bn},
                                [=](detail::Node<T>& self) {
                                  for (std::size_t i = 0; i < n; ++i) {
                                    const T* g = self.grad.data() + i * (ca + cb) * plane;
                                    if (an->requires_grad) {
                                      T* ga = an->grad_buffer().data() + i * ca * plane;
                                      for (std::size_t j = 0; j < ca * plane; ++j) ga[j] += g[j];
                                    }
                                    if (bn->requires_grad) {
                                      T* gb = bn->grad_buffer().data() + i * cb * plane;
                                      for (std::size_t j = 0; j < cb * plane; ++j) gb[j] += g[ca * plane + j];
                                    }
                                  }
                                });
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  require_rank4(x.shape(), "slice_channels input");
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (begin >= end || end > c) throw DimensionError("slice_channels: invalid channel range");
  const std::size_t m = end - begin;
  std::vector<T> out(n * m * plane);
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(x.data().data() + (i * c + begin) * plane, m * plane, out.data() + i * m * plane);
  auto xn = x.node();
  return detail::make_result<T>({n, m, x.dim(2), x.dim(3)}, std::move(out), {xn}, [=](detail::Node<T>& self) {
    auto& g = xn->grad_buffer();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m * plane; ++j) g[(i * c + begin) * plane + j] += self.grad[i * m * plane + j];
  });
}

// ---------------------------------------------------------------------------
// max pooling

template <typename T>
Tensor<T> max_pool2x2(const Tensor<T>& x) {
  require_rank4(x.shape(), "max_pool2x2 input");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h < 2 || w < 2) throw DimensionError("max_pool2x2: input smaller than 2x2");
  const std::size_t oh = h / 2, ow = w / 2;
  std::vector<T> out(n * c * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  const T* src = x.data().data();
  for (std::size_t p = 0; p < n * c; ++p)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = p * h * w + 2 * oy * w + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = p * h * w + (2 * oy + dy) * w + 2 * ox + dx;
            if (src[idx] > src[best]) best = idx;
          }
        const std::size_t o = (p * oh + oy) * ow + ox;
        out[o] = src[best];
        argmax[o] = best;
      }
  auto xn = x.node();
  return detail::make_result<T>({n, c, oh, ow}, std::move(out), {xn},
                                [xn, argmax = std::move(argmax)](detail::Node<T>& self) {
                                  auto& g = xn->grad_buffer();
                                  for (std::size_t o = 0; o < argmax.size(); ++o) g[argmax[o]] += self.grad[o];
                                });
}

// ---------------------------------------------------------------------------
// activations, dropout

template <typename T>
Tensor<T> activate(const Tensor<T>& x, Activation act) {
  if (act.kind == Activation::Kind::lrelu && !(act.slope >= 0.0 && act.slope < 1.0))
    throw ParameterError("lrelu slope must lie in [0, 1)");
  const T slope = act.kind == Activation::Kind::relu ? T(0) : T(act.slope);
  std::vector<T> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] > T(0) ? in[i] : slope * in[i];
  auto xn = x.node();
  return detail::make_result<T>(x.shape(), std::move(out), {xn}, [xn, slope](detail::Node<T>& self) {
    auto& g = xn->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += xn->value[i] > T(0) ? self.grad[i] : slope * self.grad[i];
  });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double keep_prob, bool training, std::uint64_t seed) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw ParameterError("dropout keep_prob must lie in (0, 1]");
  if (!training || keep_prob == 1.0) return x;
  std::mt19937_64 rng(seed);
  const T inv = T(1.0 / keep_prob);
  std::vector<T> mask(x.numel());
  for (auto& m : mask) m = (double(rng() >> 11) * 0x1.0p-53) < keep_prob ? inv : T(0);
  std::vector<T> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * mask[i];
  auto xn = x.node();
  return detail::make_result<T>(x.shape(), std::move(out), {xn}, [xn, mask = std::move(mask)](detail::Node<T>& self) {
    auto& g = xn->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
  });
}

// ---------------------------------------------------------------------------
// normalization

template <typename T>
Tensor<T> normalize(const Tensor<T>& x, NormMode mode, double eps, const Tensor<T>& gamma, const Tensor<T>& beta) {
  if (!(eps > 0.0)) throw ParameterError("normalize: eps must be > 0");
  require_rank4(x.shape(), "normalize input");
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (gamma.defined() != beta.defined()) throw ContractError("normalize: gamma and beta must be given together");
  if (gamma.defined() && (gamma.numel() != c || beta.numel() != c))
    throw DimensionError("normalize: affine parameters must have one entry per channel");

  const std::size_t groups = mode == NormMode::instance ? n * c : n;
  const std::size_t group_len = mode == NormMode::instance ? plane : c * plane;
  std::vector<T> xhat(x.numel()), inv_std(groups);
  const auto in = x.data();
  for (std::size_t g = 0; g < groups; ++g) {
    const T* src = in.data() + g * group_len;
    double m = 0.0;
    for (std::size_t i = 0; i < group_len; ++i) m += src[i];
    m /= double(group_len);
    double v = 0.0;
    for (std::size_t i = 0; i < group_len; ++i) v += (src[i] - m) * (src[i] - m);
    v /= double(group_len);
    const double is = 1.0 / std::sqrt(v + eps);
    inv_std[g] = T(is);
    for (std::size_t i = 0; i < group_len; ++i) xhat[g * group_len + i] = T((src[i] - m) * is);
  }
  std::vector<T> out = xhat;
  if (gamma.defined()) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t ch = 0; ch < c; ++ch) {
        T* o = out.data() + (i * c + ch) * plane;
        const T gm = gamma.data()[ch], bt = beta.data()[ch];
        for (std::size_t j = 0; j < plane; ++j) o[j] = gm * o[j] + bt;
      }
  }

  auto xn = x.node();
  auto gn = gamma.defined() ? gamma.node() : nullptr;
  auto bn = beta.defined() ? beta.node() : nullptr;
  std::vector<NodePtr<T>> parents{xn};
  if (gn) {
    parents.push_back(gn);
    parents.push_back(bn);
  }
  return detail::make_result<T>(
      x.shape(), std::move(out), std::move(parents),
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node<T>& self) {
        // dL/dxhat = dy * gamma
        std::vector<T> dxhat(self.grad);
        if (gn) {
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t ch = 0; ch < c; ++ch) {
              const std::size_t off = (i * c + ch) * plane;
              const T gm = gn->value[ch];
              double dg = 0.0, db = 0.0;
              for (std::size_t j = 0; j < plane; ++j) {
                dg += double(self.grad[off + j]) * xhat[off + j];
                db += self.grad[off + j];
                dxhat[off + j] *= gm;
              }
              if (gn->requires_grad) gn->grad_buffer()[ch] += T(dg);
              if (bn->requires_grad) bn->grad_buffer()[ch] += T(db);
            }
        }
        if (!xn->requires_grad) return;
        auto& gx = xn->grad_buffer();
        for (std::size_t g = 0; g < groups; ++g) {
          const std::size_t off = g * group_len;
          double mean_d = 0.0, mean_dx = 0.0;
          for (std::size_t i = 0; i < group_len; ++i) {
            mean_d += dxhat[off + i];
            mean_dx += double(dxhat[off + i]) * xhat[off + i];
          }
          mean_d /= double(group_len);
          mean_dx /= double(group_len);
          for (std::size_t i = 0; i < group_len; ++i)
            gx[off + i] += T(inv_std[g] * (dxhat[off + i] - mean_d - xhat[off + i] * mean_dx));
        }
      });
}

// ---------------------------------------------------------------------------
// elementwise arithmetic and reductions

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw DimensionError("add: " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  auto an = a.node(), bn = b.node();
  return detail::make_result<T>(a.shape(), std::move(out), {an, bn}, [an, bn](detail::Node<T>& self) {
    for (auto* p : {an.get(), bn.get()}) {
      if (!p->requires_grad) continue;
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw DimensionError("sub: " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  auto an = a.node(), bn = b.node();
  return detail::make_result<T>(a.shape(), std::move(out), {an, bn}, [an, bn](detail::Node<T>& self) {
    if (an->requires_grad) {
      auto& g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      auto& g = bn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * factor;
  auto xn = x.node();
  return detail::make_result<T>(x.shape(), std::move(out), {xn}, [xn, factor](detail::Node<T>& self) {
    auto& g = xn->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(x.data()[i]);
  auto xn = x.node();
  return detail::make_result<T>(x.shape(), std::move(out), {xn}, [xn](detail::Node<T>& self) {
    auto& g = xn->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T v = xn->value[i];
      g[i] += v > T(0) ? self.grad[i] : (v < T(0) ? -self.grad[i] : T(0));
    }
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  double s = 0.0;
  for (T v : x.data()) s += v;
  auto xn = x.node();
  return detail::make_result<T>({1}, {T(s)}, {xn}, [xn](detail::Node<T>& self) {
    auto& g = xn->grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1.0 / double(x.numel())));
}

template <typename T>
Tensor<T> stack_batch(const std::vector<Tensor<T>>& samples) {
  if (samples.empty()) throw DimensionError("stack_batch: no samples");
  const Shape& s0 = samples.front().shape();
  require_rank4(s0, "stack_batch sample");
  if (s0[0] != 1) throw DimensionError("stack_batch: samples must have batch extent 1");
  std::vector<T> out;
  out.reserve(samples.size() * samples.front().numel());
  std::vector<NodePtr<T>> parents;
  for (const auto& s : samples) {
    if (s.shape() != s0) throw DimensionError("stack_batch: samples differ in shape");
    out.insert(out.end(), s.data().begin(), s.data().end());
    parents.push_back(s.node());
  }
  const std::size_t per = samples.front().numel();
  return detail::make_result<T>({samples.size(), s0[1], s0[2], s0[3]}, std::move(out), parents,
                                [parents, per](detail::Node<T>& self) {
                                  for (std::size_t i = 0; i < parents.size(); ++i) {
                                    if (!parents[i]->requires_grad) continue;
                                    auto& g = parents[i]->grad_buffer();
                                    for (std::size_t j = 0; j < per; ++j) g[j] += self.grad[i * per + j];
                                  }
                                });
}

#define PROJSYNTH_INSTANTIATE_OPS(T)                                                                      \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);             \
  template Tensor<T> conv2d_transpose(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int, int); \
  template Tensor<T> resize_bilinear(const Tensor<T>&, std::size_t, std::size_t);                        \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> slice_channels(const Tensor<T>&, std::size_t, std::size_t);                         \
  template Tensor<T> max_pool2x2(const Tensor<T>&);                                                      \
  template Tensor<T> activate(const Tensor<T>&, Activation);                                             \
  template Tensor<T> dropout(const Tensor<T>&, double, bool, std::uint64_t);                             \
  template Tensor<T> normalize(const Tensor<T>&, NormMode, double, const Tensor<T>&, const Tensor<T>&);  \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                            \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                            \
  template Tensor<T> scale(const Tensor<T>&, T);                                                         \
  template Tensor<T> abs(const Tensor<T>&);                                                              \
  template Tensor<T> sum(const Tensor<T>&);                                                              \
  template Tensor<T> mean(const Tensor<T>&);                                                             \
  template Tensor<T> stack_batch(const std::vector<Tensor<T>>&);

PROJSYNTH_INSTANTIATE_OPS(float)
PROJSYNTH_INSTANTIATE_OPS(double)

}  // namespace projsynth
