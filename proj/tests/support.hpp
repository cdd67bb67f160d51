#pragma once

// Independent reference implementations and finite-difference machinery used
// by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "projsynth/metrics.hpp"
#include "projsynth/ops.hpp"
#include "projsynth/projector.hpp"
#include "projsynth/tensor.hpp"

namespace testsupport {

using projsynth::Shape;
using projsynth::Tensor;

template <typename T>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0, bool rg = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<T> v(projsynth::shape_numel(shape));
  for (auto& x : v) x = T(u(rng));
  return Tensor<T>(std::move(shape), std::move(v), rg);
}

/// Values bounded away from zero (|x| in [margin, 1]) with random signs.
template <typename T>
Tensor<T> random_away_from_zero(Shape shape, std::uint64_t seed, double margin = 0.1, bool rg = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(margin, 1.0);
  std::bernoulli_distribution sign(0.5);
  std::vector<T> v(projsynth::shape_numel(shape));
  for (auto& x : v) x = T(sign(rng) ? u(rng) : -u(rng));
  return Tensor<T>(std::move(shape), std::move(v), rg);
}

/// Nested-loop convolution straight from the definition (cross-correlation,
/// zero padding), accumulated in long double.
template <typename T>
std::vector<double> conv2d_reference(const Tensor<T>& x, const Tensor<T>& k, const Tensor<T>* bias, int stride,
                                     int pad, std::size_t& oh, std::size_t& ow) {
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t cout = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  oh = (h + 2 * pad - kh) / stride + 1;
  ow = (w + 2 * pad - kw) / stride + 1;
  std::vector<double> out(n * cout * oh * ow);
  const auto xd = x.data();
  const auto kd = k.data();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          long double acc = bias ? (long double)bias->data()[co] : 0.0L;
          for (std::size_t ci = 0; ci < cin; ++ci)
            for (std::size_t ky = 0; ky < kh; ++ky)
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const long iy = long(oy * stride + ky) - pad, ix = long(ox * stride + kx) - pad;
                if (iy < 0 || ix < 0 || iy >= long(h) || ix >= long(w)) continue;
                acc += (long double)xd[((b * cin + ci) * h + std::size_t(iy)) * w + std::size_t(ix)] *
                       (long double)kd[((co * cin + ci) * kh + ky) * kw + kx];
              }
          out[((b * cout + co) * oh + oy) * ow + ox] = double(acc);
        }
  return out;
}

/// SSIM computed patch by patch: for each window position the weighted
/// means, variances and covariance are summed directly from the 2-D weights.
inline double ssim_reference(const projsynth::ProjectionImage& label, const projsynth::ProjectionImage& generated,
                             const projsynth::SsimConfig& cfg = {}) {
  const auto w2 = cfg.weights();
  const std::size_t n = std::size_t(cfg.window_size);
  const double c1 = cfg.c1(), c2 = cfg.c2();
  double total = 0;
  std::size_t count = 0;
  for (std::size_t y0 = 0; y0 + n <= label.nv; ++y0)
    for (std::size_t x0 = 0; x0 + n <= label.nu; ++x0) {
      double mg = 0, ml = 0;
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) {
          const double wt = w2[j * n + i];
          mg += wt * generated.at(x0 + i, y0 + j);
          ml += wt * label.at(x0 + i, y0 + j);
        }
      double vg = 0, vl = 0, cov = 0;
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) {
          const double wt = w2[j * n + i];
          const double dg = generated.at(x0 + i, y0 + j) - mg, dl = label.at(x0 + i, y0 + j) - ml;
          vg += wt * dg * dg;
          vl += wt * dl * dl;
          cov += wt * dg * dl;
        }
      total += ((2 * mg * ml + c1) * (2 * cov + c2)) / ((mg * mg + ml * ml + c1) * (vg + vl + c2));
      ++count;
    }
  return total / double(count);
}

inline projsynth::ProjectionImage random_image(std::size_t nu, std::size_t nv, std::uint64_t seed, double lo = -1,
                                               double hi = 1) {
  projsynth::ProjectionImage img(nu, nv);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : img.data) v = float(u(rng));
  return img;
}

/// Closed-form length of the segment of origin + t*dir inside an axis-aligned
/// ellipsoid (x-c)^T diag(1/a^2) (x-c) <= 1; dir need not be unit length.
inline double ellipsoid_chord(const projsynth::Vec3& c, const projsynth::Vec3& a, const projsynth::Vec3& origin,
                              const projsynth::Vec3& dir) {
  const double ox = (origin.x - c.x) / a.x, oy = (origin.y - c.y) / a.y, oz = (origin.z - c.z) / a.z;
  const double dx = dir.x / a.x, dy = dir.y / a.y, dz = dir.z / a.z;
  const double qa = dx * dx + dy * dy + dz * dz;
  const double qb = 2 * (ox * dx + oy * dy + oz * dz);
  const double qc = ox * ox + oy * oy + oz * oz - 1;
  const double disc = qb * qb - 4 * qa * qc;
  if (disc <= 0) return 0.0;
  const double dt = std::sqrt(disc) / qa;
  return dt * std::sqrt(dir.x * dir.x + dir.y * dir.y + dir.z * dir.z);
}

/// Scalar sum_i w_i * y_i with fixed random weights, built from conv2d so the
/// upstream gradient of y is non-uniform.
template <typename T>
Tensor<T> random_functional(const Tensor<T>& y, std::uint64_t seed) {
  const std::size_t n = y.numel();
  const Tensor<T> w = random_tensor<T>({1, n, 1, 1}, seed, -1.0, 1.0);
  return projsynth::sum(projsynth::conv2d(y.reshape({1, n, 1, 1}), w, Tensor<T>(), 1, 0));
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // samples where the finite difference straddles a kink
};

/// Analytic gradients of loss_fn w.r.t. leaves against central finite
/// differences of ref_fn w.r.t. ref_leaves (the same function, possibly in
/// another precision, with bit-identical leaf values). The error of one entry
/// is |a - n| / max(|a|, |n|, f) with floor f = floor_frac * max |a| over all
/// leaves. Samples whose forward and backward quotients disagree by more than
/// kink_tol (same denominator) straddle a relu/lrelu/abs kink and are skipped.
template <typename T, typename R>
GradCheckResult gradcheck_mixed(const std::function<Tensor<T>()>& loss_fn, std::vector<Tensor<T>> leaves,
                                const std::function<Tensor<R>()>& ref_fn, std::vector<Tensor<R>> ref_leaves,
                                double h, std::size_t max_samples, std::uint64_t seed, double kink_tol,
                                double floor_frac = 1e-3) {
  GradCheckResult r;
  for (auto& l : leaves) l.zero_grad();
  loss_fn().backward();
  std::vector<std::vector<T>> analytic;
  double amax = 0;
  for (auto& l : leaves) {
    analytic.push_back(l.grad());
    for (T g : analytic.back()) amax = std::max(amax, std::abs(double(g)));
  }
  const double floor = std::max(floor_frac * amax, 1e-12);
  double f0 = 0;
  {
    projsynth::NoGradGuard g;
    f0 = double(ref_fn().item());
  }
  std::mt19937_64 rng(seed);
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    std::vector<std::size_t> idx(leaves[li].numel());
    std::iota(idx.begin(), idx.end(), 0);
    if (idx.size() > max_samples) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(max_samples);
    }
    auto data = ref_leaves[li].mutable_data();
    for (std::size_t i : idx) {
      const R orig = data[i];
      auto eval = [&](double delta, double& step) {
        data[i] = R(double(orig) + delta);
        step = double(data[i]) - double(orig);
        projsynth::NoGradGuard g;
        const double v = double(ref_fn().item());
        data[i] = orig;
        return v;
      };
      double hp = 0, hm = 0;
      const double fp = eval(h, hp), fm = eval(-h, hm);
      const double fwd = (fp - f0) / hp, bwd = (f0 - fm) / -hm;
      const double n = (fp - fm) / (hp - hm);
      const double a = double(analytic[li][i]);
      const double denom = std::max({std::abs(a), std::abs(n), floor});
      if (std::abs(fwd - bwd) / denom > kink_tol) {
        ++r.skipped;
        continue;
      }
      r.max_rel_error = std::max(r.max_rel_error, std::abs(a - n) / denom);
      ++r.checked;
    }
  }
  return r;
}

/// Same-precision gradient check.
template <typename T>
GradCheckResult gradcheck(const std::function<Tensor<T>()>& loss_fn, std::vector<Tensor<T>> leaves, double h,
                          std::size_t max_samples, std::uint64_t seed, double kink_tol, double floor_frac = 1e-3) {
  return gradcheck_mixed<T, T>(loss_fn, leaves, loss_fn, leaves, h, max_samples, seed, kink_tol, floor_frac);
}

}  // namespace testsupport
