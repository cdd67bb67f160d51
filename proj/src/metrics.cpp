#include "projsynth/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "projsynth/error.hpp"

namespace projsynth {

using nlohmann::json;

std::vector<double> SsimConfig::weights() const {
  validate();
  const int n = window_size;
  std::vector<double> w(std::size_t(n * n));
  if (window == Window::uniform) {
    std::fill(w.begin(), w.end(), 1.0 / double(n * n));
    return w;
  }
  std::vector<double> g(n);
  const double c = 0.5 * double(n - 1);
  double total = 0;
  for (int i = 0; i < n; ++i) total += g[i] = std::exp(-(i - c) * (i - c) / (2 * sigma * sigma));
  for (auto& v : g) v /= total;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) w[std::size_t(y * n + x)] = g[y] * g[x];
  return w;
}

void SsimConfig::validate() const {
  if (window_size < 1) throw ParameterError("SSIM window size must be >= 1");
  if (window == Window::gaussian && !(sigma > 0)) throw ParameterError("SSIM gaussian sigma must be > 0");
  if (!(c1() > 0 && c2() > 0)) throw ParameterError("SSIM constants must be > 0");
}

ProjectionImage scale_to_unit_range(const ProjectionImage& image) {
  ProjectionImage out = image;
  if (image.data.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(image.data.begin(), image.data.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) {
    std::fill(out.data.begin(), out.data.end(), 0.0f);
    return out;
  }
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    // Pin the extremes so a second application is an exact no-op.
    if (image.data[i] == *lo_it) out.data[i] = -1.0f;
    else if (image.data[i] == *hi_it) out.data[i] = 1.0f;
    else out.data[i] = float(2.0 * (double(image.data[i]) - lo) / (hi - lo) - 1.0);
  }
  return out;
}

namespace {

void require_same_dims(const ProjectionImage& a, const ProjectionImage& b, const char* what) {
  if (a.nu != b.nu || a.nv != b.nv || a.data.size() != b.data.size())
    throw DimensionError(std::string(what) + ": image dimensions differ");
  if (a.data.empty()) throw DimensionError(std::string(what) + ": empty images");
}

}  // namespace

double mse(const ProjectionImage& label, const ProjectionImage& generated) {
  require_same_dims(label, generated, "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < label.data.size(); ++i) {
    const double d = double(label.data[i]) - double(generated.data[i]);
    acc += d * d;
  }
  return acc / double(label.data.size());
}

namespace {

// Valid-mode separable filtering of one map with a 1-D kernel.
std::vector<double> filter_valid(const std::vector<double>& img, std::size_t w, std::size_t h,
                                 const std::vector<double>& k) {
  const std::size_t n = k.size(), ow = w - n + 1, oh = h - n + 1;
  std::vector<double> rows(ow * h), out(ow * oh);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0;
      for (std::size_t i = 0; i < n; ++i) acc += k[i] * img[y * w + x + i];
      rows[y * ow + x] = acc;
    }
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0;
      for (std::size_t i = 0; i < n; ++i) acc += k[i] * rows[(y + i) * ow + x];
      out[y * ow + x] = acc;
    }
  return out;
}

std::vector<double> window_1d(const SsimConfig& cfg) {
  const int n = cfg.window_size;
  std::vector<double> g(std::size_t(n), 1.0 / double(n));
  if (cfg.window == SsimConfig::Window::uniform) return g;
  const double c = 0.5 * double(n - 1);
  double total = 0;
  for (int i = 0; i < n; ++i) total += g[i] = std::exp(-(i - c) * (i - c) / (2 * cfg.sigma * cfg.sigma));
  for (auto& v : g) v /= total;
  return g;
}

}  // namespace

double ssim(const ProjectionImage& label, const ProjectionImage& generated, const SsimConfig& cfg) {
  require_same_dims(label, generated, "ssim");
  cfg.validate();
  const std::size_t n = std::size_t(cfg.window_size);
  if (label.nu < n || label.nv < n)
    throw DimensionError("ssim: image " + std::to_string(label.nu) + "x" + std::to_string(label.nv) +
                         " is smaller than the " + std::to_string(n) + "x" + std::to_string(n) + " window");
  const auto k = window_1d(cfg);
  const double c1 = cfg.c1(), c2 = cfg.c2();
  const std::size_t w = label.nu, h = label.nv;

  // x == y produces bit-identical moment maps, so ssim(x, x) is exactly 1.
  std::vector<double> x(generated.data.begin(), generated.data.end()), y(label.data.begin(), label.data.end());
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, w, h, k), my = filter_valid(y, w, h, k);
  const auto sxx = filter_valid(xx, w, h, k), syy = filter_valid(yy, w, h, k), sxy = filter_valid(xy, w, h, k);

  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cov = sxy[i] - mx[i] * my[i];
    total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / double(mx.size());
}

double psnr(const ProjectionImage& label, const ProjectionImage& generated, PsnrVariant variant) {
  const double e = mse(label, generated);
  if (e == 0.0) throw UndefinedValueError("PSNR is undefined for identical images (MSE = 0)");
  const double peak = *std::max_element(generated.data.begin(), generated.data.end());
  if (!(peak > 0)) throw UndefinedValueError("PSNR is undefined when max(G) <= 0");
  const double denom = variant == PsnrVariant::paper ? e : std::sqrt(e);
  return 20.0 * std::log10(peak / denom);
}

namespace {

Aggregate aggregate(const std::vector<double>& v) {
  Aggregate a;
  a.count = v.size();
  if (v.empty()) return a;
  for (double x : v) a.mean += x;
  a.mean /= double(v.size());
  for (double x : v) a.std += (x - a.mean) * (x - a.mean);
  a.std = std::sqrt(a.std / double(v.size()));
  return a;
}

void finalize(MetricsReport& r) {
  std::vector<double> m, s, pp, ps;
  for (const auto& p : r.pairs) {
    m.push_back(p.mse);
    s.push_back(p.ssim);
    if (p.psnr_paper) pp.push_back(*p.psnr_paper);
    if (p.psnr_standard) ps.push_back(*p.psnr_standard);
  }
  r.mse = aggregate(m);
  r.ssim = aggregate(s);
  r.psnr_paper = aggregate(pp);
  r.psnr_standard = aggregate(ps);
}

std::optional<double> try_psnr(const ProjectionImage& l, const ProjectionImage& g, PsnrVariant v) {
  try {
    return psnr(l, g, v);
  } catch (const UndefinedValueError&) {
    return std::nullopt;
  }
}

}  // namespace

MetricsReport evaluate_set(const std::vector<LabeledPair>& pairs, const SsimConfig& cfg) {
  if (pairs.empty()) throw ParameterError("evaluate_set needs at least one pair");
  MetricsReport r;
  for (const auto& p : pairs) {
    const ProjectionImage l = scale_to_unit_range(p.label);
    const ProjectionImage g = scale_to_unit_range(p.generated);
    r.pairs.push_back({p.id, mse(l, g), ssim(l, g, cfg), try_psnr(l, g, PsnrVariant::paper),
                       try_psnr(l, g, PsnrVariant::standard)});
  }
  finalize(r);
  return r;
}

namespace {

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
std::optional<double> opt_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}
json agg_json(const Aggregate& a) { return {{"mean", a.mean}, {"std", a.std}, {"count", a.count}}; }
Aggregate agg_from(const json& j) {
  return {j.at("mean").get<double>(), j.at("std").get<double>(), j.at("count").get<std::size_t>()};
}

}  // namespace

json to_json(const MetricsReport& r) {
  json rows = json::array();
  for (const auto& p : r.pairs)
    rows.push_back({{"id", p.id},
                    {"mse", p.mse},
                    {"ssim", p.ssim},
                    {"psnr_paper", opt_json(p.psnr_paper)},
                    {"psnr_standard", opt_json(p.psnr_standard)},
                    {"psnr_undefined", !p.psnr_paper.has_value()}});
  return {{"scaling", r.scaling},
          {"pairs", rows},
          {"aggregate",
           {{"mse", agg_json(r.mse)},
            {"ssim", agg_json(r.ssim)},
            {"psnr_paper", agg_json(r.psnr_paper)},
            {"psnr_standard", agg_json(r.psnr_standard)}}}};
}

MetricsReport metrics_report_from_json(const json& j) {
  try {
    MetricsReport r;
    r.scaling = j.at("scaling").get<std::string>();
    for (const auto& p : j.at("pairs"))
      r.pairs.push_back({p.at("id").get<std::string>(), p.at("mse").get<double>(), p.at("ssim").get<double>(),
                         opt_from(p.at("psnr_paper")), opt_from(p.at("psnr_standard"))});
    const auto& a = j.at("aggregate");
    r.mse = agg_from(a.at("mse"));
    r.ssim = agg_from(a.at("ssim"));
    r.psnr_paper = agg_from(a.at("psnr_paper"));
    r.psnr_standard = agg_from(a.at("psnr_standard"));
    return r;
  } catch (const json::exception& e) {
    throw LoadError(std::string("malformed metrics report: ") + e.what());
  }
}

std::string to_csv(const MetricsReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "id,mse,ssim,psnr_paper,psnr_standard\n";
  auto opt = [](const std::optional<double>& v) {
    if (!v) return std::string("nan");
    std::ostringstream s;
    s.precision(17);
    s << *v;
    return s.str();
  };
  for (const auto& p : r.pairs)
    os << p.id << ',' << p.mse << ',' << p.ssim << ',' << opt(p.psnr_paper) << ',' << opt(p.psnr_standard) << '\n';
  return os.str();
}

}  // namespace projsynth
