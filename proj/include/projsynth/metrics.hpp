#pragma once

// Image-quality metrics on [-1, 1]-scaled projection pairs.

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "projsynth/projector.hpp"

namespace projsynth {

struct SsimConfig {
  enum class Window { gaussian, uniform };

  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 2.0;  // span of [-1, 1]
  Window window = Window::gaussian;
  int window_size = 11;
  double sigma = 1.5;  // gaussian only

  double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
  double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
  /// window_size^2 weights, row-major, summing to 1.
  std::vector<double> weights() const;
  void validate() const;
};

/// Linear map of [min, max] onto [-1, 1]; a constant image maps to all zeros.
ProjectionImage scale_to_unit_range(const ProjectionImage& image);

double mse(const ProjectionImage& label, const ProjectionImage& generated);

/// Mean SSIM over every fully contained window position (no padding).
double ssim(const ProjectionImage& label, const ProjectionImage& generated, const SsimConfig& cfg = {});

enum class PsnrVariant {
  paper,     // 20 log10(max(G) / MSE)
  standard,  // 20 log10(max(G) / sqrt(MSE))
};

/// Throws UndefinedValueError when MSE is 0 or max(G) <= 0.
double psnr(const ProjectionImage& label, const ProjectionImage& generated, PsnrVariant variant);

struct PairMetrics {
  std::string id;
  double mse = 0;
  double ssim = 0;
  std::optional<double> psnr_paper;  // empty when undefined (identical images)
  std::optional<double> psnr_standard;
};

struct Aggregate {
  double mean = 0;
  double std = 0;  // population standard deviation
  std::size_t count = 0;
};

struct MetricsReport {
  std::vector<PairMetrics> pairs;
  Aggregate mse, ssim, psnr_paper, psnr_standard;  // psnr aggregates skip undefined entries
  std::string scaling = "unit_range[-1,1]";
};

struct LabeledPair {
  std::string id;
  ProjectionImage label;
  ProjectionImage generated;
};

/// Scales both images of every pair to [-1, 1] before measuring.
MetricsReport evaluate_set(const std::vector<LabeledPair>& pairs, const SsimConfig& cfg = {});

nlohmann::json to_json(const MetricsReport& report);
MetricsReport metrics_report_from_json(const nlohmann::json& j);
/// Header "id,mse,ssim,psnr_paper,psnr_standard"; undefined PSNR is written as "nan".
std::string to_csv(const MetricsReport& report);

}  // namespace projsynth
