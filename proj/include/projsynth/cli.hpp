#pragma once

// Shell driver: gen-phantom, project, train, synth, eval.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "projsynth/generators.hpp"
#include "projsynth/metrics.hpp"
#include "projsynth/objectives.hpp"
#include "projsynth/phantom.hpp"
#include "projsynth/training.hpp"

namespace projsynth::cli {

enum ExitCode : int { ok = 0, usage = 1, data_io = 2, numerical = 3 };

struct PhantomSettings {
  int size = 64;
  double fov_mm = 200.0;  // edge length of the cubic volume
  std::uint64_t seed = 0;
  int supersample = 1;
  std::optional<PhantomSpec> spec;  // default head spec when empty
};

struct GeometrySettings {
  int views = 72;
  double angular_range_deg = 360.0;
  double sid_mm = 750.0;
  double sdd_mm = 1200.0;
  int detector_pixels = 64;
  double detector_extent_mm = 317.44;  // 512 x 0.62 mm
  std::optional<double> step_mm;       // default: half the voxel spacing
};

struct SplitSettings {
  std::optional<int> train;  // default: views - test
  std::optional<int> test;   // default: views / 8, at least 1
  std::uint64_t seed = 0;
};

struct EvalNetSettings {
  std::string weights;  // VGG-19 weights manifest; empty selects seeded weights
  int width_divisor = 8;
};

/// Merged configuration of all stages. Every section is optional in the file.
struct PipelineConfig {
  PhantomSettings phantom;
  GeometrySettings geometry;
  SplitSettings split;
  std::optional<ModelConfig> model;  // default architecture config when empty
  TrainConfig train;
  LossConfig loss;
  EvalNetSettings evaluation_network;
  SsimConfig metrics;

  void validate() const;
};

/// Unknown keys at any level throw ConfigError.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

/// Deepest cascade (at most 8 modules, coarse side >= 4) whose finest
/// resolution equals h x w; a single module at h x w when none divides.
CRNConfig fit_crn_to_resolution(std::size_t h, std::size_t w);

/// Parses argv, runs one subcommand, maps errors onto ExitCode.
int run(int argc, char** argv);

}  // namespace projsynth::cli
