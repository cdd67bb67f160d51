#pragma once

// Image-to-image generators mapping a 1-channel MR projection to a 1-channel
// synthetic X-ray projection of the same resolution.

#include <cstdint>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "projsynth/ops.hpp"
#include "projsynth/parameters.hpp"
#include "projsynth/projector.hpp"

namespace projsynth {

enum class Architecture { unet, resnet, crn };

std::string to_string(Architecture a);
/// Throws ConfigError listing the valid names.
Architecture architecture_from_string(const std::string& s);

/// Encoder-decoder with skip concatenations. Level i carries
/// base_channels * 2^i channels; resolution changes use stride-2 convolutions
/// and stride-2 transposed convolutions.
struct UNetConfig {
  int depth = 4;
  int base_channels = 32;
  int kernel = 3;
  double dropout_keep = 0.5;
  int dropout_levels = 3;

  void validate() const;
};

/// Residual style-transfer generator: stem, two stride-2 downsamplings,
/// residual blocks, two transposed-conv upsamplings, output conv.
struct ResNetGenConfig {
  int n_residual_blocks = 9;
  int stem_channels = 32;
  int down1_channels = 64;
  int down2_channels = 128;
  int stem_kernel = 7;
  int kernel = 3;
  int out_kernel = 7;

  void validate() const;
};

/// Cascaded refinement network. Module m works at (coarse_h, coarse_w) * 2^m.
struct CRNConfig {
  int n_modules = 8;
  std::size_t coarse_h = 4;
  std::size_t coarse_w = 4;
  /// Per-module widths; empty selects 256 halving per scale, floored at 8.
  std::vector<int> widths;
  double lrelu_slope = 0.2;

  std::vector<int> resolved_widths() const;
  std::size_t finest_h() const { return coarse_h << (n_modules - 1); }
  std::size_t finest_w() const { return coarse_w << (n_modules - 1); }
  void validate() const;
};

using ModelConfig = std::variant<UNetConfig, ResNetGenConfig, CRNConfig>;

Architecture architecture_of(const ModelConfig& config);
nlohmann::json to_json(const ModelConfig& config);
/// Expects {"arch": "unet"|"resnet"|"crn", ...fields}; unknown keys rejected.
ModelConfig model_config_from_json(const nlohmann::json& j);
/// Default configuration of an architecture.
ModelConfig default_model_config(Architecture arch);

template <typename T>
class Generator {
 public:
  virtual ~Generator() = default;

  virtual Architecture architecture() const = 0;
  virtual ModelConfig config() const = 0;

  /// input is N x 1 x H x W. Throws DimensionError (ConfigError for the CRN)
  /// when the resolution does not suit the architecture.
  Tensor<T> forward(const Tensor<T>& input, bool training);
  virtual void check_input(std::size_t h, std::size_t w) const = 0;

  ParameterSet<T>& parameters() { return params_; }
  const ParameterSet<T>& parameters() const { return params_; }

  /// Number of training-mode forward passes so far; selects dropout masks.
  std::uint64_t dropout_counter() const { return dropout_counter_; }
  void set_dropout_counter(std::uint64_t c) { dropout_counter_ = c; }
  /// Construction seed; it also keys the dropout stream.
  std::uint64_t seed() const { return seed_; }
  void set_seed(std::uint64_t s) { seed_ = s; }

 protected:
  explicit Generator(std::uint64_t seed) : seed_(seed) {}

  virtual Tensor<T> run(const Tensor<T>& x, bool training, std::uint64_t dropout_seed) = 0;

  struct Conv {
    Tensor<T> weight, bias;
    int stride = 1, pad = 0, out_pad = 0;
    bool transposed = false;
    Tensor<T> operator()(const Tensor<T>& x) const;
  };
  struct Affine {
    Tensor<T> gamma, beta;
  };

  /// He-uniform kernel, zero bias. Each tensor draws from a stream seeded by
  /// (model seed, parameter name), so shapes elsewhere do not shift it.
  Conv make_conv(const std::string& name, int cin, int cout, int k, int stride, int pad);
  Conv make_conv_transpose(const std::string& name, int cin, int cout, int k, int stride, int pad, int out_pad);
  Affine make_affine(const std::string& name, int channels);

  std::uint64_t seed_;
  ParameterSet<T> params_;

 private:
  std::uint64_t dropout_counter_ = 0;
};

template <typename T>
class UNet final : public Generator<T> {
 public:
  UNet(const UNetConfig& config, std::uint64_t seed);
  Architecture architecture() const override { return Architecture::unet; }
  ModelConfig config() const override { return config_; }
  void check_input(std::size_t h, std::size_t w) const override;

  int level_channels(int level) const { return config_.base_channels << level; }
  /// Decoder levels (counted from the bottleneck) that apply dropout.
  int active_dropout_levels() const;

 protected:
  Tensor<T> run(const Tensor<T>& x, bool training, std::uint64_t dropout_seed) override;

 private:
  using Conv = typename Generator<T>::Conv;
  UNetConfig config_;
  std::vector<Conv> enc_, down_, up_, dec_;
  Conv out_;
};

template <typename T>
class ResNetGenerator final : public Generator<T> {
 public:
  ResNetGenerator(const ResNetGenConfig& config, std::uint64_t seed);
  Architecture architecture() const override { return Architecture::resnet; }
  ModelConfig config() const override { return config_; }
  void check_input(std::size_t h, std::size_t w) const override;

  int num_residual_blocks() const { return int(blocks_.size()); }
  /// Parameter name prefix of block i's second convolution.
  static std::string residual_second_conv(int i) { return "res" + std::to_string(i) + ".conv2"; }

 protected:
  Tensor<T> run(const Tensor<T>& x, bool training, std::uint64_t dropout_seed) override;

 private:
  using Conv = typename Generator<T>::Conv;
  using Affine = typename Generator<T>::Affine;
  struct Block {
    Conv conv1, conv2;
    Affine norm1, norm2;
  };
  struct Stage {
    Conv conv;
    Affine norm;
  };
  Tensor<T> stage(const Stage& s, const Tensor<T>& x) const;

  ResNetGenConfig config_;
  Stage stem_, down1_, down2_, up1_, up2_;
  std::vector<Block> blocks_;
  Conv out_;
};

template <typename T>
class CascadedRefinementNetwork final : public Generator<T> {
 public:
  CascadedRefinementNetwork(const CRNConfig& config, std::uint64_t seed);
  Architecture architecture() const override { return Architecture::crn; }
  ModelConfig config() const override { return config_; }
  void check_input(std::size_t h, std::size_t w) const override;

  int num_modules() const { return int(modules_.size()); }
  int output_channels() const { return int(out_.weight.dim(0)); }
  /// Shapes of each module's output features from the most recent forward.
  const std::vector<Shape>& last_feature_shapes() const { return feature_shapes_; }

 protected:
  Tensor<T> run(const Tensor<T>& x, bool training, std::uint64_t dropout_seed) override;

 private:
  using Conv = typename Generator<T>::Conv;
  using Affine = typename Generator<T>::Affine;
  struct Module {
    Conv conv1, conv2;
    Affine norm1, norm2;
  };

  CRNConfig config_;
  std::vector<Module> modules_;
  Conv out_;
  std::vector<Shape> feature_shapes_;
};

template <typename T>
std::unique_ptr<UNet<T>> build_unet(const UNetConfig& config, std::uint64_t seed) {
  return std::make_unique<UNet<T>>(config, seed);
}
template <typename T>
std::unique_ptr<ResNetGenerator<T>> build_resnet_generator(const ResNetGenConfig& config, std::uint64_t seed) {
  return std::make_unique<ResNetGenerator<T>>(config, seed);
}
template <typename T>
std::unique_ptr<CascadedRefinementNetwork<T>> build_crn(const CRNConfig& config, std::uint64_t seed) {
  return std::make_unique<CascadedRefinementNetwork<T>>(config, seed);
}

template <typename T>
std::unique_ptr<Generator<T>> build_generator(const ModelConfig& config, std::uint64_t seed);

/// Image in, image out, no graph. Output is tagged SYNTH; a non-finite output
/// throws NumericalError.
ProjectionImage synthesize(Generator<float>& model, const ProjectionImage& input, bool training = false);

Tensor<float> image_to_tensor(const ProjectionImage& image);
ProjectionImage tensor_to_image(const Tensor<float>& tensor, double du, double dv, Modality modality);

/// 64-bit avalanche mix used to derive independent seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
std::uint64_t hash_name(const std::string& name);

extern template class Generator<float>;
extern template class Generator<double>;
extern template class UNet<float>;
extern template class UNet<double>;
extern template class ResNetGenerator<float>;
extern template class ResNetGenerator<double>;
extern template class CascadedRefinementNetwork<float>;
extern template class CascadedRefinementNetwork<double>;

}  // namespace projsynth
