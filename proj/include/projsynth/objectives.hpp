#pragma once

// Training objectives: pixel-wise l1 and the perceptual (feature-space) loss.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "projsynth/ops.hpp"
#include "projsynth/weights.hpp"

namespace projsynth {

enum class Reduction { sum, mean };

enum class LossKind { l1, perceptual };

std::string to_string(LossKind k);
/// Throws ConfigError listing the valid names.
LossKind loss_kind_from_string(const std::string& s);

struct LossConfig {
  LossKind kind = LossKind::l1;
  /// l1 only: sum over pixels (the plain definition) or divide by N.
  Reduction l1_reduction = Reduction::sum;
  /// perceptual only; empty selects the network's default layer set.
  std::vector<std::string> layers;
  /// One weight per layer (all 1 when empty).
  std::vector<double> layer_weights;

  void validate() const;
};

nlohmann::json to_json(const LossConfig& c);
LossConfig loss_config_from_json(const nlohmann::json& j);

/// sum_i |L(i) - G(i)| (or its mean).
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& label, const Tensor<T>& generated, Reduction reduction = Reduction::sum);

/// Frozen feed-forward stack of conv3x3 / relu / maxpool layers whose named
/// activations define the perceptual loss.
template <typename T>
class EvaluationNetwork {
 public:
  struct Layer {
    enum class Kind { conv, relu, maxpool } kind;
    std::string name;
    Tensor<T> weight, bias;  // conv only
  };

  /// VGG-19 topology with channel widths 64,128,256,512,512 divided by
  /// width_divisor, He-uniform weights drawn from seed.
  static EvaluationNetwork vgg19(int width_divisor, std::uint64_t seed);
  /// Same topology with weights from an archive (conv<b>_<i>.weight/.bias).
  static EvaluationNetwork vgg19_from_archive(const WeightsArchive& archive);
  /// One 1x1 convolution with identity weights, layer name "identity".
  static EvaluationNetwork identity(std::size_t channels);

  std::size_t input_channels() const;
  bool has_layer(const std::string& name) const;
  const std::vector<Layer>& layers() const { return layers_; }
  const std::vector<std::string>& default_layers() const { return default_layers_; }

  /// Activations at the requested layers, in request order.
  std::vector<Tensor<T>> features(const Tensor<T>& x, const std::vector<std::string>& names) const;

  WeightsArchive to_archive() const;

 private:
  std::vector<Layer> layers_;
  std::vector<std::string> default_layers_;
};

template <typename T>
EvaluationNetwork<T> load_evaluation_network(const std::filesystem::path& manifest) {
  return EvaluationNetwork<T>::vgg19_from_archive(load_weights(manifest));
}

/// sum_k w_k * mean|V_k(L) - V_k(G)|. Gradients flow to G only. Single-channel
/// inputs are replicated to the network's input channel count.
template <typename T>
Tensor<T> perceptual_loss(const Tensor<T>& label, const Tensor<T>& generated, const EvaluationNetwork<T>& net,
                          const LossConfig& cfg);

/// Dispatches on cfg.kind; net may be null for l1.
template <typename T>
Tensor<T> compute_loss(const Tensor<T>& label, const Tensor<T>& generated, const LossConfig& cfg,
                       const EvaluationNetwork<T>* net);

extern template class EvaluationNetwork<float>;
extern template class EvaluationNetwork<double>;

}  // namespace projsynth
