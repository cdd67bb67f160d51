#include "projsynth/objectives.hpp"

#include <cmath>
#include <random>
#include <set>

#include "projsynth/error.hpp"
#include "projsynth/generators.hpp"

namespace projsynth {

using nlohmann::json;

std::string to_string(LossKind k) { return k == LossKind::l1 ? "l1" : "perceptual"; }

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "l1") return LossKind::l1;
  if (s == "perceptual") return LossKind::perceptual;
  throw ConfigError("unknown loss '" + s + "' (valid: l1, perceptual)");
}

void LossConfig::validate() const {
  if (!layer_weights.empty() && layer_weights.size() != layers.size())
    throw ConfigError("perceptual loss needs one weight per selected layer");
  for (double w : layer_weights)
    if (!(w > 0)) throw ConfigError("perceptual layer weights must be > 0");
}

json to_json(const LossConfig& c) {
  return {{"kind", to_string(c.kind)},
          {"l1_reduction", c.l1_reduction == Reduction::sum ? "sum" : "mean"},
          {"layers", c.layers},
          {"layer_weights", c.layer_weights}};
}

LossConfig loss_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("loss config must be a JSON object");
  for (const auto& [k, _] : j.items())
    if (k != "kind" && k != "l1_reduction" && k != "layers" && k != "layer_weights")
      throw ConfigError("unknown key '" + k + "' in loss config");
  try {
    LossConfig c;
    if (j.contains("kind")) c.kind = loss_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("l1_reduction")) {
      const auto r = j.at("l1_reduction").get<std::string>();
      if (r != "sum" && r != "mean") throw ConfigError("l1_reduction must be 'sum' or 'mean'");
      c.l1_reduction = r == "sum" ? Reduction::sum : Reduction::mean;
    }
    if (j.contains("layers")) c.layers = j.at("layers").get<std::vector<std::string>>();
    if (j.contains("layer_weights")) c.layer_weights = j.at("layer_weights").get<std::vector<double>>();
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed loss config: ") + e.what());
  }
}

template <typename T>
Tensor<T> l1_loss(const Tensor<T>& label, const Tensor<T>& generated, Reduction reduction) {
  if (label.shape() != generated.shape())
    throw DimensionError("l1_loss: " + shape_to_string(label.shape()) + " vs " + shape_to_string(generated.shape()));
  const Tensor<T> d = abs(sub(label, generated));
  return reduction == Reduction::sum ? sum(d) : mean(d);
}

// --- evaluation network ----------------------------------------------------

namespace {

struct VggBlock {
  int block, convs, width;
};
constexpr VggBlock kVgg19[] = {{1, 2, 64}, {2, 2, 128}, {3, 4, 256}, {4, 4, 512}, {5, 4, 512}};

std::string conv_name(int b, int i) { return "conv" + std::to_string(b) + "_" + std::to_string(i); }
std::string relu_name(int b, int i) { return "relu" + std::to_string(b) + "_" + std::to_string(i); }

std::vector<std::string> vgg_default_layers() {
  std::vector<std::string> names;
  for (const auto& b : kVgg19) names.push_back(relu_name(b.block, 2));
  return names;
}

}  // namespace

template <typename T>
EvaluationNetwork<T> EvaluationNetwork<T>::vgg19(int width_divisor, std::uint64_t seed) {
  if (width_divisor < 1) throw ConfigError("width_divisor must be >= 1");
  WeightsArchive a;
  std::size_t cin = 3;
  for (const auto& b : kVgg19) {
    const std::size_t cout = std::max(1, b.width / width_divisor);
    for (int i = 1; i <= b.convs; ++i) {
      const std::string n = conv_name(b.block, i);
      std::mt19937_64 rng(mix_seed(seed, hash_name(n)));
      const double bound = std::sqrt(6.0 / double(cin * 9));
      std::vector<float> w(cout * cin * 9);
      for (auto& v : w) v = float(bound * (2.0 * (double(rng() >> 11) * 0x1.0p-53) - 1.0));
      a.add(n + ".weight", {cout, cin, 3, 3}, std::move(w));
      a.add(n + ".bias", {cout}, std::vector<float>(cout, 0.0f));
      cin = cout;
    }
  }
  return vgg19_from_archive(a);
}

template <typename T>
EvaluationNetwork<T> EvaluationNetwork<T>::vgg19_from_archive(const WeightsArchive& archive) {
  EvaluationNetwork net;
  std::size_t prev_out = 0;
  auto frozen = [](const StoredTensor& s) {
    return Tensor<T>(s.shape, std::vector<T>(s.data.begin(), s.data.end()), false);
  };
  for (const auto& b : kVgg19) {
    for (int i = 1; i <= b.convs; ++i) {
      const std::string n = conv_name(b.block, i);
      const StoredTensor& w = archive.get(n + ".weight");
      const StoredTensor& bias = archive.get(n + ".bias");
      if (w.shape.size() != 4 || w.shape[2] != 3 || w.shape[3] != 3)
        throw LoadError("tensor '" + n + ".weight': expected Cout x Cin x 3 x 3, got " + shape_to_string(w.shape));
      if (prev_out != 0 && w.shape[1] != prev_out)
        throw LoadError("tensor '" + n + ".weight': expects " + std::to_string(w.shape[1]) +
                        " input channels but the previous layer produces " + std::to_string(prev_out));
      if (bias.shape != Shape{w.shape[0]})
        throw LoadError("tensor '" + n + ".bias': expected shape [" + std::to_string(w.shape[0]) + "], got " +
                        shape_to_string(bias.shape));
      prev_out = w.shape[0];
      net.layers_.push_back({Layer::Kind::conv, n, frozen(w), frozen(bias)});
      net.layers_.push_back({Layer::Kind::relu, relu_name(b.block, i), {}, {}});
    }
    net.layers_.push_back({Layer::Kind::maxpool, "pool" + std::to_string(b.block), {}, {}});
  }
  net.default_layers_ = vgg_default_layers();
  return net;
}

template <typename T>
EvaluationNetwork<T> EvaluationNetwork<T>::identity(std::size_t channels) {
  EvaluationNetwork net;
  std::vector<T> w(channels * channels, T(0));
  for (std::size_t c = 0; c < channels; ++c) w[c * channels + c] = T(1);
  net.layers_.push_back({Layer::Kind::conv, "identity", Tensor<T>({channels, channels, 1, 1}, std::move(w)), {}});
  net.default_layers_ = {"identity"};
  return net;
}

template <typename T>
std::size_t EvaluationNetwork<T>::input_channels() const {
  for (const auto& l : layers_)
    if (l.kind == Layer::Kind::conv) return l.weight.dim(1);
  throw ConfigError("evaluation network has no convolution layers");
}

template <typename T>
bool EvaluationNetwork<T>::has_layer(const std::string& name) const {
  for (const auto& l : layers_)
    if (l.name == name) return true;
  return false;
}

template <typename T>
std::vector<Tensor<T>> EvaluationNetwork<T>::features(const Tensor<T>& x, const std::vector<std::string>& names) const {
  for (const auto& n : names)
    if (!has_layer(n)) throw ConfigError("evaluation network has no layer named '" + n + "'");
  std::vector<Tensor<T>> out(names.size());
  std::size_t found = 0;
  Tensor<T> h = x;
  for (const auto& l : layers_) {
    if (found == names.size()) break;
    switch (l.kind) {
      case Layer::Kind::conv: h = conv2d(h, l.weight, l.bias, 1, int(l.weight.dim(2) / 2)); break;
      case Layer::Kind::relu: h = relu(h); break;
      case Layer::Kind::maxpool: h = max_pool2x2(h); break;
    }
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == l.name) {
        out[i] = h;
        ++found;
      }
  }
  return out;
}

template <typename T>
WeightsArchive EvaluationNetwork<T>::to_archive() const {
  WeightsArchive a;
  for (const auto& l : layers_) {
    if (l.kind != Layer::Kind::conv) continue;
    a.add(l.name + ".weight", l.weight.shape(), std::vector<float>(l.weight.data().begin(), l.weight.data().end()));
    if (l.bias.defined())
      a.add(l.name + ".bias", l.bias.shape(), std::vector<float>(l.bias.data().begin(), l.bias.data().end()));
  }
  return a;
}

// --- perceptual loss -------------------------------------------------------

namespace {

template <typename T>
Tensor<T> replicate_channels(const Tensor<T>& x, std::size_t channels) {
  if (x.dim(1) == channels) return x;
  if (x.dim(1) != 1)
    throw DimensionError("perceptual loss: cannot map " + std::to_string(x.dim(1)) + " channels onto " +
                         std::to_string(channels));
  Tensor<T> out = x;
  for (std::size_t c = 1; c < channels; ++c) out = concat_channels(out, x);
  return out;
}

}  // namespace

template <typename T>
Tensor<T> perceptual_loss(const Tensor<T>& label, const Tensor<T>& generated, const EvaluationNetwork<T>& net,
                          const LossConfig& cfg) {
  cfg.validate();
  if (label.shape() != generated.shape())
    throw DimensionError("perceptual_loss: " + shape_to_string(label.shape()) + " vs " +
                         shape_to_string(generated.shape()));
  const auto& names = cfg.layers.empty() ? net.default_layers() : cfg.layers;
  for (const auto& n : names)
    if (!net.has_layer(n)) throw ConfigError("perceptual loss: evaluation network has no layer named '" + n + "'");

  const std::size_t ch = net.input_channels();
  std::vector<Tensor<T>> label_features;
  {
    NoGradGuard no_grad;
    label_features = net.features(replicate_channels(label.detach(), ch), names);
  }
  const auto gen_features = net.features(replicate_channels(generated, ch), names);

  Tensor<T> total;
  for (std::size_t k = 0; k < names.size(); ++k) {
    const T w = cfg.layer_weights.empty() ? T(1) : T(cfg.layer_weights[k]);
    Tensor<T> term = mean(abs(sub(gen_features[k], label_features[k])));
    if (w != T(1)) term = scale(term, w);
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

template <typename T>
Tensor<T> compute_loss(const Tensor<T>& label, const Tensor<T>& generated, const LossConfig& cfg,
                       const EvaluationNetwork<T>* net) {
  if (cfg.kind == LossKind::l1) return l1_loss(label, generated, cfg.l1_reduction);
  if (!net) throw ConfigError("perceptual loss requires an evaluation network");
  return perceptual_loss(label, generated, *net, cfg);
}

template class EvaluationNetwork<float>;
template class EvaluationNetwork<double>;
template Tensor<float> l1_loss(const Tensor<float>&, const Tensor<float>&, Reduction);
template Tensor<double> l1_loss(const Tensor<double>&, const Tensor<double>&, Reduction);
template Tensor<float> perceptual_loss(const Tensor<float>&, const Tensor<float>&, const EvaluationNetwork<float>&,
                                       const LossConfig&);
template Tensor<double> perceptual_loss(const Tensor<double>&, const Tensor<double>&,
                                        const EvaluationNetwork<double>&, const LossConfig&);
template Tensor<float> compute_loss(const Tensor<float>&, const Tensor<float>&, const LossConfig&,
                                    const EvaluationNetwork<float>*);
template Tensor<double> compute_loss(const Tensor<double>&, const Tensor<double>&, const LossConfig&,
                                     const EvaluationNetwork<double>*);

}  // namespace projsynth
