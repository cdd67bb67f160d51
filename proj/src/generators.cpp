#include "projsynth/generators.hpp"

#include <cmath>
#include <random>
#include <set>

#include "projsynth/error.hpp"

namespace projsynth {

using nlohmann::json;

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a combined word
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t hash_name(const std::string& name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::unet: return "unet";
    case Architecture::resnet: return "resnet";
    case Architecture::crn: return "crn";
  }
  return "?";
}

Architecture architecture_from_string(const std::string& s) {
  if (s == "unet") return Architecture::unet;
  if (s == "resnet") return Architecture::resnet;
  if (s == "crn") return Architecture::crn;
  throw ConfigError("unknown architecture '" + s + "' (valid: unet, resnet, crn)");
}

// --- configs ---------------------------------------------------------------

void UNetConfig::validate() const {
  if (depth < 1) throw ConfigError("unet depth must be >= 1");
  if (base_channels < 1) throw ConfigError("unet base_channels must be >= 1");
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("unet kernel must be odd");
  if (!(dropout_keep > 0 && dropout_keep <= 1)) throw ConfigError("unet dropout_keep must lie in (0, 1]");
  if (dropout_levels < 0 || dropout_levels > depth) throw ConfigError("unet dropout_levels must lie in [0, depth]");
}

void ResNetGenConfig::validate() const {
  if (n_residual_blocks < 1) throw ConfigError("resnet n_residual_blocks must be >= 1");
  if (stem_channels < 1 || down1_channels < 1 || down2_channels < 1)
    throw ConfigError("resnet channel widths must be >= 1");
  for (int k : {stem_kernel, kernel, out_kernel})
    if (k < 1 || k % 2 == 0) throw ConfigError("resnet kernel sizes must be odd");
}

std::vector<int> CRNConfig::resolved_widths() const {
  if (!widths.empty()) return widths;
  std::vector<int> w;
  for (int m = 0; m < n_modules; ++m) w.push_back(std::max(8, m < 30 ? 256 >> m : 0));
  return w;
}

void CRNConfig::validate() const {
  if (n_modules < 1 || n_modules > 16) throw ConfigError("crn n_modules must lie in [1, 16]");
  if (coarse_h < 1 || coarse_w < 1) throw ConfigError("crn coarsest resolution must be >= 1");
  if (!widths.empty() && int(widths.size()) != n_modules)
    throw ConfigError("crn widths must list one entry per module");
  const auto w = resolved_widths();
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] < 1) throw ConfigError("crn widths must be >= 1");
    if (i > 0 && w[i] > w[i - 1]) throw ConfigError("crn widths must be non-increasing with scale");
  }
  if (!(lrelu_slope >= 0 && lrelu_slope < 1)) throw ConfigError("crn lrelu_slope must lie in [0, 1)");
}

Architecture architecture_of(const ModelConfig& c) {
  return std::visit(
      [](const auto& v) {
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, UNetConfig>) return Architecture::unet;
        else if constexpr (std::is_same_v<V, ResNetGenConfig>) return Architecture::resnet;
        else return Architecture::crn;
      },
      c);
}

ModelConfig default_model_config(Architecture arch) {
  switch (arch) {
    case Architecture::unet: return UNetConfig{};
    case Architecture::resnet: return ResNetGenConfig{};
    case Architecture::crn: return CRNConfig{};
  }
  throw ConfigError("unknown architecture");
}

json to_json(const ModelConfig& c) {
  return std::visit(
      [](const auto& v) -> json {
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, UNetConfig>) {
          return {{"arch", "unet"},          {"depth", v.depth},
                  {"base_channels", v.base_channels}, {"kernel", v.kernel},
                  {"dropout_keep", v.dropout_keep},   {"dropout_levels", v.dropout_levels}};
        } else if constexpr (std::is_same_v<V, ResNetGenConfig>) {
          return {{"arch", "resnet"},
                  {"n_residual_blocks", v.n_residual_blocks},
                  {"stem_channels", v.stem_channels},
                  {"down1_channels", v.down1_channels},
                  {"down2_channels", v.down2_channels},
                  {"stem_kernel", v.stem_kernel},
                  {"kernel", v.kernel},
                  {"out_kernel", v.out_kernel}};
        } else {
          return {{"arch", "crn"},
                  {"n_modules", v.n_modules},
                  {"coarse_h", v.coarse_h},
                  {"coarse_w", v.coarse_w},
                  {"widths", v.resolved_widths()},
                  {"lrelu_slope", v.lrelu_slope}};
        }
      },
      c);
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed) {
  for (const auto& [k, _] : j.items())
    if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' in model config");
}

template <typename V>
void read_opt(const json& j, const char* key, V& out) {
  if (j.contains(key)) out = j.at(key).get<V>();
}

}  // namespace

ModelConfig model_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  try {
    const Architecture arch = architecture_from_string(j.at("arch").get<std::string>());
    switch (arch) {
      case Architecture::unet: {
        reject_unknown(j, {"arch", "depth", "base_channels", "kernel", "dropout_keep", "dropout_levels"});
        UNetConfig c;
        read_opt(j, "depth", c.depth);
        read_opt(j, "base_channels", c.base_channels);
        read_opt(j, "kernel", c.kernel);
        read_opt(j, "dropout_keep", c.dropout_keep);
        read_opt(j, "dropout_levels", c.dropout_levels);
        c.validate();
        return c;
      }
      case Architecture::resnet: {
        reject_unknown(j, {"arch", "n_residual_blocks", "stem_channels", "down1_channels", "down2_channels",
                           "stem_kernel", "kernel", "out_kernel"});
        ResNetGenConfig c;
        read_opt(j, "n_residual_blocks", c.n_residual_blocks);
        read_opt(j, "stem_channels", c.stem_channels);
        read_opt(j, "down1_channels", c.down1_channels);
        read_opt(j, "down2_channels", c.down2_channels);
        read_opt(j, "stem_kernel", c.stem_kernel);
        read_opt(j, "kernel", c.kernel);
        read_opt(j, "out_kernel", c.out_kernel);
        c.validate();
        return c;
      }
      case Architecture::crn: {
        reject_unknown(j, {"arch", "n_modules", "coarse_h", "coarse_w", "widths", "lrelu_slope"});
        CRNConfig c;
        read_opt(j, "n_modules", c.n_modules);
        read_opt(j, "coarse_h", c.coarse_h);
        read_opt(j, "coarse_w", c.coarse_w);
        read_opt(j, "widths", c.widths);
        read_opt(j, "lrelu_slope", c.lrelu_slope);
        c.validate();
        return c;
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
  throw ConfigError("unknown architecture");
}

// --- Generator base --------------------------------------------------------

template <typename T>
Tensor<T> Generator<T>::Conv::operator()(const Tensor<T>& x) const {
  return transposed ? conv2d_transpose(x, weight, bias, stride, pad, out_pad) : conv2d(x, weight, bias, stride, pad);
}

namespace {

template <typename T>
Tensor<T> he_uniform(Shape shape, std::size_t fan_in, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double bound = std::sqrt(6.0 / double(fan_in));
  std::vector<T> data(shape_numel(shape));
  for (auto& v : data) v = T(bound * (2.0 * (double(rng() >> 11) * 0x1.0p-53) - 1.0));
  return Tensor<T>(std::move(shape), std::move(data), true);
}

}  // namespace

template <typename T>
typename Generator<T>::Conv Generator<T>::make_conv(const std::string& name, int cin, int cout, int k, int stride,
                                                    int pad) {
  Conv c;
  c.weight = params_.add(name + ".weight",
                         he_uniform<T>({std::size_t(cout), std::size_t(cin), std::size_t(k), std::size_t(k)},
                                       std::size_t(cin * k * k), mix_seed(seed_, hash_name(name + ".weight"))));
  c.bias = params_.add(name + ".bias", Tensor<T>({std::size_t(cout)}, T(0), true));
  c.stride = stride;
  c.pad = pad;
  return c;
}

template <typename T>
typename Generator<T>::Conv Generator<T>::make_conv_transpose(const std::string& name, int cin, int cout, int k,
                                                              int stride, int pad, int out_pad) {
  Conv c;
  c.weight = params_.add(name + ".weight",
                         he_uniform<T>({std::size_t(cin), std::size_t(cout), std::size_t(k), std::size_t(k)},
                                       std::size_t(cin * k * k), mix_seed(seed_, hash_name(name + ".weight"))));
  c.bias = params_.add(name + ".bias", Tensor<T>({std::size_t(cout)}, T(0), true));
  c.stride = stride;
  c.pad = pad;
  c.out_pad = out_pad;
  c.transposed = true;
  return c;
}

template <typename T>
typename Generator<T>::Affine Generator<T>::make_affine(const std::string& name, int channels) {
  Affine a;
  a.gamma = params_.add(name + ".gamma", Tensor<T>({std::size_t(channels)}, T(1), true));
  a.beta = params_.add(name + ".beta", Tensor<T>({std::size_t(channels)}, T(0), true));
  return a;
}

template <typename T>
Tensor<T> Generator<T>::forward(const Tensor<T>& input, bool training) {
  if (input.rank() != 4 || input.dim(1) != 1)
    throw DimensionError("generator input must be N x 1 x H x W, got " + shape_to_string(input.shape()));
  check_input(input.dim(2), input.dim(3));
  std::uint64_t dropout_seed = 0;
  if (training) dropout_seed = mix_seed(seed_ ^ 0xd1b54a32d192ed03ULL, dropout_counter_++);
  return run(input, training, dropout_seed);
}

// --- U-net -----------------------------------------------------------------

template <typename T>
UNet<T>::UNet(const UNetConfig& config, std::uint64_t seed) : Generator<T>(seed), config_(config) {
  config_.validate();
  const int k = config_.kernel, p = k / 2;
  enc_.push_back(this->make_conv("enc0", 1, level_channels(0), k, 1, p));
  for (int i = 1; i < config_.depth; ++i) {
    down_.push_back(this->make_conv("down" + std::to_string(i), level_channels(i - 1), level_channels(i), k, 2, p));
    enc_.push_back(this->make_conv("enc" + std::to_string(i), level_channels(i), level_channels(i), k, 1, p));
  }
  // up_[i] / dec_[i] produce level i (i = depth-2 ... 0); stored by level.
  for (int i = 0; i + 1 < config_.depth; ++i) {
    up_.push_back(this->make_conv_transpose("up" + std::to_string(i), level_channels(i + 1), level_channels(i), k, 2,
                                            p, 1));
    dec_.push_back(this->make_conv("dec" + std::to_string(i), 2 * level_channels(i), level_channels(i), k, 1, p));
  }
  out_ = this->make_conv("out", level_channels(0), 1, 1, 1, 0);
}

template <typename T>
int UNet<T>::active_dropout_levels() const {
  return std::min(config_.dropout_levels, config_.depth - 1);
}

template <typename T>
void UNet<T>::check_input(std::size_t h, std::size_t w) const {
  const std::size_t f = std::size_t(1) << (config_.depth - 1);
  if (h % f != 0 || w % f != 0)
    throw DimensionError("unet of depth " + std::to_string(config_.depth) + " needs H and W divisible by " +
                         std::to_string(f) + ", got " + std::to_string(h) + "x" + std::to_string(w));
}

template <typename T>
Tensor<T> UNet<T>::run(const Tensor<T>& x, bool training, std::uint64_t dropout_seed) {
  std::vector<Tensor<T>> skips;
  Tensor<T> h = relu(enc_[0](x));
  skips.push_back(h);
  for (int i = 1; i < config_.depth; ++i) {
    h = relu(down_[i - 1](h));
    h = relu(enc_[i](h));
    skips.push_back(h);
  }
  for (int i = config_.depth - 2, j = 0; i >= 0; --i, ++j) {
    Tensor<T> u = relu(up_[i](h));
    if (j < active_dropout_levels()) u = dropout(u, config_.dropout_keep, training, mix_seed(dropout_seed, j));
    h = relu(dec_[i](concat_channels(u, skips[i])));
  }
  return out_(h);
}

// --- ResNet generator ------------------------------------------------------

template <typename T>
ResNetGenerator<T>::ResNetGenerator(const ResNetGenConfig& config, std::uint64_t seed)
    : Generator<T>(seed), config_(config) {
  config_.validate();
  const auto& c = config_;
  auto stage = [&](const std::string& name, typename Generator<T>::Conv conv, int ch) {
    return Stage{conv, this->make_affine(name + ".norm", ch)};
  };
  stem_ = stage("stem", this->make_conv("stem.conv", 1, c.stem_channels, c.stem_kernel, 1, c.stem_kernel / 2),
                c.stem_channels);
  down1_ = stage("down1", this->make_conv("down1.conv", c.stem_channels, c.down1_channels, c.kernel, 2, c.kernel / 2),
                 c.down1_channels);
  down2_ = stage("down2",
                 this->make_conv("down2.conv", c.down1_channels, c.down2_channels, c.kernel, 2, c.kernel / 2),
                 c.down2_channels);
  for (int i = 0; i < c.n_residual_blocks; ++i) {
    const std::string n = "res" + std::to_string(i);
    Block b;
    b.conv1 = this->make_conv(n + ".conv1", c.down2_channels, c.down2_channels, c.kernel, 1, c.kernel / 2);
    b.norm1 = this->make_affine(n + ".norm1", c.down2_channels);
    b.conv2 = this->make_conv(residual_second_conv(i), c.down2_channels, c.down2_channels, c.kernel, 1, c.kernel / 2);
    b.norm2 = this->make_affine(n + ".norm2", c.down2_channels);
    blocks_.push_back(b);
  }
  up1_ = stage("up1",
               this->make_conv_transpose("up1.conv", c.down2_channels, c.down1_channels, c.kernel, 2, c.kernel / 2, 1),
               c.down1_channels);
  up2_ = stage("up2",
               this->make_conv_transpose("up2.conv", c.down1_channels, c.stem_channels, c.kernel, 2, c.kernel / 2, 1),
               c.stem_channels);
  out_ = this->make_conv("out", c.stem_channels, 1, c.out_kernel, 1, c.out_kernel / 2);
}

template <typename T>
void ResNetGenerator<T>::check_input(std::size_t h, std::size_t w) const {
  if (h % 4 != 0 || w % 4 != 0)
    throw DimensionError("resnet generator needs H and W divisible by 4, got " + std::to_string(h) + "x" +
                         std::to_string(w));
}

namespace {
constexpr double kNormEps = 1e-5;
}

template <typename T>
Tensor<T> ResNetGenerator<T>::stage(const Stage& s, const Tensor<T>& x) const {
  return relu(normalize(s.conv(x), NormMode::instance, kNormEps, s.norm.gamma, s.norm.beta));
}

template <typename T>
Tensor<T> ResNetGenerator<T>::run(const Tensor<T>& x, bool, std::uint64_t) {
  Tensor<T> h = stage(down2_, stage(down1_, stage(stem_, x)));
  for (const Block& b : blocks_) {
    Tensor<T> r = relu(normalize(b.conv1(h), NormMode::instance, kNormEps, b.norm1.gamma, b.norm1.beta));
    r = normalize(b.conv2(r), NormMode::instance, kNormEps, b.norm2.gamma, b.norm2.beta);
    h = add(h, r);
  }
  return out_(stage(up2_, stage(up1_, h)));
}

// --- CRN -------------------------------------------------------------------

template <typename T>
CascadedRefinementNetwork<T>::CascadedRefinementNetwork(const CRNConfig& config, std::uint64_t seed)
    : Generator<T>(seed), config_(config) {
  config_.validate();
  const auto widths = config_.resolved_widths();
  for (int m = 0; m < config_.n_modules; ++m) {
    const std::string n = "module" + std::to_string(m);
    const int cin = 1 + (m > 0 ? widths[m - 1] : 0);
    Module mod;
    mod.conv1 = this->make_conv(n + ".conv1", cin, widths[m], 3, 1, 1);
    mod.norm1 = this->make_affine(n + ".norm1", widths[m]);
    mod.conv2 = this->make_conv(n + ".conv2", widths[m], widths[m], 3, 1, 1);
    mod.norm2 = this->make_affine(n + ".norm2", widths[m]);
    modules_.push_back(mod);
  }
  out_ = this->make_conv("out", widths.back(), 1, 1, 1, 0);
}

template <typename T>
void CascadedRefinementNetwork<T>::check_input(std::size_t h, std::size_t w) const {
  if (h != config_.finest_h() || w != config_.finest_w())
    throw ConfigError("crn configured for " + std::to_string(config_.finest_h()) + "x" +
                      std::to_string(config_.finest_w()) + " input, got " + std::to_string(h) + "x" +
                      std::to_string(w));
}

template <typename T>
Tensor<T> CascadedRefinementNetwork<T>::run(const Tensor<T>& x, bool, std::uint64_t) {
  const Activation act = Activation::lrelu(config_.lrelu_slope);
  feature_shapes_.clear();
  Tensor<T> features;
  for (int m = 0; m < config_.n_modules; ++m) {
    const std::size_t h = config_.coarse_h << m, w = config_.coarse_w << m;
    Tensor<T> in = resize_bilinear(x, h, w);
    if (m > 0) in = concat_channels(in, resize_bilinear(features, h, w));
    const Module& mod = modules_[m];
    features = activate(normalize(mod.conv1(in), NormMode::layer, kNormEps, mod.norm1.gamma, mod.norm1.beta), act);
    features = activate(normalize(mod.conv2(features), NormMode::layer, kNormEps, mod.norm2.gamma, mod.norm2.beta), act);
    feature_shapes_.push_back(features.shape());
  }
  return out_(features);
}

// --- factory / image helpers ------------------------------------------------

template <typename T>
std::unique_ptr<Generator<T>> build_generator(const ModelConfig& config, std::uint64_t seed) {
  return std::visit(
      [seed](const auto& c) -> std::unique_ptr<Generator<T>> {
        using V = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<V, UNetConfig>) return build_unet<T>(c, seed);
        else if constexpr (std::is_same_v<V, ResNetGenConfig>) return build_resnet_generator<T>(c, seed);
        else return build_crn<T>(c, seed);
      },
      config);
}

Tensor<float> image_to_tensor(const ProjectionImage& image) {
  return Tensor<float>({1, 1, image.nv, image.nu}, image.data);
}

ProjectionImage tensor_to_image(const Tensor<float>& t, double du, double dv, Modality modality) {
  if (t.rank() != 4 || t.dim(0) != 1 || t.dim(1) != 1)
    throw DimensionError("expected a 1 x 1 x H x W tensor, got " + shape_to_string(t.shape()));
  ProjectionImage img(t.dim(3), t.dim(2), du, dv, modality);
  img.data.assign(t.data().begin(), t.data().end());
  return img;
}

ProjectionImage synthesize(Generator<float>& model, const ProjectionImage& input, bool training) {
  NoGradGuard no_grad;
  const Tensor<float> out = model.forward(image_to_tensor(input), training);
  for (float v : out.data())
    if (!std::isfinite(v)) throw NumericalError("generator produced a non-finite value");
  return tensor_to_image(out, input.du, input.dv, Modality::synth);
}

template class Generator<float>;
template class Generator<double>;
template class UNet<float>;
template class UNet<double>;
template class ResNetGenerator<float>;
template class ResNetGenerator<double>;
template class CascadedRefinementNetwork<float>;
template class CascadedRefinementNetwork<double>;
template std::unique_ptr<Generator<float>> build_generator(const ModelConfig&, std::uint64_t);
template std::unique_ptr<Generator<double>> build_generator(const ModelConfig&, std::uint64_t);

}  // namespace projsynth
