#include "projsynth/training.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "projsynth/error.hpp"
#include "projsynth/metrics.hpp"
#include "projsynth/weights.hpp"

namespace projsynth {

namespace fs = std::filesystem;
using nlohmann::json;

DatasetPair make_dataset_pair(const ProjectionImage& mr, const ProjectionImage& xray, std::string view_id) {
  if (mr.nu != xray.nu || mr.nv != xray.nv) throw DimensionError("pair '" + view_id + "': MR and X-ray dims differ");
  DatasetPair p{scale_to_unit_range(mr), scale_to_unit_range(xray), std::move(view_id)};
  p.mr.modality = Modality::mr;
  p.xray.modality = Modality::xray;
  return p;
}

std::vector<DatasetPair> project_pairs(const PhantomVolumes& volumes, const std::vector<ProjectionGeometry>& views,
                                       double step_mm) {
  std::vector<DatasetPair> pairs;
  pairs.reserve(views.size());
  for (std::size_t i = 0; i < views.size(); ++i)
    pairs.push_back(make_dataset_pair(forward_project(volumes.mr, views[i], step_mm),
                                      forward_project(volumes.xray, views[i], step_mm), std::to_string(i)));
  return pairs;
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng() % i]);
  return p;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t count, std::size_t n_train,
                                                                            std::size_t n_test, std::uint64_t seed) {
  if (n_train + n_test > count)
    throw ParameterError("cannot split " + std::to_string(count) + " pairs into " + std::to_string(n_train) +
                         " training and " + std::to_string(n_test) + " test pairs");
  const auto perm = seeded_permutation(count, seed);
  return {std::vector<std::size_t>(perm.begin(), perm.begin() + long(n_train)),
          std::vector<std::size_t>(perm.begin() + long(n_train), perm.begin() + long(n_train + n_test))};
}

// --- ADAM ------------------------------------------------------------------

template <typename T>
void adam_update(std::span<T> theta, std::span<const T> grad, std::span<T> m, std::span<T> v, std::uint64_t t,
                 const AdamHyper& h) {
  const double bc1 = 1.0 - std::pow(h.beta1, double(t));
  const double bc2 = 1.0 - std::pow(h.beta2, double(t));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = grad[i];
    const double mi = h.beta1 * double(m[i]) + (1.0 - h.beta1) * g;
    const double vi = h.beta2 * double(v[i]) + (1.0 - h.beta2) * g * g;
    m[i] = T(mi);
    v[i] = T(vi);
    theta[i] = T(double(theta[i]) - h.lr * (mi / bc1) / (std::sqrt(vi / bc2) + h.eps));
  }
}

template <typename T>
void adam_step(ParameterSet<T>& params, AdamState<T>& state) {
  if (!(state.hyper.lr > 0)) throw ParameterError("learning rate must be > 0");
  std::vector<std::vector<T>> grads;
  grads.reserve(params.size());
  for (const auto& [name, p] : params) {
    grads.push_back(p.grad());
    for (T g : grads.back())
      if (!std::isfinite(double(g)))
        throw NumericalError("non-finite gradient in parameter '" + name + "' at step " + std::to_string(state.t + 1));
  }
  if (state.m.empty()) {
    for (const auto& [name, p] : params) {
      state.m.emplace_back(p.numel(), T(0));
      state.v.emplace_back(p.numel(), T(0));
    }
  }
  if (state.m.size() != params.size()) throw ContractError("optimizer state does not match the parameter set");
  ++state.t;
  std::size_t i = 0;
  for (auto& [name, p] : params) {
    if (state.m[i].size() != p.numel()) throw ContractError("optimizer moment shape mismatch for '" + name + "'");
    adam_update<T>(p.mutable_data(), grads[i], state.m[i], state.v[i], state.t, state.hyper);
    ++i;
  }
}

template void adam_update<float>(std::span<float>, std::span<const float>, std::span<float>, std::span<float>,
                                 std::uint64_t, const AdamHyper&);
template void adam_update<double>(std::span<double>, std::span<const double>, std::span<double>, std::span<double>,
                                  std::uint64_t, const AdamHyper&);
template void adam_step(ParameterSet<float>&, AdamState<float>&);
template void adam_step(ParameterSet<double>&, AdamState<double>&);

// --- config ----------------------------------------------------------------

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(lr > 0)) throw ConfigError("learning rate must be > 0");
  if (checkpoint_every < 0) throw ConfigError("checkpoint cadence must be >= 0");
}

json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"seed", c.seed},
          {"checkpoint_every", c.checkpoint_every}};
}

TrainConfig train_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  for (const auto& [k, _] : j.items())
    if (k != "epochs" && k != "batch_size" && k != "lr" && k != "seed" && k != "checkpoint_every")
      throw ConfigError("unknown key '" + k + "' in train config");
  try {
    TrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    c.seed = j.value("seed", c.seed);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed train config: ") + e.what());
  }
}

// --- Trainer ---------------------------------------------------------------

Trainer::Trainer(Generator<float>& model, TrainConfig config, LossConfig loss, const EvaluationNetwork<float>* eval_net)
    : model_(model), config_(std::move(config)), loss_(std::move(loss)), eval_net_(eval_net) {
  config_.validate();
  loss_.validate();
  if (loss_.kind == LossKind::perceptual && !eval_net_)
    throw ConfigError("perceptual loss requires an evaluation network");
  adam_.hyper.lr = config_.lr;
}

double Trainer::run_epoch(const std::vector<DatasetPair>& train_set) {
  if (train_set.empty()) throw ParameterError("training set is empty");
  const auto order = seeded_permutation(train_set.size(), mix_seed(config_.seed, std::uint64_t(epoch_)));
  const std::size_t batch = std::size_t(config_.batch_size);
  double total = 0.0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < order.size(); start += batch) {
    std::vector<Tensor<float>> inputs, labels;
    for (std::size_t i = start; i < std::min(order.size(), start + batch); ++i) {
      inputs.push_back(image_to_tensor(train_set[order[i]].mr));
      labels.push_back(image_to_tensor(train_set[order[i]].xray));
    }
    const Tensor<float> x = inputs.size() == 1 ? inputs[0] : stack_batch(inputs);
    const Tensor<float> y = labels.size() == 1 ? labels[0] : stack_batch(labels);

    model_.parameters().zero_grad();
    const Tensor<float> out = model_.forward(x, true);
    const Tensor<float> loss = compute_loss(y, out, loss_, eval_net_);
    const double value = loss.item();
    if (!std::isfinite(value))
      throw NumericalError("training diverged: non-finite loss in epoch " + std::to_string(epoch_ + 1));
    loss.backward();
    adam_step(model_.parameters(), adam_);
    total += value;
    ++batches;
  }
  const double mean_loss = total / double(batches);
  history_.push_back(mean_loss);
  ++epoch_;
  return mean_loss;
}

const std::vector<double>& Trainer::fit(const std::vector<DatasetPair>& train_set) {
  if (train_set.empty()) throw ParameterError("training set is empty");
  while (epoch_ < config_.epochs) {
    run_epoch(train_set);
    if (config_.checkpoint_every > 0 && !config_.checkpoint_dir.empty() && epoch_ % config_.checkpoint_every == 0)
      save_checkpoint(config_.checkpoint_dir);
  }
  return history_;
}

namespace {

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p);
  if (!out) throw LoadError("cannot open " + p.string() + " for writing");
  out << s;
}

json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw LoadError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw LoadError(p.string() + ": " + e.what());
  }
}

}  // namespace

std::string history_csv(const std::vector<double>& history) {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,mean_loss\n";
  for (std::size_t i = 0; i < history.size(); ++i) os << i + 1 << ',' << history[i] << '\n';
  return os.str();
}

void save_model(const fs::path& dir, const Generator<float>& model) {
  fs::create_directories(dir);
  write_text(dir / "model.json", to_json(model.config()).dump(2) + "\n");
  save_weights(dir / "weights.json", to_archive(model.parameters()));
}

void load_model_weights(const fs::path& dir, Generator<float>& model) {
  assign_from_archive(model.parameters(), load_weights(dir / "weights.json"));
}

std::unique_ptr<Generator<float>> load_model(const fs::path& dir) {
  const json j = read_json_file(dir / "model.json");
  auto model = build_generator<float>(model_config_from_json(j), 0);
  load_model_weights(dir, *model);
  return model;
}

void Trainer::save_checkpoint(const fs::path& dir) const {
  save_model(dir, model_);
  WeightsArchive moments;
  if (!adam_.m.empty()) {
    std::size_t i = 0;
    for (const auto& [name, p] : model_.parameters()) {
      moments.add("m/" + name, p.shape(), adam_.m[i]);
      moments.add("v/" + name, p.shape(), adam_.v[i]);
      ++i;
    }
  }
  save_weights(dir / "adam_moments.json", moments);
  json state{{"epoch", epoch_},
             {"history", history_},
             {"adam",
              {{"t", adam_.t},
               {"lr", adam_.hyper.lr},
               {"beta1", adam_.hyper.beta1},
               {"beta2", adam_.hyper.beta2},
               {"eps", adam_.hyper.eps},
               {"moments", "adam_moments.json"}}},
             {"rng",
              {{"seed", config_.seed},
               {"model_seed", model_.seed()},
               {"dropout_counter", model_.dropout_counter()}}},
             {"train_config", to_json(config_)},
             {"loss_config", to_json(loss_)}};
  write_text(dir / "training_state.json", state.dump(2) + "\n");
  write_text(dir / "history.csv", history_csv(history_));
}

void Trainer::load_checkpoint(const fs::path& dir) {
  const json state = read_json_file(dir / "training_state.json");
  load_model_weights(dir, model_);
  try {
    const auto& a = state.at("adam");
    adam_.t = a.at("t").get<std::uint64_t>();
    adam_.hyper = {a.at("lr").get<double>(), a.at("beta1").get<double>(), a.at("beta2").get<double>(),
                   a.at("eps").get<double>()};
    const WeightsArchive moments = load_weights(dir / a.at("moments").get<std::string>());
    adam_.m.clear();
    adam_.v.clear();
    if (moments.size() > 0) {
      for (const auto& [name, p] : model_.parameters()) {
        const auto& m = moments.get("m/" + name);
        const auto& v = moments.get("v/" + name);
        if (m.shape != p.shape() || v.shape != p.shape())
          throw LoadError("optimizer moments for '" + name + "' do not match the parameter shape");
        adam_.m.push_back(m.data);
        adam_.v.push_back(v.data);
      }
    }
    epoch_ = state.at("epoch").get<int>();
    history_ = state.at("history").get<std::vector<double>>();
    model_.set_seed(state.at("rng").at("model_seed").get<std::uint64_t>());
    model_.set_dropout_counter(state.at("rng").at("dropout_counter").get<std::uint64_t>());
  } catch (const json::exception& e) {
    throw LoadError(dir.string() + ": malformed training state: " + e.what());
  }
}

std::vector<double> train(Generator<float>& model, const std::vector<DatasetPair>& train_set, const TrainConfig& cfg,
                          const LossConfig& loss, const EvaluationNetwork<float>* eval_net) {
  if (train_set.empty()) throw ParameterError("training set is empty");
  for (const auto& p : train_set) model.check_input(p.mr.nv, p.mr.nu);
  Trainer trainer(model, cfg, loss, eval_net);
  return trainer.fit(train_set);
}

}  // namespace projsynth
