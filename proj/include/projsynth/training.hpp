#pragma once

// Dataset assembly, ADAM, and the epoch loop with resumable checkpoints.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "projsynth/generators.hpp"
#include "projsynth/objectives.hpp"
#include "projsynth/phantom.hpp"
#include "projsynth/projector.hpp"

namespace projsynth {

/// Registered MR/X-ray projections of one view, both scaled to [-1, 1].
struct DatasetPair {
  ProjectionImage mr;
  ProjectionImage xray;
  std::string view_id;
};

/// Scales both images; throws DimensionError when their dims differ.
DatasetPair make_dataset_pair(const ProjectionImage& mr, const ProjectionImage& xray, std::string view_id);

/// Projects both phantom volumes through every view with identical geometry.
std::vector<DatasetPair> project_pairs(const PhantomVolumes& volumes, const std::vector<ProjectionGeometry>& views,
                                       double step_mm);

/// Seeded shuffle of indices, then the first n_train go to train and the next
/// n_test to test. Returns index lists into the original sequence.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t count, std::size_t n_train,
                                                                            std::size_t n_test, std::uint64_t seed);

template <typename Item>
std::pair<std::vector<Item>, std::vector<Item>> split_dataset(const std::vector<Item>& items, std::size_t n_train,
                                                              std::size_t n_test, std::uint64_t seed) {
  const auto [tr, te] = split_indices(items.size(), n_train, n_test, seed);
  std::pair<std::vector<Item>, std::vector<Item>> out;
  for (auto i : tr) out.first.push_back(items[i]);
  for (auto i : te) out.second.push_back(items[i]);
  return out;
}

/// Deterministic permutation of [0, n) from a seed (Fisher-Yates).
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

// --- ADAM ------------------------------------------------------------------

struct AdamHyper {
  double lr = 0.004;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  AdamHyper hyper;
  std::uint64_t t = 0;
  std::vector<std::vector<T>> m;  // one buffer per parameter, allocated on first step
  std::vector<std::vector<T>> v;
};

/// One update of theta in place: t is incremented before bias correction.
template <typename T>
void adam_update(std::span<T> theta, std::span<const T> grad, std::span<T> m, std::span<T> v, std::uint64_t t,
                 const AdamHyper& hyper);

/// Updates every parameter from its accumulated gradient. A non-finite
/// gradient throws NumericalError before anything is modified.
template <typename T>
void adam_step(ParameterSet<T>& params, AdamState<T>& state);

// --- training loop ---------------------------------------------------------

struct TrainConfig {
  int epochs = 100;
  int batch_size = 1;
  double lr = 0.004;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // epochs; 0 disables periodic checkpoints
  std::filesystem::path checkpoint_dir;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
/// Unknown keys throw ConfigError. checkpoint_dir is not part of the schema.
TrainConfig train_config_from_json(const nlohmann::json& j);

class Trainer {
 public:
  /// eval_net is required for the perceptual loss and must outlive the trainer.
  Trainer(Generator<float>& model, TrainConfig config, LossConfig loss,
          const EvaluationNetwork<float>* eval_net = nullptr);

  /// One pass over the shuffled training set; returns the mean batch loss.
  /// Throws NumericalError when a loss turns non-finite.
  double run_epoch(const std::vector<DatasetPair>& train_set);
  /// Runs the remaining epochs up to config.epochs, checkpointing at cadence.
  const std::vector<double>& fit(const std::vector<DatasetPair>& train_set);

  int epoch() const { return epoch_; }
  const std::vector<double>& history() const { return history_; }
  const AdamState<float>& adam() const { return adam_; }
  const TrainConfig& config() const { return config_; }

  /// Writes model.json, weights.{json,bin}, adam_moments.{json,bin},
  /// training_state.json and history.csv into dir.
  void save_checkpoint(const std::filesystem::path& dir) const;
  /// Restores parameters, optimizer moments, epoch, history and dropout stream.
  void load_checkpoint(const std::filesystem::path& dir);

 private:
  Generator<float>& model_;
  TrainConfig config_;
  LossConfig loss_;
  const EvaluationNetwork<float>* eval_net_;
  AdamState<float> adam_;
  int epoch_ = 0;
  std::vector<double> history_;
};

/// Trains for cfg.epochs epochs and returns the per-epoch mean losses.
std::vector<double> train(Generator<float>& model, const std::vector<DatasetPair>& train_set, const TrainConfig& cfg,
                          const LossConfig& loss, const EvaluationNetwork<float>* eval_net = nullptr);

void save_model(const std::filesystem::path& dir, const Generator<float>& model);
/// Rebuilds the architecture from dir/model.json and loads dir/weights.json.
std::unique_ptr<Generator<float>> load_model(const std::filesystem::path& dir);
/// Loads dir/weights.json into an existing model; mismatches throw LoadError.
void load_model_weights(const std::filesystem::path& dir, Generator<float>& model);

std::string history_csv(const std::vector<double>& history);

}  // namespace projsynth
